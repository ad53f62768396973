"""Exception hierarchy shared across the package."""


class TopShiftError(Exception):
    """Base class for all errors raised by topshift."""


# tree format / structure

class TreeError(TopShiftError, ValueError):
    pass


class UnbalancedBrackets(TreeError):
    pass


class InvalidLabel(TreeError):
    pass


class UnknownLabelPrefix(InvalidLabel):
    pass


class EmptyConstituent(TreeError):
    pass


class InvalidTopStructure(TreeError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class InvalidUtterance(TreeError):
    pass


class EmptyUtterance(InvalidUtterance):
    pass


# transition systems

class TransitionError(TopShiftError):
    pass


class FinalConfiguration(TransitionError):
    pass


class IllegalAction(TransitionError):
    def __init__(self, action, reason):
        self.action = action
        self.reason = reason
        super().__init__(f"{action}: {reason}")


class IllegalActionAt(IllegalAction):
    def __init__(self, step, action, reason):
        self.step = step
        super().__init__(action, reason)
        self.args = (f"step {step}: {action}: {reason}",)


class NotFinal(TransitionError):
    pass


class InvalidTree(TransitionError):
    pass


class InconsistentMask(TopShiftError):
    pass


# scoring / decoding

class AllMasked(TopShiftError):
    pass


class NoLegalActions(TopShiftError):
    pass


class StepLimitExceeded(TopShiftError):
    pass


# metrics / data

class LengthMismatch(TopShiftError, ValueError):
    pass


class UnknownAxis(TopShiftError, ValueError):
    pass


class DataError(TopShiftError):
    pass


class ParseErrorAt(DataError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class LeafMismatchAt(DataError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptyFile(DataError):
    pass


class EmptyDataset(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class InfeasibleSpec(DataError):
    pass


class VocabMismatch(DataError):
    pass


class ConfigError(TopShiftError, ValueError):
    pass


class CheckpointError(DataError):
    pass
