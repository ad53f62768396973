"""Top-down, bottom-up and in-order transition systems for TOP trees.

Configurations are immutable; :func:`apply_action` returns a fresh one.
Legality is computed once per configuration as a :class:`Profile` that
records, for every action kind, either ``None`` (legal) or the reason it is
not. Label-dependent legality only depends on the label kind (intent/slot),
which keeps :func:`legal_actions` cheap even for large label vocabularies.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from .errors import (
    FinalConfiguration,
    IllegalAction,
    IllegalActionAt,
    NotFinal,
)
from .tree import Constituent, Label, Leaf, TopTree, make_utterance


class System(str, enum.Enum):
    TOPDOWN = "topdown"
    BOTTOMUP = "bottomup"
    INORDER = "inorder"

    def __str__(self):
        return self.value


ALL_SYSTEMS = (System.TOPDOWN, System.BOTTOMUP, System.INORDER)


# --------------------------------------------------------------------------
# actions

@dataclass(frozen=True)
class Shift:
    def __str__(self):
        return "SHIFT"


@dataclass(frozen=True)
class NonTerminal:
    label: Label

    def __str__(self):
        return f"NT({self.label})"


@dataclass(frozen=True)
class Reduce:
    def __str__(self):
        return "REDUCE"


@dataclass(frozen=True)
class ReduceK:
    k: int
    label: Label

    def __str__(self):
        return f"REDUCE#{self.k}({self.label})"


@dataclass(frozen=True)
class Finish:
    def __str__(self):
        return "FINISH"


Action = Union[Shift, NonTerminal, Reduce, ReduceK, Finish]

SHIFT = Shift()
REDUCE = Reduce()
FINISH = Finish()

_NT_RE = re.compile(r"^NT\((.+)\)$")
_RK_RE = re.compile(r"^REDUCE#(\d+)\((.+)\)$")


def parse_action(text: str) -> Action:
    text = text.strip()
    if text == "SHIFT":
        return SHIFT
    if text == "REDUCE":
        return REDUCE
    if text == "FINISH":
        return FINISH
    m = _NT_RE.match(text)
    if m:
        return NonTerminal(Label.parse(m.group(1)))
    m = _RK_RE.match(text)
    if m and int(m.group(1)) >= 1:
        return ReduceK(int(m.group(1)), Label.parse(m.group(2)))
    raise ValueError(f"unrecognised action {text!r}")


def parse_actions(text: str) -> list:
    return [parse_action(tok) for tok in text.split()]


def format_actions(actions: Iterable[Action]) -> str:
    return " ".join(str(a) for a in actions)


def action_sort_key(action: Action):
    if isinstance(action, Shift):
        return (0, 0, "", "")
    if isinstance(action, NonTerminal):
        return (1, 0, action.label.kind, action.label.name)
    if isinstance(action, Reduce):
        return (2, 0, "", "")
    if isinstance(action, ReduceK):
        return (3, action.k, action.label.kind, action.label.name)
    return (4, 0, "", "")


_SYSTEM_KINDS = {
    System.TOPDOWN: (Shift, NonTerminal, Reduce),
    System.BOTTOMUP: (Shift, ReduceK, Finish),
    System.INORDER: (Shift, NonTerminal, Reduce, Finish),
}


def action_allowed_in(action: Action, system: System) -> bool:
    return isinstance(action, _SYSTEM_KINDS[System(system)])


# --------------------------------------------------------------------------
# configurations

@dataclass(frozen=True)
class OpenNT:
    label: Label

    def __str__(self):
        return str(self.label)


StackItem = Union[OpenNT, Leaf, Constituent]


@dataclass(frozen=True)
class Configuration:
    utterance: tuple
    system: System
    stack: tuple = ()
    cursor: int = 1
    finished: bool = False

    @property
    def n(self) -> int:
        return len(self.utterance)

    @property
    def buffer(self) -> tuple:
        return self.utterance[self.cursor - 1:]

    @property
    def buffer_empty(self) -> bool:
        return self.cursor > len(self.utterance)

    def last_open(self) -> int:
        """Stack index of the most recent open non-terminal, or -1."""
        for i in range(len(self.stack) - 1, -1, -1):
            if isinstance(self.stack[i], OpenNT):
                return i
        return -1

    def __str__(self):
        stack = ", ".join(_item_str(x) for x in self.stack)
        buf = ", ".join(self.buffer)
        return f"[{stack}] [{buf}] f={str(self.finished).lower()}"


def _item_str(item):
    if isinstance(item, (OpenNT, Leaf)):
        return str(item)
    return f"{item.label}({' '.join(_item_str(c) for c in item.children)})"


def _is_intent_tree(item) -> bool:
    return isinstance(item, Constituent) and item.label.is_intent


def _is_slot_tree(item) -> bool:
    return isinstance(item, Constituent) and item.label.is_slot


def init_config(utterance: Sequence[str], system) -> Configuration:
    return Configuration(make_utterance(utterance), System(system))


def is_final(config: Configuration) -> bool:
    if config.system is System.TOPDOWN:
        return (config.buffer_empty and len(config.stack) == 1
                and _is_intent_tree(config.stack[0]))
    return config.finished


# --------------------------------------------------------------------------
# legality

class Profile(NamedTuple):
    """Per-kind legality of a configuration; ``None`` means legal."""
    shift: Optional[str]
    nt_intent: Optional[str]
    nt_slot: Optional[str]
    reduce: Optional[str]
    finish: Optional[str]
    rk_intent_max: int      # largest legal k for REDUCE#k(IN:*)
    rk_slot_max: int        # largest legal k for REDUCE#k(SL:*)


_NA = "not available in this transition system"


def profile(config: Configuration) -> Profile:
    if is_final(config):
        raise FinalConfiguration(str(config))
    if config.system is System.TOPDOWN:
        return _profile_topdown(config)
    if config.system is System.BOTTOMUP:
        return _profile_bottomup(config)
    return _profile_inorder(config)


def _profile_topdown(c: Configuration) -> Profile:
    stack = c.stack
    lo = c.last_open()
    open_label = stack[lo].label if lo >= 0 else None

    if c.buffer_empty:
        shift = "buffer is empty"
    elif not stack:
        shift = "the first action must open an intent"
    elif lo < 0:
        shift = "no open non-terminal to receive the token"
    elif open_label.is_slot and any(_is_intent_tree(x) for x in stack[lo + 1:]):
        shift = "open slot already holds an intent"
    else:
        shift = None

    if c.buffer_empty:
        nt_intent = nt_slot = "buffer is empty"
    else:
        if not stack:
            nt_intent = None
        elif isinstance(stack[-1], OpenNT) and stack[-1].label.is_slot:
            nt_intent = None
        else:
            nt_intent = "intent must open the root or be the sole child of a just-opened slot"
        if not stack:
            nt_slot = "the first non-terminal must be an intent"
        elif open_label is None or not open_label.is_intent:
            nt_slot = "slot requires an enclosing open intent"
        else:
            nt_slot = None

    if lo < 0:
        reduce = "no open non-terminal"
    elif lo == len(stack) - 1:
        reduce = "open non-terminal has no children"
    elif lo == 0 and not c.buffer_empty:
        reduce = "cannot close the root while the buffer is nonempty"
    else:
        reduce = None

    return Profile(shift, nt_intent, nt_slot, reduce, _NA, 0, 0)


def _profile_bottomup(c: Configuration) -> Profile:
    stack = c.stack
    top = stack[-1] if stack else None
    if c.buffer_empty:
        shift = "buffer is empty"
    elif _is_intent_tree(top):
        shift = "intent on top of the stack must be wrapped by a slot"
    else:
        shift = None

    size = len(stack)
    rk_intent = 0
    for i in range(size - 1, -1, -1):
        if _is_intent_tree(stack[i]):
            break
        rk_intent += 1
    if _is_intent_tree(top):
        rk_slot = 1
    else:
        rk_slot = 0
        for i in range(size - 1, -1, -1):
            if _is_slot_tree(stack[i]):
                break
            rk_slot += 1

    if not c.buffer_empty:
        finish = "buffer is nonempty"
    elif size != 1 or not _is_intent_tree(top):
        finish = "stack must hold a single intent"
    else:
        finish = None
    return Profile(shift, _NA, _NA, _NA, finish, rk_intent, rk_slot)


def _profile_inorder(c: Configuration) -> Profile:
    stack = c.stack
    top = stack[-1] if stack else None
    lo = c.last_open()
    open_label = stack[lo].label if lo >= 0 else None

    if c.buffer_empty:
        shift = "buffer is empty"
    elif stack and lo < 0:
        shift = "completed item needs a non-terminal before shifting"
    elif _is_intent_tree(top):
        shift = "intent on top of the stack must be wrapped by a slot"
    elif (open_label is not None and open_label.is_slot and lo == len(stack) - 1
          and _is_intent_tree(stack[lo - 1])):
        shift = "open slot already has an intent as first child"
    else:
        shift = None

    if top is None or isinstance(top, OpenNT):
        nt_intent = nt_slot = "first child is not complete on top of the stack"
    elif open_label is not None and open_label.is_slot:
        nt_intent = nt_slot = "cannot open a constituent inside an open slot"
    else:
        nt_intent = "first child is an intent" if _is_intent_tree(top) else None
        nt_slot = "first child is a slot" if _is_slot_tree(top) else None

    if lo < 0:
        reduce = "no open non-terminal"
    elif open_label.is_intent and any(_is_intent_tree(x) for x in stack[lo + 1:]):
        reduce = "intent would contain another intent"
    elif open_label.is_slot and any(_is_slot_tree(x) for x in stack[lo + 1:]):
        reduce = "slot would contain another slot"
    else:
        reduce = None

    if not c.buffer_empty:
        finish = "buffer is nonempty"
    elif len(stack) != 1 or not _is_intent_tree(top):
        finish = "stack must hold a single intent"
    else:
        finish = None
    return Profile(shift, nt_intent, nt_slot, reduce, finish, 0, 0)


def illegal_reason(config: Configuration, action: Action, prof: Profile = None) -> Optional[str]:
    """Return why ``action`` is illegal in ``config``, or None if it is legal."""
    if is_final(config):
        return "configuration is final"
    if not action_allowed_in(action, config.system):
        return f"{type(action).__name__} {_NA}"
    p = prof or profile(config)
    if isinstance(action, Shift):
        return p.shift
    if isinstance(action, NonTerminal):
        return p.nt_intent if action.label.is_intent else p.nt_slot
    if isinstance(action, Reduce):
        return p.reduce
    if isinstance(action, Finish):
        return p.finish
    limit = p.rk_intent_max if action.label.is_intent else p.rk_slot_max
    if action.k > len(config.stack):
        return f"k={action.k} exceeds stack size {len(config.stack)}"
    if action.k > limit:
        kind = "intent" if action.label.is_intent else "slot"
        return f"k={action.k} would put an illegal child under a new {kind}"
    return None


def is_legal(config: Configuration, action: Action, prof: Profile = None) -> bool:
    return illegal_reason(config, action, prof) is None


def legal_actions(config: Configuration, label_vocab: Iterable[Label]) -> list:
    """All legal actions over ``label_vocab``, in canonical order."""
    p = profile(config)
    labels = sorted(set(label_vocab))
    system = config.system
    out = []
    if p.shift is None:
        out.append(SHIFT)
    if system is not System.BOTTOMUP:
        for lab in labels:
            if (p.nt_intent if lab.is_intent else p.nt_slot) is None:
                out.append(NonTerminal(lab))
        if p.reduce is None:
            out.append(REDUCE)
    else:
        for k in range(1, len(config.stack) + 1):
            for lab in labels:
                if k <= (p.rk_intent_max if lab.is_intent else p.rk_slot_max):
                    out.append(ReduceK(k, lab))
    if system is not System.TOPDOWN and p.finish is None:
        out.append(FINISH)
    return out


# --------------------------------------------------------------------------
# transitions

def apply_action(config: Configuration, action: Action, check: bool = True) -> Configuration:
    if check:
        reason = illegal_reason(config, action)
        if reason is not None:
            raise IllegalAction(action, reason)
    stack = config.stack
    if isinstance(action, Shift):
        leaf = Leaf(config.cursor, config.utterance[config.cursor - 1])
        return replace(config, stack=stack + (leaf,), cursor=config.cursor + 1)
    if isinstance(action, NonTerminal):
        return replace(config, stack=stack + (OpenNT(action.label),))
    if isinstance(action, Reduce):
        lo = config.last_open()
        label = stack[lo].label
        if config.system is System.INORDER:
            node = Constituent(label, (stack[lo - 1],) + stack[lo + 1:])
            return replace(config, stack=stack[:lo - 1] + (node,))
        node = Constituent(label, stack[lo + 1:])
        return replace(config, stack=stack[:lo] + (node,))
    if isinstance(action, ReduceK):
        node = Constituent(action.label, stack[-action.k:])
        return replace(config, stack=stack[:-action.k] + (node,))
    return replace(config, finished=True)


def result_tree(config: Configuration) -> TopTree:
    if not is_final(config):
        raise NotFinal(str(config))
    return TopTree(config.stack[0], config.utterance)


def execute(utterance, actions: Iterable[Action], system) -> TopTree:
    config = init_config(utterance, system)
    for step, action in enumerate(actions):
        reason = illegal_reason(config, action)
        if reason is not None:
            raise IllegalActionAt(step, action, reason)
        config = apply_action(config, action, check=False)
    if not is_final(config):
        raise NotFinal(f"action sequence ended in a non-final configuration {config}")
    return TopTree(config.stack[0], config.utterance)


def trace(utterance, actions: Iterable[Action], system) -> list:
    """Configurations c_0..c_m visited by ``actions`` (all checked for legality)."""
    config = init_config(utterance, system)
    out = [config]
    for step, action in enumerate(actions):
        reason = illegal_reason(config, action)
        if reason is not None:
            raise IllegalActionAt(step, action, reason)
        config = apply_action(config, action, check=False)
        out.append(config)
    return out


def step_budget(n: int) -> int:
    return 8 * n + 16


def min_steps_to_final(config: Configuration) -> int:
    """Length of the shortest legal action sequence reaching a final configuration."""
    if is_final(config):
        return 0
    stack = config.stack
    r = config.n - config.cursor + 1
    top = stack[-1] if stack else None
    if config.system is System.TOPDOWN:
        if not stack:
            return r + 2
        return r + sum(isinstance(x, OpenNT) for x in stack)
    if config.system is System.BOTTOMUP:
        if r == 0 and len(stack) == 1 and _is_intent_tree(top):
            return 1
        return r + (1 if _is_intent_tree(top) else 0) + 2
    opens = [i for i, x in enumerate(stack) if isinstance(x, OpenNT)]
    if not opens:
        if not stack:
            return r + 3
        if _is_intent_tree(top):
            return 1 if r == 0 else r + 5
        return r + 3
    # opens can only nest inside intents, so every open above the bottom one
    # sits on an open intent; closing a nested intent there forces a slot
    # wrap (NT + REDUCE), as does a finished intent on top of an open intent
    wraps = sum(1 for i in opens[1:] if stack[i].label.is_intent)
    if _is_intent_tree(top) and stack[opens[-1]].label.is_intent:
        wraps += 1
    bottom_is_intent = stack[opens[0]].label.is_intent
    return 2 * wraps + r + len(opens) + (1 if bottom_is_intent else 3)
