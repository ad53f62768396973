"""Stack/buffer attention masks kept in sync with parser configurations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyUtterance, InconsistentMask
from .transitions import (
    Configuration,
    Finish,
    NonTerminal,
    OpenNT,
    Reduce,
    ReduceK,
    Shift,
    System,
)
from .tree import Constituent, Leaf


def _frozen(arr):
    arr = np.asarray(arr, dtype=bool)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MaskPair:
    stack: np.ndarray    # True = attendable by the stack head
    buffer: np.ndarray   # True = attendable by the buffer head

    def __eq__(self, other):
        if not isinstance(other, MaskPair):
            return NotImplemented
        return np.array_equal(self.stack, other.stack) and np.array_equal(self.buffer, other.buffer)

    def __hash__(self):
        return hash((self.stack.tobytes(), self.buffer.tobytes()))

    @property
    def n(self) -> int:
        return len(self.stack)

    def dump(self, step: int) -> str:
        s = ",".join(str(i + 1) for i in np.flatnonzero(self.stack))
        b = ",".join(str(i + 1) for i in np.flatnonzero(self.buffer))
        return f"t{step} S={{{s}}} B={{{b}}}"


def initial_masks(n: int) -> MaskPair:
    if n < 1:
        raise EmptyUtterance("masks need at least one input position")
    return MaskPair(_frozen(np.zeros(n, bool)), _frozen(np.ones(n, bool)))


def _leftmost(item) -> int:
    while isinstance(item, Constituent):
        item = item.children[0]
    return item.position


def masks_for_config(config: Configuration) -> MaskPair:
    """Masks derived directly from a configuration (one representative per stack item)."""
    n = config.n
    stack = np.zeros(n, bool)
    for item in config.stack:
        if not isinstance(item, OpenNT):
            stack[_leftmost(item) - 1] = True
    buffer = np.zeros(n, bool)
    buffer[config.cursor - 1:] = True
    return MaskPair(_frozen(stack), _frozen(buffer))


def _reduced_items(config: Configuration, action):
    stack = config.stack
    if isinstance(action, ReduceK):
        return stack[-action.k:]
    lo = config.last_open()
    if config.system is System.INORDER:
        return (stack[lo - 1],) + stack[lo + 1:]
    return stack[lo + 1:]


def update_masks(masks: MaskPair, action, config_before: Configuration, check: bool = True) -> MaskPair:
    """Masks after applying ``action`` to ``config_before``.

    Shift moves the first buffer position onto the stack, non-terminals and
    Finish leave both masks untouched, and reductions clear every token of
    the new constituent except its leftmost one, which represents it.
    """
    if check and masks != masks_for_config(config_before):
        raise InconsistentMask(f"masks do not match configuration {config_before}")
    if isinstance(action, (NonTerminal, Finish)):
        return masks
    stack = masks.stack.copy()
    buffer = masks.buffer.copy()
    if isinstance(action, Shift):
        live = np.flatnonzero(buffer)
        if not len(live):
            raise InconsistentMask("shift with an empty buffer mask")
        j = live[0]
        buffer[j] = False
        stack[j] = True
    elif isinstance(action, (Reduce, ReduceK)):
        positions = []
        for item in _reduced_items(config_before, action):
            positions.extend(_positions(item))
        positions.sort()
        for p in positions[1:]:
            stack[p - 1] = False
        if positions:
            stack[positions[0] - 1] = True
    else:
        raise TypeError(f"unknown action {action!r}")
    return MaskPair(_frozen(stack), _frozen(buffer))


def _positions(item):
    if isinstance(item, Leaf):
        return [item.position]
    if isinstance(item, OpenNT):
        return []
    out = []
    for c in item.children:
        out.extend(_positions(c))
    return out
