"""Token and action vocabularies."""
from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .transitions import (
    FINISH,
    REDUCE,
    SHIFT,
    Configuration,
    Finish,
    NonTerminal,
    Reduce,
    ReduceK,
    Shift,
    System,
    action_sort_key,
    parse_action,
    profile,
)
from .tree import Label

PAD = "<pad>"
UNK = "<unk>"


class TokenVocab:
    def __init__(self, words: Iterable[str]):
        self.itos = [PAD, UNK] + sorted(set(words) - {PAD, UNK})
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def from_utterances(cls, utterances, min_count: int = 1) -> "TokenVocab":
        counts = Counter(w for u in utterances for w in u)
        return cls(w for w, c in counts.items() if c >= min_count)

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> list:
        unk = self.stoi[UNK]
        return [self.stoi.get(w, unk) for w in tokens]


# kind codes used by the vectorised legality mask
_K_SHIFT, _K_NT_IN, _K_NT_SL, _K_REDUCE, _K_RK_IN, _K_RK_SL, _K_FINISH = range(7)


class ActionVocab:
    """Closed action inventory for one transition system.

    Every label seen in training is crossed with the system's action kinds;
    bottom-up REDUCE#k actions use only the arities seen in training.
    Actions are kept in canonical order so argmax ties break identically
    everywhere.
    """

    def __init__(self, system, labels: Iterable[Label], arities: Iterable[int] = ()):
        self.system = System(system)
        self.labels = tuple(sorted(set(labels)))
        self.arities = tuple(sorted(set(arities)))
        acts = [SHIFT]
        if self.system is System.BOTTOMUP:
            acts += [ReduceK(k, lab) for k in self.arities for lab in self.labels]
            acts.append(FINISH)
        else:
            acts += [NonTerminal(lab) for lab in self.labels]
            acts.append(REDUCE)
            if self.system is System.INORDER:
                acts.append(FINISH)
        self.actions = sorted(acts, key=action_sort_key)
        self.index = {a: i for i, a in enumerate(self.actions)}
        kinds, ks = [], []
        for a in self.actions:
            if isinstance(a, Shift):
                kinds.append(_K_SHIFT)
            elif isinstance(a, NonTerminal):
                kinds.append(_K_NT_IN if a.label.is_intent else _K_NT_SL)
            elif isinstance(a, Reduce):
                kinds.append(_K_REDUCE)
            elif isinstance(a, ReduceK):
                kinds.append(_K_RK_IN if a.label.is_intent else _K_RK_SL)
            else:
                kinds.append(_K_FINISH)
            ks.append(a.k if isinstance(a, ReduceK) else 0)
        self._kinds = np.array(kinds)
        self._ks = np.array(ks)

    @classmethod
    def from_action_sequences(cls, system, labels, sequences) -> "ActionVocab":
        arities = {a.k for seq in sequences for a in seq if isinstance(a, ReduceK)}
        return cls(system, labels, arities)

    def __len__(self):
        return len(self.actions)

    @property
    def bos(self) -> int:
        """Index of the start-of-history symbol in the action embedding table."""
        return len(self.actions)

    def legal_mask(self, config: Configuration) -> np.ndarray:
        p = profile(config)
        kinds, ks = self._kinds, self._ks
        ok = np.zeros(len(self.actions), bool)
        ok[kinds == _K_SHIFT] = p.shift is None
        if self.system is not System.BOTTOMUP:
            ok[kinds == _K_NT_IN] = p.nt_intent is None
            ok[kinds == _K_NT_SL] = p.nt_slot is None
            ok[kinds == _K_REDUCE] = p.reduce is None
        else:
            ok |= (kinds == _K_RK_IN) & (ks <= p.rk_intent_max)
            ok |= (kinds == _K_RK_SL) & (ks <= p.rk_slot_max)
        if self.system is not System.TOPDOWN:
            ok[kinds == _K_FINISH] = p.finish is None
        return ok

    def to_list(self) -> list:
        return [str(a) for a in self.actions]

    @classmethod
    def from_list(cls, system, texts) -> "ActionVocab":
        acts = [parse_action(t) for t in texts]
        labels = set()
        arities = set()
        for a in acts:
            if isinstance(a, (NonTerminal, ReduceK)):
                labels.add(a.label)
            if isinstance(a, ReduceK):
                arities.add(a.k)
        vocab = cls(system, labels, arities)
        if vocab.to_list() != list(texts):
            raise ValueError("action list is not a canonical vocabulary for this system")
        return vocab
