"""Greedy and beam-search decoding with hard legality masking.

A *scorer* maps hypotheses to log-probabilities over their legal actions.
Decoding only ever expands actions the transition system allows, so every
returned tree is well formed.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import NoLegalActions, StepLimitExceeded
from .masks import MaskPair, initial_masks, update_masks
from .transitions import (
    Configuration,
    System,
    apply_action,
    init_config,
    is_final,
    legal_actions,
    min_steps_to_final,
    step_budget,
)
from .tree import TopTree


@dataclass(frozen=True)
class Hypothesis:
    config: Configuration
    masks: tuple            # MaskPair per step, the last one is current
    actions: tuple = ()
    score: float = 0.0
    step_scores: tuple = ()

    @property
    def current_masks(self) -> MaskPair:
        return self.masks[-1]

    def extend(self, action, logprob: float) -> "Hypothesis":
        masks = update_masks(self.masks[-1], action, self.config, check=False)
        config = apply_action(self.config, action, check=False)
        return Hypothesis(config, self.masks + (masks,), self.actions + (action,),
                          self.score + logprob, self.step_scores + (logprob,))


@dataclass(frozen=True)
class ParseResult:
    tree: TopTree
    actions: tuple
    score: float
    step_scores: tuple


def start_hypothesis(utterance, system) -> Hypothesis:
    config = init_config(utterance, system)
    return Hypothesis(config, (initial_masks(config.n),))


def _log_softmax(x):
    x = np.asarray(x, dtype=np.float64)
    m = x.max()
    return x - (m + math.log(np.exp(x - m).sum()))


class Scorer:
    """Base scorer: subclasses implement :meth:`score`."""

    labels: tuple = ()

    def legal(self, config: Configuration) -> list:
        return legal_actions(config, self.labels)

    def prepare(self, utterances) -> list:
        return [tuple(u) for u in utterances]

    def score(self, items) -> list:
        """``items``: list of (context, hypothesis, legal actions).

        Returns one array of log-probabilities (over the legal actions, in
        order) per item.
        """
        raise NotImplementedError


class UniformScorer(Scorer):
    def __init__(self, labels):
        self.labels = tuple(sorted(set(labels)))

    def score(self, items):
        return [np.full(len(legal), -math.log(len(legal))) for _, _, legal in items]


class RandomScorer(Scorer):
    """Deterministic pseudo-random scores keyed on (seed, utterance, history)."""

    def __init__(self, labels, seed: int = 0, scale: float = 2.0):
        self.labels = tuple(sorted(set(labels)))
        self.seed = seed
        self.scale = scale

    def score(self, items):
        out = []
        for ctx, hyp, legal in items:
            key = f"{self.seed}|{' '.join(ctx)}|{' '.join(map(str, hyp.actions))}"
            rng = np.random.default_rng(zlib.crc32(key.encode()))
            raw = rng.normal(0.0, self.scale, size=len(legal))
            # per-action perturbation keeps scores stable under legal-set changes
            bumps = np.array([zlib.crc32(f"{key}|{a}".encode()) % 1000 for a in legal]) / 1000.0
            out.append(_log_softmax(raw + bumps))
        return out


class OracleScorer(Scorer):
    """Puts all probability mass on the gold action when the history is a gold prefix."""

    def __init__(self, labels, gold: Callable[[tuple], Sequence]):
        self.labels = tuple(sorted(set(labels)))
        self.gold = gold

    def prepare(self, utterances):
        return [(tuple(u), tuple(self.gold(tuple(u)))) for u in utterances]

    def score(self, items):
        out = []
        for (utt, gold), hyp, legal in items:
            t = len(hyp.actions)
            lp = np.full(len(legal), -np.inf)
            if hyp.actions == gold[:t] and t < len(gold) and gold[t] in legal:
                lp[legal.index(gold[t])] = 0.0
            else:
                lp[:] = -math.log(len(legal))
            out.append(lp)
        return out


def _filtered_legal(scorer, hyp, budget, completable):
    legal = scorer.legal(hyp.config)
    if completable:
        t = len(hyp.actions)
        legal = [a for a in legal
                 if t + 1 + min_steps_to_final(apply_action(hyp.config, a, check=False)) <= budget]
    return legal


def greedy_parse_many(utterances, scorer: Scorer, system, max_steps: Optional[int] = None,
                      completable: bool = False, errors: str = "raise") -> list:
    """Greedy decoding of several utterances, batching scorer calls across them.

    With ``errors="none"`` a failed utterance yields None instead of raising.
    """
    system = System(system)
    utterances = [tuple(u) for u in utterances]
    ctxs = scorer.prepare(utterances)
    hyps = [start_hypothesis(u, system) for u in utterances]
    budgets = [max_steps if max_steps is not None else step_budget(len(u)) for u in utterances]
    results: list = [None] * len(utterances)
    active = list(range(len(utterances)))
    while active:
        items, keep = [], []
        for i in active:
            h = hyps[i]
            if len(h.actions) >= budgets[i]:
                if errors == "raise":
                    raise StepLimitExceeded(f"no final configuration within {budgets[i]} steps")
                continue
            legal = _filtered_legal(scorer, h, budgets[i], completable)
            if not legal:
                if errors == "raise":
                    raise NoLegalActions(str(h.config))
                continue
            items.append((ctxs[i], h, legal))
            keep.append(i)
        if not items:
            break
        scores = scorer.score(items)
        active = []
        for i, (_, h, legal), lp in zip(keep, items, scores):
            j = int(np.argmax(lp))   # first maximum = canonical tie-break
            h = h.extend(legal[j], float(lp[j]))
            hyps[i] = h
            if is_final(h.config):
                results[i] = ParseResult(TopTree(h.config.stack[0], h.config.utterance),
                                         h.actions, h.score, h.step_scores)
            else:
                active.append(i)
    return results


def greedy_parse(utterance, scorer: Scorer, system, max_steps: Optional[int] = None,
                 completable: bool = False) -> ParseResult:
    return greedy_parse_many([utterance], scorer, system, max_steps, completable)[0]


def beam_parse(utterance, scorer: Scorer, system, beam_size: int = 10,
               max_steps: Optional[int] = None, completable: bool = False) -> list:
    """Length-synchronised beam search; returns up to ``beam_size`` results, best first.

    The greedy path is never pruned: its argmax continuation always keeps a
    slot, so the top result scores at least as well as :func:`greedy_parse`
    (and equals it for ``beam_size=1``).
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    system = System(system)
    utterance = tuple(utterance)
    budget = max_steps if max_steps is not None else step_budget(len(utterance))
    ctx = scorer.prepare([utterance])[0]
    beam = [start_hypothesis(utterance, system)]
    greedy = beam[0].actions          # action history of the protected greedy path
    finished = []
    saw_legal = False
    for _ in range(budget):
        if not beam:
            break
        if finished and max(h.score for h in finished) >= max(h.score for h in beam):
            break
        items = []
        for h in beam:
            legal = _filtered_legal(scorer, h, budget, completable)
            if legal:
                items.append((ctx, h, legal))
        if not items:
            break
        saw_legal = True
        scores = scorer.score(items)
        cands = []
        protected = None
        for hi, ((_, h, legal), lp) in enumerate(zip(items, scores)):
            if h.actions == greedy:
                protected = (float(h.score + lp[int(np.argmax(lp))]), hi, int(np.argmax(lp)))
            for ai in range(len(legal)):
                if lp[ai] != -np.inf:
                    cands.append((h.score + float(lp[ai]), hi, ai))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        chosen = cands[:beam_size]
        if protected is not None:
            if protected[1:] not in [c[1:] for c in chosen]:
                chosen[-1] = protected
            greedy = items[protected[1]][1].actions + (items[protected[1]][2][protected[2]],)
        beam = []
        for _, hi, ai in chosen:
            _, h, legal = items[hi]
            h2 = h.extend(legal[ai], float(scores[hi][ai]))
            (finished if is_final(h2.config) else beam).append(h2)
    if not finished:
        if not saw_legal:
            raise NoLegalActions("no legal action from the initial configuration")
        raise StepLimitExceeded(f"no final configuration within {budget} steps")
    finished.sort(key=lambda h: -h.score)
    return [ParseResult(TopTree(h.config.stack[0], h.config.utterance), h.actions, h.score,
                        h.step_scores) for h in finished[:beam_size]]
