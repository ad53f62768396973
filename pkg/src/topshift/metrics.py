"""Exact match, labeled bracketing F1, tree-labeled F1 and breakdown reports."""
from __future__ import annotations

from collections import Counter
from typing import NamedTuple, Optional, Sequence

from .errors import LengthMismatch, UnknownAxis
from .tree import TopTree, iter_constituents, serialize_node, serialize_tree, tree_stats


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _check(predictions, golds):
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")


def _prf(matched, n_pred, n_gold) -> PRF:
    p = matched / n_pred if n_pred else 0.0
    r = matched / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f)


def bracket_counter(tree: Optional[TopTree]) -> Counter:
    """Multiset of (label, start, end) over all constituents, pre-terminal slots included."""
    if tree is None:
        return Counter()
    return Counter((str(c.label), c.start, c.end) for c in iter_constituents(tree.root))


def subtree_counter(tree: Optional[TopTree]) -> Counter:
    """Multiset of span-anchored canonical subtree strings, one per constituent."""
    if tree is None:
        return Counter()
    return Counter((c.start, c.end, serialize_node(c)) for c in iter_constituents(tree.root))


def exact_match(predictions: Sequence, golds: Sequence) -> float:
    _check(predictions, golds)
    if not golds:
        return 0.0
    hits = sum(p is not None and serialize_tree(p) == serialize_tree(g)
               for p, g in zip(predictions, golds))
    return hits / len(golds)


def _micro(predictions, golds, counter) -> PRF:
    _check(predictions, golds)
    matched = n_pred = n_gold = 0
    for p, g in zip(predictions, golds):
        cp, cg = counter(p), counter(g)
        matched += sum((cp & cg).values())
        n_pred += sum(cp.values())
        n_gold += sum(cg.values())
    return _prf(matched, n_pred, n_gold)


def labeled_bracketing_f1(predictions: Sequence, golds: Sequence) -> PRF:
    return _micro(predictions, golds, bracket_counter)


def tree_labeled_f1(predictions: Sequence, golds: Sequence) -> PRF:
    return _micro(predictions, golds, subtree_counter)


def evaluate(predictions, golds) -> dict:
    return {
        "em": exact_match(predictions, golds),
        "f1": labeled_bracketing_f1(predictions, golds).f1,
        "tf1": tree_labeled_f1(predictions, golds).f1,
    }


def format_report(scores: dict) -> str:
    return "EM={:.2f} F1={:.2f} TF1={:.2f}".format(
        100 * scores["em"], 100 * scores["f1"], 100 * scores["tf1"])


# --------------------------------------------------------------------------
# breakdowns

UTTERANCE_LENGTH_BINS = ((1, 5), (6, 10), (11, 15), (16, 20), (21, None))
SPAN_LENGTH_BINS = ((1, 1), (2, 2), (3, 3), (4, 6), (7, None))
AXES = ("utterance_length_bins", "intents_per_utterance", "span_length_bins", "nonterminal_label")


class BreakdownRow(NamedTuple):
    axis: str
    bin: str
    count: int            # examples (sentence axes) or gold constituents (constituent axes)
    em: Optional[float]
    f1: float
    accuracy: Optional[float]


def _bin_name(lo, hi):
    if hi is None:
        return f">={lo}"
    return str(lo) if lo == hi else f"{lo}-{hi}"


def _in_bin(x, lo, hi):
    return x >= lo and (hi is None or x <= hi)


def breakdown_report(predictions, golds, axes=AXES, bins=None) -> list:
    """EM/F1 per bin along each requested axis.

    ``bins`` optionally overrides the (lo, hi) bin edges per axis; ``hi`` of
    None means unbounded.
    """
    _check(predictions, golds)
    bins = bins or {}
    rows = []
    for axis in axes:
        if axis not in AXES:
            raise UnknownAxis(axis)
        if axis == "utterance_length_bins":
            rows += _sentence_rows(axis, predictions, golds, lambda g: len(g.utterance),
                                   bins.get(axis, UTTERANCE_LENGTH_BINS))
        elif axis == "intents_per_utterance":
            counts = sorted({tree_stats(g).intent_count for g in golds})
            edges = bins.get(axis, tuple((c, c) for c in counts))
            rows += _sentence_rows(axis, predictions, golds, lambda g: tree_stats(g).intent_count, edges)
        elif axis == "span_length_bins":
            for lo, hi in bins.get(axis, SPAN_LENGTH_BINS):
                keep = lambda item, lo=lo, hi=hi: _in_bin(item[2] - item[1] + 1, lo, hi)
                rows.append(_constituent_row(axis, _bin_name(lo, hi), predictions, golds, keep))
        else:
            labels = sorted({lab for g in golds for lab, _, _ in bracket_counter(g)})
            for lab in bins.get(axis, labels):
                keep = lambda item, lab=lab: item[0] == lab
                rows.append(_constituent_row(axis, lab, predictions, golds, keep))
    return rows


def _sentence_rows(axis, predictions, golds, key, edges):
    rows = []
    for lo, hi in edges:
        idx = [i for i, g in enumerate(golds) if _in_bin(key(g), lo, hi)]
        if not idx:
            continue
        p = [predictions[i] for i in idx]
        g = [golds[i] for i in idx]
        rows.append(BreakdownRow(axis, _bin_name(lo, hi), len(idx), exact_match(p, g),
                                 labeled_bracketing_f1(p, g).f1, None))
    return rows


def _constituent_row(axis, name, predictions, golds, keep):
    matched = n_pred = n_gold = 0
    for p, g in zip(predictions, golds):
        cp = Counter({k: v for k, v in bracket_counter(p).items() if keep(k)})
        cg = Counter({k: v for k, v in bracket_counter(g).items() if keep(k)})
        matched += sum((cp & cg).values())
        n_pred += sum(cp.values())
        n_gold += sum(cg.values())
    prf = _prf(matched, n_pred, n_gold)
    return BreakdownRow(axis, name, n_gold, None, prf.f1, prf.recall)


def format_breakdown(rows) -> str:
    lines = ["axis\tbin\tcount\tem\tf1\taccuracy"]
    for r in rows:
        em = "" if r.em is None else f"{100 * r.em:.2f}"
        acc = "" if r.accuracy is None else f"{100 * r.accuracy:.2f}"
        lines.append(f"{r.axis}\t{r.bin}\t{r.count}\t{em}\t{100 * r.f1:.2f}\t{acc}")
    return "\n".join(lines)
