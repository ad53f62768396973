import random

import pytest

from topshift.errors import LengthMismatch, UnknownAxis
from topshift.metrics import (
    breakdown_report,
    evaluate,
    exact_match,
    format_breakdown,
    format_report,
    labeled_bracketing_f1,
    tree_labeled_f1,
)
from topshift.tree import Leaf, parse_tree

from treegen import PLAY, perturb, seeded_trees

RELABELED = PLAY.replace("SL:MUSIC_ARTIST_NAME", "SL:MUSIC_ALBUM_NAME")


def brute_spans(tree):
    """(label, first, last) for every constituent, via an explicit walk over token offsets."""
    out = []

    def walk(node, offset):
        if isinstance(node, Leaf):
            return 1
        width = 0
        for ch in node.children:
            width += walk(ch, offset + width)
        out.append((str(node.label), offset + 1, offset + width))
        return width

    walk(tree.root, 0)
    return out


def brute_subtrees(tree):
    out = []

    def text(node):
        if isinstance(node, Leaf):
            return node.word
        return "[" + str(node.label) + " " + " ".join(text(c) for c in node.children) + " ]"

    def walk(node, offset):
        if isinstance(node, Leaf):
            return 1
        width = 0
        for ch in node.children:
            width += walk(ch, offset + width)
        out.append((offset + 1, offset + width, text(node)))
        return width

    walk(tree.root, 0)
    return out


def brute_prf(preds, golds, keys):
    """Greedy list-matching multiset intersection, counted by hand."""
    matched = npred = ngold = 0
    for p, g in zip(preds, golds):
        pk = keys(p) if p is not None else []
        gk = list(keys(g))
        npred += len(pk)
        ngold += len(gk)
        for k in pk:
            if k in gk:
                gk.remove(k)
                matched += 1
    prec = matched / npred if npred else 0.0
    rec = matched / ngold if ngold else 0.0
    f = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f


def test_exact_match_examples():
    t = parse_tree(PLAY)
    o = parse_tree(RELABELED)
    assert exact_match([t, t], [t, t]) == 1.0
    assert exact_match([o, o], [t, t]) == 0.0
    assert exact_match([t, t, o], [t, t, t]) == pytest.approx(2 / 3, abs=1e-9)
    assert exact_match([None], [t]) == 0.0
    with pytest.raises(LengthMismatch):
        exact_match([t], [t, t])


def test_relabeled_slot_case():
    t, o = parse_tree(PLAY), parse_tree(RELABELED)
    f = labeled_bracketing_f1([o], [t])
    assert (f.precision, f.recall) == (pytest.approx(2 / 3), pytest.approx(2 / 3))
    assert f.f1 == pytest.approx(2 / 3, abs=1e-12)
    tf = tree_labeled_f1([o], [t])
    assert tf.f1 == pytest.approx(1 / 3, abs=1e-12)
    assert labeled_bracketing_f1([t], [t]).f1 == 1.0 and tree_labeled_f1([t], [t]).f1 == 1.0


def test_zero_overlap_no_division_error():
    a = parse_tree("[IN:A x ]")
    b = parse_tree("[IN:B x ]")
    assert labeled_bracketing_f1([a], [b]).f1 == 0.0
    assert labeled_bracketing_f1([None], [b]) == (0.0, 0.0, 0.0)


def test_duplicate_constituents_are_multiset():
    # the same (label, span) twice: unary IN -> SL -> IN chain
    g = parse_tree("[IN:A [SL:X [IN:A x ] ] ]")
    p = parse_tree("[IN:A x ]")
    f = labeled_bracketing_f1([p], [g])
    assert (f.precision, f.recall) == (1.0, pytest.approx(1 / 3))


def test_against_brute_force():
    rng = random.Random(0)
    golds = seeded_trees(400, seed=9)
    preds = [g if rng.random() < 0.3 else perturb(rng, g) for g in golds]
    f1 = labeled_bracketing_f1(preds, golds)
    tf1 = tree_labeled_f1(preds, golds)
    for got, want in zip(f1, brute_prf(preds, golds, brute_spans)):
        assert abs(got - want) <= 1e-9
    for got, want in zip(tf1, brute_prf(preds, golds, brute_subtrees)):
        assert abs(got - want) <= 1e-9
    em = sum(str(p) == str(g) for p, g in zip(preds, golds)) / len(golds)
    assert abs(exact_match(preds, golds) - em) <= 1e-9
    assert tf1.f1 <= f1.f1


def test_tf1_below_f1_per_pair_and_em_implications():
    rng = random.Random(1)
    for g in seeded_trees(300, seed=12):
        p = perturb(rng, g)
        s = evaluate([p], [g])
        assert s["tf1"] <= s["f1"] + 1e-12
        if s["em"] == 1.0:
            assert s["f1"] == 1.0 and s["tf1"] == 1.0


def test_permutation_invariance():
    rng = random.Random(2)
    golds = seeded_trees(50, seed=3)
    preds = [perturb(rng, g) for g in golds]
    idx = list(range(50))
    rng.shuffle(idx)
    assert evaluate(preds, golds) == evaluate([preds[i] for i in idx], [golds[i] for i in idx])


def test_report_format():
    t, o = parse_tree(PLAY), parse_tree(RELABELED)
    assert format_report(evaluate([t, o], [t, t])) == "EM=50.00 F1=83.33 TF1=66.67"


def test_breakdown_intents_axis():
    one = parse_tree("[IN:A x [SL:X y ] ]")
    two = parse_tree("[IN:A x [SL:X [IN:B y ] ] ]")
    wrong = parse_tree("[IN:A x [SL:X [IN:A y ] ] ]")
    rows = breakdown_report([one, wrong], [one, two], ["intents_per_utterance"])
    assert [(r.bin, r.em) for r in rows] == [("1", 1.0), ("2", 0.0)]


def test_breakdown_single_bin_matches_corpus():
    rng = random.Random(4)
    golds = seeded_trees(60, seed=5)
    preds = [perturb(rng, g) if rng.random() < 0.5 else g for g in golds]
    rows = breakdown_report(preds, golds, ["utterance_length_bins"], bins={"utterance_length_bins": [(1, None)]})
    assert rows[0].em == exact_match(preds, golds)
    assert rows[0].f1 == labeled_bracketing_f1(preds, golds).f1
    rows = breakdown_report(preds, golds, ["utterance_length_bins"])
    weighted = sum(r.em * r.count for r in rows) / sum(r.count for r in rows)
    assert weighted == pytest.approx(exact_match(preds, golds), abs=1e-12)


def test_breakdown_constituent_axes():
    t, o = parse_tree(PLAY), parse_tree(RELABELED)
    rows = breakdown_report([o], [t], ["nonterminal_label", "span_length_bins"])
    by = {(r.axis, r.bin): r for r in rows}
    assert by[("nonterminal_label", "SL:MUSIC_ARTIST_NAME")].accuracy == 0.0
    assert by[("nonterminal_label", "IN:PLAY_MUSIC")].accuracy == 1.0
    assert by[("span_length_bins", "1")].count == 2
    text = format_breakdown(rows)
    assert text.splitlines()[0] == "axis\tbin\tcount\tem\tf1\taccuracy"
    with pytest.raises(UnknownAxis):
        breakdown_report([t], [t], ["bogus"])
