import numpy as np
import pytest

from topshift.errors import EmptyUtterance, InconsistentMask
from topshift.masks import MaskPair, initial_masks, masks_for_config, update_masks
from topshift.oracle import oracle_actions
from topshift.transitions import ALL_SYSTEMS, SHIFT, NonTerminal, Reduce, ReduceK, apply_action, init_config
from topshift.tree import Label, parse_tree

from treegen import PLAY_SHORT, seeded_trees


def sets(m: MaskPair):
    return (set(np.flatnonzero(m.stack) + 1), set(np.flatnonzero(m.buffer) + 1))


def test_initial():
    assert sets(initial_masks(4)) == (set(), {1, 2, 3, 4})
    assert sets(initial_masks(1)) == (set(), {1})
    with pytest.raises(EmptyUtterance):
        initial_masks(0)


def test_inorder_updates():
    t = parse_tree(PLAY_SHORT)
    c = init_config(t.utterance, "inorder")
    m = initial_masks(4)
    seen = []
    for a in oracle_actions(t, "inorder"):
        m = update_masks(m, a, c)
        c = apply_action(c, a)
        seen.append(sets(m))
    assert seen[0] == ({1}, {2, 3, 4})          # SHIFT
    assert seen[1] == ({1}, {2, 3, 4})          # NT(IN) leaves masks alone
    assert seen[2] == ({1, 2}, {3, 4})          # SHIFT Paradise
    assert seen[4] == ({1, 2}, {3, 4})          # single-token slot keeps its token
    assert seen[-2] == ({1}, set())             # root reduce keeps the leftmost token
    assert seen[-1] == seen[-2]                 # FINISH


def test_dump():
    m = update_masks(initial_masks(3), SHIFT, init_config("a b c".split(), "bottomup"))
    assert m.dump(1) == "t1 S={1} B={2,3}"


def test_read_only():
    m = initial_masks(2)
    with pytest.raises(ValueError):
        m.stack[0] = True


@pytest.mark.parametrize("system", [s.value for s in ALL_SYSTEMS])
def test_replay_stays_in_sync(system):
    for t in seeded_trees(300, seed=21):
        c = init_config(t.utterance, system)
        m = initial_masks(c.n)
        for a in oracle_actions(t, system):
            before_s, before_b = m.stack.sum(), m.buffer.sum()
            m = update_masks(m, a, c)
            d = apply_action(c, a)
            assert m == masks_for_config(d)
            assert not (m.stack & m.buffer).any()
            suffix = np.zeros(c.n, bool)
            suffix[d.cursor - 1:] = True
            assert np.array_equal(m.buffer, suffix)
            if a == SHIFT:
                assert (m.stack.sum(), m.buffer.sum()) == (before_s + 1, before_b - 1)
            elif isinstance(a, (Reduce, ReduceK)):
                assert m.buffer.sum() == before_b and m.stack.sum() <= before_s
            else:
                assert (m.stack.sum(), m.buffer.sum()) == (before_s, before_b)
            c = d


def test_inconsistent_mask_detected():
    c = init_config(["a", "b"], "topdown")
    c = apply_action(c, NonTerminal(Label.parse("IN:A")))
    with pytest.raises(InconsistentMask):
        update_masks(MaskPair(np.array([True, False]), np.array([False, True])), SHIFT, c)
