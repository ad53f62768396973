import random
from collections import deque

import pytest

from topshift.errors import (
    EmptyUtterance,
    FinalConfiguration,
    IllegalAction,
    IllegalActionAt,
    NotFinal,
)
from topshift.oracle import oracle_actions
from topshift.transitions import (
    FINISH,
    REDUCE,
    SHIFT,
    ALL_SYSTEMS,
    NonTerminal,
    OpenNT,
    ReduceK,
    System,
    action_allowed_in,
    apply_action,
    execute,
    format_actions,
    init_config,
    is_final,
    legal_actions,
    min_steps_to_final,
    parse_action,
    parse_actions,
    step_budget,
    trace,
)
from topshift.tree import Label, iter_constituents, parse_tree, validate_tree

from search import explore
from treegen import PLAY, PLAY_SHORT, seeded_trees

L = Label.parse
TINY = [L("IN:A"), L("IN:B"), L("SL:X"), L("SL:Y")]
ONE = [L("IN:A"), L("SL:X")]


def rows(tree_text, system):
    t = parse_tree(tree_text)
    return [str(c) for c in trace(t.utterance, oracle_actions(t, system), system)]


# state-by-state traces of the worked example, transcribed from the reference state tables
TOPDOWN_ROWS = [
    "[] [Play, Paradise, by, Coldplay] f=false",
    "[IN:PLAY_MUSIC] [Play, Paradise, by, Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play] [Paradise, by, Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE] [Paradise, by, Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE, Paradise] [by, Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE(Paradise)] [by, Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE(Paradise), by] [Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE(Paradise), by, SL:ARTIST] [Coldplay] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE(Paradise), by, SL:ARTIST, Coldplay] [] f=false",
    "[IN:PLAY_MUSIC, Play, SL:TITLE(Paradise), by, SL:ARTIST(Coldplay)] [] f=false",
    "[IN:PLAY_MUSIC(Play SL:TITLE(Paradise) by SL:ARTIST(Coldplay))] [] f=false",
]
BOTTOMUP_ROWS = [
    "[] [Play, Paradise, by, Coldplay] f=false",
    "[Play] [Paradise, by, Coldplay] f=false",
    "[Play, Paradise] [by, Coldplay] f=false",
    "[Play, SL:TITLE(Paradise)] [by, Coldplay] f=false",
    "[Play, SL:TITLE(Paradise), by] [Coldplay] f=false",
    "[Play, SL:TITLE(Paradise), by, Coldplay] [] f=false",
    "[Play, SL:TITLE(Paradise), by, SL:ARTIST(Coldplay)] [] f=false",
    "[IN:PLAY_MUSIC(Play SL:TITLE(Paradise) by SL:ARTIST(Coldplay))] [] f=false",
    "[IN:PLAY_MUSIC(Play SL:TITLE(Paradise) by SL:ARTIST(Coldplay))] [] f=true",
]
INORDER_ROWS = [
    "[] [Play, Paradise, by, Coldplay] f=false",
    "[Play] [Paradise, by, Coldplay] f=false",
    "[Play, IN:PLAY_MUSIC] [Paradise, by, Coldplay] f=false",
    "[Play, IN:PLAY_MUSIC, Paradise] [by, Coldplay] f=false",
    "[Play, IN:PLAY_MUSIC, Paradise, SL:TITLE] [by, Coldplay] f=false",
    "[Play, IN:PLAY_MUSIC, SL:TITLE(Paradise)] [by, Coldplay] f=false",
    "[Play, IN:PLAY_MUSIC, SL:TITLE(Paradise), by] [Coldplay] f=false",
    "[Play, IN:PLAY_MUSIC, SL:TITLE(Paradise), by, Coldplay] [] f=false",
    "[Play, IN:PLAY_MUSIC, SL:TITLE(Paradise), by, Coldplay, SL:ARTIST] [] f=false",
    "[Play, IN:PLAY_MUSIC, SL:TITLE(Paradise), by, SL:ARTIST(Coldplay)] [] f=false",
    "[IN:PLAY_MUSIC(Play SL:TITLE(Paradise) by SL:ARTIST(Coldplay))] [] f=false",
    "[IN:PLAY_MUSIC(Play SL:TITLE(Paradise) by SL:ARTIST(Coldplay))] [] f=true",
]


@pytest.mark.parametrize("system,expected", [
    ("topdown", TOPDOWN_ROWS), ("bottomup", BOTTOMUP_ROWS), ("inorder", INORDER_ROWS)])
def test_worked_example_rows(system, expected):
    assert rows(PLAY_SHORT, system) == expected


def test_oracle_sequences():
    t = parse_tree(PLAY)
    assert format_actions(oracle_actions(t, "topdown")) == (
        "NT(IN:PLAY_MUSIC) SHIFT NT(SL:MUSIC_TRACK_TITLE) SHIFT REDUCE SHIFT "
        "NT(SL:MUSIC_ARTIST_NAME) SHIFT REDUCE REDUCE")
    assert format_actions(oracle_actions(t, "bottomup")) == (
        "SHIFT SHIFT REDUCE#1(SL:MUSIC_TRACK_TITLE) SHIFT SHIFT REDUCE#1(SL:MUSIC_ARTIST_NAME) "
        "REDUCE#4(IN:PLAY_MUSIC) FINISH")
    assert format_actions(oracle_actions(t, "inorder")) == (
        "SHIFT NT(IN:PLAY_MUSIC) SHIFT NT(SL:MUSIC_TRACK_TITLE) REDUCE SHIFT SHIFT "
        "NT(SL:MUSIC_ARTIST_NAME) REDUCE REDUCE FINISH")


def test_action_text_roundtrip():
    text = "SHIFT NT(IN:X) NT(SL:Y) REDUCE REDUCE#4(IN:X) FINISH"
    assert format_actions(parse_actions(text)) == text
    for bad in ("NT()", "REDUCE#0(IN:X)", "POP"):
        with pytest.raises(ValueError):
            parse_action(bad)


def test_init_config():
    c = init_config("Play Paradise by Coldplay".split(), "topdown")
    assert c.stack == () and c.buffer == ("Play", "Paradise", "by", "Coldplay")
    c = init_config(["hi"], "inorder")
    assert (c.stack, c.cursor, c.finished) == ((), 1, False)
    with pytest.raises(EmptyUtterance):
        init_config([], "bottomup")


def test_topdown_initial_only_intents():
    acts = legal_actions(init_config(["a", "b"], "topdown"), TINY)
    assert acts == [NonTerminal(L("IN:A")), NonTerminal(L("IN:B"))]


def test_bottomup_intent_on_top_blocks_shift():
    c = init_config(["a", "b"], "bottomup")
    c = apply_action(apply_action(c, SHIFT), ReduceK(1, L("IN:A")))
    acts = legal_actions(c, TINY)
    assert SHIFT not in acts
    assert all(isinstance(a, ReduceK) and a.k == 1 and a.label.is_slot for a in acts)


def test_inorder_open_intent_state():
    c = init_config("Play Paradise by Coldplay".split(), "inorder")
    c = apply_action(apply_action(c, SHIFT), NonTerminal(L("IN:PLAY_MUSIC")))
    acts = legal_actions(c, TINY)
    assert SHIFT in acts and REDUCE in acts
    assert not any(isinstance(a, NonTerminal) for a in acts)


def test_apply_examples():
    t = parse_tree(PLAY_SHORT)
    td = trace(t.utterance, oracle_actions(t, "topdown"), "topdown")
    assert len(td[-1].stack) == 1 and is_final(td[-1])
    bu = trace(t.utterance, oracle_actions(t, "bottomup"), "bottomup")
    assert str(bu[-2]) == BOTTOMUP_ROWS[-2]
    assert not is_final(bu[-2]) and is_final(bu[-1])
    with pytest.raises(IllegalAction):
        apply_action(td[-2], SHIFT)


def test_execute_errors():
    t = parse_tree(PLAY)
    seq = oracle_actions(t, "bottomup")
    with pytest.raises(NotFinal):
        execute(t.utterance, seq[:-1], "bottomup")
    with pytest.raises(IllegalActionAt) as e:
        execute(t.utterance, [SHIFT] + seq, "topdown")
    assert e.value.step == 0
    assert execute(t.utterance, oracle_actions(t, "inorder"), "inorder") == t


def test_final_configuration_raises():
    t = parse_tree("[IN:A x ]")
    last = trace(t.utterance, oracle_actions(t, "inorder"), "inorder")[-1]
    with pytest.raises(FinalConfiguration):
        legal_actions(last, TINY)


def test_action_kinds_per_system():
    assert not action_allowed_in(FINISH, System.TOPDOWN)
    assert not action_allowed_in(REDUCE, System.BOTTOMUP)
    assert not action_allowed_in(ReduceK(1, L("IN:A")), System.INORDER)
    c = init_config(["a"], "topdown")
    with pytest.raises(IllegalAction):
        apply_action(c, FINISH)


@pytest.mark.parametrize("system", [s.value for s in ALL_SYSTEMS])
def test_roundtrip_and_length_laws(system):
    for t in seeded_trees(500, seed=11):
        seq = oracle_actions(t, system)
        c = sum(1 for _ in iter_constituents(t.root))
        n = len(t.utterance)
        expected = {"topdown": 2 * c + n, "bottomup": c + n + 1, "inorder": 2 * c + n + 1}[system]
        assert len(seq) == expected
        assert execute(t.utterance, seq, system) == t


def random_walk(utterance, system, rng, labels=TINY):
    c = init_config(utterance, system)
    for _ in range(step_budget(len(utterance))):
        if is_final(c):
            return c
        acts = legal_actions(c, labels)
        assert acts, f"dead end at {c}"
        c = apply_action(c, rng.choice(acts))
    return c


@pytest.mark.parametrize("system", [s.value for s in ALL_SYSTEMS])
def test_random_walk_soundness(system):
    rng = random.Random(3)
    done = 0
    for _ in range(400):
        utt = ["w"] * rng.randint(1, 6)
        c = random_walk(utt, system, rng)
        if is_final(c):
            done += 1
            assert validate_tree(c.stack[0], c.utterance) == []
    assert done > 0


def _successors(c, labels):
    return [apply_action(c, a, check=False) for a in legal_actions(c, labels)]


def _shortest(c, labels, cap):
    """Breadth-first distance to a final configuration, or None beyond ``cap``."""
    seen = {c}
    frontier = deque([(c, 0)])
    while frontier:
        x, d = frontier.popleft()
        if is_final(x):
            return d
        if d == cap:
            continue
        for y in _successors(x, labels):
            if y not in seen:
                seen.add(y)
                frontier.append((y, d + 1))
    return None


@pytest.mark.parametrize("system", [s.value for s in ALL_SYSTEMS])
def test_min_steps_matches_search(system):
    rng = random.Random(8)
    for _ in range(300):
        utt = ["w"] * rng.randint(1, 4)
        c = init_config(utt, system)
        for _ in range(rng.randint(0, 16)):
            if is_final(c):
                break
            c = apply_action(c, rng.choice(legal_actions(c, ONE)))
        m = min_steps_to_final(c)
        assert _shortest(c, ONE, m) == m


def test_step_budget():
    assert step_budget(1) == 24 and step_budget(10) == 96


@pytest.mark.parametrize("system", [s.value for s in ALL_SYSTEMS])
def test_no_dead_ends_small(system):
    for n in (1, 2, 3):
        _, dead, finals = explore(n, system, ONE)
        assert dead == [] and finals


def test_systems_build_the_same_trees():
    # the three systems reach exactly the same set of trees, all valid
    for n in (1, 2):
        found = [explore(n, s, ONE)[2] for s in ALL_SYSTEMS]
        assert found[0] == found[1] == found[2]
        for text in found[0]:
            t = parse_tree(text)
            assert validate_tree(t.root, t.utterance) == []


@pytest.mark.parametrize("system", [s.value for s in ALL_SYSTEMS])
def test_min_steps_exact_on_all_reachable(system):
    for n in (1, 2, 3):
        seen, _, _ = explore(n, system, ONE)
        for c in seen:
            m = min_steps_to_final(c)
            assert _shortest(c, ONE, m) == m, str(c)
