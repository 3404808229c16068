#!/usr/bin/env python3
"""scm: fold 翻譯、對齊、積、反轉次數與重播"""

import pytest

from afl_ast import IntEq, Var, fold_functions
from afl_parser import parse
from evaluator import Interpretation, eval_fold
from scm import (
    DONE, WAIT, Cell, CounterAtom, InputAtom, NonMonotoneScc, ReplayError, align, contradictory,
    dump, observer, product, replay, reversal_bound, simulate, translate_fold, write_link,
)


def fn_of(branches: str, arity: int = 1):
    init = "(vec " + " ".join("0" for _ in range(arity)) + ")"
    f = parse(f"(declare-array a)(declare-int x)(assert (= (fold a {init} (branches {branches})) {init}))")
    return fold_functions(f)[0]


def test_exhaustive_guards_need_no_catch_all():
    m = translate_fold(fn_of("(branch (< e 10) skip) (branch (>= e 10) skip)"), [])
    assert [t.kind for t in m.transitions] == ["active", "active", "done"]
    assert m.counters == ("f.i",)
    assert m.states == (0, DONE)


def test_catch_all_goes_to_done():
    m = translate_fold(fn_of("(branch (= e 0) skip)"), [])
    catch_all = [t for t in m.transitions if t.kind == "catch-all"]
    assert len(catch_all) == 1
    assert catch_all[0].target == DONE
    assert catch_all[0].input_guard == (InputAtom("a", "!=", 0),)
    assert catch_all[0].increments == (0,)


def test_non_constant_guard_terms_are_hoisted_once():
    sink = []
    m = translate_fold(fn_of("(branch (< e x) (++ (c 1))) (branch (>= e x) skip)", arity=2), sink)
    assert sink == [IntEq(Var("f.x0"), Var("x"))]
    assert m.variables == frozenset({"f.x0"})
    assert len(m.transitions) == 3
    assert m.transitions[0].increments == (1, 1)


def test_break_becomes_zero_increment_transition():
    m = translate_fold(fn_of("(branch (= e 0) (++ (c 1))) (branch (distinct e 0) break)", arity=2), [])
    breaks = [t for t in m.transitions if t.kind == "break"]
    assert len(breaks) == 1
    assert breaks[0].increments == (0, 0)
    assert breaks[0].target == DONE


def test_non_monotone_fold_is_rejected():
    fn = fn_of("(branch (= s 0) (seq (++ (c 1)) (set-s 1)))"
               " (branch (= s 1) (seq (-- (c 1)) (set-s 0)))", arity=2)
    with pytest.raises(NonMonotoneScc):
        translate_fold(fn, [])


@pytest.mark.parametrize("atoms, expected", [
    ([CounterAtom("c", "<", 3), CounterAtom("c", ">", 2)], True),
    ([CounterAtom("c", ">=", 3), CounterAtom("c", "<=", 3), CounterAtom("c", "!=", 3)], True),
    ([CounterAtom("c", ">=", 3), CounterAtom("c", "<=", 4), CounterAtom("c", "!=", 3)], False),
    ([CounterAtom("c", "<", "y"), CounterAtom("c", ">", "y")], True),
    ([CounterAtom("c", "<=", "y"), CounterAtom("c", ">=", "y")], False),
    ([InputAtom("a", "<", Cell("a"))], True),
    ([InputAtom("a", "=", 1), InputAtom("b", "=", 2)], False),
    ([], False),
])
def test_contradictory(atoms, expected):
    assert contradictory(atoms) is expected


def test_align_from_zero_adds_only_the_position_counter():
    m = align(translate_fold(fn_of("(branch true skip)"), []), 0, "len")
    assert m.counters == ("f.i", "p")
    assert WAIT not in m.states
    assert m.final_values == (None, "len")
    assert all(t.increments[-1] == 1 for t in m.transitions)


def test_align_with_offset_waits_for_the_start_position():
    fn = fn_of("(branch true skip)")
    m = align(translate_fold(fn, [], init=(2,)), 2, 4)
    assert m.initial == WAIT
    counters, run = simulate(m, [5, 5, 5, 5], {})
    assert counters == (4, 4)
    assert [m.transitions[t].kind for t in run[:2]] == ["wait", "wait"]
    assert counters[:-1] == eval_fold([5, 5, 5, 5], (2,), fn, Interpretation())


def test_product_merges_the_shared_position_counter():
    fn = fn_of("(branch (= e 0) skip)")
    sink = []
    left = align(translate_fold(fn, sink, name="f"), 0, "len")
    right = align(translate_fold(fn, sink, name="g", tag="b"), 0, "len")
    m = product(left, right)
    assert m.counters == ("f.i", "p", "g.i")
    assert m.initial == (0, 0)
    assert m.tags == ("a", "b")
    counters, _ = simulate(m, [{"a": 0, "b": 0}, {"a": 0, "b": 1}, {"a": 1, "b": 1}], {})
    assert counters == (2, 3, 1)


def test_unpruned_product_is_the_full_pairing():
    m1 = translate_fold(fn_of("(branch (= e 0) skip)"), [], name="f")
    m2 = translate_fold(fn_of("(branch (= e 0) skip)"), [], name="g")
    m = product(m1, m2, prune=False)
    assert len(m.states) == len(m1.states) * len(m2.states)
    assert len(m.transitions) == len(m1.transitions) * len(m2.transitions)


def test_reversal_bound_counts_direction_changes():
    fn = fn_of("(branch (and (= s 0) (= e 0)) (++ (c 1)))"
               " (branch (and (= s 0) (= e 1)) (set-s 1))"
               " (branch (and (= s 1) (= e 1)) (-- (c 1)))", arity=2)
    bounds = reversal_bound(translate_fold(fn, []))
    assert bounds == {"f.i": 0, "f.c1": 1}


def test_replay_checks_every_constraint():
    m = translate_fold(fn_of("(branch (= e 0) skip)"), [])
    assert replay(m, [0, 0, 1, 2], [0, 0, 3, 0], {}) == (2,)
    with pytest.raises(ReplayError) as info:
        replay(m, [0, 0], [0, 5], {})
    assert info.value.step == 1
    with pytest.raises(ReplayError):
        replay(m, [2], [0], {})


def test_write_link_follows_base_except_at_the_index():
    link = write_link("a", "b", 1, "v")
    cells = [{"a": 3, "b": 3}, {"a": 4, "b": 9}, {"a": 5, "b": 5}]
    counters, run = simulate(link, cells, {"v": 9})
    assert counters == (3,)
    assert run == [1, 0, 1]
    with pytest.raises(ReplayError):
        simulate(link, cells, {"v": 8})


def test_observer_pins_the_read_cell():
    watch = observer("a", "j", "v")
    assert simulate(watch, [1, 7, 2], {"j": 1, "v": 7})[0] == (3,)
    with pytest.raises(ReplayError) as info:
        simulate(watch, [1, 7, 2], {"j": 1, "v": 6})
    assert info.value.step == 1


def test_dump_lists_counters_and_transitions():
    text = dump(translate_fold(fn_of("(branch (= e 0) (++ (c 1)))", arity=2), []), "f")
    assert text.startswith("machine f\n  counters: f.i f.c1\n")
    assert "transitions (3):" in text
    assert "t0: 0 -> 0 [x_e^a = 0] +(1,1) active f:b0" in text
