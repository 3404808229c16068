#!/usr/bin/env python3
"""evaluator: fold 的逐步語義、嚴格求值與窮舉 oracle"""

import pytest

from afl_ast import fold_functions
from afl_parser import parse
from evaluator import (
    UNSAT_WITHIN_BOUNDS, BruteForceBounds, BudgetExceeded, GuardOverlap, Interpretation,
    OutOfBoundsRead, OutOfBoundsWrite, brute_force_sat, eval_fold, eval_formula, satisfies,
)

EMPTY = Interpretation()


def fn_of(branches: str, arity: int = 1, ints=("x",)):
    init = "(vec " + " ".join("0" for _ in range(arity)) + ")"
    decls = "(declare-array a)" + "".join(f"(declare-int {x})" for x in ints)
    f = parse(decls + f"(assert (= (fold a {init} (branches {branches})) {init}))")
    return fold_functions(f)[0]


def test_counting_fold():
    fn = fn_of("(branch (< e 10) (++ (c 1))) (branch (>= e 10) skip)", arity=2)
    assert eval_fold([1, 20, 3], (0, 0), fn, EMPTY) == (3, 2)


def test_break_stops_before_the_index_moves():
    fn = fn_of("(branch (= e 0) skip) (branch (= e 1) break)")
    assert eval_fold([0, 0, 1, 0], (0,), fn, EMPTY) == (2,)


def test_no_enabled_branch_acts_as_break():
    fn = fn_of("(branch (= e 0) skip)")
    assert eval_fold([0, 5, 0], (0,), fn, EMPTY) == (1,)


@pytest.mark.parametrize("start, expected", [(0, 5), (2, 5), (5, 5), (7, 7), (-1, -1)])
def test_start_index_outside_or_inside_the_array(start, expected):
    fn = fn_of("(branch true skip)")
    assert eval_fold([9] * 5, (start,), fn, EMPTY) == (expected,)


def test_state_guards_follow_set_s():
    fn = fn_of("(branch (and (= s 0) (= e 1)) (seq (++ (c 1)) (set-s 1)))"
               " (branch (and (= s 1) (= e 0)) (set-s 0))"
               " (branch (and (= s 0) (= e 0)) skip)"
               " (branch (and (= s 1) (= e 1)) skip)", arity=2)
    assert eval_fold([1, 1, 0, 0, 1, 0], (0, 0), fn, EMPTY) == (6, 2)


def test_guard_overlap_is_an_error():
    fn = fn_of("(branch (> e 0) skip) (branch (> e 1) skip)")
    with pytest.raises(GuardOverlap) as info:
        eval_fold([5], (0,), fn, EMPTY)
    assert info.value.branches == [0, 1]
    assert info.value.index == 0


def test_overlap_that_never_triggers_is_fine():
    fn = fn_of("(branch (> e 0) skip) (branch (> e 1) skip)")
    assert eval_fold([-1, 1], (0,), fn, EMPTY) == (0,)


def test_guard_bounds_use_integer_variables():
    fn = fn_of("(branch (< e x) (++ (c 1))) (branch (>= e x) skip)", arity=2)
    assert eval_fold([1, 5, 2, 7], (0, 0), fn, Interpretation({"x": 3})) == (4, 2)


def test_guard_bounds_are_evaluated_even_for_empty_arrays():
    fn = fn_of("(branch (= e (select a 0)) skip)")
    with pytest.raises(OutOfBoundsRead):
        eval_fold([], (0,), fn, Interpretation(arrays={"a": ()}))


def test_connectives_are_strict():
    f = parse("(declare-array a)(declare-int x)(assert (or (= x 0) (= (select a 5) 0)))")
    sigma = Interpretation({"x": 0}, {"a": (1,)})
    with pytest.raises(OutOfBoundsRead):
        eval_formula(f, sigma)
    assert not satisfies(f, sigma)


def test_write_out_of_bounds():
    f = parse("(declare-array a)(declare-array b)(assert (= b (store a 3 0)))")
    with pytest.raises(OutOfBoundsWrite):
        eval_formula(f, Interpretation(arrays={"a": (1, 2), "b": (1, 2)}))


def test_store_equality():
    f = parse("(declare-array a)(declare-array b)(declare-int j)(assert (= b (store a j 7)))")
    assert eval_formula(f, Interpretation({"j": 1}, {"a": (1, 2), "b": (1, 7)}))
    assert not eval_formula(f, Interpretation({"j": 0}, {"a": (1, 2), "b": (1, 7)}))


def test_interpretation_extend_keeps_the_original():
    sigma = Interpretation({"x": 1}, {"a": (1,)})
    wider = sigma.extend({"y": 2}, {"b": [3, 4]})
    assert wider.ints == {"x": 1, "y": 2}
    assert wider.arrays == {"a": (1,), "b": (3, 4)}
    assert sigma.ints == {"x": 1}


# ---------------------------------------------------------------------------
# 窮舉 oracle
# ---------------------------------------------------------------------------

def test_brute_force_finds_a_model():
    f = parse("(declare-array a)(assert (= (len a) 2))(assert (= (select a 1) 2))")
    result = brute_force_sat(f)
    assert result.sat
    assert len(result.model.arrays["a"]) == 2
    assert result.model.arrays["a"][1] == 2
    assert eval_formula(f, result.model)


def test_brute_force_reports_unsat_within_bounds():
    f = parse("(declare-int x)(assert (< x 0))(assert (> x 0))")
    assert brute_force_sat(f).status == UNSAT_WITHIN_BOUNDS


def test_brute_force_with_workers_matches_single_thread():
    f = parse("(declare-array a)(declare-int x)"
              "(assert (= (fold a (vec 0 0) (branches (branch (= e 1) (++ (c 1))) (branch (distinct e 1) skip)))"
              " (vec (len a) x)))(assert (> x 1))")
    bounds = BruteForceBounds(max_len=3, value_range=(0, 1), int_range=(0, 3))
    single = brute_force_sat(f, bounds)
    parallel = brute_force_sat(f, BruteForceBounds(max_len=3, value_range=(0, 1), int_range=(0, 3), jobs=3))
    assert single.sat
    assert single.model == parallel.model


def test_brute_force_node_budget():
    f = parse("(declare-int x)(assert (< x 0))(assert (> x 0))")
    with pytest.raises(BudgetExceeded):
        brute_force_sat(f, BruteForceBounds(node_budget=3))


def test_brute_force_checks_assertions_as_soon_as_they_are_closed():
    # 逐一列舉三個變數要 85 * 85 * 4 個賦值; 提早檢查只需要十幾個節點
    f = parse("(declare-array a)(declare-array b)(declare-int x)"
              "(assert (= b a))(assert (= (select a 0) x))(assert (= x 3))")
    result = brute_force_sat(f, BruteForceBounds(max_len=3, value_range=(0, 3), int_range=(0, 3), node_budget=100))
    assert result.model == Interpretation({"x": 3}, {"a": (3,), "b": (3,)})


def test_brute_force_without_variables():
    assert brute_force_sat(parse("(assert (< 0 1))")).sat
    assert not brute_force_sat(parse("(assert (< 1 0))")).sat
