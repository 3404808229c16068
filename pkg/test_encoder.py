#!/usr/bin/env python3
"""encoder: guard 互斥、陣列群組、模式圖、Parikh 編碼與 ψ 的組合"""

from pathlib import Path

import pytest

from afl_ast import Const, Var, fold_functions, normalize
from afl_parser import parse, parse_file
from encoder import (
    ModeGraph, NfaTransition, RegionSystem, UnsupportedFragment, WriteLink, assemble,
    build_mode_graph, build_regions, check_guard_exclusivity, count_var, encode_parikh,
    coarse_mode_bound, preprocess_arrays, required_modes,
)
from evaluator import Interpretation, eval_formula
from lia import LiaBuilder, eq
from lia_backend import SAT, UNKNOWN, UNSAT, SolverConfig, solve_lia, z3_available
import pipeline
from pipeline import solve_formula
from scm import translate_fold

CORPUS = Path(__file__).parent / "corpus"
FALLBACK = SolverConfig(choice="fallback")
Z3 = SolverConfig(choice="z3")
needs_z3 = pytest.mark.skipif(not z3_available(), reason="z3-solver 未安裝")


def fn_of(branches: str, arity: int = 1):
    init = "(vec " + " ".join("0" for _ in range(arity)) + ")"
    f = parse(f"(declare-array a)(declare-int x)(assert (= (fold a {init} (branches {branches})) {init}))")
    return fold_functions(normalize(f))[0]


# ---------------------------------------------------------------------------
# guard 互斥
# ---------------------------------------------------------------------------

def test_overlapping_guards_come_with_a_witness():
    result = check_guard_exclusivity(fn_of("(branch (> e 0) skip) (branch (> e 1) skip)"), FALLBACK)
    assert not result
    first, second, model = result.witness
    assert (first, second) == (0, 1)
    assert model["impl.e"] > 1


@pytest.mark.parametrize("branches", [
    "(branch (< e 10) skip) (branch (>= e 10) skip)",
    "(branch (< e x) skip) (branch (>= e x) skip)",
    "(branch (and (= s 0) (= e 0)) (set-s 1)) (branch (and (= s 1) (= e 0)) (set-s 0))",
])
def test_exclusive_guards(branches):
    assert check_guard_exclusivity(fn_of(branches), FALLBACK)


# ---------------------------------------------------------------------------
# 陣列前處理
# ---------------------------------------------------------------------------

def test_preprocess_groups_equal_and_written_arrays():
    f = parse("(declare-array a)(declare-array b)(declare-array c)(declare-array d)(declare-int j)"
              "(assert (and (= b (store a j 0)) (= c a)))"
              "(assert (> (len d) 0))")
    rest, groups = preprocess_arrays(f)
    assert len(rest.assertions) == 1
    assert groups.tag("c") == "a"
    assert groups.group("b") == groups.group("a") == 0
    assert groups.len_var("d") == "len.g1"
    assert groups.members(0) == ["a", "b", "c"]
    assert groups.writes == [WriteLink("b", "a", Var("j"), Const(0))]


def test_write_on_both_sides_is_unsupported():
    f = parse("(declare-array a)(declare-array b)(assert (= (store a 0 1) (store b 0 1)))")
    with pytest.raises(UnsupportedFragment):
        preprocess_arrays(f)


def test_positive_array_equality_inside_disjunction_is_unsupported():
    f = parse("(declare-array a)(declare-array b)(declare-int x)(assert (or (= a b) (= x 0)))")
    with pytest.raises(UnsupportedFragment):
        solve_formula(f, FALLBACK)


# ---------------------------------------------------------------------------
# 區域與模式
# ---------------------------------------------------------------------------

def test_region_system():
    regions = RegionSystem({"c": (3, "y"), "i": ()})
    assert regions.region_count("c") == 5
    assert regions.region_count("i") == 1
    assert regions.constrained() == ["c"]
    assert regions.regions("c") == ["(-inf, 3-1]", "[3, 3]", "[3+1, y-1]", "[y, y]", "[y+1, inf)"]
    assert regions.regions("i") == ["(-inf, inf)"]


def test_coarse_mode_bound():
    assert coarse_mode_bound(0, 2, 3) == 1
    assert coarse_mode_bound(2, 3, 5) == 30


def test_mode_graph_has_one_copy_per_mode():
    machine = translate_fold(fn_of("(branch (< (c 1) 3) (++ (c 1)))", arity=2), [])
    regions = build_regions(machine)
    assert regions.boundaries["f.c1"] == (3,)
    assert required_modes(machine, regions) == 3
    nfa = build_mode_graph(machine, regions)
    assert nfa.copies == 3
    assert len(nfa.states) == 3 * len(machine.states)
    assert len(nfa.transitions) == 3 * 3 + 2 * 3
    assert nfa.initial == (0, 0)


def test_unconstrained_machine_needs_a_single_copy():
    machine = translate_fold(fn_of("(branch (< e 10) (++ (c 1))) (branch (>= e 10) skip)", arity=2), [])
    regions = build_regions(machine)
    assert regions.constrained() == []
    assert build_mode_graph(machine, regions).copies == 1


# ---------------------------------------------------------------------------
# Parikh 編碼
# ---------------------------------------------------------------------------

LINE = ModeGraph(
    states=(0, 1, 2),
    transitions=(NfaTransition(0, 1, "a"), NfaTransition(1, 1, "b"), NfaTransition(2, 2, "c")),
    initial=0,
    accepting=frozenset({1}),
)


def _solve_with(psi, *extra):
    builder = LiaBuilder()
    builder.extend(psi)
    builder.add(*extra)
    return solve_lia(builder.build(), Z3).status


@needs_z3
def test_parikh_accepts_reachable_counts():
    psi = encode_parikh(LINE)
    assert _solve_with(psi, eq(count_var("nfa", 1), 3)) == SAT
    assert _solve_with(psi, eq(count_var("nfa", 0), 1), eq(count_var("nfa", 1), 0)) == SAT


@needs_z3
def test_parikh_rejects_disconnected_cycles_and_broken_flow():
    psi = encode_parikh(LINE)
    assert _solve_with(psi, eq(count_var("nfa", 2), 1)) == UNSAT
    assert _solve_with(psi, eq(count_var("nfa", 0), 0)) == UNSAT
    assert _solve_with(psi, eq(count_var("nfa", 0), 2)) == UNSAT


# ---------------------------------------------------------------------------
# ψ 的組合
# ---------------------------------------------------------------------------

def test_assemble_names_variables_deterministically():
    f = normalize(parse_file(CORPUS / "boundedness.afl"))
    psi, emap = assemble(f)
    assert {"l", "u", "len.g0", "f0.out0"} <= set(psi.declarations)
    assert psi.declarations[:2] == ("l", "u")
    stats = emap.stats()
    assert stats["folds"] == 1
    assert stats["groups"] == 1
    assert stats["copies"] == 1
    assert emap.folds[0].init == (0,)
    assert emap.groups[0].machine.counters == ("f0.i", "p.g0")
    again, _ = assemble(f)
    assert again == psi


@needs_z3
def test_reads_without_folds_use_ackermann_constraints():
    f = normalize(parse("(declare-array a)(declare-int i)(declare-int j)"
                        "(assert (= i j))(assert (distinct (select a i) (select a j)))"))
    psi, emap = assemble(f)
    assert emap.groups[0].machine is None
    assert len(emap.reads) == 2
    assert solve_lia(psi, Z3).status == UNSAT


@needs_z3
def test_negated_array_equality():
    f = parse("(declare-array a)(declare-array b)"
              "(assert (not (= a b)))(assert (= (len a) 2))(assert (= (len b) 2))")
    result = solve_formula(f, Z3)
    assert result.status == SAT
    assert result.model.arrays["a"] != result.model.arrays["b"]
    assert eval_formula(f, result.model)


# ---------------------------------------------------------------------------
# 模型驗證
# ---------------------------------------------------------------------------

@needs_z3
@pytest.mark.parametrize("validate", [True, False])
def test_wrong_models_are_never_reported(monkeypatch, validate):
    f = parse("(declare-array a)(declare-int x)(assert (= (len a) 1))(assert (>= x 1))")
    monkeypatch.setattr(pipeline, "build_interpretation",
                        lambda model, emap: Interpretation({"x": 0}, {"a": (0,)}))
    result = solve_formula(f, Z3, validate=validate)
    assert result.status == UNKNOWN
    assert result.model is None
    assert "驗證" in result.reason


@needs_z3
def test_models_of_formulas_with_wildcards_are_checked_against_the_original():
    f = parse("(declare-array a)"
              "(assert (= (fold a (vec 0 0) (branches (branch true (++ (c 1))))) (vec _ 2)))")
    result = solve_formula(f, Z3, validate=False)
    assert result.status == SAT
    assert set(result.model.ints) == set()
    assert len(result.model.arrays["a"]) == 2
