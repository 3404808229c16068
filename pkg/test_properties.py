#!/usr/bin/env python3
"""
性質測試 (hypothesis)

1. SCM 模擬與 fold 參考語義逐步一致
2. Parikh 編碼恰好描述短執行的次數向量
3. 整個求解流程與窮舉 oracle 一致
"""

import random

import pytest
from hypothesis import HealthCheck, given, settings

from afl_ast import Implicit, Var, build_cfg, check_scc_monotone
from afl_parser import parse
from afl_generators import fold_cases, formulas, nfas, random_fold_function
from encoder import ModeGraph, NfaTransition, count_var, encode_parikh
from evaluator import BruteForceBounds, Interpretation, brute_force_sat, eval_fold, eval_formula, eval_int
from lia import LiaBuilder, add, conj, eq, le, neg
from lia_backend import SAT, UNKNOWN, UNSAT, SolverConfig, solve_lia, z3_available
from pipeline import solve_formula
from scm import align, reversal_bound, simulate, translate_fold

needs_z3 = pytest.mark.skipif(not z3_available(), reason="z3-solver 未安裝")
Z3 = SolverConfig(choice="z3")


# ---------------------------------------------------------------------------
# SCM 與參考語義
# ---------------------------------------------------------------------------

def check_trace(case):
    fn, cells, init, x = case
    sigma = Interpretation({"x": x})
    sink = []
    machine = translate_fold(fn, sink, init=init)
    values = {"x": x}
    for definition in sink:
        values[definition.left.name] = eval_int(definition.right, sigma)
    counters, run = simulate(align(machine, init[0], len(cells)), cells, values)
    assert len(run) == len(cells)
    assert counters[:-1] == eval_fold(cells, init, fn, sigma)
    assert counters[-1] == len(cells)


@settings(max_examples=200, deadline=None)
@given(fold_cases())
def test_machine_simulation_matches_fold_semantics(case):
    check_trace(case)


@pytest.mark.slow
@settings(max_examples=1000, deadline=None)
@given(fold_cases())
def test_machine_simulation_matches_fold_semantics_long(case):
    check_trace(case)


def test_random_fold_functions_reverse_counters_and_compare_against_symbols():
    rng = random.Random(0)
    reversing = symbolic = 0
    for _ in range(300):
        fn = random_fold_function(rng, 2, rng.randint(1, 3), 2, ("x",))
        assert check_scc_monotone(build_cfg(fn))
        if reversal_bound(translate_fold(fn, []))["f.c1"] > 0:
            reversing += 1
        if any(a.lhs == Implicit("e") and isinstance(a.rhs, Var) for b in fn.branches for a in b.guard):
            symbolic += 1
    assert reversing > 0
    assert symbolic > 0


# ---------------------------------------------------------------------------
# Parikh 編碼
# ---------------------------------------------------------------------------

MAX_RUN = 6


def short_run_counts(nfa: ModeGraph, limit: int = MAX_RUN) -> set[tuple[int, ...]]:
    """長度不超過 limit、在接受狀態結束的執行的次數向量"""
    start = (nfa.initial, (0,) * len(nfa.transitions))
    seen = {start}
    frontier = [start]
    for _ in range(limit):
        following = []
        for state, counts in frontier:
            for idx, t in enumerate(nfa.transitions):
                if t.source != state:
                    continue
                bumped = counts[:idx] + (counts[idx] + 1,) + counts[idx + 1:]
                config = (t.target, bumped)
                if config not in seen:
                    seen.add(config)
                    following.append(config)
        frontier = following
    return {counts for state, counts in seen if state in nfa.accepting}


def counts_are(vector: tuple[int, ...]):
    return conj(*(eq(count_var("nfa", idx), n) for idx, n in enumerate(vector)))


@needs_z3
@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(nfas(transitions=5))
def test_parikh_encoding_describes_short_runs(nfa):
    psi = encode_parikh(nfa)
    expected = short_run_counts(nfa)

    for vector in sorted(expected):
        builder = LiaBuilder()
        builder.extend(psi)
        builder.add(counts_are(vector))
        assert solve_lia(builder.build(), Z3).status == SAT, vector

    builder = LiaBuilder()
    builder.extend(psi)
    builder.add(le(add(*(count_var("nfa", idx) for idx in range(len(nfa.transitions)))), MAX_RUN))
    builder.add(*(neg(counts_are(vector)) for vector in expected))
    assert solve_lia(builder.build(), Z3).status == UNSAT


def test_short_run_counts_of_alternating_nfa():
    nfa = ModeGraph((0, 1), (NfaTransition(0, 1, 0), NfaTransition(1, 0, 1)), 0, frozenset({0}))
    assert short_run_counts(nfa) == {(0, 0), (1, 1), (2, 2), (3, 3)}


# ---------------------------------------------------------------------------
# 求解流程與窮舉 oracle
# ---------------------------------------------------------------------------

ORACLE_BOUNDS = BruteForceBounds(max_len=3, value_range=(-2, 2), int_range=(-2, 2), node_budget=5_000_000)
LONG_ORACLE_BOUNDS = BruteForceBounds(max_len=4, value_range=(-2, 2), int_range=(-2, 2), node_budget=50_000_000)


def check_against_oracle(text: str, bounds: BruteForceBounds = ORACLE_BOUNDS):
    f = parse(text)
    result = solve_formula(f, Z3)
    assert result.status != UNKNOWN, result.reason
    if result.status == SAT and " _" not in text:
        # 輸出的模型不含萬用字元對應的變數
        assert eval_formula(f, result.model)
    oracle = brute_force_sat(f, bounds)
    if oracle.sat:
        assert result.status == SAT
    if result.status == UNSAT:
        assert not oracle.sat


@needs_z3
@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(formulas())
def test_solver_agrees_with_brute_force(text):
    check_against_oracle(text)


@needs_z3
@settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(formulas(arrays=1, max_len=4))
def test_solver_agrees_with_brute_force_on_length_four(text):
    check_against_oracle(text, LONG_ORACLE_BOUNDS)


@pytest.mark.slow
@needs_z3
@settings(max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(formulas(max_len=4))
def test_solver_agrees_with_brute_force_many(text):
    check_against_oracle(text, LONG_ORACLE_BOUNDS)
