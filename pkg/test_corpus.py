#!/usr/bin/env python3
"""語料: 每個 .afl 檔的結果要符合 .expect，並與產生器的文字一致"""

from pathlib import Path

import pytest

from afl_generators import SVCOMP, corpus_instances
from afl_parser import parse, parse_file
from evaluator import UNSAT_WITHIN_BOUNDS, BruteForceBounds, Interpretation, brute_force_sat, eval_formula
from lia_backend import SAT, SolverConfig, z3_available
from pipeline import solve_formula

CORPUS = Path(__file__).parent / "corpus"
Z3 = SolverConfig(choice="z3")
needs_z3 = pytest.mark.skipif(not z3_available(), reason="z3-solver 未安裝")

SLOW = {"min_max_unbalanced", "markdown_1"}


def corpus_params():
    for path in sorted(CORPUS.glob("*.afl")):
        marks = [pytest.mark.slow] if path.stem in SLOW else []
        yield pytest.param(path, id=path.stem, marks=marks)


@needs_z3
@pytest.mark.parametrize("path", corpus_params())
def test_corpus_status_matches_expectation(path):
    expected = path.with_suffix(".expect").read_text(encoding="utf-8").strip()
    f = parse_file(path)
    result = solve_formula(f, Z3)
    assert result.status == expected, result.reason
    if result.status == SAT:
        assert eval_formula(f, result.model)


@needs_z3
def test_pumping_model_is_unique():
    result = solve_formula(parse_file(CORPUS / "pumping_n3.afl"), Z3)
    assert result.model == Interpretation({"n": 3}, {"a": (0, 0, 0, 1, 1, 1)})
    assert result.array_length == 6


@needs_z3
def test_periodic_array():
    result = solve_formula(parse_file(CORPUS / "periodicity.afl"), Z3)
    assert result.model.arrays["a"] == (0, 1, 0, 1)


def test_corpus_files_match_generators():
    for inst in corpus_instances():
        assert (CORPUS / f"{inst.name}.afl").read_text(encoding="utf-8") == inst.text, inst.name
        assert (CORPUS / f"{inst.name}.expect").read_text(encoding="utf-8").strip() == inst.expected


def test_pumping_by_brute_force():
    f = parse_file(CORPUS / "pumping_n3.afl")
    found = brute_force_sat(f, BruteForceBounds(max_len=6, value_range=(0, 1), int_range=(3, 3)))
    assert found.sat
    assert found.model.arrays["a"] == (0, 0, 0, 1, 1, 1)


def check_no_small_model(name: str, bounds: BruteForceBounds):
    found = brute_force_sat(parse(SVCOMP[name]), bounds)
    assert not found.sat
    assert found.status == UNSAT_WITHIN_BOUNDS


@pytest.mark.parametrize("name", sorted(SVCOMP))
def test_svcomp_has_no_model_up_to_length_three(name):
    check_no_small_model(name, BruteForceBounds(max_len=3, value_range=(-2, 2), int_range=(-2, 2),
                                                node_budget=5_000_000))


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(SVCOMP))
def test_svcomp_has_no_model_up_to_length_four(name):
    check_no_small_model(name, BruteForceBounds(max_len=4, value_range=(-2, 2), int_range=(-2, 2),
                                                node_budget=50_000_000))
