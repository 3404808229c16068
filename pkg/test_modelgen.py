#!/usr/bin/env python3
"""modelgen: Euler 路徑、模型檔與模型驗證"""

from collections import Counter

import pytest

from afl_parser import parse
from encoder import ModeGraph, NfaTransition
from evaluator import Interpretation
from modelgen import NoEulerianPath, extract_run, parse_model, print_model, validate_model
from sexpr import ParseError

LOOP = ModeGraph(
    states=(0, 1),
    transitions=(NfaTransition(0, 1, "a"), NfaTransition(1, 1, "b"), NfaTransition(1, 0, "c")),
    initial=0,
    accepting=frozenset({0, 1}),
)


def assert_valid_run(nfa: ModeGraph, run: list[int], counts: dict[int, int], sink):
    state = nfa.initial
    for idx in run:
        assert nfa.transitions[idx].source == state
        state = nfa.transitions[idx].target
    assert state == sink
    assert Counter(run) == Counter({idx: n for idx, n in counts.items() if n})


def test_extract_run_uses_every_counted_transition():
    model = {"nfa.n0": 2, "nfa.n1": 1, "nfa.n2": 1, "nfa.sink0": 0, "nfa.sink1": 1}
    run = extract_run(LOOP, model)
    assert_valid_run(LOOP, run, {0: 2, 1: 1, 2: 1}, 1)
    assert run == [0, 1, 2, 0]


def test_extract_run_with_custom_prefix():
    model = {"g3.n0": 1, "g3.n1": 4, "g3.sink1": 1}
    run = extract_run(LOOP, model, prefix="g3")
    assert_valid_run(LOOP, run, {0: 1, 1: 4}, 1)


def test_empty_run_ends_at_the_initial_state():
    assert extract_run(LOOP, {"nfa.sink0": 1}) == []


def test_unreachable_cycle_has_no_eulerian_path():
    nfa = ModeGraph(
        states=(0, 1, 2),
        transitions=(NfaTransition(0, 1, "a"), NfaTransition(2, 2, "b")),
        initial=0,
        accepting=frozenset({1}),
    )
    with pytest.raises(NoEulerianPath):
        extract_run(nfa, {"nfa.n0": 1, "nfa.n1": 1, "nfa.sink1": 1})


def test_exactly_one_sink_is_required():
    with pytest.raises(NoEulerianPath):
        extract_run(LOOP, {"nfa.sink0": 1, "nfa.sink1": 1})
    with pytest.raises(NoEulerianPath):
        extract_run(LOOP, {})


# ---------------------------------------------------------------------------
# 模型檔
# ---------------------------------------------------------------------------

FORMULA = parse("(declare-array a)(declare-int x)"
                "(assert (= (fold a (vec 0 0) (branches (branch (= e 1) (++ (c 1))) (branch (= e 0) skip)))"
                " (vec (len a) x)))")


def test_print_model_follows_declaration_order():
    sigma = Interpretation({"x": 1}, {"a": (0, 1)})
    assert print_model(sigma, FORMULA) == "(model\n  (a (seq 0 1))\n  (x 1))\n"
    assert print_model(Interpretation({"n": -2}, {"b": ()})) == "(model\n  (b (seq))\n  (n -2))\n"


def test_parse_model_reads_printed_models():
    sigma = parse_model("(model\n  (a (seq 0 1))\n  (x 1))\n")
    assert sigma == Interpretation({"x": 1}, {"a": (0, 1)})


@pytest.mark.parametrize("text", ["(modle (x 1))", "(model (a (seq 1 y)))", "(model (x))", "(model)(model)"])
def test_parse_model_rejects_malformed_text(text):
    with pytest.raises(ParseError):
        parse_model(text)


def test_validate_model():
    assert validate_model(FORMULA, Interpretation({"x": 1}, {"a": (0, 1)}))
    assert not validate_model(FORMULA, Interpretation({"x": 2}, {"a": (0, 1)}))
    assert not validate_model(FORMULA, Interpretation({}, {"a": (0, 1)}))


def test_validate_model_treats_evaluation_errors_as_failure():
    f = parse("(declare-array a)(declare-int x)(assert (= (select a x) 0))")
    assert not validate_model(f, Interpretation({"x": 3}, {"a": (0,)}))
    assert validate_model(f, Interpretation({"x": 0}, {"a": (0,)}))
