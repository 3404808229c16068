#!/usr/bin/env python3
"""lia_backend: 三種後端、模型重新驗證與設定"""

import os
import shutil

import pytest

from lia import LiaBuilder, add, eq, eval_lia, gt, ge, lt
from lia_backend import (
    SAT, UNKNOWN, UNSAT, FallbackSolver, ProtocolError, SolverConfig, SolverSpawnError,
    parse_model_response, solve_lia, z3_available,
)

needs_z3 = pytest.mark.skipif(not z3_available(), reason="z3-solver 未安裝")
needs_sh = pytest.mark.skipif(os.name != "posix" or shutil.which("sh") is None, reason="需要 POSIX sh")


def psi_of(*assertions, declare=()):
    builder = LiaBuilder()
    for name in declare:
        builder.declare(name)
    builder.add(*assertions)
    return builder.build()


SAT_PSI = psi_of(eq(add("x", "y"), 5), gt("x", 3), ge("y", 0))
UNSAT_PSI = psi_of(lt("x", 0), gt("x", 0))


# ---------------------------------------------------------------------------
# fallback
# ---------------------------------------------------------------------------

def test_fallback_finds_model():
    outcome = solve_lia(SAT_PSI, SolverConfig(choice="fallback"))
    assert outcome.status == SAT
    assert outcome.backend == "fallback"
    assert eval_lia(SAT_PSI, outcome.model)


def test_fallback_unsat_carries_caveat():
    outcome = solve_lia(UNSAT_PSI, SolverConfig(choice="fallback"))
    assert outcome.status == UNSAT
    assert outcome.caveat


def test_fallback_budget_gives_unknown():
    outcome = FallbackSolver(SAT_PSI, node_budget=1).solve()
    assert outcome.status == UNKNOWN
    assert "預算" in outcome.reason


def test_fallback_box_grows_with_constants():
    psi = psi_of(eq("x", 40))
    solver = FallbackSolver(psi, node_budget=1000)
    assert solver.box >= 80
    outcome = solver.solve()
    assert outcome.status == SAT and outcome.model == {"x": 40}


def test_fallback_uses_equalities_to_fix_the_last_variable():
    psi = psi_of(eq(add("x", "y", "z"), 17), ge("x", 5), ge("y", 5), ge("z", 5))
    outcome = FallbackSolver(psi, node_budget=5000).solve()
    assert outcome.status == SAT
    assert eval_lia(psi, outcome.model)


# ---------------------------------------------------------------------------
# z3
# ---------------------------------------------------------------------------

@needs_z3
def test_z3_sat_and_unsat():
    sat = solve_lia(SAT_PSI, SolverConfig(choice="z3"))
    assert sat.status == SAT and sat.backend == "z3"
    assert eval_lia(SAT_PSI, sat.model)
    unsat = solve_lia(UNSAT_PSI, SolverConfig(choice="z3"))
    assert unsat.status == UNSAT
    assert not unsat.caveat


@needs_z3
def test_z3_model_covers_unconstrained_declarations():
    psi = psi_of(gt("x", 1), declare=("free",))
    outcome = solve_lia(psi, SolverConfig(choice="z3"))
    assert outcome.status == SAT
    assert set(outcome.model) == {"free", "x"}


# ---------------------------------------------------------------------------
# external
# ---------------------------------------------------------------------------

def test_parse_model_response():
    assert parse_model_response("unsat\n", ()) == ("unsat", None)
    assert parse_model_response("unknown\n", ()) == ("unknown", None)
    status, model = parse_model_response("sat\n(model (define-fun x () Int (- 4)))\n", ("x", "y"))
    assert status == "sat"
    assert model == {"x": -4, "y": 0}


@pytest.mark.parametrize("text", ["", "banana\n", '(error "line 3: unknown constant")\n', "sat\n"])
def test_parse_model_response_rejects_bad_output(text):
    with pytest.raises(ProtocolError):
        parse_model_response(text, ("x",))


def test_missing_solver_binary():
    cfg = SolverConfig(command=["/nonexistent/afl-solver-binary"], choice="external")
    with pytest.raises(SolverSpawnError):
        solve_lia(SAT_PSI, cfg)


@needs_sh
def test_external_solver_protocol():
    script = "cat >/dev/null; echo sat; echo '((define-fun x () Int 5))'"
    cfg = SolverConfig(command=["sh", "-c", script], choice="external")
    outcome = solve_lia(psi_of(gt("x", 3)), cfg)
    assert outcome.status == SAT
    assert outcome.model == {"x": 5}
    assert outcome.backend == "external"


@needs_sh
def test_external_model_is_rechecked():
    script = "cat >/dev/null; echo sat; echo '((define-fun x () Int 5))'"
    cfg = SolverConfig(command=["sh", "-c", script], choice="external")
    outcome = solve_lia(psi_of(lt("x", 3)), cfg)
    assert outcome.status == UNKNOWN
    assert outcome.reason == "模型重新驗證失敗"


@needs_sh
def test_external_timeout_is_unknown():
    cfg = SolverConfig(command=["sh", "-c", "exec sleep 5"], choice="external", timeout=0.2)
    outcome = solve_lia(SAT_PSI, cfg)
    assert outcome.status == UNKNOWN
    assert outcome.reason == "timeout"


@needs_sh
def test_auto_falls_back_when_the_external_solver_talks_nonsense():
    cfg = SolverConfig(command=["sh", "-c", "cat >/dev/null; echo banana"], choice="auto")
    outcome = solve_lia(SAT_PSI, cfg)
    assert outcome.status == SAT
    assert outcome.backend == "fallback"
    with pytest.raises(ProtocolError):
        solve_lia(SAT_PSI, SolverConfig(command=cfg.command, choice="external"))


@needs_sh
def test_auto_falls_back_when_the_external_solver_cannot_start(tmp_path):
    broken = tmp_path / "broken-solver"
    broken.write_text("#!/nonexistent/interpreter\n", encoding="utf-8")
    broken.chmod(0o755)
    outcome = solve_lia(SAT_PSI, SolverConfig(command=[str(broken)], choice="auto"))
    assert outcome.status == SAT
    assert outcome.backend == "fallback"


# ---------------------------------------------------------------------------
# 設定
# ---------------------------------------------------------------------------

def test_config_from_environment(monkeypatch):
    monkeypatch.setenv("AFL_SOLVER_CMD", "cvc5 --lang smt2")
    monkeypatch.setenv("AFL_SOLVER_TIMEOUT", "5")
    monkeypatch.setenv("AFL_BACKEND", "fallback")
    cfg = SolverConfig.from_env()
    assert cfg.command == ["cvc5", "--lang", "smt2"]
    assert cfg.timeout == 5.0
    assert cfg.choice == "fallback"


def test_explicit_arguments_beat_the_environment(monkeypatch):
    monkeypatch.setenv("AFL_BACKEND", "fallback")
    monkeypatch.setenv("AFL_SOLVER_TIMEOUT", "5")
    cfg = SolverConfig.from_env(choice="z3", timeout=1.5)
    assert cfg.choice == "z3"
    assert cfg.timeout == 1.5


def test_invalid_backend_choice(monkeypatch):
    with pytest.raises(ValueError):
        SolverConfig(choice="magic")
    monkeypatch.setenv("AFL_BACKEND", "magic")
    with pytest.raises(ValueError):
        SolverConfig.from_env()
