#!/usr/bin/env python3
"""
LIA 求解後端

支援的後端:
- external: 以子程序執行 SMT-LIB2 求解器 (預設 z3 -smt2 -in)，整份腳本寫入 stdin
- z3: 透過 z3-solver Python 套件在程序內求解
- fallback: 內建的有界分支剪枝搜尋 (不完備，UNSAT 附帶警示)
- auto: 依序嘗試 external -> z3 -> fallback

任何 SAT 模型都會用 eval_lia 重新驗證，驗證失敗就回報 UNKNOWN。
"""

from __future__ import annotations

import logging
import os
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from typing import Optional

from lia import (
    BackendError, BoolExpr, IntExpr, LAnd, LBool, LCmp, LiaFormula, LNot, LNum, LOr,
    LScale, LSum, LVar, MissingVariable, eval_lia, to_smtlib, variables,
)
from sexpr import Atom, ParseError, SList, read_sexprs

logger = logging.getLogger(__name__)

SAT = "sat"
UNSAT = "unsat"
UNKNOWN = "unknown"
CHOICES = ("external", "z3", "fallback", "auto")


class SolverSpawnError(BackendError):
    pass


class ProtocolError(BackendError):
    pass


@dataclass
class SolverConfig:
    """求解器設定；環境變數 AFL_SOLVER_CMD / AFL_SOLVER_TIMEOUT / AFL_BACKEND 只在沒有明確參數時生效"""
    command: list[str] = field(default_factory=lambda: ["z3", "-smt2", "-in"])
    timeout: float = 60.0
    memory_mb: int = 4096
    choice: str = "auto"
    fallback_node_budget: int = 200_000
    fallback_box: Optional[int] = None

    def __post_init__(self):
        if self.choice not in CHOICES:
            raise ValueError(f"未知的後端: {self.choice}")

    @classmethod
    def from_env(cls, **overrides) -> "SolverConfig":
        cfg = cls(**overrides)
        if os.environ.get("AFL_SOLVER_CMD") and "command" not in overrides:
            cfg.command = shlex.split(os.environ["AFL_SOLVER_CMD"])
        if os.environ.get("AFL_SOLVER_TIMEOUT") and "timeout" not in overrides:
            cfg.timeout = float(os.environ["AFL_SOLVER_TIMEOUT"])
        if os.environ.get("AFL_BACKEND") and "choice" not in overrides:
            cfg.choice = os.environ["AFL_BACKEND"]
            cfg.__post_init__()
        return cfg


@dataclass(frozen=True)
class SolveOutcome:
    status: str
    model: Optional[dict[str, int]] = None
    reason: str = ""
    backend: str = ""
    caveat: bool = False          # 來自 fallback 的 UNSAT 只在搜尋範圍內成立
    seconds: float = 0.0


# ---------------------------------------------------------------------------
# external
# ---------------------------------------------------------------------------

def _limit_memory(memory_mb: int):
    def apply():
        try:
            import resource
            limit = memory_mb * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
        except (ImportError, ValueError, OSError):
            pass
    return apply


def parse_model_response(text: str, declarations) -> tuple[str, Optional[dict[str, int]]]:
    """解析求解器輸出: 狀態字與 get-model 的 define-fun 清單"""
    try:
        nodes = read_sexprs(text)
    except ParseError as e:
        raise ProtocolError(f"無法解析求解器輸出: {e}")
    if not nodes:
        raise ProtocolError("求解器沒有輸出")
    first = nodes[0]
    if isinstance(first, SList) and first.head() == "error":
        raise ProtocolError(f"求解器回報錯誤: {first.items[1].text if len(first) > 1 else ''}")
    if not isinstance(first, Atom) or first.text not in (SAT, UNSAT, UNKNOWN):
        raise ProtocolError(f"預期 sat/unsat/unknown，得到 {text[:80]!r}")
    if first.text != SAT:
        return first.text, None
    if len(nodes) < 2 or not isinstance(nodes[1], SList):
        raise ProtocolError("SAT 回應缺少模型")
    entries = nodes[1].items
    if entries and isinstance(entries[0], Atom) and entries[0].is_symbol("model"):
        entries = entries[1:]
    model: dict[str, int] = {}
    for entry in entries:
        if not isinstance(entry, SList) or entry.head() != "define-fun" or len(entry) != 5:
            raise ProtocolError("模型項目格式錯誤")
        model[entry[1].text] = _model_value(entry[4])
    # 求解器可以省略無關的變數
    for name in declarations:
        model.setdefault(name, 0)
    return SAT, model


def _model_value(node) -> int:
    if isinstance(node, Atom) and node.kind == "int":
        return node.value
    if isinstance(node, SList) and node.head() == "-" and len(node) == 2:
        return -_model_value(node[1])
    raise ProtocolError("模型值不是整數")


def solve_external(psi: LiaFormula, cfg: SolverConfig) -> SolveOutcome:
    script = to_smtlib(psi)
    logger.info(f"啟動外部求解器: {' '.join(cfg.command)}")
    try:
        proc = subprocess.Popen(
            cfg.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True,
            preexec_fn=_limit_memory(cfg.memory_mb) if os.name == "posix" else None,
        )
    except (FileNotFoundError, PermissionError) as e:
        raise SolverSpawnError(f"無法啟動求解器 {cfg.command[0]}: {e}")
    try:
        out, err = proc.communicate(script, timeout=cfg.timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        return SolveOutcome(UNKNOWN, reason="timeout", backend="external")
    if proc.returncode not in (0, 1) and not out.strip():
        return SolveOutcome(UNKNOWN, reason=f"求解器異常結束 ({proc.returncode}): {err.strip()[:200]}",
                            backend="external")
    status, model = parse_model_response(out, psi.declarations)
    return SolveOutcome(status, model, backend="external")


# ---------------------------------------------------------------------------
# z3 (程序內)
# ---------------------------------------------------------------------------

def z3_available() -> bool:
    try:
        import z3  # noqa: F401
        return True
    except ImportError:
        return False


def solve_z3(psi: LiaFormula, cfg: SolverConfig) -> SolveOutcome:
    import z3

    names = {name: z3.Int(name) for name in psi.declarations}

    def int_expr(x: IntExpr):
        if isinstance(x, LNum):
            return z3.IntVal(x.value)
        if isinstance(x, LVar):
            if x.name not in names:
                names[x.name] = z3.Int(x.name)
            return names[x.name]
        if isinstance(x, LSum):
            return z3.Sum([int_expr(a) for a in x.args])
        if isinstance(x, LScale):
            return z3.IntVal(x.factor) * int_expr(x.arg)
        raise TypeError(f"未知的整數運算式: {x!r}")

    def bool_expr(b: BoolExpr):
        if isinstance(b, LBool):
            return z3.BoolVal(b.value)
        if isinstance(b, LCmp):
            lhs, rhs = int_expr(b.lhs), int_expr(b.rhs)
            return {"=": lambda: lhs == rhs, "<": lambda: lhs < rhs, "<=": lambda: lhs <= rhs,
                    ">": lambda: lhs > rhs, ">=": lambda: lhs >= rhs}[b.op]()
        if isinstance(b, LNot):
            return z3.Not(bool_expr(b.arg))
        if isinstance(b, LAnd):
            return z3.And([bool_expr(a) for a in b.args])
        if isinstance(b, LOr):
            return z3.Or([bool_expr(a) for a in b.args])
        raise TypeError(f"未知的布林運算式: {b!r}")

    solver = z3.Solver()
    solver.set("timeout", max(1, int(cfg.timeout * 1000)))
    for a in psi.assertions:
        solver.add(bool_expr(a))
    result = solver.check()
    if result == z3.unsat:
        return SolveOutcome(UNSAT, backend="z3")
    if result == z3.unknown:
        return SolveOutcome(UNKNOWN, reason=solver.reason_unknown(), backend="z3")
    m = solver.model()
    model = {name: m.eval(var, model_completion=True).as_long() for name, var in names.items()}
    return SolveOutcome(SAT, model, backend="z3")


# ---------------------------------------------------------------------------
# fallback: 有界分支剪枝
# ---------------------------------------------------------------------------

def _linear(x: IntExpr) -> tuple[dict[str, int], int]:
    if isinstance(x, LNum):
        return {}, x.value
    if isinstance(x, LVar):
        return {x.name: 1}, 0
    if isinstance(x, LScale):
        coeffs, const = _linear(x.arg)
        return {k: v * x.factor for k, v in coeffs.items()}, const * x.factor
    coeffs: dict[str, int] = {}
    const = 0
    for a in x.args:
        c, k = _linear(a)
        const += k
        for name, v in c.items():
            coeffs[name] = coeffs.get(name, 0) + v
    return coeffs, const


def _constants(x, out: list[int]):
    if isinstance(x, LNum):
        out.append(abs(x.value))
    elif isinstance(x, LScale):
        out.append(abs(x.factor))
        _constants(x.arg, out)
    elif isinstance(x, (LSum, LAnd, LOr)):
        for a in x.args:
            _constants(a, out)
    elif isinstance(x, LNot):
        _constants(x.arg, out)
    elif isinstance(x, LCmp):
        _constants(x.lhs, out)
        _constants(x.rhs, out)


class _Linear:
    """比較原子的線性形式: Σ coeff·var + const  op  0"""

    def __init__(self, atom: LCmp):
        lc, lk = _linear(atom.lhs)
        rc, rk = _linear(atom.rhs)
        self.coeffs = dict(lc)
        for name, v in rc.items():
            self.coeffs[name] = self.coeffs.get(name, 0) - v
        self.coeffs = {k: v for k, v in self.coeffs.items() if v != 0}
        self.const = lk - rk
        self.op = atom.op

    def bounds(self, box: dict[str, tuple[int, int]]) -> tuple[int, int]:
        lo = hi = self.const
        for name, c in self.coeffs.items():
            a, b = box[name]
            lo += min(c * a, c * b)
            hi += max(c * a, c * b)
        return lo, hi

    def truth(self, box) -> Optional[bool]:
        lo, hi = self.bounds(box)
        if self.op == "=":
            if lo == hi == 0:
                return True
            return False if lo > 0 or hi < 0 else None
        if self.op == "<":
            return True if hi < 0 else (False if lo >= 0 else None)
        if self.op == "<=":
            return True if hi <= 0 else (False if lo > 0 else None)
        if self.op == ">":
            return True if lo > 0 else (False if hi <= 0 else None)
        return True if lo >= 0 else (False if hi < 0 else None)


class FallbackSolver:
    """在每個變數的有界區間內分支，以三值區間求值剪枝"""

    def __init__(self, psi: LiaFormula, node_budget: int, box: Optional[int] = None):
        self.psi = psi
        self.node_budget = node_budget
        self.nodes = 0
        self.linear: dict[int, _Linear] = {}
        if box is None:
            consts: list[int] = [0]
            for a in psi.assertions:
                _constants(a, consts)
            box = max(8, 2 * max(consts) + 2 * len(psi.declarations))
        self.box = box
        self.order = self._order()

    def _order(self) -> list[str]:
        weight = {name: 0 for name in self.psi.declarations}
        for a in self.psi.assertions:
            for name in variables(a):
                weight[name] = weight.get(name, 0) + 1
        return sorted(weight, key=lambda n: (-weight[n], n))

    def atom(self, b: LCmp) -> _Linear:
        key = id(b)
        if key not in self.linear:
            self.linear[key] = _Linear(b)
        return self.linear[key]

    def truth(self, b: BoolExpr, box) -> Optional[bool]:
        if isinstance(b, LBool):
            return b.value
        if isinstance(b, LCmp):
            return self.atom(b).truth(box)
        if isinstance(b, LNot):
            inner = self.truth(b.arg, box)
            return None if inner is None else not inner
        values = [self.truth(a, box) for a in b.args]
        if isinstance(b, LAnd):
            if any(v is False for v in values):
                return False
            return True if all(v is True for v in values) else None
        if any(v is True for v in values):
            return True
        return False if all(v is False for v in values) else None

    def forced(self, box, name: str) -> Optional[list[int]]:
        """最外層等式中只剩 name 一個未定變數時，直接算出它的值"""
        for a in self.psi.assertions:
            if not isinstance(a, LCmp) or a.op != "=":
                continue
            lin = self.atom(a)
            c = lin.coeffs.get(name)
            if c is None:
                continue
            rest = [n for n in lin.coeffs if n != name and box[n][0] != box[n][1]]
            if rest:
                continue
            total = lin.const + sum(v * box[n][0] for n, v in lin.coeffs.items() if n != name)
            if total % c != 0:
                return []
            value = -total // c
            lo, hi = box[name]
            return [value] if lo <= value <= hi else []
        return None

    def solve(self) -> SolveOutcome:
        box = {name: (-self.box, self.box) for name in self.order}
        for a in self.psi.assertions:
            for name in variables(a):
                box.setdefault(name, (-self.box, self.box))
        order = [n for n in self.order] + sorted(set(box) - set(self.order))
        try:
            model = self._search(box, order, 0)
        except _OutOfBudget:
            return SolveOutcome(UNKNOWN, reason=f"fallback 超過節點預算 {self.node_budget}",
                                backend="fallback")
        if model is None:
            return SolveOutcome(UNSAT, backend="fallback", caveat=True,
                                reason=f"在 [-{self.box}, {self.box}] 範圍內無解")
        return SolveOutcome(SAT, model, backend="fallback")

    def _search(self, box, order, depth) -> Optional[dict[str, int]]:
        self.nodes += 1
        if self.nodes > self.node_budget:
            raise _OutOfBudget()
        verdict = self.truth(LAnd(self.psi.assertions), box)
        if verdict is False:
            return None
        if depth == len(order):
            return {n: lo for n, (lo, _) in box.items()} if verdict else None
        if verdict is True:
            model = {}
            for n, (lo, hi) in box.items():
                model[n] = 0 if lo <= 0 <= hi else lo
            return model
        name = order[depth]
        lo, hi = box[name]
        candidates = self.forced(box, name)
        if candidates is None:
            # 從 0 向外交錯嘗試，小的值優先
            candidates = sorted(range(lo, hi + 1), key=lambda v: (abs(v), v))
        for value in candidates:
            box[name] = (value, value)
            model = self._search(box, order, depth + 1)
            if model is not None:
                box[name] = (lo, hi)
                return model
        box[name] = (lo, hi)
        return None


class _OutOfBudget(Exception):
    pass


def solve_fallback(psi: LiaFormula, cfg: SolverConfig) -> SolveOutcome:
    return FallbackSolver(psi, cfg.fallback_node_budget, cfg.fallback_box).solve()


# ---------------------------------------------------------------------------
# 統一入口
# ---------------------------------------------------------------------------

def external_available(cfg: SolverConfig) -> bool:
    return bool(cfg.command) and shutil.which(cfg.command[0]) is not None


def _checked(outcome: SolveOutcome, psi: LiaFormula, started: float) -> SolveOutcome:
    elapsed = time.time() - started
    if outcome.status == SAT:
        try:
            ok = eval_lia(psi, outcome.model)
        except MissingVariable as e:
            logger.error(f"⚠️ 後端 {outcome.backend} 的模型不完整: {e}")
            ok = False
        if not ok:
            logger.error(f"⚠️ 後端 {outcome.backend} 回傳的模型不滿足 ψ")
            return SolveOutcome(UNKNOWN, reason="模型重新驗證失敗", backend=outcome.backend,
                                seconds=elapsed)
    return SolveOutcome(outcome.status, outcome.model, outcome.reason, outcome.backend,
                        outcome.caveat, elapsed)


def solve_lia(psi: LiaFormula, cfg: SolverConfig = None) -> SolveOutcome:
    """求解 ψ；SAT 的模型一定通過 eval_lia"""
    cfg = cfg or SolverConfig()
    started = time.time()
    choice = cfg.choice
    if choice == "auto":
        if external_available(cfg):
            choice = "external"
        elif z3_available():
            choice = "z3"
        else:
            choice = "fallback"
        logger.info(f"自動選擇後端: {choice}")
    if choice == "external":
        try:
            outcome = _checked(solve_external(psi, cfg), psi, started)
        except (ProtocolError, SolverSpawnError) as e:
            if cfg.choice != "auto":
                raise
            outcome = SolveOutcome(UNKNOWN, reason=str(e), backend="external")
        if outcome.status == UNKNOWN and cfg.choice == "auto":
            logger.warning(f"⚠️ 外部求解器沒有給出結果 ({outcome.reason})，改用 fallback")
            return _checked(solve_fallback(psi, cfg), psi, started)
        return outcome
    if choice == "z3":
        return _checked(solve_z3(psi, cfg), psi, started)
    return _checked(solve_fallback(psi, cfg), psi, started)
