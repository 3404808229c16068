#!/usr/bin/env python3
"""
求解流程: 良構檢查 -> 正規化 -> fold 檢查 -> 編碼 -> LIA 求解 -> 模型重建與驗證

命令列與測試共用同一個入口 solve_formula。回報 SAT 之前，重建出的模型一定先用
evaluator 對使用者寫的原公式驗證 (validate=True 時另外驗證正規化後的公式)；
驗證失敗時改回報 unknown。
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import afl_ast
from afl_ast import (
    AflError, Formula, WellFormednessViolation, build_cfg, fold_functions, formula_size,
    normalize, replace_wildcards,
)
from encoder import (
    EncodingMap, OverlappingGuards, assemble, check_guard_exclusivity, coarse_mode_bound,
    required_modes,
)
from evaluator import Interpretation
from lia import LiaFormula
from lia_backend import SAT, UNKNOWN, SolverConfig, solve_lia
from modelgen import build_interpretation, validate_model
from scm import NonMonotoneScc, dump

logger = logging.getLogger(__name__)


@dataclass
class SolveResult:
    status: str
    model: Optional[Interpretation] = None
    reason: str = ""
    backend: str = ""
    caveat: bool = False
    stats: dict = field(default_factory=dict)
    lia: Optional[LiaFormula] = None
    encoding: Optional[EncodingMap] = None
    timings: dict = field(default_factory=dict)

    @property
    def array_length(self) -> Optional[int]:
        """模型中最長陣列的長度 (對應結果表的 len 欄)"""
        if self.model is None or not self.model.arrays:
            return None
        return max(len(cells) for cells in self.model.arrays.values())


def check_folds(f: Formula, cfg: Optional[SolverConfig] = None) -> None:
    """每個 fold 函數: SCC 單調 + guard 互斥；不符合時拋出例外"""
    for idx, fn in enumerate(fold_functions(f)):
        g = build_cfg(fn)
        if not afl_ast.check_scc_monotone(g):
            k, states = afl_ast.scc_violations(g)[0]
            raise NonMonotoneScc(f"第 {idx} 個 fold 的計數器 c{k} 在狀態 {sorted(states)} 中同時增減")
        result = check_guard_exclusivity(fn, cfg)
        if not result:
            first, second, witness = result.witness
            raise OverlappingGuards(first, second, witness)


def encoding_stats(f: Formula, psi: LiaFormula, emap: EncodingMap) -> dict:
    stats = {"size": formula_size(f), **emap.stats(),
             "psi_vars": len(psi.declarations), "psi_size": psi.size()}
    modes = []
    for enc in emap.groups:
        if enc.machine is None:
            continue
        r = max(enc.reversals.values(), default=0)
        regions = max((enc.regions.region_count(c) for c in enc.machine.counters), default=1)
        modes.append({
            "group": enc.gid,
            "copies": enc.nfa.copies,
            "required": required_modes(enc.machine, enc.regions),
            "coarse_bound": coarse_mode_bound(r, enc.machine.k, regions),
        })
    stats["modes"] = modes
    return stats


def restrict(sigma: Interpretation, f: Formula) -> Interpretation:
    """只保留 f 宣告的變數 (正規化產生的新變數不輸出)"""
    return Interpretation({n: sigma.ints[n] for n in f.ints() if n in sigma.ints},
                          {a: sigma.arrays[a] for a in f.arrays() if a in sigma.arrays})


def solve_formula(f: Formula, cfg: Optional[SolverConfig] = None,
                  validate: bool = True) -> SolveResult:
    cfg = cfg or SolverConfig()
    problems = afl_ast.validate(f)
    if problems:
        raise WellFormednessViolation(problems)

    timings = {}
    started = time.time()
    normalized = normalize(f)
    check_folds(normalized, cfg)
    psi, emap = assemble(normalized)
    timings["translate"] = time.time() - started
    stats = encoding_stats(f, psi, emap)
    logger.info(f"🔍 編碼完成: {stats['folds']} 個 fold, ψ 有 {stats['psi_vars']} 個變數")

    outcome = solve_lia(psi, cfg)
    timings["solve"] = outcome.seconds
    result = SolveResult(outcome.status, reason=outcome.reason, backend=outcome.backend,
                         caveat=outcome.caveat, stats=stats, lia=psi, encoding=emap,
                         timings=timings)
    if outcome.status != SAT:
        return result

    started = time.time()
    try:
        sigma = build_interpretation(outcome.model, emap)
    except AflError as e:
        logger.error(f"❌ 模型重建失敗: {e}")
        result.status, result.reason = UNKNOWN, f"模型重建失敗: {e}"
        return result
    if validate and not validate_model(normalized, sigma):
        result.status, result.reason = UNKNOWN, "重建的模型沒有通過正規化公式的驗證"
        return result
    # 原公式一定要驗證: 萬用字元用 normalize 給它們的同名變數代入
    expanded = replace_wildcards(f)
    if not validate_model(expanded, restrict(sigma, expanded)):
        result.status, result.reason = UNKNOWN, "重建的模型沒有通過原公式的驗證"
        return result
    timings["model"] = time.time() - started
    result.model = restrict(sigma, f)
    return result


def dump_machines(emap: EncodingMap) -> str:
    return "".join(dump(enc.machine, f"g{enc.gid}") for enc in emap.groups if enc.machine is not None)
