#!/usr/bin/env python3
"""
模型產生

從 ψ 的滿足模型重建 AFL 賦值:
1. 依 Parikh 次數把每個 NFA 轉移重複對應次數，用 Hierholzer 演算法找出從初始狀態
   到匯點的 Euler 路徑 (即一條接受執行)
2. 每一步的格子值取自該轉移的輸入見證變數
3. 沒有 fold 的陣列直接由 Ackermann 化的讀取值組出，其餘格子補 0
最後一定要用 evaluator 驗證整個模型。
"""

from __future__ import annotations

import logging
from typing import Mapping, Optional

from afl_ast import AflError, Formula, Sort
from encoder import EncodingMap, GroupEncoding, ModeGraph, count_var, sink_var
from evaluator import EvaluationError, Interpretation, eval_formula
from lia import eval_int_expr
from scm import ReplayError, replay
from sexpr import Atom, ParseError, SList, read_sexprs

logger = logging.getLogger(__name__)


class NoEulerianPath(AflError):
    pass


def extract_run(nfa: ModeGraph, model: Mapping[str, int], prefix: str = "nfa") -> list[int]:
    """回傳 NFA 轉移編號序列: 從初始狀態出發、在被選中的匯點結束的 Euler 路徑"""
    index = nfa.state_index()
    sinks = [q for q in nfa.states if q in nfa.accepting and model.get(sink_var(prefix, index[q]), 0) == 1]
    if len(sinks) != 1:
        raise NoEulerianPath(f"預期恰好一個匯點，得到 {len(sinks)} 個")
    sink = sinks[0]

    adjacency: dict = {q: [] for q in nfa.states}
    total = 0
    # 反向加入，pop() 時編號小的轉移先被使用
    for idx in reversed(range(len(nfa.transitions))):
        n = model.get(count_var(prefix, idx), 0)
        if n < 0:
            raise NoEulerianPath(f"轉移 {idx} 的次數為負: {n}")
        t = nfa.transitions[idx]
        adjacency[t.source].extend([(idx, t.target)] * n)
        total += n

    stack: list = [(nfa.initial, None)]
    path: list[int] = []
    while stack:
        state, via = stack[-1]
        if adjacency[state]:
            idx, target = adjacency[state].pop()
            stack.append((target, idx))
        else:
            stack.pop()
            if via is not None:
                path.append(via)
    path.reverse()

    end = nfa.transitions[path[-1]].target if path else nfa.initial
    if len(path) != total or end != sink:
        raise NoEulerianPath(f"Euler 路徑只用了 {len(path)}/{total} 條邊，終點 {end}，匯點 {sink}")
    return path


def _group_cells(enc: GroupEncoding, run: list[int], model: Mapping[str, int]) -> dict[str, list[int]]:
    machine = enc.machine
    tags = machine.tags
    cells: dict[str, list[int]] = {tag: [] for tag in tags}
    steps = []
    for idx in run:
        tid = enc.nfa.transitions[idx].machine_transition
        step = {tag: model.get(enc.witnesses.get((tid, tag), ""), 0) for tag in tags}
        steps.append(step)
        for tag in tags:
            cells[tag].append(step[tag])
    tids = [enc.nfa.transitions[idx].machine_transition for idx in run]
    final = replay(machine, tids, steps, model)
    for name, value, expected in zip(machine.counters, final, machine.final_values):
        if expected is None:
            continue
        wanted = expected if isinstance(expected, int) else model.get(expected)
        if wanted != value:
            raise ReplayError(len(run), f"計數器 {name} 的終值 {value} 與模型的 {wanted} 不符")
    return cells


def synthesize_arrays(runs: Mapping[int, list[int]], model: Mapping[str, int],
                      emap: EncodingMap) -> Interpretation:
    """依執行軌跡與見證變數組出陣列；整數變數直接取自模型"""
    ints = {name: model.get(name, 0) for name in emap.int_vars}
    arrays: dict[str, tuple[int, ...]] = {}
    for enc in emap.groups:
        if enc.machine is not None:
            cells = _group_cells(enc, runs[enc.gid], model)
            for a in enc.arrays:
                arrays[a] = tuple(cells[emap.arrays.tag(a)])
            continue
        length = max(model.get(enc.len_var, 0), 0)
        per_tag: dict[str, list[int]] = {}
        for a in enc.arrays:
            tag = emap.arrays.tag(a)
            if tag not in per_tag:
                per_tag[tag] = [0] * length
                for read in enc.reads:
                    if emap.arrays.tag(read.array) != tag:
                        continue
                    idx = eval_int_expr(read.index, model)
                    if 0 <= idx < length:
                        per_tag[tag][idx] = model[read.var]
            arrays[a] = tuple(per_tag[tag])
    return Interpretation(ints, arrays)


def build_interpretation(model: Mapping[str, int], emap: EncodingMap) -> Interpretation:
    runs = {enc.gid: extract_run(enc.nfa, model, enc.prefix)
            for enc in emap.groups if enc.machine is not None}
    return synthesize_arrays(runs, model, emap)


def validate_model(f: Formula, sigma: Interpretation) -> bool:
    """evaluator 接受 σ 時回傳 True；求值錯誤視為驗證失敗"""
    missing = [name for name, sort in f.decls
               if (sort is Sort.INT and name not in sigma.ints)
               or (sort is Sort.ARRAY and name not in sigma.arrays)]
    if missing:
        logger.warning(f"⚠️ 模型缺少變數: {missing}")
        return False
    try:
        ok = eval_formula(f, sigma)
    except EvaluationError as e:
        logger.warning(f"⚠️ 模型求值失敗: {e}")
        return False
    if not ok:
        logger.warning("⚠️ 模型不滿足公式")
    return ok


# ---------------------------------------------------------------------------
# .afl-model 文件
# ---------------------------------------------------------------------------

def print_model(sigma: Interpretation, f: Optional[Formula] = None) -> str:
    """(model (a (seq 0 0 1 1)) (x 3))，依宣告順序輸出"""
    if f is not None:
        names = [(name, sort) for name, sort in f.decls]
    else:
        names = [(n, Sort.ARRAY) for n in sigma.arrays] + [(n, Sort.INT) for n in sigma.ints]
    lines = ["(model"]
    for name, sort in names:
        if sort is Sort.ARRAY:
            cells = "".join(f" {v}" for v in sigma.arrays[name])
            lines.append(f"  ({name} (seq{cells}))")
        else:
            lines.append(f"  ({name} {sigma.ints[name]})")
    return "\n".join(lines) + ")\n"


def parse_model(text: str) -> Interpretation:
    nodes = read_sexprs(text)
    if len(nodes) != 1 or not isinstance(nodes[0], SList) or nodes[0].head() != "model":
        span = nodes[0].span if nodes else None
        raise ParseError("預期 (model ...)", span)
    ints: dict[str, int] = {}
    arrays: dict[str, tuple[int, ...]] = {}
    for entry in nodes[0].items[1:]:
        if not isinstance(entry, SList) or len(entry) != 2 or not isinstance(entry[0], Atom):
            raise ParseError("預期 (名稱 值)", entry.span)
        name, value = entry[0].text, entry[1]
        if isinstance(value, Atom) and value.kind == "int":
            ints[name] = value.value
        elif isinstance(value, SList) and value.head() == "seq":
            cells = []
            for cell in value.items[1:]:
                if not isinstance(cell, Atom) or cell.kind != "int":
                    raise ParseError("陣列元素必須是整數", cell.span)
                cells.append(cell.value)
            arrays[name] = tuple(cells)
        else:
            raise ParseError(f"{name} 的值格式錯誤", value.span)
    return Interpretation(ints, arrays)
