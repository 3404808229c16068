#!/usr/bin/env python3
"""
符號計數器機 (Symbolic Counter Machine, SCM)

主要功能:
- translate_fold: 把 fold 函數翻譯成 SCM (guard 中的整數項提升為新變數)
- align: 加上等待狀態與共用的位置計數器 p，讓不同起點的 fold 可以同步讀取
- product: 同步積 (同名的共用計數器合併)
- reversal_bound: 以凝結 DAG 動態規劃計算每個計數器的反轉次數上界
- replay / simulate: 沿著執行軌跡檢查約束並回傳最終計數器值

狀態可以是整數 (CFG 狀態)、字串 ("done"、"wait"、"watch") 或積的元組。
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import networkx as nx

from afl_ast import (
    AflError, BoolTerm, Const, FoldFunction, IntEq, IntTerm, Var, build_cfg,
    scc_violations,
)

logger = logging.getLogger(__name__)

Sym = Union[int, str]
State = Union[int, str, tuple]

DONE = "done"
WAIT = "wait"
RELATIONS = ("<", "<=", ">", ">=", "=", "!=")
NEGATION = {"<": ">=", ">=": "<", ">": "<=", "<=": ">", "=": "!=", "!=": "="}
# 每個關係允許的 sign(左 - 右)
SIGNS = {"<": {-1}, "<=": {-1, 0}, ">": {1}, ">=": {0, 1}, "=": {0}, "!=": {-1, 1}}


class NonMonotoneScc(AflError):
    def __init__(self, detail: str):
        super().__init__(f"fold 函數違反 SCC 單調性: {detail}")


class ReplayError(AflError):
    def __init__(self, step: int, constraint: str):
        self.step = step
        self.constraint = constraint
        super().__init__(f"第 {step} 步違反約束: {constraint}")


@dataclass(frozen=True)
class Cell:
    """鎖步群組中某個陣列 (以 tag 標示) 目前讀取的格子值 x_e^tag"""
    tag: str

    def __str__(self):
        return f"x_e^{self.tag}"


@dataclass(frozen=True)
class CounterAtom:
    counter: str
    rel: str
    rhs: Sym

    def negate(self) -> "CounterAtom":
        return CounterAtom(self.counter, NEGATION[self.rel], self.rhs)

    def __str__(self):
        return f"{self.counter} {self.rel} {self.rhs}"


@dataclass(frozen=True)
class InputAtom:
    tag: str
    rel: str
    rhs: Union[int, str, Cell]

    def negate(self) -> "InputAtom":
        return InputAtom(self.tag, NEGATION[self.rel], self.rhs)

    def __str__(self):
        return f"x_e^{self.tag} {self.rel} {self.rhs}"


GuardPart = Union[CounterAtom, InputAtom]


def holds(rel: str, a: int, b: int) -> bool:
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
            "=": a == b, "!=": a != b}[rel]


def contradictory(atoms: Iterable[GuardPart]) -> bool:
    """語法層級的矛盾檢查: 常數區間為空，或同一對 (主體, 變數) 的符號集合為空"""
    lower: dict = {}
    upper: dict = {}
    excluded: dict = {}
    signs: dict = {}
    for atom in atoms:
        subject = atom.counter if isinstance(atom, CounterAtom) else Cell(atom.tag)
        rhs = atom.rhs
        if isinstance(rhs, int):
            lo, hi = lower.get(subject), upper.get(subject)
            if atom.rel in ("<", "<="):
                bound = rhs - 1 if atom.rel == "<" else rhs
                upper[subject] = bound if hi is None else min(hi, bound)
            elif atom.rel in (">", ">="):
                bound = rhs + 1 if atom.rel == ">" else rhs
                lower[subject] = bound if lo is None else max(lo, bound)
            elif atom.rel == "=":
                lower[subject] = rhs if lo is None else max(lo, rhs)
                upper[subject] = rhs if hi is None else min(hi, rhs)
            else:
                excluded.setdefault(subject, set()).add(rhs)
        else:
            if rhs == subject:
                if 0 not in SIGNS[atom.rel]:
                    return True
                continue
            key = (subject, rhs)
            signs[key] = signs.get(key, {-1, 0, 1}) & SIGNS[atom.rel]
            if not signs[key]:
                return True
    for subject in set(lower) | set(upper):
        lo, hi = lower.get(subject), upper.get(subject)
        if lo is not None and hi is not None:
            if lo > hi:
                return True
            if lo == hi and lo in excluded.get(subject, ()):
                return True
    return False


@dataclass(frozen=True)
class Transition:
    source: State
    target: State
    counter_guard: tuple[CounterAtom, ...]
    input_guard: tuple[InputAtom, ...]
    increments: tuple[int, ...]
    label: str = ""
    kind: str = "active"

    def atoms(self) -> tuple[GuardPart, ...]:
        return self.counter_guard + self.input_guard


@dataclass(frozen=True)
class Scm:
    counters: tuple[str, ...]
    states: tuple[State, ...]
    transitions: tuple[Transition, ...]
    initial: State
    done_state: Optional[State]
    variables: frozenset[str] = frozenset()
    init_values: tuple[Sym, ...] = ()
    final_values: tuple[Optional[Sym], ...] = ()
    tags: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return len(self.counters)

    def counter_index(self, name: str) -> int:
        return self.counters.index(name)

    def outgoing(self, state: State) -> list[int]:
        return [idx for idx, t in enumerate(self.transitions) if t.source == state]

    def boundaries(self, counter: str) -> list[Sym]:
        """此計數器約束中出現的邊界項 (依首次出現的順序)"""
        seen: list[Sym] = []
        for t in self.transitions:
            for atom in t.counter_guard:
                if atom.counter == counter and atom.rhs not in seen:
                    seen.append(atom.rhs)
        return seen


# ---------------------------------------------------------------------------
# fold -> SCM
# ---------------------------------------------------------------------------

def translate_fold(fn: FoldFunction, formula_sink: list[BoolTerm], *, name: str = "f",
                   tag: str = "a", init: Optional[Sequence[Sym]] = None,
                   outputs: Optional[Sequence[Sym]] = None) -> Scm:
    """
    依 fold 函數建立 SCM。

    guard 中每個非常數整數項 T 都換成新變數 x，並把 (x = T) 加到 formula_sink。
    break 分支與隱含的 catch-all 都轉成以零增量進入 done 狀態的轉移。
    """
    cfg = build_cfg(fn)
    violations = scc_violations(cfg)
    if violations:
        k, states = violations[0]
        raise NonMonotoneScc(f"計數器 c{k} 在狀態 {sorted(states)} 的 SCC 中同時增減")

    counters = (f"{name}.i",) + tuple(f"{name}.c{k}" for k in range(1, fn.arity))
    hoisted: dict[IntTerm, str] = {}

    def operand(term: IntTerm) -> Sym:
        if isinstance(term, Const):
            return term.value
        if term not in hoisted:
            var = f"{name}.x{len(hoisted)}"
            hoisted[term] = var
            formula_sink.append(IntEq(Var(var), term))
        return hoisted[term]

    def split(guard) -> tuple[tuple[CounterAtom, ...], tuple[InputAtom, ...]]:
        ctr, inp = [], []
        for atom in guard:
            rhs = operand(atom.rhs)
            if atom.lhs.kind == "e":
                inp.append(InputAtom(tag, atom.cmp, rhs))
            else:
                idx = 0 if atom.lhs.kind == "i" else atom.lhs.k
                ctr.append(CounterAtom(counters[idx], atom.cmp, rhs))
        return tuple(ctr), tuple(inp)

    zero = (0,) * fn.arity
    transitions: list[Transition] = []
    for edge in cfg.edges:
        ctr, inp = split(edge.guard)
        label = f"{name}:b{edge.branch}"
        if edge.breaks:
            transitions.append(Transition(edge.source, DONE, ctr, inp, zero, label, "break"))
            continue
        incr = [0] * fn.arity
        incr[0] = 1
        for k, n in edge.increments().items():
            incr[k] += n
        transitions.append(Transition(edge.source, edge.target, ctr, inp, tuple(incr), label))

    # catch-all: 沒有任何 guard 成立時進入 done
    for state in cfg.states:
        guards = [split(e.guard) for e in cfg.edges if e.source == state]
        if any(not c and not i for c, i in guards):
            continue
        negated = [[a.negate() for a in c + i] for c, i in guards]
        seen = set()
        for disjunct in itertools.product(*negated):
            if contradictory(disjunct):
                continue
            ctr = tuple(dict.fromkeys(a for a in disjunct if isinstance(a, CounterAtom)))
            inp = tuple(dict.fromkeys(a for a in disjunct if isinstance(a, InputAtom)))
            if (ctr, inp) in seen:
                continue
            seen.add((ctr, inp))
            transitions.append(Transition(state, DONE, ctr, inp, zero, f"{name}:catch-all",
                                          "catch-all"))
    transitions.append(Transition(DONE, DONE, (), (), zero, f"{name}:done", "done"))

    machine = Scm(
        counters=counters,
        states=tuple(cfg.states) + (DONE,),
        transitions=tuple(transitions),
        initial=0,
        done_state=DONE,
        variables=frozenset(hoisted.values()),
        init_values=tuple(init) if init is not None else zero,
        final_values=tuple(outputs) if outputs is not None else (None,) * fn.arity,
        tags=(tag,),
    )
    logger.debug(f"fold {name}: {len(machine.states)} 個狀態, {len(transitions)} 個轉移")
    return machine


def align(scm: Scm, start: Sym, len_var: Sym, position: str = "p") -> Scm:
    """
    加入共用位置計數器 p (每一步 +1)。

    start 為常數 0 時直接從第一格啟動；否則先停在等待狀態，
    直到 p = start 才沿著原初始狀態的轉移啟動。start 超出範圍時永遠不會啟動，
    fold 的結果就是初始向量。
    """
    counters = scm.counters + (position,)
    moved = [Transition(t.source, t.target, t.counter_guard, t.input_guard,
                        t.increments + (1,), t.label, t.kind) for t in scm.transitions]
    states = scm.states
    initial = scm.initial
    if start != 0:
        zero = (0,) * scm.k + (1,)
        waiting = [Transition(WAIT, WAIT, (CounterAtom(position, "!=", start),), (), zero,
                              "wait", "wait")]
        for t in moved:
            if t.source != scm.initial:
                continue
            waiting.append(Transition(WAIT, t.target,
                                      (CounterAtom(position, "=", start),) + t.counter_guard,
                                      t.input_guard, t.increments, t.label, t.kind))
        moved = waiting + moved
        states = (WAIT,) + states
        initial = WAIT
    return Scm(counters, states, tuple(moved), initial, scm.done_state, scm.variables,
               scm.init_values + (0,), scm.final_values + (len_var,), scm.tags)


def observer(tag: str, position_term: Sym, value: Sym, position: str = "p") -> Scm:
    """讀取觀察器: p = t 的那一步要求 x_e^tag = v (p 每一步只會經過 t 一次)"""
    transitions = (
        Transition("watch", "watch", (CounterAtom(position, "!=", position_term),), (), (1,),
                   f"read:{tag}", "observe"),
        Transition("watch", "watch", (CounterAtom(position, "=", position_term),),
                   (InputAtom(tag, "=", value),), (1,), f"read:{tag}", "observe"),
    )
    return Scm((position,), ("watch",), transitions, "watch", None, frozenset(),
               (0,), (None,), (tag,))


def write_link(base_tag: str, result_tag: str, index: Sym, value: Sym,
               position: str = "p", len_var: Optional[Sym] = None) -> Scm:
    """寫入連結: b = a{w <- x}，在 p = w 時 x_e^b = x，否則 x_e^b = x_e^a"""
    transitions = (
        Transition("link", "link", (CounterAtom(position, "=", index),),
                   (InputAtom(result_tag, "=", value),), (1,), f"write:{result_tag}", "link"),
        Transition("link", "link", (CounterAtom(position, "!=", index),),
                   (InputAtom(result_tag, "=", Cell(base_tag)),), (1,),
                   f"write:{result_tag}", "link"),
    )
    return Scm((position,), ("link",), transitions, "link", None, frozenset(),
               (0,), (len_var,), (base_tag, result_tag))


# ---------------------------------------------------------------------------
# 積
# ---------------------------------------------------------------------------

def _flat(state: State, composite: bool) -> tuple:
    return state if composite else (state,)


def _is_composite(m: Scm) -> bool:
    return isinstance(m.initial, tuple)


def _merge_finals(m1: Scm, m2: Scm, shared_idx) -> tuple:
    finals = list(m1.final_values)
    for i1, i2 in shared_idx:
        if finals[i1] is None:
            finals[i1] = m2.final_values[i2]
    return tuple(finals)


def product(m1: Scm, m2: Scm, prune: bool = True) -> Scm:
    """
    同步積。prune=False 時就是完整的 Q1 x Q2 與所有轉移配對；
    prune=True 時只保留從初始狀態可達、且約束在語法上不矛盾的部分。
    同名計數器 (共用位置計數器 p) 合併成一個，兩邊的增量必須相同。
    """
    shared = [c for c in m2.counters if c in m1.counters]
    extra = [c for c in m2.counters if c not in m1.counters]
    counters = m1.counters + tuple(extra)
    extra_idx = [m2.counter_index(c) for c in extra]
    shared_idx = [(m1.counter_index(c), m2.counter_index(c)) for c in shared]
    c1, c2 = _is_composite(m1), _is_composite(m2)

    def pair(q1, q2) -> tuple:
        return _flat(q1, c1) + _flat(q2, c2)

    def combine(t1: Transition, t2: Transition) -> Optional[Transition]:
        for i1, i2 in shared_idx:
            if t1.increments[i1] != t2.increments[i2]:
                return None
        ctr = tuple(dict.fromkeys(t1.counter_guard + t2.counter_guard))
        inp = tuple(dict.fromkeys(t1.input_guard + t2.input_guard))
        if prune and contradictory(ctr + inp):
            return None
        incr = t1.increments + tuple(t2.increments[i] for i in extra_idx)
        return Transition(pair(t1.source, t2.source), pair(t1.target, t2.target), ctr, inp,
                          incr, f"{t1.label}|{t2.label}", t1.kind if t1.kind == t2.kind else "product")

    out1: dict = {}
    for t in m1.transitions:
        out1.setdefault(t.source, []).append(t)
    out2: dict = {}
    for t in m2.transitions:
        out2.setdefault(t.source, []).append(t)

    initial = pair(m1.initial, m2.initial)
    transitions: list[Transition] = []
    if prune:
        seen = {initial: (m1.initial, m2.initial)}
        order = [initial]
        frontier = deque([(m1.initial, m2.initial)])
        while frontier:
            q1, q2 = frontier.popleft()
            for t1 in out1.get(q1, []):
                for t2 in out2.get(q2, []):
                    t = combine(t1, t2)
                    if t is None:
                        continue
                    transitions.append(t)
                    if t.target not in seen:
                        seen[t.target] = (t1.target, t2.target)
                        order.append(t.target)
                        frontier.append((t1.target, t2.target))
        states = tuple(order)
    else:
        states = tuple(pair(q1, q2) for q1 in m1.states for q2 in m2.states)
        for q1 in m1.states:
            for q2 in m2.states:
                for t1 in out1.get(q1, []):
                    for t2 in out2.get(q2, []):
                        t = combine(t1, t2)
                        if t is not None:
                            transitions.append(t)

    done = None
    if m1.done_state is not None and m2.done_state is not None:
        done = pair(m1.done_state, m2.done_state)
    return Scm(
        counters=counters,
        states=states,
        transitions=tuple(transitions),
        initial=initial,
        done_state=done,
        variables=m1.variables | m2.variables,
        init_values=m1.init_values + tuple(m2.init_values[i] for i in extra_idx),
        final_values=_merge_finals(m1, m2, shared_idx) + tuple(m2.final_values[i] for i in extra_idx),
        tags=tuple(dict.fromkeys(m1.tags + m2.tags)),
    )


def product_all(machines: Sequence[Scm]) -> Scm:
    result = machines[0]
    for m in machines[1:]:
        result = product(result, m)
    logger.debug(f"積機器: {len(result.states)} 個狀態, {len(result.transitions)} 個轉移")
    return result


# ---------------------------------------------------------------------------
# 反轉次數
# ---------------------------------------------------------------------------

def _sign(n: int) -> int:
    return (n > 0) - (n < 0)


def _step(rev: int, last: int, sign: int) -> tuple[int, int]:
    if sign == 0:
        return rev, last
    if last == 0 or last == sign:
        return rev, sign
    return rev + 1, sign


def reversal_bound(scm: Scm) -> dict[str, int]:
    """每個計數器沿任意路徑的增量符號交替次數上界"""
    g = nx.DiGraph()
    g.add_nodes_from(scm.states)
    for t in scm.transitions:
        g.add_edge(t.source, t.target)
    cond = nx.condensation(g)
    mapping = cond.graph["mapping"]
    order = list(nx.topological_sort(cond))
    result: dict[str, int] = {}
    for idx, name in enumerate(scm.counters):
        inner: dict[int, set[int]] = {}
        cross: dict[int, list[tuple[int, int]]] = {}
        for t in scm.transitions:
            s, d = mapping[t.source], mapping[t.target]
            sign = _sign(t.increments[idx])
            if s == d:
                if sign:
                    inner.setdefault(s, set()).add(sign)
            else:
                cross.setdefault(s, []).append((d, sign))
        for comp, signs in inner.items():
            if len(signs) > 1:
                raise NonMonotoneScc(f"計數器 {name} 在同一個 SCC 中同時增減")
        inner_sign = {comp: next(iter(s)) for comp, s in inner.items()}

        best: dict[int, dict[int, int]] = {}
        start = mapping[scm.initial]
        rev, last = _step(0, 0, inner_sign.get(start, 0))
        best[start] = {last: rev}
        top = 0
        for comp in order:
            for last, rev in best.get(comp, {}).items():
                top = max(top, rev)
                for target, sign in cross.get(comp, []):
                    r, l = _step(rev, last, sign)
                    r, l = _step(r, l, inner_sign.get(target, 0))
                    slot = best.setdefault(target, {})
                    if slot.get(l, -1) < r:
                        slot[l] = r
        result[name] = top
    return result


# ---------------------------------------------------------------------------
# 重播與模擬
# ---------------------------------------------------------------------------

def _value(sym, sigma: Mapping[str, int], cells: Mapping[str, int]) -> int:
    if isinstance(sym, int):
        return sym
    if isinstance(sym, Cell):
        return cells[sym.tag]
    return sigma[sym]


def _cells(cell: Union[int, Mapping[str, int]], scm: Scm) -> Mapping[str, int]:
    if isinstance(cell, Mapping):
        return cell
    return {tag: cell for tag in scm.tags}


def enabled(t: Transition, counters: Sequence[int], scm: Scm, sigma: Mapping[str, int],
            cells: Mapping[str, int]) -> Optional[str]:
    """回傳第一個不成立的約束 (字串)，全部成立則回傳 None"""
    for atom in t.counter_guard:
        current = counters[scm.counter_index(atom.counter)]
        if not holds(atom.rel, current, _value(atom.rhs, sigma, cells)):
            return str(atom)
    for atom in t.input_guard:
        if not holds(atom.rel, cells[atom.tag], _value(atom.rhs, sigma, cells)):
            return str(atom)
    return None


def initial_counters(scm: Scm, sigma: Mapping[str, int]) -> list[int]:
    return [_value(v, sigma, {}) for v in scm.init_values]


def replay(scm: Scm, transitions: Sequence[int], cell_values: Sequence,
           sigma: Mapping[str, int]) -> tuple[int, ...]:
    """沿著轉移序列檢查每個約束，回傳最終計數器值"""
    if len(transitions) != len(cell_values):
        raise ValueError("轉移序列與格子值的長度不一致")
    counters = initial_counters(scm, sigma)
    state = scm.initial
    for step, (tid, cell) in enumerate(zip(transitions, cell_values)):
        t = scm.transitions[tid]
        if t.source != state:
            raise ReplayError(step, f"轉移 {tid} 不從狀態 {state} 出發")
        cells = _cells(cell, scm)
        try:
            failed = enabled(t, counters, scm, sigma, cells)
        except KeyError as e:
            raise ReplayError(step, f"缺少變數 {e}")
        if failed is not None:
            raise ReplayError(step, failed)
        counters = [c + d for c, d in zip(counters, t.increments)]
        state = t.target
    return tuple(counters)


def simulate(scm: Scm, cell_values: Sequence, sigma: Mapping[str, int]) -> tuple[tuple[int, ...], list[int]]:
    """
    確定性模擬: 每一步取所有成立的轉移，它們必須有相同的目標與增量。
    回傳 (最終計數器, 使用的轉移序列)。
    """
    counters = initial_counters(scm, sigma)
    state = scm.initial
    run: list[int] = []
    for step, cell in enumerate(cell_values):
        cells = _cells(cell, scm)
        choices = [tid for tid in scm.outgoing(state)
                   if enabled(scm.transitions[tid], counters, scm, sigma, cells) is None]
        if not choices:
            raise ReplayError(step, f"狀態 {state} 沒有可用的轉移")
        effects = {(scm.transitions[tid].target, scm.transitions[tid].increments) for tid in choices}
        if len(effects) > 1:
            raise ReplayError(step, f"狀態 {state} 有多個效果不同的轉移: {choices}")
        t = scm.transitions[choices[0]]
        run.append(choices[0])
        counters = [c + d for c, d in zip(counters, t.increments)]
        state = t.target
    return tuple(counters), run


def dump(scm: Scm, title: str = "scm") -> str:
    """機器的文字表示 (--dump-scm)"""
    lines = [f"machine {title}",
             f"  counters: {' '.join(scm.counters)}",
             f"  init: {' '.join(str(v) for v in scm.init_values)}",
             f"  final: {' '.join('-' if v is None else str(v) for v in scm.final_values)}",
             f"  initial: {scm.initial}",
             f"  done: {scm.done_state}",
             f"  states ({len(scm.states)}): {' '.join(str(q) for q in scm.states)}",
             f"  transitions ({len(scm.transitions)}):"]
    for idx, t in enumerate(scm.transitions):
        guard = " & ".join(str(a) for a in t.atoms()) or "true"
        incr = ",".join(str(n) for n in t.increments)
        lines.append(f"    t{idx}: {t.source} -> {t.target} [{guard}] +({incr}) {t.kind} {t.label}")
    return "\n".join(lines) + "\n"
