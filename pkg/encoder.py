#!/usr/bin/env python3
"""
AFL -> QF_LIA 編碼器

把正規化後的公式組成 ψ = ψ_n ∧ ψ_e ∧ ψ_l:
- ψ_n: 公式中不含 fold 的部分 (fold 輸出換成新變數，讀取換成新變數)
- ψ_e: 每個陣列鎖步群組的積機器 -> 模式展開 NFA -> Parikh 編碼 + 計數器約束 + 輸入約束
- ψ_l: 計數器初值/終值與 fold 初始向量、輸出變數、陣列長度之間的連結

變數命名 (確定性):
    AFL 整數變數 x       -> x
    群組長度             -> len.g<群組>
    讀取值               -> rd.<編號>
    fold 輸出            -> f<編號>.out<分量>
    轉移次數             -> g<群組>.n<轉移>
    計數器進入/離開值     -> g<群組>.w<副本>.<計數器> / g<群組>.z<副本>.<計數器>
    輸入見證             -> g<群組>.v<機器轉移>.<tag>
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

from afl_ast import (
    Add, AflError, And, ArrayEq, ArrayVar, BoolTerm, Const, Fold, FoldFunction, Formula,
    IntEq, IntLt, IntTerm, Len, Not, Read, Var, Vec, VecEq, Write, build_cfg,
    state_guard_holds,
)
from lia import (
    BoolExpr, IntExpr, LiaBuilder, LiaFormula, LNum, LVar, add, conj, disj, eq, ge, gt,
    iff, implies, le, lt, ne, neg, scale,
)
from lia_backend import SAT, SolverConfig, solve_lia
from scm import (
    Cell, Scm, Sym, Transition, align, observer, product_all,
    reversal_bound, translate_fold, write_link,
)

logger = logging.getLogger(__name__)


class UnsupportedFragment(AflError):
    pass


class OverlappingGuards(AflError):
    def __init__(self, first: int, second: int, witness: dict[str, int]):
        self.first, self.second, self.witness = first, second, witness
        super().__init__(f"fold 分支 {first} 與 {second} 的 guard 可以同時成立: {witness}")


# ---------------------------------------------------------------------------
# guard 互斥檢查
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GuardCheck:
    exclusive: bool
    witness: Optional[tuple[int, int, dict[str, int]]] = None

    def __bool__(self):
        return self.exclusive


def _implicit_name(kind: str, k: int) -> str:
    return f"impl.c{k}" if kind == "c" else f"impl.{kind}"


def _guard_formula(branch, reads: dict) -> list[BoolExpr]:
    out = []
    for atom in branch.guard:
        if atom.lhs.kind == "s":
            continue
        lhs = LVar(_implicit_name(atom.lhs.kind, atom.lhs.k))
        rhs = _free_term(atom.rhs, reads)
        out.append(_relation(atom.cmp, lhs, rhs))
    return out


def _free_term(t: IntTerm, reads: dict) -> IntExpr:
    """guard 右側項: 讀取換成沒有約束的新變數 (互斥必須對所有值成立)"""
    if isinstance(t, Const):
        return LNum(t.value)
    if isinstance(t, Var):
        return LVar(t.name)
    if isinstance(t, Add):
        return add(_free_term(t.left, reads), _free_term(t.right, reads))
    if isinstance(t, Len):
        return LVar(f"len.{t.array}")
    if isinstance(t, Read):
        if t not in reads:
            reads[t] = LVar(f"rd.{len(reads)}")
        return reads[t]
    raise UnsupportedFragment(f"guard 中的項必須先正規化: {t!r}")


def check_guard_exclusivity(fn: FoldFunction, backend: Optional[SolverConfig] = None) -> GuardCheck:
    """對每一對在某個狀態同時啟用的分支，查詢 grd_i ∧ grd_j 是否可滿足"""
    cfg = build_cfg(fn)
    checked = set()
    reads: dict = {}
    for state in cfg.states:
        enabled = [idx for idx, b in enumerate(fn.branches) if state_guard_holds(b, state)]
        for i, j in itertools.combinations(enabled, 2):
            if (i, j) in checked:
                continue
            checked.add((i, j))
            parts = _guard_formula(fn.branches[i], reads) + _guard_formula(fn.branches[j], reads)
            builder = LiaBuilder()
            builder.add(conj(*parts))
            outcome = solve_lia(builder.build(), backend or SolverConfig())
            if outcome.status == SAT:
                logger.debug(f"分支 {i} 與 {j} 重疊: {outcome.model}")
                return GuardCheck(False, (i, j, dict(outcome.model)))
            if outcome.caveat:
                logger.warning(f"⚠️ 分支 {i}/{j} 的互斥性只在 fallback 的搜尋範圍內成立")
    return GuardCheck(True)


# ---------------------------------------------------------------------------
# 陣列前處理
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WriteLink:
    result: str           # 結果陣列 b (b = a{w <- x})
    base: str
    index: IntTerm
    value: IntTerm


@dataclass
class ArrayGroups:
    representative: dict[str, str] = field(default_factory=dict)   # 陣列 -> 等價類代表 (tag)
    group_of: dict[str, int] = field(default_factory=dict)         # 代表 -> 群組編號
    writes: list[WriteLink] = field(default_factory=list)

    def tag(self, array: str) -> str:
        return self.representative[array]

    def group(self, array: str) -> int:
        return self.group_of[self.representative[array]]

    def len_var(self, array: str) -> str:
        return f"len.g{self.group(array)}"

    def group_ids(self) -> list[int]:
        return sorted(set(self.group_of.values()))

    def members(self, gid: int) -> list[str]:
        return [a for a, rep in self.representative.items() if self.group_of[rep] == gid]


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # 依宣告順序較前者為代表，確保命名穩定
            self.parent[max(ra, rb, key=self.order)] = min(ra, rb, key=self.order)

    def order(self, x):
        return list(self.parent).index(x)


def top_level_conjuncts(b: BoolTerm) -> list[BoolTerm]:
    if isinstance(b, And):
        return top_level_conjuncts(b.left) + top_level_conjuncts(b.right)
    if isinstance(b, Not) and isinstance(b.arg, Not):
        return top_level_conjuncts(b.arg.arg)
    return [b]


def preprocess_arrays(f: Formula) -> tuple[Formula, ArrayGroups]:
    """
    以 union-find 劃分陣列等價類，最外層的正陣列等式被吸收進群組，
    寫入 b = a{w <- x} 讓 a 與 b 成為同一個鎖步群組 (長度相同)。
    其他位置的陣列等式只允許陣列變數之間的不等式。
    """
    arrays = f.arrays()
    classes = _UnionFind(arrays)
    writes: list[WriteLink] = []
    kept: list[BoolTerm] = []
    for assertion in f.assertions:
        for conjunct in top_level_conjuncts(assertion):
            if not isinstance(conjunct, ArrayEq):
                kept.append(conjunct)
                continue
            left, right = conjunct.left, conjunct.right
            if isinstance(left, ArrayVar) and isinstance(right, ArrayVar):
                classes.union(left.name, right.name)
            elif isinstance(left, ArrayVar) and isinstance(right, Write):
                writes.append(WriteLink(left.name, right.base, right.index, right.value))
            elif isinstance(left, Write) and isinstance(right, ArrayVar):
                writes.append(WriteLink(right.name, left.base, left.index, left.value))
            else:
                raise UnsupportedFragment("兩側都是寫入的陣列等式不在支援範圍內")

    groups = ArrayGroups()
    for a in arrays:
        groups.representative[a] = classes.find(a)
    reps = list(dict.fromkeys(groups.representative.values()))
    lockstep = _UnionFind(reps)
    for w in writes:
        lockstep.union(classes.find(w.result), classes.find(w.base))
    roots = list(dict.fromkeys(lockstep.find(r) for r in reps))
    for rep in reps:
        groups.group_of[rep] = roots.index(lockstep.find(rep))
    groups.writes = [WriteLink(groups.tag(w.result), groups.tag(w.base), w.index, w.value)
                     for w in writes]
    logger.debug(f"陣列前處理: {len(reps)} 個等價類, {len(roots)} 個鎖步群組, {len(writes)} 個寫入")
    return Formula(f.decls, tuple(kept)), groups


# ---------------------------------------------------------------------------
# 區域與模式
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionSystem:
    boundaries: dict[str, tuple[Sym, ...]]

    def region_count(self, counter: str) -> int:
        return 2 * len(self.boundaries.get(counter, ())) + 1

    def constrained(self) -> list[str]:
        return [c for c, b in self.boundaries.items() if b]

    def regions(self, counter: str) -> list[str]:
        """區域的文字描述 (常數依大小排序，符號邊界依出現順序)"""
        bounds = self.boundaries.get(counter, ())
        if not bounds:
            return ["(-inf, inf)"]
        consts = sorted(b for b in bounds if isinstance(b, int))
        ordered = consts + [b for b in bounds if not isinstance(b, int)]
        out = [f"(-inf, {ordered[0]}-1]"]
        for lo, hi in zip(ordered, ordered[1:] + [None]):
            out.append(f"[{lo}, {lo}]")
            out.append(f"[{lo}+1, {hi}-1]" if hi is not None else f"[{lo}+1, inf)")
        return out


def build_regions(machine: Scm) -> RegionSystem:
    return RegionSystem({c: tuple(machine.boundaries(c)) for c in machine.counters})


def coarse_mode_bound(reversals: int, counters: int, regions: int) -> int:
    """max = r·k·|R|，下限為 1"""
    return max(1, reversals * counters * regions)


def required_modes(machine: Scm, regions: RegionSystem) -> int:
    """每個受約束計數器的區域變化與方向反轉次數總和 + 1"""
    bounds = reversal_bound(machine)
    total = 1
    for c in regions.constrained():
        r = bounds[c]
        total += (r + 1) * (regions.region_count(c) - 1) + r
    return total


@dataclass(frozen=True)
class NfaTransition:
    source: object
    target: object
    label: object
    machine_transition: Optional[int] = None
    copy: int = 0
    kind: str = "intra"


@dataclass(frozen=True)
class ModeGraph:
    states: tuple
    transitions: tuple[NfaTransition, ...]
    initial: object
    accepting: frozenset
    copies: int = 1

    def state_index(self) -> dict:
        return {q: idx for idx, q in enumerate(self.states)}


def _stays_in_region(t: Transition, machine: Scm, constrained: set[str]) -> bool:
    """c = b 的轉移若改變 c，就不可能留在同一個區域 [b, b]"""
    for atom in t.counter_guard:
        if atom.rel == "=" and atom.counter in constrained:
            if t.increments[machine.counter_index(atom.counter)] != 0:
                return False
    return True


def build_mode_graph(machine: Scm, regions: RegionSystem, copies: Optional[int] = None) -> ModeGraph:
    """複製 copies 份控制結構；副本內的轉移保持模式，前進轉移到下一份副本"""
    copies = copies or required_modes(machine, regions)
    constrained = set(regions.constrained())
    states = tuple((q, j) for j in range(copies) for q in machine.states)
    transitions: list[NfaTransition] = []
    for j in range(copies):
        for tid, t in enumerate(machine.transitions):
            if copies == 1 or _stays_in_region(t, machine, constrained):
                transitions.append(NfaTransition((t.source, j), (t.target, j), tid, tid, j, "intra"))
            if j + 1 < copies:
                transitions.append(NfaTransition((t.source, j), (t.target, j + 1), tid, tid, j,
                                                 "advance"))
    logger.debug(f"模式圖: {copies} 份副本, {len(states)} 個狀態, {len(transitions)} 個轉移")
    return ModeGraph(states, tuple(transitions), (machine.initial, 0), frozenset(states), copies)


# ---------------------------------------------------------------------------
# Parikh 編碼
# ---------------------------------------------------------------------------

def count_var(prefix: str, idx: int) -> str:
    return f"{prefix}.n{idx}"


def sink_var(prefix: str, state_idx: int) -> str:
    return f"{prefix}.sink{state_idx}"


def depth_var(prefix: str, state_idx: int) -> str:
    return f"{prefix}.d{state_idx}"


def encode_parikh(nfa: ModeGraph, prefix: str = "nfa") -> LiaFormula:
    """
    流量守恆 + 連通性深度變數:
    次數為正的轉移必須能經由次數為正的前驅從初始狀態到達。
    """
    b = LiaBuilder()
    index = nfa.state_index()
    counts = [b.declare(count_var(prefix, idx)) for idx in range(len(nfa.transitions))]
    incoming: dict = {q: [] for q in nfa.states}
    outgoing: dict = {q: [] for q in nfa.states}
    for idx, t in enumerate(nfa.transitions):
        b.add(ge(counts[idx], 0))
        incoming[t.target].append(idx)
        outgoing[t.source].append(idx)

    sinks = []
    for q in nfa.states:
        qi = index[q]
        if q in nfa.accepting:
            s = b.declare(sink_var(prefix, qi))
            b.add(ge(s, 0), le(s, 1))
            sinks.append(s)
        inflow = add(*(counts[i] for i in incoming[q]), 1 if q == nfa.initial else 0)
        outflow = add(*(counts[i] for i in outgoing[q]),
                      LVar(sink_var(prefix, qi)) if q in nfa.accepting else 0)
        b.add(eq(inflow, outflow))
    b.add(eq(add(*sinks), 1) if sinks else eq(0, 1))

    for q in nfa.states:
        qi = index[q]
        d = b.declare(depth_var(prefix, qi))
        if q == nfa.initial:
            b.add(eq(d, 0))
            continue
        b.add(ge(d, 0))
        used = [counts[i] for i in incoming[q]]
        if not used:
            continue
        reasons = [conj(gt(counts[i], 0), lt(LVar(depth_var(prefix, index[nfa.transitions[i].source])), d))
                   for i in incoming[q] if nfa.transitions[i].source != q]
        b.add(implies(gt(add(*used), 0), disj(*reasons)))
    return b.build()


# ---------------------------------------------------------------------------
# 計數器約束
# ---------------------------------------------------------------------------

def _sym(x: Sym) -> IntExpr:
    return LNum(x) if isinstance(x, int) else LVar(x)


def _relation(rel: str, a: IntExpr, b: IntExpr) -> BoolExpr:
    if rel == "!=":
        return ne(a, b)
    return {"<": lt, "<=": le, ">": gt, ">=": ge, "=": eq}[rel](a, b)


def entry_var(prefix: str, copy: int, ci: int) -> str:
    return f"{prefix}.w{copy}.{ci}"


def exit_var(prefix: str, copy: int, ci: int) -> str:
    return f"{prefix}.z{copy}.{ci}"


def encode_counter_constraints(nfa: ModeGraph, regions: RegionSystem, machine: Scm,
                               prefix: str = "nfa") -> LiaFormula:
    """
    受約束的計數器: 每份副本有進入值 w 與離開值 z，兩者落在同一個區域
    (對每個邊界 b，w<b ⇔ z<b 且 w=b ⇔ z=b)，同一份副本內單調。
    副本內的轉移在 w 檢查計數器約束，前進轉移在 z 檢查。
    不受約束的計數器只需要終值 = 初值 + Σ 次數 x 增量。
    """
    b = LiaBuilder()
    counts = [LVar(count_var(prefix, idx)) for idx in range(len(nfa.transitions))]
    constrained = set(regions.constrained())
    copies = nfa.copies

    def incr(idx: int, ci: int) -> int:
        return machine.transitions[nfa.transitions[idx].machine_transition].increments[ci]

    # 每份副本最多離開一次
    for j in range(copies - 1):
        advances = [counts[i] for i, t in enumerate(nfa.transitions)
                    if t.kind == "advance" and t.copy == j]
        if advances:
            b.add(le(add(*advances), 1))

    for ci, name in enumerate(machine.counters):
        init = _sym(machine.init_values[ci])
        final = machine.final_values[ci]
        if name not in constrained:
            if final is not None:
                total = add(init, *(scale(incr(i, ci), counts[i]) for i in range(len(counts))))
                b.add(eq(_sym(final), total))
            continue
        w = [LVar(b.declare(entry_var(prefix, j, ci))) for j in range(copies)]
        z = [LVar(b.declare(exit_var(prefix, j, ci))) for j in range(copies)]
        b.add(eq(w[0], init))
        signs = {(n > 0) - (n < 0) for t in machine.transitions for n in (t.increments[ci],) if n}
        for j in range(copies):
            intra = [i for i, t in enumerate(nfa.transitions) if t.copy == j and t.kind == "intra"]
            advance = [i for i, t in enumerate(nfa.transitions) if t.copy == j and t.kind == "advance"]
            b.add(eq(z[j], add(w[j], *(scale(incr(i, ci), counts[i]) for i in intra))))
            if j + 1 < copies:
                b.add(eq(w[j + 1], add(z[j], *(scale(incr(i, ci), counts[i]) for i in advance))))
            for bound in regions.boundaries[name]:
                bound = _sym(bound)
                b.add(iff(lt(w[j], bound), lt(z[j], bound)))
                b.add(iff(eq(w[j], bound), eq(z[j], bound)))
            if len(signs) > 1:
                d = LVar(b.declare(f"{prefix}.dir{j}.{ci}"))
                b.add(ge(d, 0), le(d, 1))
                for i in intra:
                    n = incr(i, ci)
                    if n:
                        b.add(implies(gt(counts[i], 0), eq(d, 1 if n > 0 else 0)))
        if final is not None:
            b.add(eq(_sym(final), z[copies - 1]))

    # 計數器約束 α: 副本內轉移在 w 檢查，前進轉移在 z 檢查
    for idx, t in enumerate(nfa.transitions):
        guard = machine.transitions[t.machine_transition].counter_guard
        if not guard:
            continue
        atoms = []
        for atom in guard:
            ci = machine.counter_index(atom.counter)
            where = entry_var if t.kind == "intra" else exit_var
            atoms.append(_relation(atom.rel, LVar(where(prefix, t.copy, ci)), _sym(atom.rhs)))
        b.add(implies(gt(counts[idx], 0), conj(*atoms)))
    return b.build()


# ---------------------------------------------------------------------------
# 輸入約束
# ---------------------------------------------------------------------------

def witness_var(prefix: str, machine_transition: int, tag: str) -> str:
    return f"{prefix}.v{machine_transition}.{tag}"


def encode_inputs(nfa: ModeGraph, machine: Scm, prefix: str = "nfa") -> tuple[LiaFormula, dict]:
    """
    每個帶輸入約束的機器轉移、每個出現的 tag 一個見證變數；
    轉移總次數為正時，見證值必須滿足輸入約束。
    回傳 (公式, {(機器轉移, tag): 見證變數})。
    """
    b = LiaBuilder()
    witnesses: dict[tuple[int, str], str] = {}
    uses: dict[int, list[int]] = {}
    for idx, t in enumerate(nfa.transitions):
        uses.setdefault(t.machine_transition, []).append(idx)
    for tid, t in enumerate(machine.transitions):
        if not t.input_guard or tid not in uses:
            continue

        def cell(tag: str) -> LVar:
            if (tid, tag) not in witnesses:
                witnesses[(tid, tag)] = b.declare(witness_var(prefix, tid, tag))
            return LVar(witnesses[(tid, tag)])

        atoms = []
        for atom in t.input_guard:
            rhs = cell(atom.rhs.tag) if isinstance(atom.rhs, Cell) else _sym(atom.rhs)
            atoms.append(_relation(atom.rel, cell(atom.tag), rhs))
        total = add(*(LVar(count_var(prefix, i)) for i in uses[tid]))
        b.add(implies(gt(total, 0), conj(*atoms)))
    return b.build(), witnesses


# ---------------------------------------------------------------------------
# 組合 ψ
# ---------------------------------------------------------------------------

@dataclass
class ReadSite:
    array: str
    index: IntExpr
    var: str
    bounded: bool = True


@dataclass
class FoldSite:
    name: str
    fold: Fold
    array: str
    init: tuple[Sym, ...]
    outputs: tuple[str, ...]


@dataclass
class GroupEncoding:
    gid: int
    arrays: list[str]
    len_var: str
    prefix: str
    machine: Optional[Scm] = None
    nfa: Optional[ModeGraph] = None
    regions: Optional[RegionSystem] = None
    witnesses: dict = field(default_factory=dict)
    reads: list[ReadSite] = field(default_factory=list)
    folds: list[FoldSite] = field(default_factory=list)
    reversals: dict = field(default_factory=dict)


@dataclass
class EncodingMap:
    arrays: ArrayGroups
    groups: list[GroupEncoding]
    int_vars: list[str]
    folds: list[FoldSite]
    reads: list[ReadSite]

    def group_of(self, array: str) -> GroupEncoding:
        return self.groups[self.arrays.group(array)]

    def stats(self) -> dict:
        folds_per_group = [len(g.folds) for g in self.groups] or [0]
        return {
            "folds": len(self.folds),
            "mfpa": max(folds_per_group),
            "groups": len(self.groups),
            "states": sum(len(g.machine.states) for g in self.groups if g.machine),
            "transitions": sum(len(g.machine.transitions) for g in self.groups if g.machine),
            "copies": max([g.nfa.copies for g in self.groups if g.nfa] or [0]),
        }


class _Translator:
    """把 AFL 布林/整數項翻譯成 LIA，同時收集讀取與 fold 出現位置"""

    def __init__(self, groups: ArrayGroups, builder: LiaBuilder):
        self.groups = groups
        self.builder = builder
        self.reads: list[ReadSite] = []
        self.folds: list[FoldSite] = []
        self.definitions = 0

    def name_of(self, x: IntExpr, hint: str) -> Sym:
        """init 分量與讀取位置要當成機器約束的邊界: 只能是常數或變數"""
        if isinstance(x, LNum):
            return x.value
        if isinstance(x, LVar):
            return x.name
        name = f"def.{self.definitions}.{hint}"
        self.definitions += 1
        self.builder.add(eq(LVar(name), x))
        return name

    def int(self, t: IntTerm) -> IntExpr:
        if isinstance(t, Const):
            return LNum(t.value)
        if isinstance(t, Var):
            return LVar(t.name)
        if isinstance(t, Add):
            return add(self.int(t.left), self.int(t.right))
        if isinstance(t, Len):
            return LVar(self.groups.len_var(t.array))
        if isinstance(t, Read):
            return LVar(self.read(t.array, self.int(t.index), bounded=True))
        raise UnsupportedFragment(f"整數項必須先正規化: {t!r}")

    def read(self, array: str, index: IntExpr, bounded: bool) -> str:
        var = f"rd.{len(self.reads)}"
        self.reads.append(ReadSite(array, index, var, bounded))
        if bounded:
            self.builder.add(ge(index, 0), lt(index, LVar(self.groups.len_var(array))))
        return var

    def vector(self, v) -> list[IntExpr]:
        if isinstance(v, Vec):
            return [self.int(t) for t in v.items]
        if not isinstance(v.init, Vec):
            raise UnsupportedFragment("巢狀 fold 必須先正規化")
        n = len(self.folds)
        name = f"f{n}"
        init = tuple(self.name_of(self.int(t), f"{name}.init{k}") for k, t in enumerate(v.init.items))
        outputs = tuple(f"{name}.out{k}" for k in range(v.arity))
        self.folds.append(FoldSite(name, v, v.array, init, outputs))
        return [LVar(o) for o in outputs]

    def bool(self, b: BoolTerm, positive: bool = True) -> BoolExpr:
        if isinstance(b, IntEq):
            return eq(self.int(b.left), self.int(b.right))
        if isinstance(b, IntLt):
            return lt(self.int(b.left), self.int(b.right))
        if isinstance(b, Not):
            return neg(self.bool(b.arg, not positive))
        if isinstance(b, And):
            return conj(self.bool(b.left, positive), self.bool(b.right, positive))
        if isinstance(b, VecEq):
            left, right = self.vector(b.left), self.vector(b.right)
            return conj(*(eq(x, y) for x, y in zip(left, right)))
        if isinstance(b, ArrayEq):
            return self.array_eq(b, positive)
        raise UnsupportedFragment(f"布林項必須先正規化: {b!r}")

    def array_eq(self, b: ArrayEq, positive: bool) -> BoolExpr:
        if positive:
            raise UnsupportedFragment("正的陣列等式只能出現在最外層的合取中")
        if not isinstance(b.left, ArrayVar) or not isinstance(b.right, ArrayVar):
            raise UnsupportedFragment("陣列不等式只支援陣列變數之間")
        a, c = b.left.name, b.right.name
        # ¬(a = c) ⇔ |a| ≠ |c| ∨ (0 ≤ d < |a| ∧ a[d] ≠ c[d])，d 為新變數
        d = LVar(f"diff.{len(self.reads)}")
        va = LVar(self.read(a, d, bounded=False))
        vc = LVar(self.read(c, d, bounded=False))
        la, lc = LVar(self.groups.len_var(a)), LVar(self.groups.len_var(c))
        return conj(eq(la, lc), neg(conj(ge(d, 0), lt(d, la), ne(va, vc))))


def _ackermann(reads: list[ReadSite], groups: ArrayGroups) -> list[BoolExpr]:
    out = []
    for r1, r2 in itertools.combinations(reads, 2):
        if groups.tag(r1.array) == groups.tag(r2.array):
            out.append(implies(eq(r1.index, r2.index), eq(LVar(r1.var), LVar(r2.var))))
    return out


def assemble(f: Formula) -> tuple[LiaFormula, EncodingMap]:
    """ψ = ψ_n ∧ ψ_e ∧ ψ_l；f 必須已正規化"""
    f, groups = preprocess_arrays(f)
    psi = LiaBuilder()
    for name in f.ints():
        psi.declare(name)
    tr = _Translator(groups, psi)

    # ψ_n
    for assertion in f.assertions:
        psi.add(tr.bool(assertion))

    group_ids = groups.group_ids()
    encodings = [GroupEncoding(gid, groups.members(gid), f"len.g{gid}", f"g{gid}") for gid in group_ids]
    for enc in encodings:
        psi.declare(enc.len_var)
        psi.add(ge(LVar(enc.len_var), 0))

    # 先建 fold 機器: guard 提升出的定義可能帶來新的讀取
    machines: dict[int, list[Scm]] = {gid: [] for gid in group_ids}
    handled = 0
    while handled < len(tr.folds):
        site = tr.folds[handled]
        handled += 1
        gid = groups.group(site.array)
        sink: list[BoolTerm] = []
        machine = translate_fold(site.fold.fn, sink, name=site.name, tag=groups.tag(site.array),
                                 init=site.init, outputs=site.outputs)
        for definition in sink:
            psi.add(tr.bool(definition))
        machines[gid].append(align(machine, site.init[0], f"len.g{gid}", position=f"p.g{gid}"))
        encodings[gid].folds.append(site)

    for w in groups.writes:
        index = tr.name_of(tr.int(w.index), "widx")
        value = tr.name_of(tr.int(w.value), "wval")
        gid = groups.group_of[w.result]
        psi.add(ge(_sym(index), 0), lt(_sym(index), LVar(f"len.g{gid}")))
        machines[gid].append(write_link(w.base, w.result, index, value, position=f"p.g{gid}",
                                       len_var=f"len.g{gid}"))

    for read in tr.reads:
        encodings[groups.group(read.array)].reads.append(read)

    # ψ_e 與 ψ_l
    for enc in encodings:
        gid = enc.gid
        if not machines[gid]:
            psi.add(*_ackermann(enc.reads, groups))
            continue
        for read in enc.reads:
            position = tr.name_of(read.index, "ridx")
            machines[gid].append(observer(groups.tag(read.array), position, read.var,
                                          position=f"p.g{gid}"))
        machine = product_all(machines[gid])
        regions = build_regions(machine)
        nfa = build_mode_graph(machine, regions)
        psi.extend(encode_parikh(nfa, enc.prefix))
        psi.extend(encode_counter_constraints(nfa, regions, machine, enc.prefix))
        inputs, witnesses = encode_inputs(nfa, machine, enc.prefix)
        psi.extend(inputs)
        enc.machine, enc.nfa, enc.regions, enc.witnesses = machine, nfa, regions, witnesses
        enc.reversals = reversal_bound(machine)
        logger.info(f"群組 g{gid}: {len(machine.states)} 狀態, {len(machine.transitions)} 轉移, "
                    f"{nfa.copies} 份副本")

    formula = psi.build()
    emap = EncodingMap(groups, encodings, f.ints(), tr.folds, tr.reads)
    logger.info(f"ψ: {len(formula.declarations)} 個變數, 大小 {formula.size()}")
    return formula, emap
