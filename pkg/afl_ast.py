#!/usr/bin/env python3
"""
AFL (Array Folds Logic) 抽象語法樹

主要功能:
- AFL 公式的語法節點 (陣列/整數/布林/向量項、fold 函數)
- 語法良構性檢查 (validate)
- fold 函數的控制流圖 (build_cfg) 與 SCC 單調性檢查
- 正規化: 語法糖展開、萬用字元替換、巢狀 fold 提升

注意事項:
1. 所有節點都是不可變的 (frozen dataclass)，可以在多個線程之間共享
2. SourceSpan 只用於診斷，不參與結構相等比較
3. 隱含的 catch-all break 分支不會出現在 AST 中
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional

import networkx as nx

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 錯誤類別
# ---------------------------------------------------------------------------

class AflError(Exception):
    """所有 AFL 求解器錯誤的基底類別"""


class WellFormednessViolation(AflError):
    """公式未通過良構性檢查"""

    def __init__(self, problems: list["WellFormednessError"]):
        self.problems = list(problems)
        super().__init__("; ".join(p.describe() for p in self.problems))


# ---------------------------------------------------------------------------
# 來源位置
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpan:
    """start/end 是 UTF-8 位元組位移；line/column 從 1 開始，以字元計"""
    start: int
    end: int
    line: int
    column: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"無效的來源區間: {self.start} > {self.end}")

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class Node:
    """所有語法節點的共同基底，span 只作診斷用途"""
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False, kw_only=True)


class Sort(Enum):
    ARRAY = "array"
    INT = "int"


# ---------------------------------------------------------------------------
# 整數項 T
# ---------------------------------------------------------------------------

class IntTerm(Node):
    pass


@dataclass(frozen=True)
class Const(IntTerm):
    value: int


@dataclass(frozen=True)
class Var(IntTerm):
    name: str


@dataclass(frozen=True)
class Add(IntTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class Read(IntTerm):
    array: str
    index: IntTerm


@dataclass(frozen=True)
class Len(IntTerm):
    array: str


# 語法糖 (由 normalize 移除)

@dataclass(frozen=True)
class Neg(IntTerm):
    arg: IntTerm


@dataclass(frozen=True)
class Sub(IntTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class Scale(IntTerm):
    factor: int
    arg: IntTerm


@dataclass(frozen=True)
class Wildcard(IntTerm):
    """論文中的 *，代表一個沒有約束的新變數"""


# ---------------------------------------------------------------------------
# 陣列項 A
# ---------------------------------------------------------------------------

class ArrayTerm(Node):
    pass


@dataclass(frozen=True)
class ArrayVar(ArrayTerm):
    name: str


@dataclass(frozen=True)
class Write(ArrayTerm):
    base: str
    index: IntTerm
    value: IntTerm


# ---------------------------------------------------------------------------
# fold 函數 F^m
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Implicit(Node):
    """隱含變數 e, i, c_k, s"""
    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("e", "i", "c", "s"):
            raise ValueError(f"未知的隱含變數: {self.kind}")

    def __str__(self):
        return f"c{self.k}" if self.kind == "c" else self.kind


E = Implicit("e")
I = Implicit("i")
S = Implicit("s")


def counter(k: int) -> Implicit:
    return Implicit("c", k)


CORE_GUARD_RELATIONS = ("<", ">", "=", "!=")
SUGAR_GUARD_RELATIONS = ("<=", ">=")


@dataclass(frozen=True)
class GuardAtom(Node):
    lhs: Implicit
    cmp: str
    rhs: IntTerm

    def __post_init__(self):
        if self.cmp not in CORE_GUARD_RELATIONS + SUGAR_GUARD_RELATIONS:
            raise ValueError(f"未知的比較運算子: {self.cmp}")


class UpdateAtom(Node):
    pass


@dataclass(frozen=True)
class CtrAdd(UpdateAtom):
    k: int
    n: int


@dataclass(frozen=True)
class SetState(UpdateAtom):
    n: int


@dataclass(frozen=True)
class Skip(UpdateAtom):
    pass


@dataclass(frozen=True)
class Break(UpdateAtom):
    pass


# 更新語法糖: c++ / c-- / c -= n

@dataclass(frozen=True)
class CtrInc(UpdateAtom):
    k: int


@dataclass(frozen=True)
class CtrDec(UpdateAtom):
    k: int


@dataclass(frozen=True)
class CtrSub(UpdateAtom):
    k: int
    n: int


@dataclass(frozen=True)
class Branch(Node):
    guard: tuple[GuardAtom, ...]
    updates: tuple[UpdateAtom, ...]

    @property
    def breaks(self) -> bool:
        return any(isinstance(u, Break) for u in self.updates)

    def target_state(self) -> Optional[int]:
        for u in self.updates:
            if isinstance(u, SetState):
                return u.n
        return None


@dataclass(frozen=True)
class FoldFunction(Node):
    arity: int
    branches: tuple[Branch, ...]


# ---------------------------------------------------------------------------
# 向量項 V^m
# ---------------------------------------------------------------------------

class VectorTerm(Node):
    pass


@dataclass(frozen=True)
class Vec(VectorTerm):
    items: tuple[IntTerm, ...]

    @property
    def arity(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class Fold(VectorTerm):
    array: str
    init: VectorTerm
    fn: FoldFunction

    @property
    def arity(self) -> int:
        return self.fn.arity


def vector_arity(v: VectorTerm) -> int:
    return v.arity


# ---------------------------------------------------------------------------
# 布林項 B
# ---------------------------------------------------------------------------

class BoolTerm(Node):
    pass


@dataclass(frozen=True)
class ArrayEq(BoolTerm):
    left: ArrayTerm
    right: ArrayTerm


@dataclass(frozen=True)
class IntEq(BoolTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class IntLt(BoolTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class Not(BoolTerm):
    arg: BoolTerm


@dataclass(frozen=True)
class And(BoolTerm):
    left: BoolTerm
    right: BoolTerm


@dataclass(frozen=True)
class VecEq(BoolTerm):
    left: VectorTerm
    right: VectorTerm


# 布林語法糖

@dataclass(frozen=True)
class BoolConst(BoolTerm):
    value: bool


@dataclass(frozen=True)
class Or(BoolTerm):
    left: BoolTerm
    right: BoolTerm


@dataclass(frozen=True)
class Implies(BoolTerm):
    left: BoolTerm
    right: BoolTerm


@dataclass(frozen=True)
class IntLe(BoolTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class IntGe(BoolTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class IntGt(BoolTerm):
    left: IntTerm
    right: IntTerm


@dataclass(frozen=True)
class IntNe(BoolTerm):
    left: IntTerm
    right: IntTerm


# ---------------------------------------------------------------------------
# 公式
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Formula:
    """AFL 公式: 宣告 (依宣告順序) 與斷言清單"""
    decls: tuple[tuple[str, Sort], ...] = ()
    assertions: tuple[BoolTerm, ...] = ()

    @property
    def sorts(self) -> dict[str, Sort]:
        return dict(self.decls)

    def arrays(self) -> list[str]:
        return [n for n, s in self.decls if s is Sort.ARRAY]

    def ints(self) -> list[str]:
        return [n for n, s in self.decls if s is Sort.INT]


# ---------------------------------------------------------------------------
# 走訪工具
# ---------------------------------------------------------------------------

def children(node) -> Iterator:
    """依欄位順序列出子節點 (含 fold 函數內部)"""
    if isinstance(node, (Add, Sub, IntEq, IntLt, And, Or, Implies,
                         IntLe, IntGe, IntGt, IntNe, ArrayEq, VecEq)):
        yield node.left
        yield node.right
    elif isinstance(node, (Neg, Scale, Not)):
        yield node.arg
    elif isinstance(node, Read):
        yield node.index
    elif isinstance(node, Write):
        yield node.index
        yield node.value
    elif isinstance(node, Vec):
        yield from node.items
    elif isinstance(node, Fold):
        yield node.init
        yield node.fn
    elif isinstance(node, FoldFunction):
        yield from node.branches
    elif isinstance(node, Branch):
        yield from node.guard
        yield from node.updates
    elif isinstance(node, GuardAtom):
        yield node.lhs
        yield node.rhs


def walk(node) -> Iterator:
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(list(children(current))))


def iter_folds(node) -> Iterator[Fold]:
    for n in walk(node):
        if isinstance(n, Fold):
            yield n


def formula_folds(f: Formula) -> list[Fold]:
    return [fold for a in f.assertions for fold in iter_folds(a)]


def fold_functions(f: Formula) -> list[FoldFunction]:
    return [fold.fn for fold in formula_folds(f)]


def counter_delta(update: UpdateAtom) -> Optional[tuple[int, int]]:
    """計數器更新的 (k, 增量)，非計數器更新回傳 None"""
    if isinstance(update, CtrAdd):
        return update.k, update.n
    if isinstance(update, CtrInc):
        return update.k, 1
    if isinstance(update, CtrDec):
        return update.k, -1
    if isinstance(update, CtrSub):
        return update.k, -update.n
    return None


def compare(cmp: str, a: int, b: int) -> bool:
    if cmp == "<":
        return a < b
    if cmp == ">":
        return a > b
    if cmp == "=":
        return a == b
    if cmp == "!=":
        return a != b
    if cmp == "<=":
        return a <= b
    if cmp == ">=":
        return a >= b
    raise ValueError(f"未知的比較運算子: {cmp}")


# ---------------------------------------------------------------------------
# 良構性檢查
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WellFormednessError:
    """良構性問題 (回傳而非拋出)"""
    span: Optional[SourceSpan] = field(default=None, compare=False, kw_only=True)

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class DuplicateUpdate(WellFormednessError):
    target: str

    def describe(self):
        return f"同一分支中 {self.target} 被更新超過一次"


@dataclass(frozen=True)
class ArityMismatch(WellFormednessError):
    left: int
    right: int

    def describe(self):
        return f"向量元數不一致: {self.left} vs {self.right}"


@dataclass(frozen=True)
class NonConstantStateGuard(WellFormednessError):
    def describe(self):
        return "狀態變數 s 只能與整數常數比較"


@dataclass(frozen=True)
class UndeclaredVariable(WellFormednessError):
    name: str

    def describe(self):
        return f"未宣告的變數: {self.name}"


@dataclass(frozen=True)
class SortMismatch(WellFormednessError):
    name: str
    expected: Sort

    def describe(self):
        return f"{self.name} 應為 {self.expected.value} 型別"


@dataclass(frozen=True)
class NegativeStateConstant(WellFormednessError):
    value: int

    def describe(self):
        return f"狀態常數必須非負: {self.value}"


@dataclass(frozen=True)
class CounterOutOfRange(WellFormednessError):
    k: int
    arity: int

    def describe(self):
        return f"計數器 c{self.k} 超出 fold 元數 {self.arity} 的範圍"


@dataclass(frozen=True)
class EmptyFold(WellFormednessError):
    def describe(self):
        return "fold 元數至少為 1"


def validate(f: Formula) -> list[WellFormednessError]:
    """回傳所有語法層級的良構性問題；語義上的 guard 互斥與 SCC 檢查另外進行"""
    problems: list[WellFormednessError] = []
    sorts = f.sorts

    def expect(name: str, sort: Sort, span):
        declared = sorts.get(name)
        if declared is None:
            problems.append(UndeclaredVariable(name, span=span))
        elif declared is not sort:
            problems.append(SortMismatch(name, sort, span=span))

    def check_function(fn: FoldFunction, span):
        if fn.arity < 1:
            problems.append(EmptyFold(span=span))
        for branch in fn.branches:
            for atom in branch.guard:
                if atom.lhs.kind == "s" and not isinstance(atom.rhs, Const):
                    problems.append(NonConstantStateGuard(span=atom.span))
                if atom.lhs.kind == "c" and not 1 <= atom.lhs.k <= fn.arity - 1:
                    problems.append(CounterOutOfRange(atom.lhs.k, fn.arity, span=atom.span))
            seen: set[str] = set()
            for update in branch.updates:
                target = None
                delta = counter_delta(update)
                if delta is not None:
                    k = delta[0]
                    target = f"c{k}"
                    if not 1 <= k <= fn.arity - 1:
                        problems.append(CounterOutOfRange(k, fn.arity, span=update.span))
                elif isinstance(update, SetState):
                    target = "s"
                    if update.n < 0:
                        problems.append(NegativeStateConstant(update.n, span=update.span))
                if target is not None:
                    if target in seen:
                        problems.append(DuplicateUpdate(target, span=update.span))
                    seen.add(target)

    for assertion in f.assertions:
        for node in walk(assertion):
            if isinstance(node, Var):
                expect(node.name, Sort.INT, node.span)
            elif isinstance(node, (Read, Len)):
                expect(node.array, Sort.ARRAY, node.span)
            elif isinstance(node, ArrayVar):
                expect(node.name, Sort.ARRAY, node.span)
            elif isinstance(node, Write):
                expect(node.base, Sort.ARRAY, node.span)
            elif isinstance(node, VecEq):
                la, ra = vector_arity(node.left), vector_arity(node.right)
                if la != ra:
                    problems.append(ArityMismatch(la, ra, span=node.span))
            elif isinstance(node, Fold):
                expect(node.array, Sort.ARRAY, node.span)
                if vector_arity(node.init) != node.fn.arity:
                    problems.append(ArityMismatch(vector_arity(node.init), node.fn.arity,
                                                  span=node.span))
                check_function(node.fn, node.span)
    return problems


# ---------------------------------------------------------------------------
# 控制流圖
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CfgEdge:
    source: int
    target: int
    branch: int
    guard: tuple[GuardAtom, ...]      # 不含 s 的 guard 原子
    updates: tuple[UpdateAtom, ...]
    breaks: bool

    def increments(self) -> dict[int, int]:
        result: dict[int, int] = {}
        for update in self.updates:
            delta = counter_delta(update)
            if delta is not None:
                result[delta[0]] = result.get(delta[0], 0) + delta[1]
        return result


@dataclass(frozen=True)
class ControlFlowGraph:
    states: tuple[int, ...]
    edges: tuple[CfgEdge, ...]
    arity: int

    def digraph(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.states)
        for idx, edge in enumerate(self.edges):
            g.add_edge(edge.source, edge.target, key=idx)
        return g


def state_guard_holds(branch: Branch, state: int) -> bool:
    return all(compare(a.cmp, state, a.rhs.value)
               for a in branch.guard if a.lhs.kind == "s")


def build_cfg(fn: FoldFunction) -> ControlFlowGraph:
    """依 s 的更新建立邊標記控制流圖 G = <S, E, γ>"""
    states = sorted({0} | {u.n for b in fn.branches for u in b.updates
                           if isinstance(u, SetState)})
    edges = []
    for idx, branch in enumerate(fn.branches):
        data_guard = tuple(a for a in branch.guard if a.lhs.kind != "s")
        target = branch.target_state()
        for source in states:
            if not state_guard_holds(branch, source):
                continue
            edges.append(CfgEdge(source, source if target is None else target, idx,
                                 data_guard, branch.updates, branch.breaks))
    return ControlFlowGraph(tuple(states), tuple(edges), fn.arity)


def scc_violations(g: ControlFlowGraph) -> list[tuple[int, frozenset]]:
    """回傳 (計數器, SCC) 清單: 該 SCC 內此計數器同時有遞增與遞減"""
    component = {}
    for idx, scc in enumerate(nx.strongly_connected_components(g.digraph())):
        for state in scc:
            component[state] = idx
    signs: dict[tuple[int, int], set[int]] = {}
    members: dict[int, set[int]] = {}
    for edge in g.edges:
        # break 分支的更新永遠不會生效
        if edge.breaks or component[edge.source] != component[edge.target]:
            continue
        comp = component[edge.source]
        members.setdefault(comp, set()).update((edge.source, edge.target))
        for k, n in edge.increments().items():
            if n != 0:
                signs.setdefault((k, comp), set()).add(1 if n > 0 else -1)
    return [(k, frozenset(members[comp])) for (k, comp), s in sorted(signs.items())
            if len(s) > 1]


def check_scc_monotone(g: ControlFlowGraph) -> bool:
    return not scc_violations(g)


# ---------------------------------------------------------------------------
# 正規化
# ---------------------------------------------------------------------------

class FreshNames:
    """產生不與既有名稱衝突的新變數名稱 (含 '!'，使用者名稱不會產生)"""

    def __init__(self, taken: Iterable[str]):
        self.taken = set(taken)
        self.counter = itertools.count()

    def __call__(self, prefix: str) -> str:
        while True:
            name = f"{prefix}!{next(self.counter)}"
            if name not in self.taken:
                self.taken.add(name)
                return name


SUGAR_INT = (Neg, Sub, Scale, Wildcard)
SUGAR_BOOL = (BoolConst, Or, Implies, IntLe, IntGe, IntGt, IntNe)
SUGAR_UPDATE = (CtrInc, CtrDec, CtrSub)


def has_int_sugar(t: IntTerm) -> bool:
    return any(isinstance(n, SUGAR_INT) for n in walk(t))


def linear_form(t: IntTerm) -> tuple[dict[IntTerm, int], int]:
    """把整數項拆成 (原子項 -> 係數, 常數)；原子項為 Var / Read / Len"""
    coeffs: dict[IntTerm, int] = {}
    const = 0

    def visit(term: IntTerm, factor: int):
        nonlocal const
        if isinstance(term, Const):
            const += factor * term.value
        elif isinstance(term, Add):
            visit(term.left, factor)
            visit(term.right, factor)
        elif isinstance(term, Sub):
            visit(term.left, factor)
            visit(term.right, -factor)
        elif isinstance(term, Neg):
            visit(term.arg, -factor)
        elif isinstance(term, Scale):
            visit(term.arg, factor * term.factor)
        else:
            coeffs[term] = coeffs.get(term, 0) + factor

    visit(t, 1)
    return {k: v for k, v in coeffs.items() if v != 0}, const


def sum_terms(parts: list[IntTerm]) -> Optional[IntTerm]:
    if not parts:
        return None
    result = parts[-1]
    for part in reversed(parts[:-1]):
        result = Add(part, result)
    return result


def repeat(term: IntTerm, times: int) -> list[IntTerm]:
    return [term] * times


def shift(term: IntTerm, delta: int) -> IntTerm:
    """term + delta；常數直接合併，讓 guard 邊界保持為整數常數"""
    if isinstance(term, Const):
        return Const(term.value + delta, span=term.span)
    return Add(term, Const(delta))


class _Normalizer:
    def __init__(self, f: Formula):
        self.f = f
        self.fresh = FreshNames(name for name, _ in f.decls)
        self.new_decls: list[tuple[str, Sort]] = []
        self.hoisted: list[BoolTerm] = []

    def new_int(self, prefix: str) -> Var:
        name = self.fresh(prefix)
        self.new_decls.append((name, Sort.INT))
        return Var(name)

    # --- 整數項 -----------------------------------------------------------

    def core_int(self, t: IntTerm) -> IntTerm:
        """在非原子位置的整數項: 有糖就提升為新變數，否則遞迴處理讀取索引"""
        if has_int_sugar(t):
            x = self.new_int("t")
            self.hoisted.append(self.relation("=", x, t))
            return x
        return self.plain_int(t)

    def plain_int(self, t: IntTerm) -> IntTerm:
        if isinstance(t, Add):
            return Add(self.plain_int(t.left), self.plain_int(t.right), span=t.span)
        if isinstance(t, Read):
            return Read(t.array, self.core_int(t.index), span=t.span)
        return t

    def atom_operand(self, t: IntTerm) -> IntTerm:
        """線性重排前，把原子項內部的讀取索引正規化"""
        if isinstance(t, Read):
            return Read(t.array, self.core_int(t.index), span=t.span)
        return t

    def relation(self, cmp: str, lhs: IntTerm, rhs: IntTerm) -> BoolTerm:
        """lhs cmp rhs (cmp ∈ {=, <}) 重排成只含非負係數加法的核心原子"""
        if not has_int_sugar(lhs) and not has_int_sugar(rhs):
            lhs, rhs = self.plain_int(lhs), self.plain_int(rhs)
            return IntEq(lhs, rhs) if cmp == "=" else IntLt(lhs, rhs)
        coeffs, const = linear_form(Sub(lhs, rhs))
        positive: list[IntTerm] = []
        negative: list[IntTerm] = []
        for term, coef in coeffs.items():
            operand = self.atom_operand(term)
            if coef > 0:
                positive.extend(repeat(operand, coef))
            else:
                negative.extend(repeat(operand, -coef))
        if const != 0 or not positive:
            positive.append(Const(const))
        left = sum_terms(positive)
        right = sum_terms(negative) or Const(0)
        return IntEq(left, right) if cmp == "=" else IntLt(left, right)

    # --- 布林項 -----------------------------------------------------------

    def bool(self, b: BoolTerm) -> BoolTerm:
        if isinstance(b, BoolConst):
            truth = IntEq(Const(0), Const(0))
            return truth if b.value else Not(truth)
        if isinstance(b, Or):
            return Not(And(Not(self.bool(b.left)), Not(self.bool(b.right))))
        if isinstance(b, Implies):
            return Not(And(self.bool(b.left), Not(self.bool(b.right))))
        if isinstance(b, IntEq):
            return self.relation("=", b.left, b.right)
        if isinstance(b, IntLt):
            return self.relation("<", b.left, b.right)
        if isinstance(b, IntLe):
            return self.relation("<", b.left, Add(b.right, Const(1)))
        if isinstance(b, IntGe):
            return self.relation("<", b.right, Add(b.left, Const(1)))
        if isinstance(b, IntGt):
            return self.relation("<", b.right, b.left)
        if isinstance(b, IntNe):
            return Not(self.relation("=", b.left, b.right))
        if isinstance(b, Not):
            return Not(self.bool(b.arg), span=b.span)
        if isinstance(b, And):
            return And(self.bool(b.left), self.bool(b.right), span=b.span)
        if isinstance(b, ArrayEq):
            return ArrayEq(self.array(b.left), self.array(b.right), span=b.span)
        if isinstance(b, VecEq):
            return VecEq(self.vector(b.left, top=True), self.vector(b.right, top=True),
                         span=b.span)
        raise TypeError(f"未知的布林項: {b!r}")

    def array(self, a: ArrayTerm) -> ArrayTerm:
        if isinstance(a, Write):
            return Write(a.base, self.core_int(a.index), self.core_int(a.value), span=a.span)
        return a

    def vector(self, v: VectorTerm, top: bool) -> VectorTerm:
        if isinstance(v, Vec):
            return Vec(tuple(self.core_int(t) for t in v.items), span=v.span)
        init = self.vector(v.init, top=False)
        fold = Fold(v.array, init, self.function(v.fn), span=v.span)
        if top:
            return fold
        # 巢狀 fold: u = fold ... 提升到最外層
        fresh = Vec(tuple(self.new_int("u") for _ in range(fold.arity)))
        self.hoisted.append(VecEq(fresh, fold))
        return fresh

    # --- fold 函數 --------------------------------------------------------

    def function(self, fn: FoldFunction) -> FoldFunction:
        return FoldFunction(fn.arity, tuple(self.branch(b) for b in fn.branches), span=fn.span)

    def branch(self, b: Branch) -> Branch:
        guard = tuple(self.guard_atom(a) for a in b.guard)
        updates = tuple(self.update(u) for u in b.updates)
        return Branch(guard, updates, span=b.span)

    def guard_atom(self, a: GuardAtom) -> GuardAtom:
        cmp, rhs = a.cmp, a.rhs
        if a.lhs.kind == "s":
            value = rhs.value
            if cmp == "<=":
                return GuardAtom(a.lhs, "<", Const(value + 1), span=a.span)
            if cmp == ">=":
                return GuardAtom(a.lhs, ">", Const(value - 1), span=a.span)
            return a
        if cmp == "<=":
            cmp, rhs = "<", shift(rhs, 1)
        elif cmp == ">=":
            cmp, rhs = ">", shift(rhs, -1)
        return GuardAtom(a.lhs, cmp, self.guard_rhs(rhs), span=a.span)

    def guard_rhs(self, t: IntTerm) -> IntTerm:
        if not has_int_sugar(t):
            return self.plain_int(t)
        coeffs, const = linear_form(t)
        if any(c < 0 for c in coeffs.values()):
            return self.core_int(t)
        parts: list[IntTerm] = []
        for term, coef in coeffs.items():
            parts.extend(repeat(self.atom_operand(term), coef))
        if const != 0 or not parts:
            parts.append(Const(const))
        return sum_terms(parts)

    def update(self, u: UpdateAtom) -> UpdateAtom:
        if isinstance(u, SUGAR_UPDATE):
            k, n = counter_delta(u)
            return CtrAdd(k, n, span=u.span)
        return u

    def run(self) -> Formula:
        assertions = []
        for a in self.f.assertions:
            core = self.bool(a)
            # 提升出來的定義放在原斷言之前，維持確定性順序
            assertions.extend(self.drain())
            assertions.append(core)
        assertions.extend(self.drain())
        return Formula(self.f.decls + tuple(self.new_decls), tuple(assertions))

    def drain(self) -> list[BoolTerm]:
        out, self.hoisted = self.hoisted, []
        return out


def normalize(f: Formula) -> Formula:
    """
    展開語法糖、替換萬用字元並提升巢狀 fold；結果與 f 可滿足性等價。
    萬用字元先由 replace_wildcards 命名，所以結果的宣告以 replace_wildcards(f) 的宣告開頭。
    """
    result = _Normalizer(replace_wildcards(f)).run()
    added = len(result.decls) - len(f.decls)
    if added:
        logger.debug(f"正規化新增 {added} 個新變數")
    return result


def replace_wildcards(f: Formula) -> Formula:
    """只替換萬用字元 (供窮舉求解器使用，保留其餘語法糖)"""
    fresh = FreshNames(name for name, _ in f.decls)
    new_decls: list[tuple[str, Sort]] = []

    def rewrite(node):
        if isinstance(node, Wildcard):
            name = fresh("w")
            new_decls.append((name, Sort.INT))
            return Var(name)
        if not hasattr(node, "__dataclass_fields__") or isinstance(node, (Implicit, SourceSpan)):
            return node
        changes = {}
        for name in node.__dataclass_fields__:
            if name == "span":
                continue
            value = getattr(node, name)
            if isinstance(value, tuple):
                new_value = tuple(rewrite(v) for v in value)
            elif isinstance(value, Node):
                new_value = rewrite(value)
            else:
                continue
            if new_value is not value:
                changes[name] = new_value
        return replace(node, **changes) if changes else node

    assertions = tuple(rewrite(a) for a in f.assertions)
    return Formula(f.decls + tuple(new_decls), assertions)


def formula_size(f: Formula) -> int:
    """|φ| = 邏輯運算子 (含比較原子) 數量 + fold 分支數量"""
    size = 0
    for a in f.assertions:
        for node in walk(a):
            if isinstance(node, (BoolTerm, GuardAtom)):
                size += 1
            elif isinstance(node, Branch):
                size += 1
    return size
