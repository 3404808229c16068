#!/usr/bin/env python3
"""
AFL 參考語義 (evaluator)

依照 AFL 語義表逐步執行 fold，作為模型驗證與窮舉求解的基準 (oracle)。

注意事項:
1. 布林連接詞採用嚴格求值 (不短路)，任何越界讀取都會讓整個公式求值失敗
2. fold 的 guard 右側項在第一步之前就全部求值一次
3. 兩個 guard 同時成立時拋出 GuardOverlap，而不是任意挑選
"""

from __future__ import annotations

import itertools
import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from afl_ast import (
    Add, AflError, And, ArrayEq, ArrayTerm, ArrayVar, BoolConst, BoolTerm,
    Const, Fold, FoldFunction, Formula, Implies, IntEq, IntGe, IntGt, IntLe, IntLt,
    IntNe, IntTerm, Len, Neg, Not, Or, Read, Scale, SetState, Sort, Sub, Var, Vec, VecEq,
    VectorTerm, Wildcard, Write, compare, counter_delta, replace_wildcards, walk,
)

logger = logging.getLogger(__name__)


class EvaluationError(AflError):
    pass


class OutOfBoundsRead(EvaluationError):
    def __init__(self, array: str, index: int, length: int):
        self.array, self.index, self.length = array, index, length
        super().__init__(f"讀取越界: {array}[{index}]，長度 {length}")


class OutOfBoundsWrite(EvaluationError):
    def __init__(self, array: str, index: int, length: int):
        self.array, self.index, self.length = array, index, length
        super().__init__(f"寫入越界: {array}{{{index}}}，長度 {length}")


class GuardOverlap(EvaluationError):
    def __init__(self, branches: list[int], index: int):
        self.branches, self.index = branches, index
        super().__init__(f"索引 {index} 處有多個 guard 同時成立: 分支 {branches}")


class BudgetExceeded(EvaluationError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"窮舉超過節點預算 {budget}")


@dataclass(frozen=True)
class Interpretation:
    """σ = <λ, μ>: 整數變數與陣列變數的賦值"""
    ints: dict[str, int] = field(default_factory=dict)
    arrays: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __hash__(self):
        return hash((tuple(sorted(self.ints.items())), tuple(sorted(self.arrays.items()))))

    def int_value(self, name: str) -> int:
        if name not in self.ints:
            raise EvaluationError(f"整數變數 {name} 沒有賦值")
        return self.ints[name]

    def array_value(self, name: str) -> tuple[int, ...]:
        if name not in self.arrays:
            raise EvaluationError(f"陣列 {name} 沒有賦值")
        return self.arrays[name]

    def extend(self, ints: Optional[dict[str, int]] = None,
               arrays: Optional[dict[str, Sequence[int]]] = None) -> "Interpretation":
        merged_arrays = dict(self.arrays)
        for name, cells in (arrays or {}).items():
            merged_arrays[name] = tuple(cells)
        return Interpretation({**self.ints, **(ints or {})}, merged_arrays)


@dataclass
class FoldContext:
    """κ: 目前的索引、計數器與狀態"""
    vector: list[int]
    state: int = 0

    @property
    def index(self) -> int:
        return self.vector[0]

    def value_of(self, kind: str, k: int, cell: Optional[int]) -> int:
        if kind == "e":
            return cell
        if kind == "i":
            return self.vector[0]
        if kind == "c":
            return self.vector[k]
        return self.state


# ---------------------------------------------------------------------------
# 項的求值
# ---------------------------------------------------------------------------

def eval_int(t: IntTerm, sigma: Interpretation) -> int:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        return sigma.int_value(t.name)
    if isinstance(t, Add):
        return eval_int(t.left, sigma) + eval_int(t.right, sigma)
    if isinstance(t, Read):
        cells = sigma.array_value(t.array)
        idx = eval_int(t.index, sigma)
        if not 0 <= idx < len(cells):
            raise OutOfBoundsRead(t.array, idx, len(cells))
        return cells[idx]
    if isinstance(t, Len):
        return len(sigma.array_value(t.array))
    if isinstance(t, Neg):
        return -eval_int(t.arg, sigma)
    if isinstance(t, Sub):
        return eval_int(t.left, sigma) - eval_int(t.right, sigma)
    if isinstance(t, Scale):
        return t.factor * eval_int(t.arg, sigma)
    if isinstance(t, Wildcard):
        raise EvaluationError("萬用字元 _ 必須先正規化才能求值")
    raise TypeError(f"未知的整數項: {t!r}")


def eval_array(a: ArrayTerm, sigma: Interpretation) -> tuple[int, ...]:
    if isinstance(a, ArrayVar):
        return sigma.array_value(a.name)
    cells = list(sigma.array_value(a.base))
    idx = eval_int(a.index, sigma)
    value = eval_int(a.value, sigma)
    if not 0 <= idx < len(cells):
        raise OutOfBoundsWrite(a.base, idx, len(cells))
    cells[idx] = value
    return tuple(cells)


def eval_fold(a: Sequence[int], init: Sequence[int], fn: FoldFunction,
              sigma: Interpretation) -> tuple[int, ...]:
    """依語義規則逐步執行 fold，回傳最終的 (索引, 計數器...) 向量"""
    if len(init) != fn.arity:
        raise EvaluationError(f"初始向量元數 {len(init)} 與 fold 元數 {fn.arity} 不符")
    # guard 右側項只求值一次
    bounds = [[eval_int(atom.rhs, sigma) for atom in branch.guard] for branch in fn.branches]
    ctx = FoldContext(list(init))
    while 0 <= ctx.index < len(a):
        cell = a[ctx.index]
        enabled = [idx for idx, branch in enumerate(fn.branches)
                   if all(compare(atom.cmp, ctx.value_of(atom.lhs.kind, atom.lhs.k, cell), bound)
                          for atom, bound in zip(branch.guard, bounds[idx]))]
        if len(enabled) > 1:
            raise GuardOverlap(enabled, ctx.index)
        if not enabled:
            break
        branch = fn.branches[enabled[0]]
        if branch.breaks:
            break
        for update in branch.updates:
            delta = counter_delta(update)
            if delta is not None:
                ctx.vector[delta[0]] += delta[1]
            elif isinstance(update, SetState):
                ctx.state = update.n
        ctx.vector[0] += 1
    return tuple(ctx.vector)


def eval_vector(v: VectorTerm, sigma: Interpretation) -> tuple[int, ...]:
    if isinstance(v, Vec):
        return tuple(eval_int(t, sigma) for t in v.items)
    init = eval_vector(v.init, sigma)
    return eval_fold(sigma.array_value(v.array), init, v.fn, sigma)


def eval_bool(b: BoolTerm, sigma: Interpretation) -> bool:
    if isinstance(b, IntEq):
        return eval_int(b.left, sigma) == eval_int(b.right, sigma)
    if isinstance(b, IntLt):
        return eval_int(b.left, sigma) < eval_int(b.right, sigma)
    if isinstance(b, Not):
        return not eval_bool(b.arg, sigma)
    if isinstance(b, And):
        left = eval_bool(b.left, sigma)
        right = eval_bool(b.right, sigma)
        return left and right
    if isinstance(b, ArrayEq):
        left = eval_array(b.left, sigma)
        right = eval_array(b.right, sigma)
        return left == right
    if isinstance(b, VecEq):
        left = eval_vector(b.left, sigma)
        right = eval_vector(b.right, sigma)
        return left == right
    if isinstance(b, BoolConst):
        return b.value
    if isinstance(b, Or):
        left = eval_bool(b.left, sigma)
        right = eval_bool(b.right, sigma)
        return left or right
    if isinstance(b, Implies):
        left = eval_bool(b.left, sigma)
        right = eval_bool(b.right, sigma)
        return (not left) or right
    if isinstance(b, IntLe):
        return eval_int(b.left, sigma) <= eval_int(b.right, sigma)
    if isinstance(b, IntGe):
        return eval_int(b.left, sigma) >= eval_int(b.right, sigma)
    if isinstance(b, IntGt):
        return eval_int(b.left, sigma) > eval_int(b.right, sigma)
    if isinstance(b, IntNe):
        return eval_int(b.left, sigma) != eval_int(b.right, sigma)
    raise TypeError(f"未知的布林項: {b!r}")


def eval_formula(f: Formula, sigma: Interpretation) -> bool:
    results = [eval_bool(a, sigma) for a in f.assertions]
    return all(results)


def satisfies(f: Formula, sigma: Interpretation) -> bool:
    """求值錯誤視為不滿足"""
    try:
        return eval_formula(f, sigma)
    except EvaluationError as e:
        logger.debug(f"求值失敗: {e}")
        return False


# ---------------------------------------------------------------------------
# 窮舉求解 (oracle)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BruteForceBounds:
    max_len: int = 4
    value_range: tuple[int, int] = (-2, 2)
    int_range: tuple[int, int] = (-2, 4)
    node_budget: int = 2_000_000
    jobs: int = 1


@dataclass(frozen=True)
class BruteForceResult:
    status: str                                  # 'sat' | 'unsat_within_bounds'
    model: Optional[Interpretation] = None

    @property
    def sat(self) -> bool:
        return self.status == "sat"


SAT = "sat"
UNSAT_WITHIN_BOUNDS = "unsat_within_bounds"


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0
        self.lock = threading.Lock()

    def spend(self):
        with self.lock:
            self.used += 1
            if self.used > self.limit:
                raise BudgetExceeded(self.limit)


def _free_names(b: BoolTerm) -> set[str]:
    names: set[str] = set()
    for n in walk(b):
        if isinstance(n, (Var, ArrayVar)):
            names.add(n.name)
        elif isinstance(n, (Read, Len, Fold)):
            names.add(n.array)
        elif isinstance(n, Write):
            names.add(n.base)
    return names


def _domain_size(sort: Sort, bounds: BruteForceBounds) -> int:
    if sort is Sort.INT:
        return bounds.int_range[1] - bounds.int_range[0] + 1
    width = bounds.value_range[1] - bounds.value_range[0] + 1
    return sum(width ** n for n in range(bounds.max_len + 1))


def _values(sort: Sort, bounds: BruteForceBounds, lengths: Optional[Sequence[int]] = None) -> Iterator:
    if sort is Sort.INT:
        return iter(range(bounds.int_range[0], bounds.int_range[1] + 1))
    cells = range(bounds.value_range[0], bounds.value_range[1] + 1)
    if lengths is None:
        lengths = range(bounds.max_len + 1)
    return itertools.chain.from_iterable(itertools.product(cells, repeat=n) for n in lengths)


def _search_order(f: Formula, bounds: BruteForceBounds) -> tuple[list[BoolTerm], list[str], list[list[BoolTerm]]]:
    """
    決定變數的列舉順序: 每一步挑能讓最多斷言變成封閉的變數 (同分取值域較小者，再依宣告順序)。
    checks[k] 是第 k 個變數賦值後才封閉的斷言，搜尋時立刻檢查並剪掉整棵子樹。
    """
    sorts = f.sorts
    pending = [(b, _free_names(b) & set(sorts)) for b in f.assertions]
    ground = [b for b, names in pending if not names]
    pending = [(b, names) for b, names in pending if names]
    assigned: set[str] = set()
    order: list[str] = []
    checks: list[list[BoolTerm]] = []

    def score(name: str):
        closed = sum(1 for _, names in pending if name in names and names <= assigned | {name})
        return -closed, _domain_size(sorts[name], bounds)

    while len(order) < len(sorts):
        name = min((n for n, _ in f.decls if n not in assigned), key=score)
        assigned.add(name)
        order.append(name)
        checks.append([b for b, names in pending if names <= assigned])
        pending = [(b, names) for b, names in pending if not names <= assigned]
    return ground, order, checks


def _holds(b: BoolTerm, sigma: Interpretation) -> bool:
    try:
        return eval_bool(b, sigma)
    except EvaluationError as e:
        logger.debug(f"求值失敗: {e}")
        return False


def _search(f: Formula, bounds: BruteForceBounds, lengths: Sequence[int],
            budget: _Budget) -> Optional[Interpretation]:
    """
    深度優先列舉; 第一個 (依列舉順序) 陣列只取 lengths 中的長度。
    每個部分賦值花費一個節點預算。
    """
    ground, order, checks = _search_order(f, bounds)
    if not all(_holds(b, Interpretation()) for b in ground):
        return None
    sorts = f.sorts
    first_array = next((n for n in order if sorts[n] is Sort.ARRAY), None)
    ints: dict[str, int] = {}
    arrays: dict[str, tuple[int, ...]] = {}

    def extend(depth: int) -> Optional[Interpretation]:
        if depth == len(order):
            return Interpretation(dict(ints), dict(arrays))
        name = order[depth]
        target = arrays if sorts[name] is Sort.ARRAY else ints
        for value in _values(sorts[name], bounds, lengths if name == first_array else None):
            budget.spend()
            target[name] = value
            sigma = Interpretation(ints, arrays)
            if all(_holds(b, sigma) for b in checks[depth]):
                model = extend(depth + 1)
                if model is not None:
                    return model
        target.pop(name, None)
        return None

    return extend(0)


def brute_force_sat(f: Formula, bounds: BruteForceBounds = BruteForceBounds()) -> BruteForceResult:
    """
    在給定範圍內窮舉所有賦值，回傳第一個滿足的模型。
    UNSAT_WITHIN_BOUNDS 不代表公式不可滿足。
    """
    f = replace_wildcards(f)
    budget = _Budget(bounds.node_budget)
    first_lengths = list(range(bounds.max_len + 1)) if f.arrays() else [0]

    if bounds.jobs <= 1 or len(first_lengths) <= 1:
        for length in first_lengths:
            model = _search(f, bounds, [length], budget)
            if model is not None:
                return BruteForceResult(SAT, model)
        return BruteForceResult(UNSAT_WITHIN_BOUNDS)

    # 依第一個列舉的陣列的長度切分工作，最後依切分順序合併 (結果與單線程相同)
    tasks: queue.Queue = queue.Queue()
    for position, length in enumerate(first_lengths):
        tasks.put((position, length))
    found: dict[int, Optional[Interpretation]] = {}
    errors: list[BaseException] = []
    lock = threading.Lock()

    def worker():
        while True:
            try:
                position, length = tasks.get_nowait()
            except queue.Empty:
                return
            try:
                model = _search(f, bounds, [length], budget)
                with lock:
                    found[position] = model
            except BaseException as e:
                with lock:
                    errors.append(e)
            finally:
                tasks.task_done()

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(bounds.jobs)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    for position in range(len(first_lengths)):
        if found.get(position) is not None:
            return BruteForceResult(SAT, found[position])
    return BruteForceResult(UNSAT_WITHIN_BOUNDS)
