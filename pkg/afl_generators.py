#!/usr/bin/env python3
"""
公式產生器: 基準測試族、範例語料與隨機測試資料

- 基準族 (histogram / histogram_unsat / markdown / perf_bench_numa / SV-COMP 風格的驗證條件)
  以 AFL 文字產生，main.py bench --generate 會把它們寫成 .afl + .expect
- 隨機 fold 函數: guard 依 e 的互斥區間建立，因此永遠互斥；每個計數器只有一個增量方向，
  因此永遠滿足 SCC 單調
- 隨機公式與隨機 NFA 供性質測試使用，hypothesis 策略包在最下面
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from hypothesis import strategies as st

from afl_ast import (
    Branch, Break, Const, CtrAdd, FoldFunction, GuardAtom, Implicit, SetState, Skip, Var,
    counter,
)
from afl_parser import show_branch
from encoder import ModeGraph, NfaTransition

PIPE, NEWLINE, COLON, DASH, PLUS = 124, 10, 58, 45, 43


@dataclass(frozen=True)
class Instance:
    name: str
    text: str
    expected: str          # 'sat' | 'unsat'


def _decls(arrays=(), ints=()) -> list[str]:
    return [f"(declare-array {a})" for a in arrays] + [f"(declare-int {x})" for x in ints]


def _doc(lines: list[str]) -> str:
    return "\n".join(lines + ["(check-sat)"]) + "\n"


def _counting_fold(array: str, hit: str, miss: list[str]) -> str:
    branches = [f"(branch {hit} (++ (c 1)))"] + [f"(branch {g} skip)" for g in miss]
    return f"(fold {array} (vec 0 0) (branches {' '.join(branches)}))"


# ---------------------------------------------------------------------------
# 基準族
# ---------------------------------------------------------------------------

def _bin_guards(j: int, n: int) -> tuple[str, list[str]]:
    """第 j 個區間 (1 起算) 的 guard 與其他值的 guard；區間寬 10"""
    lo, hi = 10 * (j - 1), 10 * j
    if n == 1:
        return "true", []
    if j == 1:
        return f"(< e {hi})", [f"(>= e {hi})"]
    if j == n:
        return f"(>= e {lo})", [f"(< e {lo})"]
    return f"(and (>= e {lo}) (< e {hi}))", [f"(< e {lo})", f"(>= e {hi})"]


def histogram(n: int) -> str:
    """n 個區間各至少出現一次，且第一個區間的數量至少是最後一個的兩倍"""
    hs = [f"h{j}" for j in range(1, n + 1)]
    lines = _decls(["a"], hs)
    for j, h in enumerate(hs, start=1):
        hit, miss = _bin_guards(j, n)
        lines.append(f"(assert (= {_counting_fold('a', hit, miss)} (vec (len a) {h})))")
        lines.append(f"(assert (>= {h} 1))")
    lines.append(f"(assert (>= h1 (* 2 {hs[-1]})))")
    return _doc(lines)


def histogram_unsat(n: int) -> str:
    """同一個區間數兩次，卻要求兩個數量不同"""
    hs = [f"h{j}" for j in range(1, n + 1)]
    lines = _decls(["a"], hs + ["g1"])
    for j, h in enumerate(hs, start=1):
        hit, miss = _bin_guards(j, n)
        lines.append(f"(assert (= {_counting_fold('a', hit, miss)} (vec (len a) {h})))")
        lines.append(f"(assert (>= {h} 1))")
    hit, miss = _bin_guards(1, n)
    lines.append(f"(assert (= {_counting_fold('a', hit, miss)} (vec (len a) g1)))")
    lines.append("(assert (distinct h1 g1))")
    return _doc(lines)


def markdown(n: int) -> str:
    """
    表格標頭解析器的 SSA 註記，for 迴圈展開 n 次並要求至少 n 個欄位。
    字元常數: '\\n'=10 '|'=124 ':'=58 '-'=45 '+'=43
    """
    ints = ["i0", "p0", "i1", "p1", "p2", "i2", "i3", "e0", "e1", "c0"]
    body = [
        "(assert (and (= i0 0) (= p0 0)))",
        f"(assert (= (vec i1 p1) (fold a (vec i0 p0) (branches (branch (= e {PIPE}) (++ (c 1))) "
        f"(branch (and (distinct e {PIPE}) (distinct e {NEWLINE})) skip)))))",
        f"(assert (= (vec _ p2) (fold a (vec 0 p1) (branches (branch (and (= i 0) (= e {PIPE})) "
        f"(-- (c 1)))))))",
        "(assert (= i2 (+ i1 1)))",
        f"(assert (= i3 (fold a i2 (branches (branch (and (= i i2) (= e {PIPE})) skip)))))",
        "(assert (= e0 i3))",
        f"(assert (= e1 (fold a e0 (branches (branch (distinct e {NEWLINE}) skip)))))",
        "(assert (= c0 0))",
    ]
    cur_i, cur_c = "i3", "c0"
    for k in range(1, n + 1):
        d0, ia, da, ib, db, ic, dc, nxt, ck = (f"{v}_{k}" for v in
                                             ("d0", "ia", "da", "ib", "db", "ic", "dc", "in", "c"))
        ints += [d0, ia, da, ib, db, ic, dc, nxt, ck]
        body += [
            f"(assert (and (< {cur_c} p2) (< {cur_i} e1) (= {d0} 0)))",
            f"(assert (= (vec {ia} {da}) (fold a (vec {cur_i} {d0}) (branches "
            f"(branch (and (= i {cur_i}) (= e {COLON})) (++ (c 1)))))))",
            f"(assert (= (vec {ib} {db}) (fold a (vec {ia} {da}) (branches "
            f"(branch (and (< i e1) (= e {DASH})) (++ (c 1)))))))",
            f"(assert (= (vec {ic} {dc}) (fold a (vec {ib} {db}) (branches "
            f"(branch (and (= i {ib}) (= e {COLON})) (++ (c 1)))))))",
            f"(assert (or (>= {ic} e1) (= (select a {ic}) {PIPE}) (= (select a {ic}) {PLUS})))",
            f"(assert (and (>= {dc} 3) (= {nxt} (+ {ic} 1)) (= {ck} (+ {cur_c} 1))))",
        ]
        cur_i, cur_c = nxt, ck
    body += [f"(assert (>= {cur_c} p2))", f"(assert (>= {cur_c} {n}))"]
    return _doc(_decls(["a"], ints) + body)


def perf_bench_numa(n: int, size: int = 100) -> str:
    """n 個執行緒陣列 (長度 size)，每個恰好指派一個處理器；外層迴圈維護最小與最大值"""
    arrays = [f"t{j}" for j in range(1, n + 1)]
    ks = [f"k{j}" for j in range(1, n + 1)]
    mins = [f"mn{j}" for j in range(1, n + 1)]
    maxs = [f"mx{j}" for j in range(1, n + 1)]
    lines = _decls(arrays, ks + mins + maxs)
    for j, (t, k) in enumerate(zip(arrays, ks)):
        lines.append(f"(assert (= (len {t}) {size}))")
        lines.append(f"(assert (= {_counting_fold(t, '(= e 1)', ['(= e 0)'])} (vec (len {t}) {k})))")
        lines.append(f"(assert (= {k} 1))")
        if j == 0:
            lines.append(f"(assert (and (= {mins[0]} {k}) (= {maxs[0]} {k})))")
            continue
        mn, mx, pmn, pmx = mins[j], maxs[j], mins[j - 1], maxs[j - 1]
        lines.append(f"(assert (or (and (< {k} {pmn}) (= {mn} {k})) (and (>= {k} {pmn}) (= {mn} {pmn}))))")
        lines.append(f"(assert (or (and (> {k} {pmx}) (= {mx} {k})) (and (<= {k} {pmx}) (= {mx} {pmx}))))")
    lines.append(f"(assert (= {mins[-1]} {maxs[-1]}))")
    return _doc(lines)


# SV-COMP 風格的驗證條件: 程式安全 ⇔ 公式不可滿足
SVCOMP = {
    "svcomp_min_in_array": """\
; min 是陣列中的某個元素且不大於任何元素，卻還有元素比 min 小
(declare-array a)
(declare-int mn)
(declare-int k)
(declare-int c)
(assert (and (<= 0 k) (< k (len a)) (= (select a k) mn)))
(assert (= (fold a 0 (branches (branch (>= e mn) skip))) (len a)))
(assert (= (fold a (vec 0 0) (branches (branch (< e mn) (++ (c 1))) (branch (>= e mn) skip))) (vec (len a) c)))
(assert (> c 0))
(check-sat)
""",
    "svcomp_linear_search": """\
; 線性搜尋走完整個陣列 (沒找到 x)，但 x 出現過
(declare-array a)
(declare-int x)
(declare-int r)
(declare-int c)
(assert (= r (fold a 0 (branches (branch (distinct e x) skip)))))
(assert (= r (len a)))
(assert (= (fold a (vec 0 0) (branches (branch (= e x) (++ (c 1))) (branch (distinct e x) skip))) (vec (len a) c)))
(assert (> c 0))
(check-sat)
""",
    "svcomp_array_call3": """\
; b 是把 a 的正數格子 a[j] 改寫成非正數 v 的結果，正數個數卻沒有恰好少一
(declare-array a)
(declare-array b)
(declare-int j)
(declare-int v)
(declare-int pa)
(declare-int pb)
(assert (= b (store a j v)))
(assert (> (select a j) 0))
(assert (<= v 0))
(assert (= (fold a (vec 0 0) (branches (branch (> e 0) (++ (c 1))) (branch (<= e 0) skip))) (vec (len a) pa)))
(assert (= (fold b (vec 0 0) (branches (branch (> e 0) (++ (c 1))) (branch (<= e 0) skip))) (vec (len b) pb)))
(assert (distinct pb (- pa 1)))
(check-sat)
""",
    "svcomp_sentinel": """\
; 最後一格放了哨兵 x，不檢查邊界的搜尋卻跑出陣列
(declare-array a)
(declare-int x)
(declare-int r)
(declare-int c)
(assert (= (select a (- (len a) 1)) x))
(assert (= r (fold a 0 (branches (branch (distinct e x) skip)))))
(assert (= (fold a (vec 0 0) (branches (branch (= e x) (++ (c 1))) (branch (distinct e x) skip))) (vec (len a) c)))
(assert (>= c 1))
(assert (>= r (len a)))
(check-sat)
""",
    "svcomp_find": """\
; find 回傳的位置在範圍內，該位置卻不是 x
(declare-array a)
(declare-int x)
(declare-int r)
(assert (= r (fold a 0 (branches (branch (distinct e x) skip)))))
(assert (< r (len a)))
(assert (distinct (select a r) x))
(check-sat)
""",
    "svcomp_vararg": """\
; 參數串列以 0 結尾: 結尾之前不應該出現 0
(declare-array a)
(declare-int n)
(declare-int c)
(assert (= n (fold a 0 (branches (branch (distinct e 0) skip)))))
(assert (= (fold a (vec 0 0) (branches (branch (and (< i n) (= e 0)) (++ (c 1))) (branch (and (< i n) (distinct e 0)) skip) (branch (>= i n) skip))) (vec (len a) c)))
(assert (> c 0))
(check-sat)
""",
}


# ---------------------------------------------------------------------------
# 表達能力範例
# ---------------------------------------------------------------------------

EXPRESSIVENESS = {
    "boundedness": """\
; 所有元素都在 [l, u] 之內
(declare-array a)
(declare-int l)
(declare-int u)
(assert (= (fold a 0 (branches (branch (and (>= e l) (<= e u)) skip))) (len a)))
(assert (and (= l 1) (= u 2) (= (len a) 3)))
(check-sat)
""",
    "partitioning": """\
; p 之前的元素都不大於 a[p]，p 之後的元素都不小於 a[p]
(declare-array a)
(declare-int p)
(assert (and (<= 0 p) (< p (len a))))
(assert (= (fold a 0 (branches
  (branch (and (< i p) (<= e (select a p))) skip)
  (branch (and (>= i p) (>= e (select a p))) skip))) (len a)))
(assert (and (= (len a) 4) (= p 2) (distinct (select a 0) (select a 3))))
(check-sat)
""",
    "periodicity": """\
; 陣列形如 (01)*
(declare-array a)
(assert (= (fold a 0 (branches
  (branch (and (= s 0) (= e 0)) (set-s 1))
  (branch (and (= s 1) (= e 1)) (set-s 0)))) (len a)))
(assert (= (len a) 4))
(check-sat)
""",
    "pumping": """\
; 陣列形如 0^n 1^n
(declare-array a)
(declare-int n)
(assert (= (fold a (vec 0 0 0) (branches
  (branch (and (= s 0) (= e 0)) (++ (c 1)))
  (branch (and (= s 0) (= e 1)) (seq (++ (c 2)) (set-s 1)))
  (branch (and (= s 1) (= e 1)) (++ (c 2))))) (vec (len a) n n)))
(assert (> n 1))
(check-sat)
""",
    "equal_count": """\
; a 與 b 中大於 l 的元素個數相同
(declare-array a)
(declare-array b)
(declare-int l)
(declare-int n)
(assert (= (vec (len a) n) (fold a (vec 0 0) (branches (branch (> e l) (++ (c 1))) (branch (<= e l) skip)))))
(assert (= (vec (len b) n) (fold b (vec 0 0) (branches (branch (> e l) (++ (c 1))) (branch (<= e l) skip)))))
(assert (and (> n 1) (distinct (len a) (len b))))
(check-sat)
""",
    "histogram_bins": """\
; 小於 10 的元素個數至少是其他元素的兩倍
(declare-array a)
(declare-int h1)
(declare-int h2)
(assert (= (fold a (vec 0 0) (branches (branch (< e 10) (++ (c 1))) (branch (>= e 10) skip))) (vec (len a) h1)))
(assert (= (fold a (vec 0 0) (branches (branch (>= e 10) (++ (c 1))) (branch (< e 10) skip))) (vec (len a) h2)))
(assert (and (>= h1 (* 2 h2)) (> h2 0)))
(check-sat)
""",
    "format_fields": """\
; 前兩格是兩個欄位的長度，欄位之間以 0 分隔
(declare-array a)
(declare-int len1)
(declare-int len2)
(assert (and (= len1 (select a 0)) (= len2 (select a 1))))
(assert (= (fold a (vec 2 0 0) (branches
  (branch (and (= s 0) (distinct e 0)) (++ (c 1)))
  (branch (and (= s 0) (= e 0)) (set-s 1))
  (branch (and (= s 1) (distinct e 0)) (++ (c 2))))) (vec (len a) len1 len2)))
(assert (and (> len1 0) (> len2 0)))
(check-sat)
""",
}

UNBALANCED_CELLS = (1, 2, 7, 4, 1, 3, 6, 5)


def min_max_balance(rejected_cells: Optional[tuple[int, ...]] = None) -> str:
    """最小值與最大值出現次數相同；給定格子時把陣列固定成那個序列"""
    lines = _decls(["a"], ["mn", "mx", "i1", "i2", "j", "k"]) + [
        "(assert (and (<= 0 i1) (< i1 (len a)) (<= 0 i2) (< i2 (len a))))",
        "(assert (and (= (select a i1) mn) (= (select a i2) mx)))",
        "(assert (= (fold a (vec 0 0) (branches (branch (= e mn) (++ (c 1))) (branch (> e mn) skip))) (vec (len a) j)))",
        "(assert (= (fold a (vec 0 0) (branches (branch (= e mx) (++ (c 1))) (branch (< e mx) skip))) (vec (len a) k)))",
        "(assert (= j k))",
    ]
    if rejected_cells is not None:
        lines.append(f"(assert (= (len a) {len(rejected_cells)}))")
        lines += [f"(assert (= (select a {idx}) {v}))" for idx, v in enumerate(rejected_cells)]
    return _doc(lines)


def pumping(n: int) -> str:
    return EXPRESSIVENESS["pumping"].replace("(assert (> n 1))", f"(assert (= n {n}))")


def corpus_instances() -> list[Instance]:
    out = [Instance(name, text, "sat") for name, text in EXPRESSIVENESS.items()]
    out += [
        Instance("min_max_balance", min_max_balance(), "sat"),
        Instance("min_max_unbalanced", min_max_balance(UNBALANCED_CELLS), "unsat"),
        Instance("pumping_n3", pumping(3), "sat"),
        Instance("markdown_1", markdown(1), "sat"),
        Instance("histogram_4", histogram(4), "sat"),
        Instance("histogram_unsat_5", histogram_unsat(5), "unsat"),
    ]
    out += [Instance(name, text, "unsat") for name, text in SVCOMP.items()]
    return out


def family_instances(max_histogram: int = 8, numa: tuple[int, ...] = (2, 4)) -> list[Instance]:
    """bench --generate 寫出的參數化族"""
    out = [Instance(f"histogram_{n}", histogram(n), "sat") for n in range(2, max_histogram + 1)]
    out.append(Instance("histogram_unsat_5", histogram_unsat(5), "unsat"))
    out.append(Instance("markdown_1", markdown(1), "sat"))
    out += [Instance(f"perf_bench_numa_{n}", perf_bench_numa(n), "sat") for n in numa]
    out += [Instance(name, text, "unsat") for name, text in SVCOMP.items()]
    return out


# ---------------------------------------------------------------------------
# 隨機 fold 函數與公式
# ---------------------------------------------------------------------------

def _e_guards(rng: random.Random, branches: int, symbols: tuple[str, ...]) -> list[list[GuardAtom]]:
    """每個分支一個互斥的 e 條件: 以符號變數三分 (e<x, e=x, e>x) 或把 [-2, 2] 切成區間"""
    if symbols and branches <= 3 and rng.random() < 0.35:
        x = Var(rng.choice(symbols))
        ops = rng.sample(("<", "=", ">"), branches)
        return [[GuardAtom(Implicit("e"), op, x)] for op in ops]
    cuts = sorted(rng.sample(range(-2, 4), branches + 1))
    out = []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo == 1 and rng.random() < 0.5:
            out.append([GuardAtom(Implicit("e"), "=", Const(lo))])
        else:
            out.append([GuardAtom(Implicit("e"), ">", Const(lo - 1)), GuardAtom(Implicit("e"), "<", Const(hi))])
    return out


def random_fold_function(rng: random.Random, arity: int = 2, branches: int = 2,
                         states: int = 1, symbols: tuple[str, ...] = ()) -> FoldFunction:
    """
    e 的條件彼此互斥，其他 guard 原子只會讓 guard 更嚴格，所以分支仍然互斥。
    反轉模式下狀態只往前走 (set-s 的目標不小於目前狀態)，計數器可以在後面的狀態改變增減方向；
    每個 SCC 只有一個狀態，所以仍然滿足 SCC 單調。
    """
    reversing = states > 1 and rng.random() < 0.5
    signs = {k: rng.choice((1, -1)) for k in range(1, arity)}
    flips = {k: reversing and rng.random() < 0.7 for k in range(1, arity)}
    out = []
    for guard in _e_guards(rng, branches, symbols):
        q = rng.randrange(states)
        if states > 1:
            guard.append(GuardAtom(Implicit("s"), "=", Const(q)))
        if rng.random() < 0.3:
            rhs = Var(rng.choice(symbols)) if symbols and rng.random() < 0.5 else Const(rng.randint(0, 3))
            lhs = Implicit("i") if arity == 1 or rng.random() < 0.5 else counter(rng.randrange(1, arity))
            guard.append(GuardAtom(lhs, rng.choice(("<", ">", "=", "!=")), rhs))
        if rng.random() < 0.1:
            out.append(Branch(tuple(guard), (Break(),)))
            continue
        updates = []
        for k in range(1, arity):
            if rng.random() < 0.6:
                sign = -signs[k] if flips[k] and q > 0 else signs[k]
                updates.append(CtrAdd(k, sign * rng.choice((1, 2))))
        if states > 1 and rng.random() < 0.5:
            updates.append(SetState(rng.randrange(q, states) if reversing else rng.randrange(states)))
        out.append(Branch(tuple(guard), tuple(updates) or (Skip(),)))
    return FoldFunction(arity, tuple(out))


def show_function(fn: FoldFunction) -> str:
    return "(branches " + " ".join(show_branch(b) for b in fn.branches) + ")"


def random_formula(rng: random.Random, arrays: int = 2, folds_per_array: int = 2,
                   counters: int = 2, branches: int = 3, max_len: int = 3) -> str:
    """
    沒有額外整數變數的隨機公式 (只有一個符號變數 x)，讓窮舉求解器保持可行:
    fold 結果只和常數、陣列長度或另一個 fold 比較。
    """
    names = [f"a{j}" for j in range(rng.randint(1, arrays))]
    lines = _decls(names, ["x"])
    folds: list[tuple[str, int]] = []
    wildcard_used = False
    for a in names:
        for _ in range(rng.randint(1, folds_per_array)):
            arity = rng.randint(1, counters + 1)
            fn = random_fold_function(rng, arity, rng.randint(1, branches), rng.choice((1, 1, 2)), ("x",))
            start = rng.choice(("0", "0", "1", "x"))
            init = " ".join([start] + [str(rng.randint(-1, 1)) for _ in range(arity - 1)])
            folds.append((f"(fold {a} (vec {init}) {show_function(fn)})", arity))
    for idx, (fold, arity) in enumerate(folds):
        a = fold.split()[1]
        roll = rng.random()
        if roll < 0.4:
            expected = " ".join([f"(len {a})"] + [str(rng.randint(-2, 2)) for _ in range(arity - 1)])
            atom = f"(= {fold} (vec {expected}))"
        elif roll < 0.6 and not wildcard_used:
            # 萬用字元會變成窮舉時要列舉的新變數，每個公式最多一個
            wildcard_used = True
            atom = f"(= {fold} (vec _ {' '.join(str(rng.randint(-2, 2)) for _ in range(arity - 1))}))"
        elif roll < 0.8 and idx > 0 and folds[idx - 1][1] == arity:
            atom = f"(= {fold} {folds[idx - 1][0]})"
        else:
            atom = f"(= {fold} (vec {' '.join(str(rng.randint(-1, 3)) for _ in range(arity))}))"
        if rng.random() < 0.25:
            atom = f"(not {atom})"
        lines.append(f"(assert {atom})")
    extras = [f"(<= (len {names[0]}) {max_len})", "(and (>= x -2) (<= x 2))"]
    if rng.random() < 0.3:
        extras.append(f"(or (= (len {names[0]}) 0) (= (select {names[0]} 0) x))")
    lines += [f"(assert {e})" for e in extras]
    return _doc(lines)


def random_nfa(rng: random.Random, states: int = 5, labels: int = 3, transitions: int = 6) -> ModeGraph:
    n = rng.randint(1, states)
    qs = tuple(range(n))
    trans = tuple(NfaTransition(rng.randrange(n), rng.randrange(n), rng.randrange(labels))
                  for _ in range(rng.randint(0, transitions)))
    accepting = frozenset(q for q in qs if rng.random() < 0.5) or frozenset({rng.randrange(n)})
    return ModeGraph(qs, trans, 0, accepting)


# ---------------------------------------------------------------------------
# hypothesis 策略
# ---------------------------------------------------------------------------

@st.composite
def fold_cases(draw, max_cells: int = 5):
    """(fold 函數, 陣列, 初始向量, 符號值) 四元組"""
    rng = draw(st.randoms(use_true_random=False))
    arity = draw(st.integers(1, 3))
    fn = random_fold_function(rng, arity, draw(st.integers(1, 3)), draw(st.integers(1, 2)), ("x",))
    cells = draw(st.lists(st.integers(-2, 2), max_size=max_cells))
    start = draw(st.integers(-1, max_cells))
    init = (start,) + tuple(draw(st.integers(-2, 2)) for _ in range(arity - 1))
    x = draw(st.integers(-2, 3))
    return fn, tuple(cells), init, x


@st.composite
def formulas(draw, arrays: int = 2, max_len: int = 3):
    rng = draw(st.randoms(use_true_random=False))
    return random_formula(rng, arrays=arrays, max_len=max_len)


@st.composite
def nfas(draw, transitions: int = 6):
    rng = draw(st.randoms(use_true_random=False))
    return random_nfa(rng, transitions=transitions)
