#!/usr/bin/env python3
"""
AFL 文字格式的解析與輸出

格式 (SMT-LIB2 風格的前綴表示法):
    (declare-array a)
    (declare-int x)
    (assert B)
    (check-sat) / (get-model)   ; 接受但忽略

項:
    (select a T) (store a T T) (len a) (vec T ...) _
    (fold a V (branches (branch GRD UPD) ...))
guard 原子:
    (= e T) (< i T) (>= (c 1) T) (= s 3) ...，以 (and ...) 串接，true 代表空 guard
更新:
    (inc (c 1) n) (set-s n) skip break (++ (c 1)) (-- (c 1)) (-= (c 1) n)
    多個更新以 (seq UPD ...) 串接
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Callable, Optional

from afl_ast import (
    Add, And, ArrayEq, ArrayTerm, ArrayVar, BoolConst, BoolTerm, Branch, Break,
    Const, CtrAdd, CtrDec, CtrInc, CtrSub, Fold, FoldFunction, Formula, GuardAtom,
    Implicit, Implies, IntEq, IntGe, IntGt, IntLe, IntLt, IntNe, IntTerm, Len, Neg,
    Not, Or, Read, Scale, SetState, Skip, Sort, SourceSpan, Sub, UpdateAtom, Var, Vec, VecEq,
    VectorTerm, Wildcard, Write, validate,
)
from sexpr import Atom, ParseError, SExpr, SList, read_sexprs

logger = logging.getLogger(__name__)

FORBIDDEN = {"forall", "exists", "concat"}
NAME = re.compile(r"[A-Za-z][A-Za-z0-9_!]*")
IGNORED_COMMANDS = {"check-sat", "get-model", "set-logic", "set-option", "set-info", "exit"}
GUARD_RELATIONS = {"=": "=", "distinct": "!=", "!=": "!=", "<": "<", ">": ">",
                   "<=": "<=", ">=": ">="}


class _FormulaParser:
    def __init__(self, sorts: dict[str, Sort]):
        self.sorts = sorts

    # --- 輔助 -------------------------------------------------------------

    def fail(self, message: str, node: SExpr, kind: str = "syntax"):
        raise ParseError(message, node.span, kind=kind)

    def check_forbidden(self, node: SExpr):
        if isinstance(node, SList) and node.head() in FORBIDDEN:
            self.fail(f"不支援的構造 '{node.head()}' (不可判定的擴充)", node, kind="forbidden")

    def symbol(self, node: SExpr, what: str) -> str:
        if not isinstance(node, Atom) or node.kind != "symbol":
            self.fail(f"預期{what}名稱", node)
        return node.text

    def integer(self, node: SExpr) -> int:
        if not isinstance(node, Atom) or node.kind != "int":
            self.fail("預期整數常數", node)
        return node.value

    def arity(self, node: SList, *counts: int):
        if len(node) - 1 not in counts:
            expected = " 或 ".join(str(c) for c in counts)
            self.fail(f"'{node.head()}' 需要 {expected} 個參數，實際為 {len(node) - 1}", node)

    def array_name(self, node: SExpr) -> str:
        name = self.symbol(node, "陣列")
        sort = self.sorts.get(name)
        if sort is None:
            self.fail(f"未宣告的識別字 '{name}'", node, kind="undeclared")
        if sort is not Sort.ARRAY:
            self.fail(f"'{name}' 不是陣列", node, kind="sort")
        return name

    # --- 整數項 -----------------------------------------------------------

    def int_term(self, node: SExpr) -> IntTerm:
        self.check_forbidden(node)
        if isinstance(node, Atom):
            if node.kind == "int":
                return Const(node.value, span=node.span)
            if node.is_symbol("_"):
                return Wildcard(span=node.span)
            name = self.symbol(node, "整數變數")
            sort = self.sorts.get(name)
            if sort is None:
                self.fail(f"未宣告的識別字 '{name}'", node, kind="undeclared")
            if sort is not Sort.INT:
                self.fail(f"'{name}' 不是整數變數", node, kind="sort")
            return Var(name, span=node.span)
        head = node.head()
        args = node.items[1:]
        if head == "+":
            if not args:
                self.fail("'+' 至少需要一個參數", node)
            terms = [self.int_term(a) for a in args]
            result = terms[-1]
            for t in reversed(terms[:-1]):
                result = Add(t, result, span=node.span)
            return result
        if head == "-":
            self.arity(node, 1, 2)
            if len(args) == 1:
                return Neg(self.int_term(args[0]), span=node.span)
            return Sub(self.int_term(args[0]), self.int_term(args[1]), span=node.span)
        if head == "*":
            self.arity(node, 2)
            if isinstance(args[0], Atom) and args[0].kind == "int":
                return Scale(args[0].value, self.int_term(args[1]), span=node.span)
            if isinstance(args[1], Atom) and args[1].kind == "int":
                return Scale(args[1].value, self.int_term(args[0]), span=node.span)
            self.fail("乘法只允許整數常數倍 (* n T)", node)
        if head == "select":
            self.arity(node, 2)
            return Read(self.array_name(args[0]), self.int_term(args[1]), span=node.span)
        if head == "len":
            self.arity(node, 1)
            return Len(self.array_name(args[0]), span=node.span)
        self.fail(f"預期整數項，得到 '{head}'", node)

    # --- 陣列項 -----------------------------------------------------------

    def is_array_term(self, node: SExpr) -> bool:
        if isinstance(node, Atom):
            return node.kind == "symbol" and self.sorts.get(node.text) is Sort.ARRAY
        return node.head() == "store"

    def array_term(self, node: SExpr) -> ArrayTerm:
        self.check_forbidden(node)
        if isinstance(node, Atom):
            return ArrayVar(self.array_name(node), span=node.span)
        if node.head() == "store":
            self.arity(node, 3)
            return Write(self.array_name(node[1]), self.int_term(node[2]),
                         self.int_term(node[3]), span=node.span)
        self.fail("預期陣列項", node, kind="sort")

    # --- 向量項 -----------------------------------------------------------

    def is_vector_term(self, node: SExpr) -> bool:
        return isinstance(node, SList) and node.head() in ("vec", "fold")

    def vector_term(self, node: SExpr) -> VectorTerm:
        self.check_forbidden(node)
        if isinstance(node, SList) and node.head() == "vec":
            if len(node) < 2:
                self.fail("'vec' 至少需要一個分量", node)
            return Vec(tuple(self.int_term(a) for a in node.items[1:]), span=node.span)
        if isinstance(node, SList) and node.head() == "fold":
            self.arity(node, 3)
            array = self.array_name(node[1])
            init = self.vector_term(node[2])
            fn = self.fold_function(node[3], init.arity)
            return Fold(array, init, fn, span=node.span)
        # 元數 1 時可以省略 vec
        return Vec((self.int_term(node),), span=node.span)

    def fold_function(self, node: SExpr, arity: int) -> FoldFunction:
        if not isinstance(node, SList) or node.head() != "branches":
            self.fail("預期 (branches ...)", node)
        branches = []
        for item in node.items[1:]:
            if not isinstance(item, SList) or item.head() != "branch":
                self.fail("預期 (branch GRD UPD)", item)
            self.arity(item, 2)
            branches.append(Branch(self.guard(item[1]), self.updates(item[2]), span=item.span))
        return FoldFunction(arity, tuple(branches), span=node.span)

    def guard(self, node: SExpr) -> tuple[GuardAtom, ...]:
        if isinstance(node, Atom) and node.is_symbol("true"):
            return ()
        if isinstance(node, SList) and node.head() == "and":
            return tuple(self.guard_atom(a) for a in node.items[1:])
        return (self.guard_atom(node),)

    def implicit(self, node: SExpr) -> Implicit:
        if isinstance(node, Atom) and node.is_symbol("e", "i", "s"):
            return Implicit(node.text, span=node.span)
        if isinstance(node, SList) and node.head() == "c":
            self.arity(node, 1)
            return Implicit("c", self.integer(node[1]), span=node.span)
        self.fail("guard 左側必須是 e、i、s 或 (c k)", node)

    def guard_atom(self, node: SExpr) -> GuardAtom:
        if not isinstance(node, SList) or node.head() not in GUARD_RELATIONS:
            self.fail("預期 guard 原子，例如 (= e T)", node)
        self.arity(node, 2)
        lhs = self.implicit(node[1])
        if lhs.kind == "s":
            rhs = Const(self.integer(node[2]), span=node[2].span)
        else:
            rhs = self.int_term(node[2])
        return GuardAtom(lhs, GUARD_RELATIONS[node.head()], rhs, span=node.span)

    def counter_ref(self, node: SExpr) -> int:
        if not isinstance(node, SList) or node.head() != "c":
            self.fail("預期計數器 (c k)", node)
        self.arity(node, 1)
        return self.integer(node[1])

    def updates(self, node: SExpr) -> tuple[UpdateAtom, ...]:
        if isinstance(node, SList) and node.head() == "seq":
            result: list[UpdateAtom] = []
            for item in node.items[1:]:
                result.extend(self.updates(item))
            return tuple(result)
        return (self.update(node),)

    def update(self, node: SExpr) -> UpdateAtom:
        if isinstance(node, Atom):
            if node.is_symbol("skip"):
                return Skip(span=node.span)
            if node.is_symbol("break"):
                return Break(span=node.span)
            self.fail(f"未知的更新 '{node.text}'", node)
        head = node.head()
        if head == "inc":
            self.arity(node, 2)
            return CtrAdd(self.counter_ref(node[1]), self.integer(node[2]), span=node.span)
        if head == "set-s":
            self.arity(node, 1)
            return SetState(self.integer(node[1]), span=node.span)
        if head == "++":
            self.arity(node, 1)
            return CtrInc(self.counter_ref(node[1]), span=node.span)
        if head == "--":
            self.arity(node, 1)
            return CtrDec(self.counter_ref(node[1]), span=node.span)
        if head == "-=":
            self.arity(node, 2)
            return CtrSub(self.counter_ref(node[1]), self.integer(node[2]), span=node.span)
        self.fail(f"未知的更新 '{head}'", node)

    # --- 布林項 -----------------------------------------------------------

    def bool_term(self, node: SExpr) -> BoolTerm:
        self.check_forbidden(node)
        if isinstance(node, Atom):
            if node.is_symbol("true"):
                return BoolConst(True, span=node.span)
            if node.is_symbol("false"):
                return BoolConst(False, span=node.span)
            self.fail("預期布林項", node)
        head = node.head()
        args = node.items[1:]
        if head == "not":
            self.arity(node, 1)
            return Not(self.bool_term(args[0]), span=node.span)
        if head in ("and", "or"):
            if not args:
                self.fail(f"'{head}' 至少需要一個參數", node)
            terms = [self.bool_term(a) for a in args]
            cls: Callable = And if head == "and" else Or
            result = terms[-1]
            for t in reversed(terms[:-1]):
                result = cls(t, result, span=node.span)
            return result
        if head == "=>":
            self.arity(node, 2)
            return Implies(self.bool_term(args[0]), self.bool_term(args[1]), span=node.span)
        if head == "=":
            self.arity(node, 2)
            left, right = args
            if self.is_vector_term(left) or self.is_vector_term(right):
                return VecEq(self.vector_term(left), self.vector_term(right), span=node.span)
            if self.is_array_term(left) or self.is_array_term(right):
                return ArrayEq(self.array_term(left), self.array_term(right), span=node.span)
            return IntEq(self.int_term(left), self.int_term(right), span=node.span)
        relations = {"<": IntLt, "<=": IntLe, ">": IntGt, ">=": IntGe, "distinct": IntNe}
        if head in relations:
            self.arity(node, 2)
            return relations[head](self.int_term(args[0]), self.int_term(args[1]), span=node.span)
        self.fail(f"預期布林項，得到 '{head}'", node)


def _declarations(nodes: list[SExpr]) -> tuple[tuple[str, Sort], ...]:
    decls: list[tuple[str, Sort]] = []
    seen: set[str] = set()
    for node in nodes:
        if not isinstance(node, SList) or node.head() not in ("declare-array", "declare-int"):
            continue
        if len(node) != 2 or not isinstance(node[1], Atom) or node[1].kind != "symbol":
            raise ParseError(f"'{node.head()}' 需要一個名稱", node.span)
        name = node[1].text
        if name in seen:
            raise ParseError(f"重複宣告 '{name}'", node[1].span)
        if not NAME.fullmatch(name):
            raise ParseError(f"無效的名稱 '{name}'", node[1].span, kind="lexical")
        seen.add(name)
        decls.append((name, Sort.ARRAY if node.head() == "declare-array" else Sort.INT))
    return tuple(decls)


def parse(text: str) -> Formula:
    """解析 AFL 文字，回傳已通過語法良構性檢查的 Formula"""
    nodes = read_sexprs(text)
    decls = _declarations(nodes)
    parser = _FormulaParser(dict(decls))
    assertions: list[BoolTerm] = []
    for node in nodes:
        if not isinstance(node, SList) or node.head() is None:
            raise ParseError("預期命令，例如 (assert ...)", node.span)
        head = node.head()
        parser.check_forbidden(node)
        if head == "assert":
            parser.arity(node, 1)
            assertions.append(parser.bool_term(node[1]))
        elif head in ("declare-array", "declare-int") or head in IGNORED_COMMANDS:
            continue
        else:
            raise ParseError(f"未知的命令 '{head}'", node.span)
    formula = Formula(decls, tuple(assertions))
    problems = validate(formula)
    if problems:
        span = problems[0].span or SourceSpan(0, len(text.encode("utf-8")), 1, 1)
        raise ParseError("; ".join(p.describe() for p in problems), span, kind="wellformed",
                         problems=problems)
    logger.debug(f"解析完成: {len(decls)} 個宣告, {len(assertions)} 個斷言")
    return formula


def parse_file(path) -> Formula:
    return parse(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# 輸出
# ---------------------------------------------------------------------------

def show_int(t: IntTerm) -> str:
    if isinstance(t, Const):
        return str(t.value)
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Wildcard):
        return "_"
    if isinstance(t, Add):
        return f"(+ {show_int(t.left)} {show_int(t.right)})"
    if isinstance(t, Sub):
        return f"(- {show_int(t.left)} {show_int(t.right)})"
    if isinstance(t, Neg):
        return f"(- {show_int(t.arg)})"
    if isinstance(t, Scale):
        return f"(* {t.factor} {show_int(t.arg)})"
    if isinstance(t, Read):
        return f"(select {t.array} {show_int(t.index)})"
    if isinstance(t, Len):
        return f"(len {t.array})"
    raise TypeError(f"未知的整數項: {t!r}")


def show_array(a: ArrayTerm) -> str:
    if isinstance(a, ArrayVar):
        return a.name
    return f"(store {a.base} {show_int(a.index)} {show_int(a.value)})"


def show_implicit(x: Implicit) -> str:
    return f"(c {x.k})" if x.kind == "c" else x.kind


def show_guard_atom(a: GuardAtom) -> str:
    op = "distinct" if a.cmp == "!=" else a.cmp
    return f"({op} {show_implicit(a.lhs)} {show_int(a.rhs)})"


def show_update(u: UpdateAtom) -> str:
    if isinstance(u, Skip):
        return "skip"
    if isinstance(u, Break):
        return "break"
    if isinstance(u, CtrAdd):
        return f"(inc (c {u.k}) {u.n})"
    if isinstance(u, SetState):
        return f"(set-s {u.n})"
    if isinstance(u, CtrInc):
        return f"(++ (c {u.k}))"
    if isinstance(u, CtrDec):
        return f"(-- (c {u.k}))"
    if isinstance(u, CtrSub):
        return f"(-= (c {u.k}) {u.n})"
    raise TypeError(f"未知的更新: {u!r}")


def show_branch(b: Branch) -> str:
    if not b.guard:
        guard = "true"
    elif len(b.guard) == 1:
        guard = show_guard_atom(b.guard[0])
    else:
        guard = "(and " + " ".join(show_guard_atom(a) for a in b.guard) + ")"
    if len(b.updates) == 1:
        updates = show_update(b.updates[0])
    else:
        updates = "(seq" + "".join(" " + show_update(u) for u in b.updates) + ")"
    return f"(branch {guard} {updates})"


def show_vector(v: VectorTerm) -> str:
    if isinstance(v, Vec):
        return "(vec " + " ".join(show_int(t) for t in v.items) + ")"
    branches = " ".join(show_branch(b) for b in v.fn.branches)
    return f"(fold {v.array} {show_vector(v.init)} (branches {branches}))"


def show_bool(b: BoolTerm) -> str:
    if isinstance(b, BoolConst):
        return "true" if b.value else "false"
    if isinstance(b, Not):
        return f"(not {show_bool(b.arg)})"
    binary = {And: "and", Or: "or", Implies: "=>"}
    if type(b) in binary:
        return f"({binary[type(b)]} {show_bool(b.left)} {show_bool(b.right)})"
    relations = {IntEq: "=", IntLt: "<", IntLe: "<=", IntGt: ">", IntGe: ">=", IntNe: "distinct"}
    if type(b) in relations:
        return f"({relations[type(b)]} {show_int(b.left)} {show_int(b.right)})"
    if isinstance(b, ArrayEq):
        return f"(= {show_array(b.left)} {show_array(b.right)})"
    if isinstance(b, VecEq):
        return f"(= {show_vector(b.left)} {show_vector(b.right)})"
    raise TypeError(f"未知的布林項: {b!r}")


def print_formula(f: Formula) -> str:
    lines = []
    for name, sort in f.decls:
        lines.append(f"(declare-{'array' if sort is Sort.ARRAY else 'int'} {name})")
    for a in f.assertions:
        lines.append(f"(assert {show_bool(a)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def render_error(error: ParseError, path: Optional[str] = None) -> str:
    """把 ParseError 轉成 檔案:行:欄 形式的診斷訊息；良構性問題每個一行"""
    location = path or "<input>"
    if error.problems:
        return "\n".join(f"{location}:{p.span or error.span}: {p.describe()}" for p in error.problems)
    if error.span is not None:
        location += f":{error.span.line}:{error.span.column}"
    return f"{location}: {error.message}"
