#!/usr/bin/env python3
"""
線性整數算術 (QF_LIA) 公式

ψ 的資料結構、SMT-LIB2 文字輸出與讀回、以及在模型下的直接求值。
建構函數 (conj/disj/add/...) 會做少量化簡，讓輸出保持精簡且確定。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from afl_ast import AflError
from sexpr import Atom, ParseError, SExpr, SList, read_sexprs

logger = logging.getLogger(__name__)


class BackendError(AflError):
    pass


class MissingVariable(BackendError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"模型中缺少變數 {name}")


# ---------------------------------------------------------------------------
# 整數運算式
# ---------------------------------------------------------------------------

class IntExpr:
    pass


@dataclass(frozen=True)
class LVar(IntExpr):
    name: str


@dataclass(frozen=True)
class LNum(IntExpr):
    value: int


@dataclass(frozen=True)
class LSum(IntExpr):
    args: tuple[IntExpr, ...]


@dataclass(frozen=True)
class LScale(IntExpr):
    factor: int
    arg: IntExpr


# ---------------------------------------------------------------------------
# 布林運算式
# ---------------------------------------------------------------------------

class BoolExpr:
    pass


@dataclass(frozen=True)
class LBool(BoolExpr):
    value: bool


@dataclass(frozen=True)
class LCmp(BoolExpr):
    op: str            # '=', '<', '<=', '>', '>='
    lhs: IntExpr
    rhs: IntExpr


@dataclass(frozen=True)
class LNot(BoolExpr):
    arg: BoolExpr


@dataclass(frozen=True)
class LAnd(BoolExpr):
    args: tuple[BoolExpr, ...]


@dataclass(frozen=True)
class LOr(BoolExpr):
    args: tuple[BoolExpr, ...]


TRUE = LBool(True)
FALSE = LBool(False)
OPS = ("=", "<", "<=", ">", ">=")

Operand = Union[IntExpr, int, str]


def term(x: Operand) -> IntExpr:
    if isinstance(x, IntExpr):
        return x
    if isinstance(x, bool):
        raise TypeError("布林值不是整數項")
    if isinstance(x, int):
        return LNum(x)
    return LVar(x)


def add(*xs: Operand) -> IntExpr:
    parts: list[IntExpr] = []
    const = 0
    for x in xs:
        x = term(x)
        if isinstance(x, LNum):
            const += x.value
        elif isinstance(x, LSum):
            for y in x.args:
                if isinstance(y, LNum):
                    const += y.value
                else:
                    parts.append(y)
        else:
            parts.append(x)
    if const != 0 or not parts:
        parts.append(LNum(const))
    return parts[0] if len(parts) == 1 else LSum(tuple(parts))


def scale(factor: int, x: Operand) -> IntExpr:
    x = term(x)
    if factor == 0:
        return LNum(0)
    if factor == 1:
        return x
    if isinstance(x, LNum):
        return LNum(factor * x.value)
    return LScale(factor, x)


def linear(pairs: Iterable[tuple[int, Operand]], const: int = 0) -> IntExpr:
    return add(*(scale(c, x) for c, x in pairs if c != 0), const)


def cmp(op: str, a: Operand, b: Operand) -> BoolExpr:
    a, b = term(a), term(b)
    if isinstance(a, LNum) and isinstance(b, LNum):
        return LBool(_compare(op, a.value, b.value))
    return LCmp(op, a, b)


def eq(a, b): return cmp("=", a, b)
def lt(a, b): return cmp("<", a, b)
def le(a, b): return cmp("<=", a, b)
def gt(a, b): return cmp(">", a, b)
def ge(a, b): return cmp(">=", a, b)


def ne(a, b) -> BoolExpr:
    return neg(eq(a, b))


def neg(b: BoolExpr) -> BoolExpr:
    if isinstance(b, LBool):
        return LBool(not b.value)
    if isinstance(b, LNot):
        return b.arg
    return LNot(b)


def conj(*bs: BoolExpr) -> BoolExpr:
    args: list[BoolExpr] = []
    for b in bs:
        if b == TRUE:
            continue
        if b == FALSE:
            return FALSE
        if isinstance(b, LAnd):
            args.extend(b.args)
        else:
            args.append(b)
    if not args:
        return TRUE
    return args[0] if len(args) == 1 else LAnd(tuple(args))


def disj(*bs: BoolExpr) -> BoolExpr:
    args: list[BoolExpr] = []
    for b in bs:
        if b == FALSE:
            continue
        if b == TRUE:
            return TRUE
        if isinstance(b, LOr):
            args.extend(b.args)
        else:
            args.append(b)
    if not args:
        return FALSE
    return args[0] if len(args) == 1 else LOr(tuple(args))


def implies(a: BoolExpr, b: BoolExpr) -> BoolExpr:
    return disj(neg(a), b)


def iff(a: BoolExpr, b: BoolExpr) -> BoolExpr:
    return conj(implies(a, b), implies(b, a))


def _compare(op: str, a: int, b: int) -> bool:
    if op == "=":
        return a == b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"未知的比較運算子: {op}")


# ---------------------------------------------------------------------------
# 公式
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LiaFormula:
    declarations: tuple[str, ...]
    assertions: tuple[BoolExpr, ...]

    def size(self) -> int:
        """|ψ|: 斷言樹中的節點數"""
        return sum(node_count(a) for a in self.assertions)


class LiaBuilder:
    """累積宣告與斷言；宣告依第一次出現的順序"""

    def __init__(self):
        self.declarations: dict[str, None] = {}
        self.assertions: list[BoolExpr] = []

    def declare(self, name: str) -> str:
        self.declarations.setdefault(name, None)
        return name

    def add(self, *bs: BoolExpr):
        for b in bs:
            if b != TRUE:
                self.assertions.append(b)

    def extend(self, other: "LiaFormula"):
        for name in other.declarations:
            self.declare(name)
        self.add(*other.assertions)

    def build(self) -> LiaFormula:
        used = set()
        for a in self.assertions:
            used |= variables(a)
        for name in sorted(used - set(self.declarations)):
            self.declarations[name] = None
        return LiaFormula(tuple(self.declarations), tuple(self.assertions))


def node_count(x) -> int:
    if isinstance(x, (LVar, LNum, LBool)):
        return 1
    if isinstance(x, (LSum, LAnd, LOr)):
        return 1 + sum(node_count(a) for a in x.args)
    if isinstance(x, LScale):
        return 1 + node_count(x.arg)
    if isinstance(x, LCmp):
        return 1 + node_count(x.lhs) + node_count(x.rhs)
    if isinstance(x, LNot):
        return 1 + node_count(x.arg)
    raise TypeError(f"未知的 LIA 節點: {x!r}")


def variables(x) -> set[str]:
    if isinstance(x, LVar):
        return {x.name}
    if isinstance(x, (LNum, LBool)):
        return set()
    if isinstance(x, (LSum, LAnd, LOr)):
        out: set[str] = set()
        for a in x.args:
            out |= variables(a)
        return out
    if isinstance(x, (LScale, LNot)):
        return variables(x.arg)
    if isinstance(x, LCmp):
        return variables(x.lhs) | variables(x.rhs)
    raise TypeError(f"未知的 LIA 節點: {x!r}")


# ---------------------------------------------------------------------------
# 求值
# ---------------------------------------------------------------------------

def eval_int_expr(x: IntExpr, model: Mapping[str, int]) -> int:
    if isinstance(x, LNum):
        return x.value
    if isinstance(x, LVar):
        if x.name not in model:
            raise MissingVariable(x.name)
        return model[x.name]
    if isinstance(x, LSum):
        return sum(eval_int_expr(a, model) for a in x.args)
    if isinstance(x, LScale):
        return x.factor * eval_int_expr(x.arg, model)
    raise TypeError(f"未知的整數運算式: {x!r}")


def eval_bool_expr(b: BoolExpr, model: Mapping[str, int]) -> bool:
    if isinstance(b, LBool):
        return b.value
    if isinstance(b, LCmp):
        return _compare(b.op, eval_int_expr(b.lhs, model), eval_int_expr(b.rhs, model))
    if isinstance(b, LNot):
        return not eval_bool_expr(b.arg, model)
    if isinstance(b, LAnd):
        results = [eval_bool_expr(a, model) for a in b.args]
        return all(results)
    if isinstance(b, LOr):
        results = [eval_bool_expr(a, model) for a in b.args]
        return any(results)
    raise TypeError(f"未知的布林運算式: {b!r}")


def eval_lia(psi: LiaFormula, model: Mapping[str, int]) -> bool:
    """在模型下直接求值 ψ；模型必須涵蓋所有宣告的變數"""
    for name in psi.declarations:
        if name not in model:
            raise MissingVariable(name)
    return all(eval_bool_expr(a, model) for a in psi.assertions)


# ---------------------------------------------------------------------------
# SMT-LIB2
# ---------------------------------------------------------------------------

def _num(n: int) -> str:
    return f"(- {-n})" if n < 0 else str(n)


def smt_int(x: IntExpr) -> str:
    if isinstance(x, LNum):
        return _num(x.value)
    if isinstance(x, LVar):
        return x.name
    if isinstance(x, LSum):
        return "(+ " + " ".join(smt_int(a) for a in x.args) + ")"
    if isinstance(x, LScale):
        return f"(* {_num(x.factor)} {smt_int(x.arg)})"
    raise TypeError(f"未知的整數運算式: {x!r}")


def smt_bool(b: BoolExpr) -> str:
    if isinstance(b, LBool):
        return "true" if b.value else "false"
    if isinstance(b, LCmp):
        return f"({b.op} {smt_int(b.lhs)} {smt_int(b.rhs)})"
    if isinstance(b, LNot):
        return f"(not {smt_bool(b.arg)})"
    if isinstance(b, LAnd):
        return "(and " + " ".join(smt_bool(a) for a in b.args) + ")"
    if isinstance(b, LOr):
        return "(or " + " ".join(smt_bool(a) for a in b.args) + ")"
    raise TypeError(f"未知的布林運算式: {b!r}")


def to_smtlib(psi: LiaFormula) -> str:
    """完整的 SMT-LIB2 腳本 (同一個輸入一定產生相同的文字)"""
    lines = ["(set-logic QF_LIA)", "(set-option :produce-models true)"]
    lines.extend(f"(declare-const {name} Int)" for name in psi.declarations)
    lines.extend(f"(assert {smt_bool(a)})" for a in psi.assertions)
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def _read_int(node: SExpr) -> IntExpr:
    if isinstance(node, Atom):
        if node.kind == "int":
            return LNum(node.value)
        if node.kind == "symbol":
            return LVar(node.text)
        raise ParseError("預期整數運算式", node.span)
    head = node.head()
    args = node.items[1:]
    if head == "-" and len(args) == 1:
        inner = _read_int(args[0])
        if isinstance(inner, LNum):
            return LNum(-inner.value)
        return LScale(-1, inner)
    if head == "-" and len(args) == 2:
        return LSum((_read_int(args[0]), LScale(-1, _read_int(args[1]))))
    if head == "+":
        return LSum(tuple(_read_int(a) for a in args))
    if head == "*" and len(args) == 2:
        factor = _read_int(args[0])
        if not isinstance(factor, LNum):
            raise ParseError("乘法只允許常數倍", node.span)
        return LScale(factor.value, _read_int(args[1]))
    raise ParseError(f"未知的整數運算子 '{head}'", node.span)


def _read_bool(node: SExpr) -> BoolExpr:
    if isinstance(node, Atom):
        if node.is_symbol("true"):
            return TRUE
        if node.is_symbol("false"):
            return FALSE
        raise ParseError("預期布林運算式", node.span)
    head = node.head()
    args = node.items[1:]
    if head in OPS and len(args) == 2:
        return LCmp(head, _read_int(args[0]), _read_int(args[1]))
    if head == "not" and len(args) == 1:
        return LNot(_read_bool(args[0]))
    if head == "and":
        return LAnd(tuple(_read_bool(a) for a in args))
    if head == "or":
        return LOr(tuple(_read_bool(a) for a in args))
    raise ParseError(f"未知的布林運算子 '{head}'", node.span)


def from_smtlib(text: str) -> LiaFormula:
    declarations: list[str] = []
    assertions: list[BoolExpr] = []
    for node in read_sexprs(text):
        if not isinstance(node, SList):
            raise ParseError("預期命令", node.span)
        head = node.head()
        if head == "declare-const":
            declarations.append(node[1].text)
        elif head == "declare-fun" and len(node) == 4:
            declarations.append(node[1].text)
        elif head == "assert":
            assertions.append(_read_bool(node[1]))
        elif head in ("set-logic", "set-option", "set-info", "check-sat", "get-model", "exit"):
            continue
        else:
            raise ParseError(f"未知的命令 '{head}'", node.span)
    return LiaFormula(tuple(declarations), tuple(assertions))
