#!/usr/bin/env python3
"""
S-expression 讀取器

AFL 檔案 (.afl)、模型檔 (.afl-model) 與 SMT 求解器的輸出都用同一個讀取器。
每個節點都帶有 SourceSpan，讓錯誤訊息可以指出 檔案:行:欄。
SourceSpan 的 start/end 是 UTF-8 位元組位移，行與欄則以字元計。
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from afl_ast import AflError, SourceSpan, WellFormednessError


class ParseError(AflError):
    """語法錯誤，附帶來源位置"""

    def __init__(self, message: str, span: Optional[SourceSpan] = None, kind: str = "syntax",
                 problems: Sequence[WellFormednessError] = ()):
        self.message = message
        self.span = span
        self.kind = kind
        # kind == "wellformed" 時列出所有良構性問題
        self.problems = tuple(problems)
        where = f" (位置 {span})" if span is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class Atom:
    text: str
    kind: str                       # 'symbol' | 'int' | 'string'
    span: SourceSpan = field(compare=False)

    @property
    def value(self) -> int:
        return int(self.text)

    def is_symbol(self, *names: str) -> bool:
        return self.kind == "symbol" and (not names or self.text in names)


@dataclass(frozen=True)
class SList:
    items: tuple["SExpr", ...]
    span: SourceSpan = field(compare=False)

    def head(self) -> Optional[str]:
        if self.items and isinstance(self.items[0], Atom) and self.items[0].kind == "symbol":
            return self.items[0].text
        return None

    def __len__(self):
        return len(self.items)

    def __getitem__(self, idx):
        return self.items[idx]


SExpr = Union[Atom, SList]

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>;[^\n]*)
  | (?P<open>\()
  | (?P<close>\))
  | (?P<string>"(?:[^"]|"")*")
  | (?P<quoted>\|[^|]*\|)
  | (?P<int>-?\d+(?![^\s();]))
  | (?P<symbol>[^\s()";|]+)
""", re.VERBOSE)


class _Reader:
    def __init__(self, text: str):
        self.text = text
        # 每行起始位移 (字元)，用來計算行號與欄號
        self.line_starts = [0] + [m.end() for m in re.finditer("\n", text)]
        # 字元位移 -> UTF-8 位元組位移
        self.byte_offsets = None if text.isascii() else list(
            itertools.accumulate((len(ch.encode("utf-8")) for ch in text), initial=0))

    def byte_offset(self, pos: int) -> int:
        return pos if self.byte_offsets is None else self.byte_offsets[pos]

    def span(self, start: int, end: int) -> SourceSpan:
        lo, hi = 0, len(self.line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_starts[mid] <= start:
                lo = mid
            else:
                hi = mid - 1
        return SourceSpan(self.byte_offset(start), self.byte_offset(end), lo + 1, start - self.line_starts[lo] + 1)

    def tokens(self):
        pos = 0
        while pos < len(self.text):
            m = _TOKEN.match(self.text, pos)
            if m is None:
                raise ParseError(f"無法辨識的字元 {self.text[pos]!r}",
                                 self.span(pos, pos + 1), kind="lexical")
            kind = m.lastgroup
            if kind not in ("ws", "comment"):
                yield kind, m.group(), m.start(), m.end()
            pos = m.end()

    def read_all(self) -> list[SExpr]:
        stack: list[tuple[int, list[SExpr]]] = []
        top: list[SExpr] = []
        for kind, text, start, end in self.tokens():
            if kind == "open":
                stack.append((start, []))
            elif kind == "close":
                if not stack:
                    raise ParseError("多餘的右括號 ')'", self.span(start, end))
                open_at, items = stack.pop()
                node = SList(tuple(items), self.span(open_at, end))
                (stack[-1][1] if stack else top).append(node)
            else:
                if kind == "string":
                    atom = Atom(text[1:-1].replace('""', '"'), "string", self.span(start, end))
                elif kind == "quoted":
                    atom = Atom(text[1:-1], "symbol", self.span(start, end))
                else:
                    atom = Atom(text, kind, self.span(start, end))
                (stack[-1][1] if stack else top).append(atom)
        if stack:
            open_at = stack[-1][0]
            raise ParseError("缺少右括號 ')'", self.span(open_at, len(self.text)))
        return top


def read_sexprs(text: str) -> list[SExpr]:
    """讀取文字中所有最外層的 s-expression"""
    return _Reader(text).read_all()


def to_text(node: SExpr) -> str:
    if isinstance(node, Atom):
        if node.kind == "string":
            return '"' + node.text.replace('"', '""') + '"'
        return node.text
    return "(" + " ".join(to_text(item) for item in node.items) + ")"
