"""Text syntax for STL formulas.

Grammar, loosest binding first::

    or     := and ('|' and)*
    and    := until ('&' until)*
    until  := unary ('U' '[' int ',' int ']' until)?      # right-associative
    unary  := '~' unary | 'F' interval unary | 'G' interval unary | atom
    atom   := 'T' | 'circle' args | 'box' args | '(' or ')'
    args   := '(' num ',' num [',' num] ',' num ')'       # x, y[, z], extent

Chains of ``&`` / ``|`` at one level become a single n-ary node; parenthesised
groups are kept as written so ``parse(unparse(x)) == x`` for every tree.
"""
from __future__ import annotations

import re

from .ast import (
    Always, And, Ap, Eventually, IntervalError, Not, Or, Polarity, Predicate,
    Shape, StlExpr, Top, Until,
)


class StlSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<sym>[()\[\],~&|!])
""", re.VERBOSE)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def _peek_is(self, value):
        return self.tok[1] == value and self.tok[0] != "num"

    def _expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind == "num":
            shown = text or "end of input"
            raise StlSyntaxError(f"expected {value!r}, found {shown!r}", pos)
        self.i += 1

    def parse(self) -> StlExpr:
        node = self.or_expr()
        if self.tok[0] != "eof":
            raise StlSyntaxError(f"unexpected token {self.tok[1]!r}", self.tok[2])
        return node

    def or_expr(self):
        parts = [self.and_expr()]
        while self._peek_is("|"):
            self.i += 1
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self):
        parts = [self.until_expr()]
        while self._peek_is("&"):
            self.i += 1
            parts.append(self.until_expr())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until_expr(self):
        left = self.unary()
        if self._peek_is("U"):
            self.i += 1
            a, b = self.interval()
            right = self.until_expr()
            return Until(a, b, left, right)
        return left

    def unary(self):
        kind, text, pos = self.tok
        if kind == "sym" and text in ("~", "!"):
            self.i += 1
            grouped = self._peek_is("(")
            child = self.unary()
            # ~pred folds into polarity; ~(pred) keeps an explicit Not node
            if isinstance(child, Ap) and not grouped:
                return Ap(child.pred.negated())
            return Not(child)
        if kind == "word" and text in ("F", "G"):
            self.i += 1
            a, b = self.interval()
            child = self.unary()
            return Eventually(a, b, child) if text == "F" else Always(a, b, child)
        return self.atom()

    def interval(self):
        start = self.tok[2]
        self._expect("[")
        a = self.integer()
        self._expect(",")
        b = self.integer()
        self._expect("]")
        if b < a:
            raise IntervalError(a, b, offset=start)
        return a, b

    def integer(self) -> int:
        kind, text, pos = self.tok
        if kind != "num" or not re.fullmatch(r"\d+", text):
            raise StlSyntaxError(f"expected a nonnegative integer time bound, found {text!r}", pos)
        self.i += 1
        return int(text)

    def number(self) -> float:
        kind, text, pos = self.tok
        if kind != "num":
            raise StlSyntaxError(f"expected a number, found {text!r}", pos)
        self.i += 1
        return float(text)

    def atom(self):
        kind, text, pos = self.tok
        if kind == "word" and text == "T":
            self.i += 1
            return Top()
        if kind == "word" and text in ("circle", "box"):
            self.i += 1
            self._expect("(")
            nums = [self.number()]
            while self._peek_is(","):
                self.i += 1
                nums.append(self.number())
            self._expect(")")
            if len(nums) not in (3, 4):
                raise StlSyntaxError(f"{text}() takes 3 or 4 numbers, got {len(nums)}", pos)
            *center, extent = nums
            if not extent > 0:
                raise StlSyntaxError(f"{text}() extent must be positive", pos)
            shape = Shape.CIRCLE if text == "circle" else Shape.BOX
            return Ap(Predicate(shape, tuple(center), extent, Polarity.REACH))
        if kind == "sym" and text == "(":
            self.i += 1
            node = self.or_expr()
            self._expect(")")
            return node
        shown = text or "end of input"
        raise StlSyntaxError(f"unexpected token {shown!r}", pos)


def parse(text: str) -> StlExpr:
    """Parse formula text into a syntax tree.

    Raises ``StlSyntaxError`` (with ``.offset``) on malformed input and
    ``IntervalError`` when an interval has ``a > b``.
    """
    return _Parser(text).parse()


def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _pred_text(p: Predicate) -> str:
    name = "circle" if p.shape is Shape.CIRCLE else "box"
    coords = p.center if p.center[2] != 0.0 else p.center[:2]
    body = f"{name}({','.join(_num(c) for c in coords)},{_num(p.extent)})"
    return ("~" + body) if p.polarity is Polarity.AVOID else body


# binding strength: higher binds tighter
_PREC = {Or: 1, And: 2, Until: 3}


def _prec(node) -> int:
    return _PREC.get(type(node), 4)


def unparse(node: StlExpr) -> str:
    """Render a tree as text that parses back to the identical tree."""
    if isinstance(node, Top):
        return "T"
    if isinstance(node, Ap):
        return _pred_text(node.pred)
    if isinstance(node, Not):
        inner = unparse(node.child)
        # ~ directly on a predicate would fold into its polarity
        if _prec(node.child) < 4 or isinstance(node.child, (Ap, Not)):
            inner = f"({inner})"
        return "~" + inner
    if isinstance(node, (Eventually, Always)):
        op = "F" if isinstance(node, Eventually) else "G"
        inner = unparse(node.child)
        if _prec(node.child) < 4:
            inner = f"({inner})"
        return f"{op}[{node.a},{node.b}] {inner}"
    if isinstance(node, Until):
        left = unparse(node.left)
        if _prec(node.left) <= 3:
            left = f"({left})"
        right = unparse(node.right)
        if _prec(node.right) < 3:
            right = f"({right})"
        return f"{left} U[{node.a},{node.b}] {right}"
    sep = " & " if isinstance(node, And) else " | "
    mine = _prec(node)
    parts = []
    for c in node.children:
        s = unparse(c)
        if _prec(c) <= mine:
            s = f"({s})"
        parts.append(s)
    return sep.join(parts)
