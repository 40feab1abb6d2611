"""Recursive-descent parser for the C subset produced by :func:`parloop.loop_model.render`.

``parse_source(render(loop)) == loop`` holds for every valid loop. A few
harmless variants are also accepted (``float``/``long`` types, ``<=`` loop
conditions, comments) so hand-written kernels in the same subset can be
labeled.
"""
from __future__ import annotations

import re

from .errors import ParseError
from .loop_model import (
    CMP_OPS,
    FLOAT_KIND,
    INT_KIND,
    PRECEDENCE,
    SIZE_NAME,
    ArrayDecl,
    ArrayRef,
    Assign,
    BinOp,
    Bound,
    Const,
    Expr,
    If,
    LocalDecl,
    LoopNest,
    ScalarDecl,
    Var,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\+\+|--|\+=|-=|==|!=|<=|>=|[-+*/<>=;,()\[\]{}])
    """,
    re.VERBOSE,
)
_COMMENT = re.compile(r"//[^\n]*|/\*.*?\*/", re.DOTALL)
_TYPES = {"int": INT_KIND, "long": INT_KIND, "double": FLOAT_KIND, "float": FLOAT_KIND}


def tokenize(text: str) -> list[tuple[str, str]]:
    text = _COMMENT.sub(" ", text)
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0

    # -- token helpers
    def peek(self, k: int = 0):
        j = self.pos + k
        return self.toks[j] if j < len(self.toks) else ("eof", "")

    def next(self):
        tok = self.peek()
        if tok[0] == "eof":
            raise ParseError("unexpected end of input")
        self.pos += 1
        return tok

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value and self.peek()[0] in ("op", "ident"):
            self.pos += 1
            return True
        return False

    def expect(self, value: str) -> None:
        tok = self.next()
        if tok[1] != value:
            raise ParseError(f"expected {value!r}, got {tok[1]!r}")

    def ident(self) -> str:
        kind, val = self.next()
        if kind != "ident":
            raise ParseError(f"expected identifier, got {val!r}")
        return val

    def type_name(self) -> str:
        name = self.ident()
        if name not in _TYPES:
            raise ParseError(f"unsupported type {name!r}")
        return _TYPES[name]

    # -- grammar
    def program(self) -> LoopNest:
        self.expect("void")
        self.ident()
        self.expect("(")
        self.expect("int")
        if self.ident() != SIZE_NAME:
            raise ParseError(f"first parameter must be 'int {SIZE_NAME}'")
        arrays = []
        while self.accept(","):
            kind = self.type_name()
            name = self.ident()
            self.expect("[")
            size = self.bound()
            self.expect("]")
            arrays.append(ArrayDecl(name, kind, size))
        self.expect(")")
        self.expect("{")
        scalars = []
        while self.peek()[1] in _TYPES:
            kind = self.type_name()
            name = self.ident()
            self.expect("=")
            value = self.constant()
            if kind == FLOAT_KIND:
                value = float(value)
            elif isinstance(value, float):
                raise ParseError(f"int scalar {name!r} initialised with a float")
            self.expect(";")
            scalars.append(ScalarDecl(name, kind, value))
        loop = self.for_loop(tuple(arrays), tuple(scalars))
        self.expect("}")
        if self.peek()[0] != "eof":
            raise ParseError(f"trailing input at {self.peek()[1]!r}")
        return loop

    def for_loop(self, arrays, scalars) -> LoopNest:
        self.expect("for")
        self.expect("(")
        self.accept("int")
        var = self.ident()
        self.expect("=")
        lower = self.bound()
        self.expect(";")
        if self.ident() != var:
            raise ParseError("loop condition must test the loop variable")
        cmp = self.next()[1]
        upper = self.bound()
        self.expect(";")
        if self.ident() != var:
            raise ParseError("loop increment must update the loop variable")
        inc = self.next()[1]
        if inc == "++":
            step = 1
        elif inc == "--":
            step = -1
        elif inc in ("+=", "-="):
            tok = self.next()
            if tok[0] != "int":
                raise ParseError("loop step must be an integer constant")
            step = int(tok[1]) if inc == "+=" else -int(tok[1])
        else:
            raise ParseError(f"unsupported loop increment {inc!r}")
        if cmp == "<=":
            upper = Bound(upper.coef, upper.const + 1)
        elif cmp == ">=":
            upper = Bound(upper.coef, upper.const - 1)
        elif cmp not in ("<", ">"):
            raise ParseError(f"unsupported loop condition {cmp!r}")
        if (cmp in ("<", "<=")) != (step > 0):
            raise ParseError("loop condition direction does not match the step sign")
        self.expect(")")
        self.expect("{")
        locals_ = []
        while self.peek()[1] in _TYPES:
            kind = self.type_name()
            name = self.ident()
            self.expect("=")
            locals_.append(LocalDecl(name, kind, self.expr()))
            self.expect(";")
        body = self.block_rest()
        return LoopNest(arrays, scalars, tuple(locals_), var, lower, upper, step, body)

    def block_rest(self) -> tuple:
        stmts = []
        while not self.accept("}"):
            stmts.append(self.statement())
        return tuple(stmts)

    def statement(self):
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect("{")
            then = self.block_rest()
            orelse: tuple = ()
            if self.accept("else"):
                self.expect("{")
                orelse = self.block_rest()
            return If(cond, then, orelse)
        target = self.primary()
        if not isinstance(target, (Var, ArrayRef)):
            raise ParseError("assignment target is not an lvalue")
        self.expect("=")
        value = self.expr()
        self.expect(";")
        return Assign(target, value)

    def expr(self, min_prec: int = 1) -> Expr:
        left = self.primary()
        while True:
            kind, op = self.peek()
            if kind != "op" or op not in PRECEDENCE or PRECEDENCE[op] < min_prec:
                return left
            self.pos += 1
            right = self.expr(PRECEDENCE[op] + 1)
            left = BinOp(op, left, right)

    def primary(self) -> Expr:
        kind, val = self.peek()
        if val == "(" and kind == "op":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if val == "-" and kind == "op":
            self.pos += 1
            nk, nv = self.next()
            if nk == "int":
                return Const(-int(nv))
            if nk == "float":
                return Const(-float(nv))
            raise ParseError("unary minus is only supported on numeric literals")
        if kind in ("int", "float"):
            return Const(self.constant())
        name = self.ident()
        if self.accept("["):
            index = self.expr()
            self.expect("]")
            return ArrayRef(name, index)
        return Var(name)

    def constant(self):
        neg = self.accept("-")
        kind, val = self.next()
        if kind == "int":
            v = int(val)
        elif kind == "float":
            v = float(val)
        else:
            raise ParseError(f"expected a numeric constant, got {val!r}")
        return -v if neg else v

    def bound(self) -> Bound:
        return affine_in_size(self.expr())


def affine_in_size(e: Expr) -> Bound:
    """Fold an integer expression over ``n`` into ``coef * n + const``."""
    if isinstance(e, Const) and isinstance(e.value, int):
        return Bound(0, e.value)
    if isinstance(e, Var) and e.name == SIZE_NAME:
        return Bound(1, 0)
    if isinstance(e, BinOp) and e.op in ("+", "-", "*"):
        a, b = affine_in_size(e.left), affine_in_size(e.right)
        if e.op == "+":
            return Bound(a.coef + b.coef, a.const + b.const)
        if e.op == "-":
            return Bound(a.coef - b.coef, a.const - b.const)
        if a.coef == 0:
            return Bound(a.const * b.coef, a.const * b.const)
        if b.coef == 0:
            return Bound(b.const * a.coef, b.const * a.const)
    raise ParseError("bound must be an affine integer expression in n")


def parse_source(text: str) -> LoopNest:
    """Parse a single-kernel source into a :class:`LoopNest` (not validated)."""
    p = _Parser(text)
    return p.program()


__all__ = ["parse_source", "tokenize", "affine_in_size", "CMP_OPS"]
