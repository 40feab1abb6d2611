"""Restricted C-like loop IR: validation, rendering and deterministic interpretation.

A :class:`LoopNest` describes one function holding a single ``for`` loop over
arrays of ``int`` (64-bit, wrapping) or ``double`` elements. Array sizes and
loop bounds are affine in the problem size ``n`` so the same program can be
run at several sizes by the dependence oracle.

Interpretation compiles the IR to a small Python function once per loop and
caches it; that keeps the brute-force oracle cheap enough to run thousands of
permutations per loop.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .errors import TrapError

INT_KIND = "int"
FLOAT_KIND = "float"
KINDS = (INT_KIND, FLOAT_KIND)
C_TYPES = {INT_KIND: "int", FLOAT_KIND: "double"}

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")
PRECEDENCE = {"==": 1, "!=": 1, "<": 2, "<=": 2, ">": 2, ">=": 2, "+": 3, "-": 3, "*": 4, "/": 4}

SIZE_NAME = "n"
DEFAULT_BOUNDS = (4, 8, 16)
DEFAULT_MAX_DEPTH = 3
INDENT = "    "


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Const:
    value: Union[int, float]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class ArrayRef:
    array: str
    index: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, ArrayRef, BinOp]


# ----------------------------------------------------------------- statements


@dataclass(frozen=True)
class Assign:
    target: Union[Var, ArrayRef]
    value: Expr


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple = ()
    orelse: tuple = ()


Statement = Union[Assign, If]


# --------------------------------------------------------------- declarations


@dataclass(frozen=True)
class Bound:
    """The affine size expression ``coef * n + const``."""

    coef: int = 0
    const: int = 0

    def at(self, n: int) -> int:
        return self.coef * n + self.const


@dataclass(frozen=True)
class ArrayDecl:
    name: str
    kind: str
    size: Bound = Bound(1, 0)


@dataclass(frozen=True)
class ScalarDecl:
    name: str
    kind: str
    init: Union[int, float] = 0


@dataclass(frozen=True)
class LocalDecl:
    """A per-iteration private scalar, declared and initialised at the top of the body."""

    name: str
    kind: str
    init: Expr = Const(0)


@dataclass(frozen=True)
class LoopNest:
    arrays: tuple = ()
    scalars: tuple = ()
    locals: tuple = ()
    loop_var: str = "i"
    lower: Bound = Bound(0, 0)
    upper: Bound = Bound(1, 0)
    step: int = 1
    body: tuple = ()

    def iterations(self, n: int) -> list[int]:
        if self.step == 0:
            return []
        return list(range(self.lower.at(n), self.upper.at(n), self.step))

    @property
    def array_names(self) -> dict[str, ArrayDecl]:
        return {a.name: a for a in self.arrays}

    @property
    def scalar_names(self) -> dict[str, ScalarDecl]:
        return {s.name: s for s in self.scalars}

    @property
    def local_names(self) -> dict[str, LocalDecl]:
        return {loc.name: loc for loc in self.locals}


@dataclass
class MemoryState:
    """Concrete memory for one problem size ``n``."""

    n: int
    arrays: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)

    def copy(self) -> "MemoryState":
        return MemoryState(self.n, {k: list(v) for k, v in self.arrays.items()}, dict(self.scalars))

    def key(self) -> tuple:
        """Bit-exact identity key (distinguishes -0.0 from 0.0)."""

        def enc(v):
            return ("f", v.hex()) if isinstance(v, float) else ("i", v)

        return (
            self.n,
            tuple(sorted((k, tuple(enc(x) for x in v)) for k, v in self.arrays.items())),
            tuple(sorted((k, enc(v)) for k, v in self.scalars.items())),
        )

    def __eq__(self, other):
        return isinstance(other, MemoryState) and self.key() == other.key()


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


OK = ValidationResult(True)


# ------------------------------------------------------------------- walkers


def iter_exprs(expr: Expr) -> Iterable[Expr]:
    """Pre-order walk over an expression tree."""
    yield expr
    if isinstance(expr, ArrayRef):
        yield from iter_exprs(expr.index)
    elif isinstance(expr, BinOp):
        yield from iter_exprs(expr.left)
        yield from iter_exprs(expr.right)


def iter_statements(body: Sequence[Statement], depth: int = 1) -> Iterable[tuple[Statement, int]]:
    for stmt in body:
        yield stmt, depth
        if isinstance(stmt, If):
            yield from iter_statements(stmt.then, depth + 1)
            yield from iter_statements(stmt.orelse, depth + 1)


def written_names(loop: LoopNest) -> set[str]:
    out = set()
    for stmt, _ in iter_statements(loop.body):
        if isinstance(stmt, Assign):
            t = stmt.target
            out.add(t.name if isinstance(t, Var) else t.array)
    return out


def read_only_scalars(loop: LoopNest) -> dict[str, Union[int, float]]:
    written = written_names(loop)
    return {s.name: s.init for s in loop.scalars if s.name not in written}


def expr_kind(expr: Expr, kinds: dict[str, str]) -> str:
    """Static C type of an expression: ``float`` if any operand is floating."""
    if isinstance(expr, Const):
        return FLOAT_KIND if isinstance(expr.value, float) else INT_KIND
    if isinstance(expr, Var):
        return kinds.get(expr.name, INT_KIND)
    if isinstance(expr, ArrayRef):
        return kinds.get(expr.array, INT_KIND)
    if expr.op in CMP_OPS:
        return INT_KIND
    lk, rk = expr_kind(expr.left, kinds), expr_kind(expr.right, kinds)
    return FLOAT_KIND if FLOAT_KIND in (lk, rk) else INT_KIND


def kind_table(loop: LoopNest) -> dict[str, str]:
    kinds = {loop.loop_var: INT_KIND, SIZE_NAME: INT_KIND}
    for decl in (*loop.arrays, *loop.scalars, *loop.locals):
        kinds[decl.name] = decl.kind
    return kinds


def eval_index(expr: Expr, env: dict[str, int]) -> int:
    """Evaluate a memory-free integer expression; ``env`` binds the allowed names."""
    if isinstance(expr, Const):
        return int(expr.value)
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, BinOp):
        a, b = eval_index(expr.left, env), eval_index(expr.right, env)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            return _c_div(a, b)
    raise KeyError(expr)


def _c_div(a: int, b: int) -> int:
    if b == 0:
        raise TrapError("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _is_identifier(name: str) -> bool:
    return name.isidentifier() and name.isascii() and name not in _C_KEYWORDS


_C_KEYWORDS = frozenset(
    "auto break case char const continue default do double else enum extern float for goto if "
    "int long register return short signed sizeof static struct switch typedef union unsigned "
    "void volatile while kernel".split()
)


# ------------------------------------------------------------------ validate


def validate(
    loop: LoopNest,
    bounds: Sequence[int] = DEFAULT_BOUNDS,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> ValidationResult:
    """Check the IR invariants and prove every access in-bounds for each ``n`` in ``bounds``.

    Returns the first violation in declaration order, then statement order.
    """
    seen: set[str] = set()
    reserved = {SIZE_NAME, loop.loop_var}
    if not _is_identifier(loop.loop_var) or loop.loop_var == SIZE_NAME:
        return ValidationResult(False, f"invalid loop variable {loop.loop_var!r}")

    for decl in loop.arrays:
        if not _is_identifier(decl.name) or decl.name in seen or decl.name in reserved:
            return ValidationResult(False, f"bad or duplicate declaration {decl.name!r}")
        if decl.kind not in KINDS:
            return ValidationResult(False, f"array {decl.name}: unknown kind {decl.kind!r}")
        for n in bounds:
            if decl.size.at(n) < 1:
                return ValidationResult(False, f"array {decl.name}: declared length < 1 at n={n}")
        seen.add(decl.name)
    for decl in loop.scalars:
        if not _is_identifier(decl.name) or decl.name in seen or decl.name in reserved:
            return ValidationResult(False, f"bad or duplicate declaration {decl.name!r}")
        if decl.kind not in KINDS:
            return ValidationResult(False, f"scalar {decl.name}: unknown kind {decl.kind!r}")
        if decl.kind == INT_KIND and not isinstance(decl.init, int):
            return ValidationResult(False, f"scalar {decl.name}: int scalar with non-integer initial value")
        if isinstance(decl.init, float) and not math.isfinite(decl.init):
            return ValidationResult(False, f"scalar {decl.name}: non-finite initial value")
        seen.add(decl.name)

    if loop.step == 0:
        return ValidationResult(False, "loop step is zero")
    for n in bounds:
        if not loop.iterations(n):
            return ValidationResult(False, f"empty iteration space at n={n}")

    arrays = loop.array_names
    scalars = loop.scalar_names
    ro_scalars = {k: v for k, v in read_only_scalars(loop).items() if scalars[k].kind == INT_KIND}
    kinds = kind_table(loop)
    ctx = _Checker(loop, arrays, scalars, ro_scalars, kinds, bounds)

    local_seen: set[str] = set()
    for decl in loop.locals:
        if not _is_identifier(decl.name) or decl.name in seen or decl.name in reserved:
            return ValidationResult(False, f"bad or duplicate declaration {decl.name!r}")
        if decl.kind not in KINDS:
            return ValidationResult(False, f"local {decl.name}: unknown kind {decl.kind!r}")
        msg = ctx.check_expr(decl.init, local_seen)
        if msg:
            return ValidationResult(False, f"local {decl.name}: {msg}")
        seen.add(decl.name)
        local_seen.add(decl.name)

    for stmt, depth in iter_statements(loop.body):
        if depth > max_depth:
            return ValidationResult(False, f"nesting depth {depth} exceeds maximum {max_depth}")
        if isinstance(stmt, Assign):
            t = stmt.target
            if isinstance(t, Var):
                if t.name == loop.loop_var:
                    return ValidationResult(False, "loop variable written")
                if t.name not in scalars and t.name not in local_seen:
                    return ValidationResult(False, f"assignment to undeclared scalar {t.name!r}")
            elif isinstance(t, ArrayRef):
                msg = ctx.check_expr(t, local_seen)
                if msg:
                    return ValidationResult(False, msg)
            else:
                return ValidationResult(False, "assignment target is not an lvalue")
            msg = ctx.check_expr(stmt.value, local_seen)
            if msg:
                return ValidationResult(False, msg)
        elif isinstance(stmt, If):
            msg = ctx.check_expr(stmt.cond, local_seen)
            if msg:
                return ValidationResult(False, msg)
        else:
            return ValidationResult(False, f"unknown statement {type(stmt).__name__}")
    return OK


class _Checker:
    def __init__(self, loop, arrays, scalars, ro_scalars, kinds, bounds):
        self.loop = loop
        self.arrays = arrays
        self.scalars = scalars
        self.ro_scalars = ro_scalars
        self.kinds = kinds
        self.bounds = bounds

    def check_expr(self, expr: Expr, locals_: set[str]) -> str:
        for node in iter_exprs(expr):
            if isinstance(node, Const):
                if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                    return f"bad constant {node.value!r}"
                if isinstance(node.value, float) and not math.isfinite(node.value):
                    return "non-finite constant"
            elif isinstance(node, Var):
                name = node.name
                if name in self.arrays:
                    return f"array {name!r} used without index"
                if name not in self.scalars and name not in locals_ and name != self.loop.loop_var:
                    return f"undeclared identifier {name!r}"
            elif isinstance(node, ArrayRef):
                if node.array not in self.arrays:
                    return f"undeclared array {node.array!r}"
                msg = self.check_index(node)
                if msg:
                    return msg
            elif isinstance(node, BinOp):
                if node.op not in PRECEDENCE:
                    return f"unknown operator {node.op!r}"
                if node.op == "/":
                    d = node.right
                    if not isinstance(d, Const) or d.value == 0:
                        return "division by a non-constant or zero divisor"
            else:
                return f"unknown expression {type(node).__name__}"
        return ""

    def check_index(self, ref: ArrayRef) -> str:
        allowed = {self.loop.loop_var, *self.ro_scalars}
        for node in iter_exprs(ref.index):
            if isinstance(node, ArrayRef):
                return f"{ref.array}: indirect indexing is not supported"
            if isinstance(node, Var) and node.name not in allowed:
                return f"{ref.array}: index depends on mutable name {node.name!r}"
            if isinstance(node, BinOp) and node.op in CMP_OPS:
                return f"{ref.array}: comparison inside index"
            if isinstance(node, Const) and isinstance(node.value, float):
                return f"{ref.array}: floating index"
        size = self.arrays[ref.array].size
        env = dict(self.ro_scalars)
        for n in self.bounds:
            length = size.at(n)
            for i in self.loop.iterations(n):
                env[self.loop.loop_var] = i
                try:
                    k = eval_index(ref.index, env)
                except TrapError:
                    return f"{ref.array}: index traps at {self.loop.loop_var}={i}, n={n}"
                if not 0 <= k < length:
                    return f"{ref.array}: out-of-bounds index {k} at {self.loop.loop_var}={i}, n={n}"
        return ""


# -------------------------------------------------------------------- render


def render_bound(b: Bound) -> str:
    if b.coef == 0:
        return str(b.const)
    head = SIZE_NAME if b.coef == 1 else f"{b.coef} * {SIZE_NAME}"
    if b.const > 0:
        return f"{head} + {b.const}"
    if b.const < 0:
        return f"{head} - {-b.const}"
    return head


def render_const(v: Union[int, float]) -> str:
    return repr(float(v)) if isinstance(v, float) else str(int(v))


def render_expr(expr: Expr) -> str:
    if isinstance(expr, Const):
        return render_const(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, ArrayRef):
        return f"{expr.array}[{render_expr(expr.index)}]"
    p = PRECEDENCE[expr.op]
    left = render_expr(expr.left)
    right = render_expr(expr.right)
    if isinstance(expr.left, BinOp) and PRECEDENCE[expr.left.op] < p:
        left = f"({left})"
    if isinstance(expr.right, BinOp) and PRECEDENCE[expr.right.op] <= p:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


def _render_body(body: Sequence[Statement], depth: int, out: list[str]) -> None:
    pad = INDENT * depth
    for stmt in body:
        if isinstance(stmt, Assign):
            out.append(f"{pad}{render_expr(stmt.target)} = {render_expr(stmt.value)};")
        else:
            out.append(f"{pad}if ({render_expr(stmt.cond)}) {{")
            _render_body(stmt.then, depth + 1, out)
            if stmt.orelse:
                out.append(f"{pad}}} else {{")
                _render_body(stmt.orelse, depth + 1, out)
            out.append(f"{pad}}}")


def _render_header(loop: LoopNest) -> str:
    v = loop.loop_var
    cmp = "<" if loop.step > 0 else ">"
    if loop.step == 1:
        inc = f"{v}++"
    elif loop.step == -1:
        inc = f"{v}--"
    elif loop.step > 0:
        inc = f"{v} += {loop.step}"
    else:
        inc = f"{v} -= {-loop.step}"
    return f"for (int {v} = {render_bound(loop.lower)}; {v} {cmp} {render_bound(loop.upper)}; {inc}) {{"


def render(loop: LoopNest) -> str:
    """Deterministic C source for ``loop`` (UTF-8, ``\\n`` newlines, 4-space indent)."""
    params = [f"int {SIZE_NAME}"]
    params += [f"{C_TYPES[a.kind]} {a.name}[{render_bound(a.size)}]" for a in loop.arrays]
    out = [f"void kernel({', '.join(params)}) {{"]
    for s in loop.scalars:
        init = render_const(float(s.init) if s.kind == FLOAT_KIND else s.init)
        out.append(f"{INDENT}{C_TYPES[s.kind]} {s.name} = {init};")
    out.append(INDENT + _render_header(loop))
    for loc in loop.locals:
        out.append(f"{INDENT * 2}{C_TYPES[loc.kind]} {loc.name} = {render_expr(loc.init)};")
    _render_body(loop.body, 2, out)
    out.append(INDENT + "}")
    out.append("}")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------- interpret

_M = 1 << 63
_MASK = (1 << 64) - 1


def wrap64(x: int) -> int:
    """Two's-complement wraparound to signed 64-bit."""
    if -_M <= x < _M:
        return x
    return ((x + _M) & _MASK) - _M


def _idiv(a: int, b: int) -> int:
    return wrap64(_c_div(a, b))


def _f2i(v: float) -> int:
    if not math.isfinite(v) or not -_M <= v < _M:
        raise TrapError(f"float value {v!r} not representable as int")
    return int(v)


def _fchk(v: float) -> float:
    if not math.isfinite(v):
        raise TrapError("non-finite floating point value")
    return v


def _ix(k: int, length: int) -> int:
    if 0 <= k < length:
        return k
    raise TrapError(f"out-of-bounds index {k} (length {length})")


_RUNTIME = {"_w": wrap64, "_idiv": _idiv, "_f2i": _f2i, "_fchk": _fchk, "_ix": _ix, "float": float}


class _Codegen:
    def __init__(self, loop: LoopNest, traced: bool):
        self.loop = loop
        self.traced = traced
        self.kinds = kind_table(loop)
        self.outer = set(loop.scalar_names)
        self.pyname = {}
        for decl in (*loop.arrays, *loop.scalars, *loop.locals):
            self.pyname[decl.name] = f"v_{decl.name}"
        self.pyname[loop.loop_var] = "v__i"
        self.lines: list[str] = []

    def expr(self, e: Expr) -> tuple[str, str]:
        if isinstance(e, Const):
            return repr(e.value), expr_kind(e, self.kinds)
        if isinstance(e, Var):
            if self.traced and e.name in self.outer:
                return f"(_R.add(({e.name!r},)) or {self.pyname[e.name]})", self.kinds[e.name]
            return self.pyname[e.name], self.kinds[e.name]
        if isinstance(e, ArrayRef):
            idx = self.index(e)
            if self.traced:
                return f"_rd({self.pyname[e.array]}, {e.array!r}, {idx})", self.kinds[e.array]
            return f"{self.pyname[e.array]}[{idx}]", self.kinds[e.array]
        lc, lk = self.expr(e.left)
        rc, rk = self.expr(e.right)
        mixed = lk != rk
        if mixed:
            lc = f"float({lc})" if lk == INT_KIND else lc
            rc = f"float({rc})" if rk == INT_KIND else rc
        kind = FLOAT_KIND if FLOAT_KIND in (lk, rk) else INT_KIND
        if e.op in CMP_OPS:
            return f"(1 if {lc} {e.op} {rc} else 0)", INT_KIND
        if kind == FLOAT_KIND:
            return f"({lc} {e.op} {rc})", FLOAT_KIND
        if e.op == "/":
            return f"_idiv({lc}, {rc})", INT_KIND
        return f"_w({lc} {e.op} {rc})", INT_KIND

    def index(self, ref: ArrayRef) -> str:
        code, _ = self.expr(ref.index)
        return f"_ix({code}, len({self.pyname[ref.array]}))"

    def coerce(self, code: str, src: str, dst: str) -> str:
        if dst == INT_KIND:
            return f"_f2i({code})" if src == FLOAT_KIND else code
        return f"_fchk({code})" if src == FLOAT_KIND else f"float({code})"

    def stmt(self, s: Statement, depth: int) -> None:
        pad = " " * (4 * depth)
        if isinstance(s, Assign):
            vc, vk = self.expr(s.value)
            t = s.target
            if isinstance(t, Var):
                val = self.coerce(vc, vk, self.kinds[t.name])
                self.lines.append(f"{pad}{self.pyname[t.name]} = {val}")
                if self.traced and t.name in self.outer:
                    self.lines.append(f"{pad}_W.add(({t.name!r},))")
            else:
                val = self.coerce(vc, vk, self.kinds[t.array])
                self.lines.append(f"{pad}_v = {val}")
                idx = self.index(t)
                self.lines.append(f"{pad}_k = {idx}")
                if self.traced:
                    self.lines.append(f"{pad}_W.add(({t.array!r}, _k))")
                self.lines.append(f"{pad}{self.pyname[t.array]}[_k] = _v")
        else:
            cc, _ = self.expr(s.cond)
            self.lines.append(f"{pad}if {cc}:")
            for c in s.then or ():
                self.stmt(c, depth + 1)
            if not s.then:
                self.lines.append(f"{pad}    pass")
            if s.orelse:
                self.lines.append(f"{pad}else:")
                for c in s.orelse:
                    self.stmt(c, depth + 1)

    def build(self) -> str:
        loop = self.loop
        L = self.lines
        L.append("def _run(A, S, iters, _reads, _writes):")
        for a in loop.arrays:
            L.append(f"    {self.pyname[a.name]} = A[{a.name!r}]")
        for s in loop.scalars:
            L.append(f"    {self.pyname[s.name]} = S[{s.name!r}]")
        if self.traced:
            L.append("    def _rd(arr, name, k):")
            L.append("        _R.add((name, k))")
            L.append("        return arr[k]")
        L.append("    for v__i in iters:")
        if self.traced:
            L.append("        _R = set(); _W = set()")
        for loc in loop.locals:
            code, k = self.expr(loc.init)
            L.append(f"        {self.pyname[loc.name]} = {self.coerce(code, k, loc.kind)}")
        for s in loop.body:
            self.stmt(s, 2)
        if self.traced:
            L.append("        _reads.append(_R); _writes.append(_W)")
        for s in loop.scalars:
            L.append(f"    S[{s.name!r}] = {self.pyname[s.name]}")
        L.append("    return None")
        return "\n".join(L) + "\n"


@functools.lru_cache(maxsize=8192)
def compile_loop(loop: LoopNest, traced: bool = False):
    """Compile ``loop`` to a Python callable ``run(arrays, scalars, iters, reads, writes)``."""
    src = _Codegen(loop, traced).build()
    ns = dict(_RUNTIME)
    exec(compile(src, f"<loop:{'traced' if traced else 'plain'}>", "exec"), ns)  # noqa: S102
    return ns["_run"]


def generated_python(loop: LoopNest, traced: bool = False) -> str:
    """Source of the compiled interpreter, for debugging."""
    return _Codegen(loop, traced).build()


def default_memory(loop: LoopNest, n: int) -> MemoryState:
    """Zero-filled arrays and declared scalar initial values."""
    arrays = {
        a.name: ([0.0] if a.kind == FLOAT_KIND else [0]) * a.size.at(n) for a in loop.arrays
    }
    scalars = {s.name: (float(s.init) if s.kind == FLOAT_KIND else int(s.init)) for s in loop.scalars}
    return MemoryState(n, arrays, scalars)


def random_memory(loop: LoopNest, n: int, rng, low: int = -8, high: int = 8) -> MemoryState:
    """Random array contents; scalars keep their declared initial values.

    ``rng`` is a :class:`numpy.random.Generator`.
    """
    mem = default_memory(loop, n)
    for a in loop.arrays:
        size = a.size.at(n)
        if a.kind == FLOAT_KIND:
            vals = rng.integers(4 * low, 4 * high + 1, size=size) / 4.0
            mem.arrays[a.name] = [float(v) for v in vals]
        else:
            mem.arrays[a.name] = [int(v) for v in rng.integers(low, high + 1, size=size)]
    return mem


def interpret(
    loop: LoopNest,
    init: MemoryState,
    iteration_order: Sequence[int] | None = None,
) -> MemoryState:
    """Run the loop body once per iteration in ``iteration_order`` and return the final memory.

    ``iteration_order`` permutes positions ``0..m-1`` of the iteration set at
    ``init.n``; ``None`` means sequential order. Raises :class:`TrapError`.
    """
    iters = loop.iterations(init.n)
    if iteration_order is not None:
        order = list(iteration_order)
        if sorted(order) != list(range(len(iters))):
            raise ValueError("iteration_order is not a permutation of the iteration set")
        iters = [iters[k] for k in order]
    _check_shapes(loop, init)
    mem = init.copy()
    compile_loop(loop, False)(mem.arrays, mem.scalars, iters, None, None)
    return mem


def run_traced(loop: LoopNest, init: MemoryState) -> tuple[MemoryState, list[set], list[set]]:
    """Sequential execution recording the concrete read and write set of every iteration."""
    _check_shapes(loop, init)
    mem = init.copy()
    reads: list[set] = []
    writes: list[set] = []
    compile_loop(loop, True)(mem.arrays, mem.scalars, loop.iterations(init.n), reads, writes)
    return mem, reads, writes


def _check_shapes(loop: LoopNest, mem: MemoryState) -> None:
    for a in loop.arrays:
        got = mem.arrays.get(a.name)
        if got is None or len(got) != a.size.at(mem.n):
            raise ValueError(f"memory for array {a.name!r} does not match its declared length")
    for s in loop.scalars:
        if s.name not in mem.scalars:
            raise ValueError(f"memory lacks scalar {s.name!r}")


# -------------------------------------------------------------- serialization


def expr_to_json(e: Expr):
    if isinstance(e, Const):
        return {"const": e.value}
    if isinstance(e, Var):
        return {"var": e.name}
    if isinstance(e, ArrayRef):
        return {"array": e.array, "index": expr_to_json(e.index)}
    return {"op": e.op, "left": expr_to_json(e.left), "right": expr_to_json(e.right)}


def expr_from_json(d) -> Expr:
    if "const" in d:
        return Const(d["const"])
    if "var" in d:
        return Var(d["var"])
    if "array" in d:
        return ArrayRef(d["array"], expr_from_json(d["index"]))
    return BinOp(d["op"], expr_from_json(d["left"]), expr_from_json(d["right"]))


def stmt_to_json(s: Statement):
    if isinstance(s, Assign):
        return {"assign": expr_to_json(s.target), "value": expr_to_json(s.value)}
    return {
        "if": expr_to_json(s.cond),
        "then": [stmt_to_json(c) for c in s.then],
        "else": [stmt_to_json(c) for c in s.orelse],
    }


def stmt_from_json(d) -> Statement:
    if "assign" in d:
        return Assign(expr_from_json(d["assign"]), expr_from_json(d["value"]))
    return If(
        expr_from_json(d["if"]),
        tuple(stmt_from_json(c) for c in d.get("then", ())),
        tuple(stmt_from_json(c) for c in d.get("else", ())),
    )


def to_json(loop: LoopNest) -> dict:
    return {
        "arrays": [[a.name, a.kind, [a.size.coef, a.size.const]] for a in loop.arrays],
        "scalars": [[s.name, s.kind, s.init] for s in loop.scalars],
        "locals": [[loc.name, loc.kind, expr_to_json(loc.init)] for loc in loop.locals],
        "loop_var": loop.loop_var,
        "lower": [loop.lower.coef, loop.lower.const],
        "upper": [loop.upper.coef, loop.upper.const],
        "step": loop.step,
        "body": [stmt_to_json(s) for s in loop.body],
    }


def from_json(d: dict) -> LoopNest:
    try:
        return LoopNest(
            arrays=tuple(ArrayDecl(n, k, Bound(*sz)) for n, k, sz in d["arrays"]),
            scalars=tuple(ScalarDecl(n, k, v) for n, k, v in d.get("scalars", ())),
            locals=tuple(LocalDecl(n, k, expr_from_json(e)) for n, k, e in d.get("locals", ())),
            loop_var=d.get("loop_var", "i"),
            lower=Bound(*d["lower"]),
            upper=Bound(*d["upper"]),
            step=int(d.get("step", 1)),
            body=tuple(stmt_from_json(s) for s in d["body"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        from .errors import ParseError

        raise ParseError(f"malformed LoopNest JSON: {exc}") from exc
