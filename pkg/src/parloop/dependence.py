"""Ground-truth labeling by brute-force cross-iteration conflict detection.

A loop is Parallelizable when no memory location written by one iteration is
touched by another, for every problem size and random initial memory tried,
and no scalar declared outside the loop is written inside it. Anything else is
Undefined. The GCD test is provided as the classical static screen; it is
sound but never decides a label on its own.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NotAffine
from .loop_model import (
    DEFAULT_BOUNDS,
    ArrayRef,
    Assign,
    BinOp,
    Const,
    Expr,
    If,
    LoopNest,
    MemoryState,
    Var,
    eval_index,
    iter_exprs,
    random_memory,
    read_only_scalars,
    run_traced,
)

DEFAULT_INITS_PER_BOUND = 3


class Label(enum.IntEnum):
    UNDEFINED = 0
    PARALLELIZABLE = 1

    @property
    def title(self) -> str:
        return "Parallelizable" if self is Label.PARALLELIZABLE else "Undefined"


class GcdResult(enum.Enum):
    NO_DEPENDENCE = "NoDependence"
    MAYBE_DEPENDENT = "MaybeDependent"


@dataclass
class AccessTrace:
    """Per-iteration read and write sets of one sequential run.

    Locations are ``(array, index)`` for array elements and ``(name,)`` for
    scalars declared outside the loop. Loop-local scalars are private and
    never recorded.
    """

    n: int
    iterations: list
    reads: list
    writes: list


class Conflict(NamedTuple):
    first: int  # loop-variable value of the iteration that runs earlier
    second: int
    location: tuple
    kind: str  # flow | anti | output


@dataclass
class Analysis:
    label: Label
    conflicts: list = field(default_factory=list)
    conflict_n: int | None = None
    written_scalars: list = field(default_factory=list)
    static_conflicts: list = field(default_factory=list)
    gcd_screen: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "label": int(self.label),
            "label_name": self.label.title,
            "written_outer_scalars": self.written_scalars,
            "conflict_n": self.conflict_n,
            "conflicts": [
                {"first": c.first, "second": c.second, "location": list(c.location), "kind": c.kind}
                for c in self.conflicts
            ],
            "static_conflicts": [
                {"first": c.first, "second": c.second, "location": list(c.location), "kind": c.kind}
                for c in self.static_conflicts
            ],
            "gcd_screen": self.gcd_screen,
        }


# ------------------------------------------------------------------- tracing


def trace_accesses(loop: LoopNest, bound: int, init: MemoryState | None = None) -> AccessTrace:
    """Run ``loop`` sequentially at size ``bound`` and record every concrete access.

    Only taken control paths contribute. Propagates :class:`TrapError`.
    """
    if init is None:
        from .loop_model import default_memory

        init = default_memory(loop, bound)
    if init.n != bound:
        raise ValueError("init memory was built for a different bound")
    _, reads, writes = run_traced(loop, init)
    return AccessTrace(bound, loop.iterations(bound), reads, writes)


def find_conflicts(trace: AccessTrace) -> list[Conflict]:
    """All cross-iteration conflicts, ordered by (first, second, location) in execution order."""
    readers: dict[tuple, list[int]] = {}
    writers: dict[tuple, list[int]] = {}
    for pos, (r, w) in enumerate(zip(trace.reads, trace.writes)):
        for loc in r:
            readers.setdefault(loc, []).append(pos)
        for loc in w:
            writers.setdefault(loc, []).append(pos)
    found = set()
    for loc, ws in writers.items():
        for a in range(len(ws)):
            for b in range(a + 1, len(ws)):
                found.add((ws[a], ws[b], loc, "output"))
        for w in ws:
            for r in readers.get(loc, ()):
                if r == w:
                    continue
                found.add((w, r, loc, "flow") if w < r else (r, w, loc, "anti"))
    its = trace.iterations
    ordered = sorted(found, key=lambda t: (t[0], t[1], t[2], t[3]))
    return [Conflict(its[p], its[q], loc, kind) for p, q, loc, kind in ordered]


def static_may_trace(loop: LoopNest, bound: int) -> AccessTrace:
    """Path-insensitive access sets: every access on every branch, taken or not.

    Valid loops index arrays only through the loop variable, constants and
    read-only scalars, so these sets are exact over-approximations.
    """
    env = dict(read_only_scalars(loop))
    outer = set(loop.scalar_names)
    accesses_r: list[tuple[Expr, bool]] = []
    accesses_w: list[ArrayRef] = []
    scal_r: set = set()
    scal_w: set = set()

    def visit_expr(e: Expr) -> None:
        for node in iter_exprs(e):
            if isinstance(node, ArrayRef):
                accesses_r.append(node)
            elif isinstance(node, Var) and node.name in outer:
                scal_r.add((node.name,))

    for loc in loop.locals:
        visit_expr(loc.init)

    def visit(body) -> None:
        for s in body:
            if isinstance(s, Assign):
                visit_expr(s.value)
                if isinstance(s.target, ArrayRef):
                    visit_expr(s.target.index)
                    accesses_w.append(s.target)
                elif s.target.name in outer:
                    scal_w.add((s.target.name,))
            else:
                visit_expr(s.cond)
                visit(s.then)
                visit(s.orelse)

    visit(loop.body)
    reads, writes = [], []
    for i in loop.iterations(bound):
        env[loop.loop_var] = i
        reads.append({(a.array, eval_index(a.index, env)) for a in accesses_r} | scal_r)
        writes.append({(a.array, eval_index(a.index, env)) for a in accesses_w} | scal_w)
    return AccessTrace(bound, loop.iterations(bound), reads, writes)


# ------------------------------------------------------------------ GCD test


def affine_in_loop_var(expr: Expr, loop_var: str, constants: dict | None = None) -> tuple[int, int]:
    """Return ``(a, b)`` with ``expr == a * loop_var + b``; raises :class:`NotAffine`."""
    constants = constants or {}
    if isinstance(expr, Const):
        if isinstance(expr.value, int):
            return 0, expr.value
        raise NotAffine("floating constant in index")
    if isinstance(expr, Var):
        if expr.name == loop_var:
            return 1, 0
        if expr.name in constants and isinstance(constants[expr.name], int):
            return 0, constants[expr.name]
        raise NotAffine(f"free name {expr.name!r}")
    if isinstance(expr, BinOp) and expr.op in ("+", "-", "*"):
        a1, b1 = affine_in_loop_var(expr.left, loop_var, constants)
        a2, b2 = affine_in_loop_var(expr.right, loop_var, constants)
        if expr.op == "+":
            return a1 + a2, b1 + b2
        if expr.op == "-":
            return a1 - a2, b1 - b2
        if a1 == 0:
            return b1 * a2, b1 * b2
        if a2 == 0:
            return b2 * a1, b2 * b1
    raise NotAffine("index is not affine in the loop variable")


def gcd_test(write_index, other_index, bound: int | None = None, loop_var: str = "i") -> GcdResult:
    """Classical GCD dependence test for ``a*i + b`` against ``c*i + d``.

    Arguments are ``(coef, const)`` pairs or index expressions over
    ``loop_var``. ``bound`` is accepted for interface symmetry with the brute
    force check; the test itself is independent of the iteration range.
    """
    a, b = _as_affine(write_index, loop_var)
    c, d = _as_affine(other_index, loop_var)
    g = math.gcd(a, c)
    diff = d - b
    if g == 0:
        dependent = diff == 0
    else:
        dependent = diff % g == 0
    return GcdResult.MAYBE_DEPENDENT if dependent else GcdResult.NO_DEPENDENCE


def _as_affine(idx, loop_var: str) -> tuple[int, int]:
    if isinstance(idx, tuple) and len(idx) == 2 and all(isinstance(v, int) for v in idx):
        return idx
    return affine_in_loop_var(idx, loop_var)


def gcd_screen(loop: LoopNest) -> list[dict]:
    """Apply the GCD test to every (write, access) pair on the same array."""
    consts = read_only_scalars(loop)
    writes: list[ArrayRef] = []
    others: list[ArrayRef] = []

    def collect(body):
        for s in body:
            exprs = [s.value] if isinstance(s, Assign) else [s.cond]
            if isinstance(s, Assign) and isinstance(s.target, ArrayRef):
                writes.append(s.target)
                others.append(s.target)
                exprs.append(s.target.index)
            for e in exprs:
                others.extend(n for n in iter_exprs(e) if isinstance(n, ArrayRef))
            if isinstance(s, If):
                collect(s.then)
                collect(s.orelse)

    for loc in loop.locals:
        others.extend(n for n in iter_exprs(loc.init) if isinstance(n, ArrayRef))
    collect(loop.body)
    out = []
    from .loop_model import render_expr

    for w in writes:
        for o in others:
            if o.array != w.array:
                continue
            try:
                aw = affine_in_loop_var(w.index, loop.loop_var, consts)
                ao = affine_in_loop_var(o.index, loop.loop_var, consts)
                result = gcd_test(aw, ao).value
            except NotAffine:
                result = "NotAffine"
            out.append({"write": render_expr(w), "other": render_expr(o), "result": result})
    return out


# ------------------------------------------------------------------ classify


def written_outer_scalars(loop: LoopNest) -> list[str]:
    outer = set(loop.scalar_names)
    names = []

    def visit(body):
        for s in body:
            if isinstance(s, Assign):
                if isinstance(s.target, Var) and s.target.name in outer and s.target.name not in names:
                    names.append(s.target.name)
            else:
                visit(s.then)
                visit(s.orelse)

    visit(loop.body)
    return names


def init_rng(seed: int, n: int, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, n, k])


def analyze(
    loop: LoopNest,
    bounds: Sequence[int] = DEFAULT_BOUNDS,
    inits_per_bound: int = DEFAULT_INITS_PER_BOUND,
    seed: int = 0,
    evidence: bool = True,
) -> Analysis:
    """Label ``loop`` and collect the evidence behind the decision.

    Any single observed conflict makes the loop Undefined. Propagates
    :class:`TrapError`; callers discard such samples.
    """
    result = Analysis(Label.PARALLELIZABLE)
    result.written_scalars = written_outer_scalars(loop)
    if evidence:
        result.gcd_screen = gcd_screen(loop)
    if result.written_scalars:
        result.label = Label.UNDEFINED
        if not evidence:
            return result
    for n in bounds:
        for k in range(inits_per_bound):
            init = random_memory(loop, n, init_rng(seed, n, k))
            conflicts = find_conflicts(trace_accesses(loop, n, init))
            if conflicts:
                result.label = Label.UNDEFINED
                result.conflicts = conflicts
                result.conflict_n = n
                break
        if result.conflicts:
            break
    if result.label is Label.UNDEFINED and not evidence:
        return result
    for n in bounds:
        static = find_conflicts(static_may_trace(loop, n))
        if static:
            result.label = Label.UNDEFINED
            result.static_conflicts = static
            break
    return result


def classify(
    loop: LoopNest,
    bounds: Sequence[int] = DEFAULT_BOUNDS,
    inits_per_bound: int = DEFAULT_INITS_PER_BOUND,
    seed: int = 0,
) -> Label:
    """Parallelizable iff conflict-free at every bound and init and no outer scalar is written."""
    return analyze(loop, bounds, inits_per_bound, seed, evidence=False).label
