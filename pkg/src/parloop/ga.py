"""Genetic-algorithm generator of class-consistent loop programs.

One run evolves a population toward structurally rich loops of a single target
class. Fitness is zero for invalid or wrong-class genomes, so every emitted
sample is label-pure by construction. All randomness flows from per-step
streams derived from ``cfg.seed``; results do not depend on evaluation order.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import LoopSample
from .dependence import DEFAULT_INITS_PER_BOUND, Label, classify
from .errors import ExhaustedError, TrapError
from .loop_model import (
    CMP_OPS,
    DEFAULT_BOUNDS,
    FLOAT_KIND,
    INT_KIND,
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
    eval_index,
    iter_exprs,
    iter_statements,
    read_only_scalars,
    render,
    validate,
)

log = logging.getLogger(__name__)

ARRAY_POOL = ("a", "b", "c", "d", "x", "y")
SCALAR_POOL = ("s", "m", "k", "q")
LOCAL_POOL = ("t0", "t1", "t2")
FEATURES = ("functions", "conditionals", "variables", "loops")
MAX_ARRAY_LENGTH = 64
EDIT_KINDS = ("constant", "operator", "stride", "insert_delete", "wrap_unwrap")


@dataclass
class GAConfig:
    population_size: int = 200
    generations: int = 10
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    target_class: Label = Label.PARALLELIZABLE
    seed: int = 42
    weights: dict = field(default_factory=lambda: {f: 1.0 for f in FEATURES})
    validity_bonus: float = 1.0
    tournament_size: int = 3
    elite_fraction: float = 0.01
    max_statements: int = 6
    max_depth: int = 3
    max_arrays: int = 4
    max_scalars: int = 2
    max_locals: int = 2
    bounds: tuple = DEFAULT_BOUNDS
    oracle_seed: int = 0
    inits_per_bound: int = DEFAULT_INITS_PER_BOUND

    def __post_init__(self):
        self.target_class = Label(int(self.target_class))
        self.bounds = tuple(self.bounds)
        for name in ("crossover_rate", "mutation_rate", "elite_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("structural weights must be nonnegative")
        if set(self.weights) - set(FEATURES):
            raise ValueError(f"unknown fitness features {sorted(set(self.weights) - set(FEATURES))}")

    @property
    def elite_count(self) -> int:
        return max(1, int(self.population_size * self.elite_fraction))


@dataclass
class Individual:
    genome: LoopNest
    fitness: float | None = None
    label: Label | None = None

    def copy(self) -> "Individual":
        return Individual(self.genome, self.fitness, self.label)

    def set_genome(self, genome: LoopNest) -> None:
        if genome != self.genome:
            self.genome = genome
            self.fitness = None
            self.label = None


# ------------------------------------------------------------------ fitness


def structural_features(loop: LoopNest) -> dict:
    conditionals = sum(1 for s, _ in iter_statements(loop.body) if isinstance(s, If))
    return {
        "functions": 1,
        "conditionals": conditionals,
        "variables": len(loop.arrays) + len(loop.scalars) + len(loop.locals),
        "loops": 1,
    }


def oracle_label(loop: LoopNest, cfg: GAConfig) -> Label | None:
    """Validated oracle label, or ``None`` when the genome is invalid or traps."""
    if not validate(loop, cfg.bounds, cfg.max_depth):
        return None
    try:
        return classify(loop, cfg.bounds, cfg.inits_per_bound, cfg.oracle_seed)
    except TrapError:
        return None


def fitness(ind: Individual, cfg: GAConfig) -> float:
    """Weighted structural feature count plus validity bonus; 0 if invalid or off-class."""
    if ind.fitness is not None:
        return ind.fitness
    label = oracle_label(ind.genome, cfg)
    ind.label = label
    if label is None or label != cfg.target_class:
        ind.fitness = 0.0
        return 0.0
    feats = structural_features(ind.genome)
    score = sum(cfg.weights.get(f, 0.0) * feats[f] for f in FEATURES) + cfg.validity_bonus
    ind.fitness = float(score)
    return ind.fitness


# ------------------------------------------------------------ tree plumbing


def _get(obj, step):
    return obj[step] if isinstance(step, int) else getattr(obj, step)


def get_path(obj, path: Sequence):
    for step in path:
        obj = _get(obj, step)
    return obj


def set_path(obj, path: Sequence, new):
    if not path:
        return new
    step, rest = path[0], path[1:]
    child = set_path(_get(obj, step), rest, new)
    if isinstance(step, int):
        return obj[:step] + (child,) + obj[step + 1:]
    return dataclasses.replace(obj, **{step: child})


def _walk_expr(e: Expr, path: tuple, in_index: bool):
    yield path, e, in_index
    if isinstance(e, ArrayRef):
        yield from _walk_expr(e.index, path + ("index",), True)
    elif isinstance(e, BinOp):
        yield from _walk_expr(e.left, path + ("left",), in_index)
        yield from _walk_expr(e.right, path + ("right",), in_index)


def _walk_body(body: tuple, path: tuple):
    for k, s in enumerate(body):
        p = path + (k,)
        yield p, s, False
        if isinstance(s, Assign):
            yield from _walk_expr(s.target, p + ("target",), False)
            yield from _walk_expr(s.value, p + ("value",), False)
        else:
            yield from _walk_expr(s.cond, p + ("cond",), False)
            yield from _walk_body(s.then, p + ("then",))
            yield from _walk_body(s.orelse, p + ("orelse",))


def walk(loop: LoopNest):
    """Yield ``(path, node, in_index)`` for every statement and expression node."""
    for k, loc in enumerate(loop.locals):
        yield from _walk_expr(loc.init, ("locals", k, "init"), False)
    yield from _walk_body(loop.body, ("body",))


def statement_paths(loop: LoopNest) -> list[tuple]:
    return [p for p, node, _ in _walk_body(loop.body, ("body",)) if isinstance(node, (Assign, If))]


def _choice(rng, seq):
    return seq[int(rng.integers(len(seq)))]


# ------------------------------------------------------- random generation


class _Gen:
    """Random grammar-driven construction within the names a loop declares."""

    def __init__(self, rng: np.random.Generator, loop: LoopNest, cfg: GAConfig):
        self.rng = rng
        self.loop = loop
        self.cfg = cfg

    def coin(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def int_const(self) -> int:
        return int(_choice(self.rng, (0, 1, 1, 2, 2, 3, 4, 5, 7, 10, -1, -2)))

    def float_const(self) -> float:
        return float(_choice(self.rng, (0.5, 1.5, 2.0, 0.25, 3.0, -1.0, 0.1)))

    def index(self) -> Expr:
        v = Var(self.loop.loop_var)
        r = self.rng.random()
        if r < 0.5:
            return v
        if r < 0.65:
            return BinOp("+", v, Const(int(self.rng.integers(1, 3))))
        if r < 0.8:
            return BinOp("-", v, Const(int(self.rng.integers(1, 3))))
        if r < 0.88:
            return BinOp("*", Const(2), v)
        if r < 0.94:
            return BinOp("+", BinOp("*", Const(2), v), Const(1))
        return Const(int(self.rng.integers(0, 3)))

    def array_ref(self, name: str | None = None) -> ArrayRef:
        if name is None:
            name = _choice(self.rng, [a.name for a in self.loop.arrays])
        return ArrayRef(name, self.index())

    def leaf(self, readable: list[str]) -> Expr:
        r = self.rng.random()
        if r < 0.5 and self.loop.arrays:
            return self.array_ref()
        if r < 0.7:
            return Const(self.float_const() if self.coin(0.2) else self.int_const())
        if r < 0.82 or not readable:
            return Var(self.loop.loop_var)
        return Var(_choice(self.rng, readable))

    def expr(self, readable: list[str], depth: int = 2) -> Expr:
        if depth <= 0 or self.coin(0.35):
            return self.leaf(readable)
        op = _choice(self.rng, ("+", "+", "-", "*", "*", "/"))
        left = self.expr(readable, depth - 1)
        if op == "/":
            return BinOp("/", left, Const(_choice(self.rng, (2, 3, 4))))
        return BinOp(op, left, self.expr(readable, depth - 1))

    def cond(self, readable: list[str]) -> Expr:
        lhs = self.array_ref() if self.coin(0.7) and self.loop.arrays else self.leaf(readable)
        if self.coin(0.2):
            rhs = Var(self.loop.loop_var)
        else:
            rhs = Const(self.int_const())
        return BinOp(_choice(self.rng, CMP_OPS), lhs, rhs)

    def readable(self) -> list[str]:
        return [s.name for s in self.loop.scalars] + [loc.name for loc in self.loop.locals]

    def statement(self, depth: int = 1) -> Assign | If:
        readable = self.readable()
        r = self.rng.random()
        if r < 0.15 and depth < self.cfg.max_depth:
            then = tuple(self.statement(depth + 1) for _ in range(int(self.rng.integers(1, 3))))
            orelse = ()
            if self.coin(0.35):
                orelse = (self.statement(depth + 1),)
            return If(self.cond(readable), then, orelse)
        if r < 0.27:
            writable = [s.name for s in self.loop.scalars] + [loc.name for loc in self.loop.locals]
            if writable:
                name = _choice(self.rng, writable)
                if self.coin(0.6):
                    return Assign(Var(name), BinOp(_choice(self.rng, ("+", "*", "-")), Var(name), self.expr(readable, 1)))
                return Assign(Var(name), self.expr(readable))
        return Assign(self.array_ref(), self.expr(readable))


def random_loop(rng: np.random.Generator, cfg: GAConfig) -> LoopNest:
    """A random valid loop; retries construction until validation passes."""
    for _ in range(1000):
        loop = _random_loop_once(rng, cfg)
        fixed = repair(loop, cfg)
        if fixed is not None and fixed.body:
            return fixed
    raise ExhaustedError("could not construct a valid random loop")


def _random_loop_once(rng: np.random.Generator, cfg: GAConfig) -> LoopNest:
    n_arrays = int(rng.integers(2, cfg.max_arrays + 1))
    names = list(ARRAY_POOL)
    rng.shuffle(names)
    arrays = []
    for name in sorted(names[:n_arrays]):
        kind = FLOAT_KIND if rng.random() < 0.35 else INT_KIND
        size = Bound(2, int(rng.integers(0, 3))) if rng.random() < 0.15 else Bound(1, int(rng.integers(0, 3)))
        arrays.append(ArrayDecl(name, kind, size))
    scalars = []
    for name in SCALAR_POOL[: int(rng.integers(0, cfg.max_scalars + 1))]:
        if rng.random() < 0.3:
            scalars.append(ScalarDecl(name, FLOAT_KIND, float(_choice(rng, (0.0, 1.0, 0.5)))))
        else:
            scalars.append(ScalarDecl(name, INT_KIND, int(_choice(rng, (0, 1, 2)))))
    r = rng.random()
    if r < 0.75:
        lower, upper, step = Bound(0, int(rng.integers(0, 3))), Bound(1, -int(rng.integers(0, 3))), 1
    elif r < 0.88:
        lower, upper, step = Bound(0, 0), Bound(1, 0), 2
    else:
        lower, upper, step = Bound(1, -1), Bound(0, -1), -1
    loop = LoopNest(tuple(arrays), tuple(scalars), (), "i", lower, upper, step, ())
    gen = _Gen(rng, loop, cfg)
    locals_ = []
    for name in LOCAL_POOL[: int(rng.integers(0, cfg.max_locals + 1))]:
        kind = FLOAT_KIND if rng.random() < 0.3 else INT_KIND
        locals_.append(LocalDecl(name, kind, gen.expr([loc.name for loc in locals_] + [s.name for s in scalars], 1)))
    loop = dataclasses.replace(loop, locals=tuple(locals_))
    gen.loop = loop
    body = tuple(gen.statement() for _ in range(int(rng.integers(1, min(4, cfg.max_statements) + 1))))
    return dataclasses.replace(loop, body=body)


# ------------------------------------------------------------------- repair


def _names_in_expr(e: Expr) -> set[str]:
    out = set()
    for node in iter_exprs(e):
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, ArrayRef):
            out.add(node.array)
    return out


def _used_names(loop: LoopNest) -> set[str]:
    used = set()
    for _, node, _ in walk(loop):
        if isinstance(node, Var):
            used.add(node.name)
        elif isinstance(node, ArrayRef):
            used.add(node.array)
    return used


def _fix_names(loop: LoopNest, donor: LoopNest | None, cfg: GAConfig) -> LoopNest:
    """Import donor declarations for foreign names, else re-bind them to declared ones."""
    arrays = list(loop.arrays)
    scalars = list(loop.scalars)
    locals_ = list(loop.locals)
    declared = {d.name for d in (*arrays, *scalars, *locals_)} | {loop.loop_var}
    used = _used_names(loop)
    if donor is not None:
        for name in sorted(used - declared):
            d_arr = donor.array_names.get(name)
            d_sca = donor.scalar_names.get(name)
            d_loc = donor.local_names.get(name)
            if d_arr is not None and len(arrays) < cfg.max_arrays:
                arrays.append(d_arr)
            elif d_sca is not None and len(scalars) < cfg.max_scalars:
                scalars.append(d_sca)
            elif d_loc is not None and len(locals_) < cfg.max_locals and _names_in_expr(d_loc.init) <= declared:
                locals_.append(d_loc)
            else:
                continue
            declared.add(name)
    arrays.sort(key=lambda a: a.name)
    loop = dataclasses.replace(loop, arrays=tuple(arrays), scalars=tuple(scalars), locals=tuple(locals_))

    array_names = sorted(a.name for a in arrays)
    scalar_like = [s.name for s in scalars] + [loc.name for loc in locals_]

    def rebind_array(name: str) -> str:
        if name in loop.array_names or not array_names:
            return name
        return array_names[sum(map(ord, name)) % len(array_names)]

    def rebind_var(name: str) -> str:
        if name in declared:
            return name
        if not scalar_like:
            return loop.loop_var
        return scalar_like[sum(map(ord, name)) % len(scalar_like)]

    def fix_expr(e: Expr) -> Expr:
        if isinstance(e, Var):
            return Var(rebind_var(e.name))
        if isinstance(e, ArrayRef):
            return ArrayRef(rebind_array(e.array), fix_expr(e.index))
        if isinstance(e, BinOp):
            return BinOp(e.op, fix_expr(e.left), fix_expr(e.right))
        return e

    def fix_body(body) -> tuple:
        out = []
        for s in body:
            if isinstance(s, Assign):
                t = s.target
                if isinstance(t, Var):
                    if t.name not in declared or t.name == loop.loop_var:
                        if not scalar_like:
                            continue
                        t = Var(rebind_var(t.name) if t.name != loop.loop_var else scalar_like[0])
                else:
                    t = fix_expr(t)
                out.append(Assign(t, fix_expr(s.value)))
            else:
                then = fix_body(s.then)
                orelse = fix_body(s.orelse)
                if not then and not orelse:
                    continue
                if not then:
                    then, orelse = orelse, ()
                out.append(If(fix_expr(s.cond), then, orelse))
        return tuple(out)

    new_locals = []
    seen_locals: set[str] = set()
    for loc in loop.locals:
        init = fix_expr(loc.init)
        bad = {n for n in _names_in_expr(init) if n in loop.local_names and n not in seen_locals}
        if bad:
            init = Const(0)
        new_locals.append(LocalDecl(loc.name, loc.kind, init))
        seen_locals.add(loc.name)
    return dataclasses.replace(loop, locals=tuple(new_locals), body=fix_body(loop.body))


def _fix_exprs(loop: LoopNest) -> LoopNest:
    """Index expressions must be integer and memory-free; division needs a nonzero constant."""
    mutable = set(loop.scalar_names) - set(read_only_scalars(loop)) | set(loop.local_names)
    float_scalars = {s.name for s in loop.scalars if s.kind == FLOAT_KIND}
    v = Var(loop.loop_var)

    def fix_index(e: Expr) -> Expr:
        if isinstance(e, Const):
            return Const(int(e.value))
        if isinstance(e, Var):
            return v if (e.name in mutable or e.name in float_scalars) else e
        if isinstance(e, ArrayRef):
            return v
        if e.op in CMP_OPS or e.op == "/":
            return BinOp("+", fix_index(e.left), fix_index(e.right)) if e.op in CMP_OPS else fix_index(e.left)
        return BinOp(e.op, fix_index(e.left), fix_index(e.right))

    def fix(e: Expr) -> Expr:
        if isinstance(e, ArrayRef):
            return ArrayRef(e.array, fix_index(e.index))
        if isinstance(e, BinOp):
            left, right = fix(e.left), fix(e.right)
            if e.op == "/" and (not isinstance(right, Const) or right.value == 0):
                return BinOp("*", left, right)
            return BinOp(e.op, left, right)
        return e

    def fix_body(body) -> tuple:
        out = []
        for s in body:
            if isinstance(s, Assign):
                out.append(Assign(fix(s.target), fix(s.value)))
            else:
                out.append(If(fix(s.cond), fix_body(s.then), fix_body(s.orelse)))
        return tuple(out)

    locals_ = tuple(LocalDecl(loc.name, loc.kind, fix(loc.init)) for loc in loop.locals)
    return dataclasses.replace(loop, locals=locals_, body=fix_body(loop.body))


def _limit_depth(body: tuple, depth: int, max_depth: int) -> tuple:
    out = []
    for s in body:
        if isinstance(s, If):
            if depth >= max_depth:
                out.extend(_limit_depth(s.then, depth, max_depth))
            else:
                out.append(If(s.cond, _limit_depth(s.then, depth + 1, max_depth), _limit_depth(s.orelse, depth + 1, max_depth)))
        else:
            out.append(s)
    return tuple(out)


def _index_range(loop: LoopNest, ref: ArrayRef, bounds) -> dict[int, tuple[int, int]]:
    env = dict(read_only_scalars(loop))
    out = {}
    for n in bounds:
        ks = []
        for i in loop.iterations(n):
            env[loop.loop_var] = i
            ks.append(eval_index(ref.index, env))
        if ks:
            out[n] = (min(ks), max(ks))
    return out


def _shift_index(e: Expr, delta: int) -> Expr:
    if isinstance(e, BinOp) and e.op in ("+", "-") and isinstance(e.right, Const):
        c = e.right.value if e.op == "+" else -e.right.value
        c += delta
        if c == 0:
            return e.left
        return BinOp("+", e.left, Const(c)) if c > 0 else BinOp("-", e.left, Const(-c))
    if isinstance(e, Const):
        return Const(e.value + delta)
    if delta == 0:
        return e
    return BinOp("+", e, Const(delta)) if delta > 0 else BinOp("-", e, Const(-delta))


def _fix_bounds(loop: LoopNest, cfg: GAConfig) -> LoopNest | None:
    """Clamp every access into its array: shift low indices up, grow arrays for high ones."""
    bounds = cfg.bounds
    for _ in range(4):
        refs = [(p, node) for p, node, _ in walk(loop) if isinstance(node, ArrayRef)]
        changed = False
        need: dict[str, dict[int, int]] = {}
        for path, ref in refs:
            rng_by_n = _index_range(loop, ref, bounds)
            lo = min((r[0] for r in rng_by_n.values()), default=0)
            if lo < 0:
                loop = set_path(loop, path + ("index",), _shift_index(ref.index, -lo))
                changed = True
                break
            for n, (_, hi) in rng_by_n.items():
                need.setdefault(ref.array, {})
                need[ref.array][n] = max(need[ref.array].get(n, 0), hi + 1)
        if changed:
            continue
        arrays = []
        for a in loop.arrays:
            req = need.get(a.name, {})
            if all(a.size.at(n) >= req.get(n, 1) for n in bounds):
                arrays.append(a)
                continue
            size = _fit_size(a.size, req, bounds)
            if size is None:
                return None
            arrays.append(ArrayDecl(a.name, a.kind, size))
        return dataclasses.replace(loop, arrays=tuple(arrays))
    return None


def _fit_size(current: Bound, req: dict[int, int], bounds) -> Bound | None:
    for coef in (current.coef, 1, 2, 3):
        if coef < 1:
            continue
        const = max(max(r - coef * n for n, r in req.items()), current.const if coef == current.coef else -10**9)
        size = Bound(coef, const)
        if all(size.at(n) >= 1 for n in bounds) and size.at(max(bounds)) <= MAX_ARRAY_LENGTH:
            return size
    return None


def _prune(loop: LoopNest) -> LoopNest:
    """Drop declarations nothing refers to."""
    used = _used_names(dataclasses.replace(loop, locals=()))
    kept: set[str] = set()
    frontier = {loc.name for loc in loop.locals} & used
    while frontier:
        kept |= frontier
        extra = set()
        for loc in loop.locals:
            if loc.name in frontier:
                extra |= _names_in_expr(loc.init)
        used |= extra
        frontier = ({loc.name for loc in loop.locals} & extra) - kept
    locals_ = tuple(loc for loc in loop.locals if loc.name in kept)
    arrays = tuple(a for a in loop.arrays if a.name in used)
    scalars = tuple(s for s in loop.scalars if s.name in used)
    return dataclasses.replace(loop, arrays=arrays, scalars=scalars, locals=locals_)


def repair(loop: LoopNest, cfg: GAConfig, donor: LoopNest | None = None) -> LoopNest | None:
    """Best-effort fix-up to a valid genome; ``None`` when the genome cannot be saved."""
    if not loop.body:
        return None
    loop = _fix_names(loop, donor, cfg)
    loop = dataclasses.replace(loop, body=_limit_depth(loop.body, 1, cfg.max_depth))
    loop = _fix_exprs(loop)
    if not loop.body:
        return None
    loop = _prune(loop)
    if not loop.arrays:
        return None
    try:
        loop = _fix_bounds(loop, cfg)
    except (TrapError, KeyError):
        return None
    if loop is None:
        return None
    if len(list(iter_statements(loop.body))) > cfg.max_statements:
        return None
    if not validate(loop, cfg.bounds, cfg.max_depth):
        return None
    return loop


# ---------------------------------------------------------------- operators


def crossover(a: Individual, b: Individual, rng: np.random.Generator, cfg: GAConfig) -> tuple[Individual, Individual]:
    """Swap one randomly chosen statement subtree between the two bodies, then repair.

    Applied with probability ``cfg.crossover_rate``; otherwise, or when a
    child cannot be repaired, the corresponding parent is copied.
    """
    c1, c2 = a.copy(), b.copy()
    if rng.random() >= cfg.crossover_rate or a.genome == b.genome:
        return c1, c2
    pa = _choice(rng, statement_paths(a.genome))
    pb = _choice(rng, statement_paths(b.genome))
    sa = get_path(a.genome, pa)
    sb = get_path(b.genome, pb)
    g1 = repair(set_path(a.genome, pa, sb), cfg, donor=b.genome)
    g2 = repair(set_path(b.genome, pb, sa), cfg, donor=a.genome)
    if g1 is not None:
        c1.set_genome(g1)
    if g2 is not None:
        c2.set_genome(g2)
    return c1, c2


def mutate(a: Individual, rng: np.random.Generator, cfg: GAConfig, kind: str | None = None) -> Individual:
    """With probability ``cfg.mutation_rate`` apply one edit drawn uniformly from :data:`EDIT_KINDS`."""
    out = a.copy()
    if kind is None:
        if rng.random() >= cfg.mutation_rate:
            return out
        kind = _choice(rng, EDIT_KINDS)
    edited = _EDITS[kind](a.genome, rng, cfg)
    if edited is None or edited == a.genome:
        return out
    fixed = repair(edited, cfg)
    if fixed is not None:
        out.set_genome(fixed)
    return out


def _edit_constant(loop, rng, cfg):
    nodes = [(p, n, idx) for p, n, idx in walk(loop) if isinstance(n, Const)]
    if not nodes:
        return None
    path, node, in_index = _choice(rng, nodes)
    gen = _Gen(rng, loop, cfg)
    for _ in range(8):
        if isinstance(node.value, float):
            new = gen.float_const()
        elif in_index:
            new = int(rng.integers(0, 4))
        else:
            new = gen.int_const()
        if new != node.value:
            return set_path(loop, path, Const(new))
    return None


def _edit_operator(loop, rng, cfg):
    nodes = [(p, n) for p, n, _ in walk(loop) if isinstance(n, BinOp)]
    if not nodes:
        return None
    path, node = _choice(rng, nodes)
    if node.op in CMP_OPS:
        choices = [op for op in CMP_OPS if op != node.op]
    elif node.op == "/":
        choices = ["*"]
    else:
        choices = [op for op in ("+", "-", "*") if op != node.op]
    return set_path(loop, path, BinOp(_choice(rng, choices), node.left, node.right))


def _edit_stride(loop, rng, cfg):
    nodes = [(p, n) for p, n, _ in walk(loop) if isinstance(n, ArrayRef)]
    if not nodes:
        return None
    path, ref = _choice(rng, nodes)
    v = Var(loop.loop_var)
    idx = ref.index

    def toggle(e: Expr) -> Expr:
        if e == v:
            return BinOp("*", Const(2), v)
        if isinstance(e, BinOp) and e.op == "*" and v in (e.left, e.right):
            return v
        if isinstance(e, BinOp) and e.op in ("+", "-"):
            return BinOp(e.op, toggle(e.left), e.right)
        return BinOp("*", Const(2), v)

    return set_path(loop, path + ("index",), toggle(idx))


def _edit_insert_delete(loop, rng, cfg):
    paths = statement_paths(loop)
    gen = _Gen(rng, loop, cfg)
    if len(paths) > 1 and (rng.random() < 0.5 or len(paths) >= cfg.max_statements):
        path = _choice(rng, paths)
        parent_path, k = path[:-1], path[-1]
        parent = get_path(loop, parent_path)
        return set_path(loop, parent_path, parent[:k] + parent[k + 1:])
    if len(paths) >= cfg.max_statements:
        return None
    k = int(rng.integers(len(loop.body) + 1))
    return dataclasses.replace(loop, body=loop.body[:k] + (gen.statement(),) + loop.body[k:])


def _edit_wrap_unwrap(loop, rng, cfg):
    paths = statement_paths(loop)
    path = _choice(rng, paths)
    stmt = get_path(loop, path)
    if isinstance(stmt, If):
        parent_path, k = path[:-1], path[-1]
        parent = get_path(loop, parent_path)
        return set_path(loop, parent_path, parent[:k] + stmt.then + parent[k + 1:])
    gen = _Gen(rng, loop, cfg)
    return set_path(loop, path, If(gen.cond(gen.readable()), (stmt,), ()))


_EDITS: dict[str, Callable] = {
    "constant": _edit_constant,
    "operator": _edit_operator,
    "stride": _edit_stride,
    "insert_delete": _edit_insert_delete,
    "wrap_unwrap": _edit_wrap_unwrap,
}


# -------------------------------------------------------------------- evolve


def _sort_key(ind: Individual):
    return (-(ind.fitness or 0.0), render(ind.genome))


def tournament(pop: list[Individual], k: int, size: int, rng: np.random.Generator) -> list[Individual]:
    """``k`` winners of size-``size`` tournaments (ties go to the earlier index)."""
    out = []
    for _ in range(k):
        idx = rng.integers(len(pop), size=size)
        best = min(idx, key=lambda j: (-(pop[j].fitness or 0.0), j))
        out.append(pop[int(best)].copy())
    return out


def evolve(
    cfg: GAConfig,
    on_generation: Callable[[int, list[Individual]], None] | None = None,
) -> list[LoopSample]:
    """Run the GA and return unique final-population samples of ``cfg.target_class``.

    Samples are ordered by fitness (best first) then by source text.
    """
    cache: dict[LoopNest, tuple[float, Label | None]] = {}

    def evaluate(pop: list[Individual]) -> None:
        for ind in pop:
            if ind.fitness is not None:
                continue
            hit = cache.get(ind.genome)
            if hit is None:
                fitness(ind, cfg)
                cache[ind.genome] = (ind.fitness, ind.label)
            else:
                ind.fitness, ind.label = hit

    init_rng = np.random.default_rng([cfg.seed, 0, 0])
    pop = [Individual(random_loop(init_rng, cfg)) for _ in range(cfg.population_size)]
    evaluate(pop)
    if on_generation:
        on_generation(0, pop)
    n_elite = min(cfg.elite_count, cfg.population_size)
    for gen in range(1, cfg.generations + 1):
        ranked = sorted(pop, key=_sort_key)
        elites = [ind.copy() for ind in ranked[:n_elite]]
        sel_rng = np.random.default_rng([cfg.seed, gen, 1])
        offspring = tournament(pop, cfg.population_size - n_elite, cfg.tournament_size, sel_rng)
        for j in range(0, len(offspring) - 1, 2):
            cx_rng = np.random.default_rng([cfg.seed, gen, 2, j])
            offspring[j], offspring[j + 1] = crossover(offspring[j], offspring[j + 1], cx_rng, cfg)
        for j in range(len(offspring)):
            mut_rng = np.random.default_rng([cfg.seed, gen, 3, j])
            offspring[j] = mutate(offspring[j], mut_rng, cfg)
        pop = elites + offspring
        evaluate(pop)
        if on_generation:
            on_generation(gen, pop)
        log.debug("gen %d: best %.1f, target-class %d", gen, max(i.fitness for i in pop),
                  sum(1 for i in pop if i.label == cfg.target_class))

    samples: list[LoopSample] = []
    seen: set[str] = set()
    for ind in sorted(pop, key=_sort_key):
        if ind.label != cfg.target_class or not ind.fitness:
            continue
        text = render(ind.genome)
        if text in seen:
            continue
        seen.add(text)
        prov = f"ga:target={int(cfg.target_class)};seed={cfg.seed};fitness={ind.fitness:g}"
        samples.append(LoopSample.make(text, int(cfg.target_class), "synthetic", prov))
    if not samples:
        raise ExhaustedError(f"no class-{int(cfg.target_class)} samples survived; configuration too restrictive")
    return samples
