"""Integrands f in L^2([0,T]^n).

Four representations are supported: sums of indicator rectangles (the
elementary class when every term's intervals are pairwise disjoint), tensor
products of 1-D cell functions, cell-constant uniform grids, and a small
registry of closed forms. Rectangles and grid cells are half-open ``(a, b]``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError, PreconditionError, ResourceError

MAX_ARITY = 4
DEFAULT_CELL_BUDGET = 50_000_000


class NamedForm(enum.Enum):
    ONE = "one"
    SUM_COORDS = "sum_coords"
    PRODUCT_COORDS = "product_coords"
    EXP_NEG_SUM = "exp_neg_sum"


def _check_arity(n: int) -> None:
    if not (1 <= int(n) <= MAX_ARITY):
        raise ParameterError(f"arity must be in 1..{MAX_ARITY}, got {n}")


@dataclass(frozen=True)
class Term:
    """alpha * indicator of (a_1, b_1] x ... x (a_n, b_n]."""

    alpha: float
    rect: tuple[tuple[float, float], ...]

    def __post_init__(self):
        rect = tuple((float(a), float(b)) for a, b in self.rect)
        if any(not a < b for a, b in rect):
            raise ParameterError(f"degenerate interval in {rect}")
        if not math.isfinite(self.alpha):
            raise ParameterError("coefficient must be finite")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "rect", rect)

    @property
    def is_elementary(self) -> bool:
        # closed intervals pairwise disjoint
        for (a1, b1), (a2, b2) in itertools.combinations(self.rect, 2):
            if not (b1 < a2 or b2 < a1):
                return False
        return True

    def gap(self) -> float:
        """Smallest distance between two of the term's intervals (inf for n=1)."""
        gaps = [
            max(a2 - b1, a1 - b2)
            for (a1, b1), (a2, b2) in itertools.combinations(self.rect, 2)
        ]
        return min(gaps) if gaps else math.inf


class TestFunction:
    """Base class; subclasses implement ``_values`` and ``_l2``."""

    __test__ = False  # keep pytest from collecting this class
    n: int
    T: float

    def evaluate(self, points) -> np.ndarray | float:
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.n:
            raise DomainError(f"expected points with {self.n} coordinates")
        if np.any(pts < 0.0) or np.any(pts > self.T) or not np.all(np.isfinite(pts)):
            raise DomainError(f"point outside [0, {self.T}]^{self.n}")
        out = self._values(pts)
        return float(out[0]) if scalar else out

    def _values(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _l2(self, t: float) -> float:
        raise NotImplementedError

    @property
    def is_symmetric(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class StepRectangles(TestFunction):
    n: int
    T: float
    terms: tuple[Term, ...] = ()

    def __post_init__(self):
        _check_arity(self.n)
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        for term in terms:
            if len(term.rect) != self.n:
                raise ParameterError("rectangle dimension does not match arity")
            if any(a < 0.0 or b > self.T for a, b in term.rect):
                raise ParameterError("rectangle leaves [0, T]^n")
        object.__setattr__(self, "terms", terms)

    @property
    def elementary(self) -> bool:
        return all(t.is_elementary for t in self.terms)

    def min_gap(self) -> float:
        return min((t.gap() for t in self.terms), default=math.inf)

    def endpoints(self) -> np.ndarray:
        pts = {v for term in self.terms for ab in term.rect for v in ab}
        return np.array(sorted(pts), dtype=float)

    def _values(self, pts):
        out = np.zeros(len(pts))
        for term in self.terms:
            inside = np.ones(len(pts), dtype=bool)
            for i, (a, b) in enumerate(term.rect):
                inside &= (pts[:, i] > a) & (pts[:, i] <= b)
            out += term.alpha * inside
        return out

    def _l2(self, t):
        total = 0.0
        for s, u in itertools.product(self.terms, repeat=2):
            vol = 1.0
            for (a1, b1), (a2, b2) in zip(s.rect, u.rect):
                vol *= max(0.0, min(b1, b2, t) - max(a1, a2))
            total += s.alpha * u.alpha * vol
        return total

    @property
    def is_symmetric(self) -> bool:
        return _is_permutation_closed(self)


def _is_permutation_closed(f: StepRectangles) -> bool:
    weights: dict = {}
    for term in f.terms:
        weights[term.rect] = weights.get(term.rect, 0.0) + term.alpha
    for rect, w in weights.items():
        for perm in itertools.permutations(range(f.n)):
            if not math.isclose(weights.get(tuple(rect[p] for p in perm), 0.0), w):
                return False
    return True


@dataclass(frozen=True, eq=False)
class UniformGrid(TestFunction):
    """Cell-constant function; cell j along an axis covers ((j-1)T/m, jT/m]."""

    n: int
    T: float
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        _check_arity(self.n)
        v = np.array(self.values, dtype=float)
        if v.ndim != self.n or len(set(v.shape)) != 1 or v.shape[0] < 1:
            raise ParameterError(f"grid values must be an {self.n}-dimensional cube")
        if not np.all(np.isfinite(v)):
            raise ParameterError("grid values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        idx = np.ceil(x * self.m / self.T).astype(int) - 1
        return np.clip(idx, 0, self.m - 1)

    def _values(self, pts):
        return self.values[tuple(self.cell_index(pts[:, i]) for i in range(self.n))]

    def _l2(self, t):
        h = self.T / self.m
        edges = np.arange(self.m + 1) * h
        overlap = np.clip(np.minimum(edges[1:], t) - edges[:-1], 0.0, None)
        acc = self.values**2
        for _ in range(self.n):
            acc = acc @ overlap
        return float(acc)

    @property
    def is_symmetric(self) -> bool:
        v = self.values
        return all(np.allclose(v, np.transpose(v, p)) for p in itertools.permutations(range(self.n)))


@dataclass(frozen=True, eq=False)
class TensorProduct(TestFunction):
    """f(x) = prod_i g_i(x_i), each g_i cell-constant on its own uniform grid."""

    n: int
    T: float
    factors: tuple = ()

    def __post_init__(self):
        _check_arity(self.n)
        facs = tuple(np.array(g, dtype=float).ravel() for g in self.factors)
        if len(facs) != self.n or any(len(g) == 0 for g in facs):
            raise ParameterError("need one non-empty factor per coordinate")
        for g in facs:
            g.flags.writeable = False
        object.__setattr__(self, "factors", facs)

    def _factor(self, i: int, x: np.ndarray) -> np.ndarray:
        g = self.factors[i]
        idx = np.clip(np.ceil(x * len(g) / self.T).astype(int) - 1, 0, len(g) - 1)
        return g[idx]

    def _values(self, pts):
        out = np.ones(len(pts))
        for i in range(self.n):
            out *= self._factor(i, pts[:, i])
        return out

    def _l2(self, t):
        total = 1.0
        for g in self.factors:
            h = self.T / len(g)
            edges = np.arange(len(g) + 1) * h
            overlap = np.clip(np.minimum(edges[1:], t) - edges[:-1], 0.0, None)
            total *= float(np.dot(g**2, overlap))
        return total


@dataclass(frozen=True, eq=False)
class NamedClosedForm(TestFunction):
    n: int
    T: float
    name: NamedForm = NamedForm.ONE

    def __post_init__(self):
        _check_arity(self.n)
        object.__setattr__(self, "name", NamedForm(self.name))

    def _values(self, pts):
        if self.name is NamedForm.ONE:
            return np.ones(len(pts))
        if self.name is NamedForm.SUM_COORDS:
            return pts.sum(axis=1)
        if self.name is NamedForm.PRODUCT_COORDS:
            return pts.prod(axis=1)
        return np.exp(-pts.sum(axis=1))

    def _l2(self, t):
        n = self.n
        if self.name is NamedForm.ONE:
            return t**n
        if self.name is NamedForm.SUM_COORDS:
            # n diagonal terms int x_i^2, n(n-1) cross terms int x_i x_j
            return n * t ** (n + 2) / 3.0 + n * (n - 1) * t ** (n + 2) / 4.0
        if self.name is NamedForm.PRODUCT_COORDS:
            return (t**3 / 3.0) ** n
        return (-math.expm1(-2.0 * t) / 2.0) ** n

    @property
    def is_symmetric(self) -> bool:
        return True


def one(n: int = 2, T: float = 1.0) -> NamedClosedForm:
    return NamedClosedForm(n, T, NamedForm.ONE)


def zero(n: int = 2, T: float = 1.0) -> StepRectangles:
    return StepRectangles(n, T, ())


def evaluate(f: TestFunction, point):
    return f.evaluate(point)


def l2_norm_sq(f: TestFunction, restricted_to_t: float | None = None) -> float:
    """int over [0, t]^n of f^2 (t defaults to T)."""
    t = f.T if restricted_to_t is None else float(restricted_to_t)
    if not (0.0 <= t <= f.T):
        raise DomainError(f"t must lie in [0, {f.T}]")
    return float(f._l2(t))


def increment_l2(f: TestFunction, s: float, t: float) -> float:
    """L^2 mass of f * (1_[0,t]^2 - 1_[0,s]^2)."""
    if s > t:
        raise ParameterError(f"need s <= t, got s={s}, t={t}")
    if s < 0.0 or t > f.T:
        raise DomainError(f"times must lie in [0, {f.T}]")
    if s == t:
        return 0.0
    # the two indicators are nested, so the squared difference is their difference
    return max(0.0, l2_norm_sq(f, t) - l2_norm_sq(f, s))


@dataclass(frozen=True)
class IncrementFunction:
    """f * 1_[0,t]^2 - f * 1_[0,s]^2 for a 2-variable f."""

    base: TestFunction
    s: float
    t: float

    def __post_init__(self):
        if self.base.n != 2:
            raise ParameterError("increment functions are defined for n = 2")
        if not (0.0 <= self.s <= self.t <= self.base.T):
            raise ParameterError("need 0 <= s <= t <= T")

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inner_t = np.all(pts <= self.t, axis=1)
        inner_s = np.all(pts <= self.s, axis=1)
        return self.base.evaluate(pts) * (inner_t & ~inner_s)

    def l2_norm_sq(self) -> float:
        return increment_l2(self.base, self.s, self.t)


def symmetrize(f: TestFunction, cell_budget: int = DEFAULT_CELL_BUDGET) -> TestFunction:
    """Average of f over all coordinate permutations."""
    if f.n == 1 or isinstance(f, NamedClosedForm):
        return f
    perms = list(itertools.permutations(range(f.n)))
    if isinstance(f, StepRectangles):
        weights: dict = {}
        for term in f.terms:
            for p in perms:
                rect = tuple(term.rect[i] for i in p)
                weights[rect] = weights.get(rect, 0.0) + term.alpha / len(perms)
        terms = tuple(Term(a, r) for r, a in weights.items() if a != 0.0)
        return StepRectangles(f.n, f.T, terms)
    if isinstance(f, TensorProduct):
        m = math.lcm(*(len(g) for g in f.factors))
        f = to_uniform_grid(f, m, cell_budget)
    if isinstance(f, UniformGrid):
        acc = np.zeros_like(f.values)
        for p in perms:
            acc += np.transpose(f.values, p)
        return UniformGrid(f.n, f.T, acc / len(perms))
    raise TypeError(f"cannot symmetrize {type(f).__name__}")


def to_uniform_grid(f: TestFunction, m: int, cell_budget: int = DEFAULT_CELL_BUDGET) -> UniformGrid:
    """Midpoint-rule projection onto m cells per axis."""
    m = int(m)
    if m < 1:
        raise ParameterError("need at least one cell per axis")
    if m**f.n > cell_budget:
        raise ResourceError(f"{m}^{f.n} grid cells exceed the budget of {cell_budget}")
    if isinstance(f, UniformGrid) and f.m == m:
        return f
    centers = (np.arange(m) + 0.5) * (f.T / m)
    if isinstance(f, TensorProduct):
        vals = np.ones((m,) * f.n)
        for i in range(f.n):
            shape = [1] * f.n
            shape[i] = m
            vals = vals * f._factor(i, centers).reshape(shape)
        return UniformGrid(f.n, f.T, vals)
    mesh = np.stack(np.meshgrid(*([centers] * f.n), indexing="ij"), axis=-1)
    vals = f._values(mesh.reshape(-1, f.n)).reshape((m,) * f.n)
    return UniformGrid(f.n, f.T, vals)


def grid_to_csv(f: UniformGrid, path) -> None:
    """Header ``n,m,T``, then one row per last-axis slice in row-major order."""
    path = Path(path)
    lines = ["n,m,T", f"{f.n},{f.m},{f.T!r}"]
    for row in f.values.reshape(-1, f.m):
        lines.append(",".join("%.17g" % v for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def grid_from_csv(path) -> UniformGrid:
    path = Path(path)
    rows = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(rows) < 2 or rows[0].replace(" ", "") != "n,m,T":
        raise PreconditionError(f"{path}: missing 'n,m,T' header")
    try:
        n_s, m_s, t_s = rows[1].split(",")
        n, m, T = int(n_s), int(m_s), float(t_s)
        data = np.array([[float(v) for v in r.split(",")] for r in rows[2:]], dtype=float)
    except ValueError as exc:
        raise PreconditionError(f"{path}: malformed grid file ({exc})") from None
    if data.size != m**n:
        raise PreconditionError(f"{path}: expected {m**n} values, found {data.size}")
    return UniformGrid(n, T, data.reshape((m,) * n))
