"""Off-diagonal multiple integrals of f against a kernel path.

Computes

    Y(t) = int_{[0,t]^n} f(x) prod_i theta(x_i) prod_{i != j} 1{|x_i - x_j| > eps} dx

for piecewise-constant theta and cell-constant (gridded) f. On a partition
that refines both the kernel breakpoints and the f-grid, theta and f are
constant per cell tuple, so Y is a finite sum over cell tuples of

    f-value * prod(cell weights) * (fraction of the tuple off the eps-band).

For n = 2 the band fraction has a closed form (``EXACT_N2``); otherwise each
straddling tuple is resolved by its cell centres (``CELL_CENTER``). The dense
sum costs O(m'^n) for a partition of m' cells and is guarded by a cell budget.
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ParameterError, ResourceError
from .kernels import MATCH_TOL, KernelKind, KernelPath
from .streams import BLOCK_SIZE, block_ranges, worker_count
from .testfunctions import DEFAULT_CELL_BUDGET, TestFunction, UniformGrid, to_uniform_grid

# longdouble elements materialised per contraction chunk
_CHUNK_ELEMS = 4_000_000


class DiagonalRule(enum.Enum):
    CELL_CENTER = "cell_center"
    EXACT_N2 = "exact_n2"


@dataclass(frozen=True)
class QuadratureConfig:
    """Quadrature settings.

    ``diagonal_rule=None`` picks ``EXACT_N2`` for n = 2 and ``CELL_CENTER``
    otherwise. ``center_refine`` splits partition cells to length at most
    eps^2 / center_refine before the cell-centre rule is applied.
    """

    grid_m: int = 64
    diagonal_rule: DiagonalRule | None = None
    cell_budget: int = DEFAULT_CELL_BUDGET
    center_refine: int = 1

    def __post_init__(self):
        if int(self.grid_m) < 1:
            raise ConfigError("grid_m must be >= 1")
        if int(self.center_refine) < 1:
            raise ConfigError("center_refine must be >= 1")
        if self.diagonal_rule is not None:
            object.__setattr__(self, "diagonal_rule", DiagonalRule(self.diagonal_rule))

    def rule_for(self, n: int) -> DiagonalRule:
        if self.diagonal_rule is None:
            return DiagonalRule.EXACT_N2 if n == 2 else DiagonalRule.CELL_CENTER
        if self.diagonal_rule is DiagonalRule.EXACT_N2 and n != 2:
            raise ConfigError("EXACT_N2 is only defined for n = 2")
        return self.diagonal_rule


@dataclass(frozen=True)
class MergedPartition:
    points: np.ndarray
    cell_len_max: float

    @property
    def lo(self) -> np.ndarray:
        return self.points[:-1]

    @property
    def hi(self) -> np.ndarray:
        return self.points[1:]

    def __len__(self):
        return len(self.points) - 1


def _merge_points(breakpoints: np.ndarray, extra: np.ndarray, t: float) -> np.ndarray:
    # extra points within MATCH_TOL of a breakpoint snap onto it
    b = breakpoints[breakpoints < t - MATCH_TOL]
    if len(extra) and len(b):
        pos = np.searchsorted(b, extra)
        left = b[np.clip(pos - 1, 0, len(b) - 1)]
        right = b[np.clip(pos, 0, len(b) - 1)]
        nearest = np.where(np.abs(left - extra) <= np.abs(right - extra), left, right)
        extra = np.where(np.abs(nearest - extra) <= MATCH_TOL, nearest, extra)
    pts = np.unique(np.concatenate(([0.0], b, extra[(extra > 0.0) & (extra < t - MATCH_TOL)])))
    keep = np.concatenate(([True], np.diff(pts) > MATCH_TOL))
    return np.concatenate((pts[keep], [t]))


def build_partition(path: KernelPath, t: float, grid_m: int) -> MergedPartition:
    """Sorted union of kernel breakpoints, f-grid points and {0, t} on [0, t]."""
    if not (0.0 <= t <= path.T):
        raise DomainError(f"t must lie in [0, {path.T}]")
    if t == 0.0:
        return MergedPartition(np.array([0.0]), 0.0)
    grid = np.arange(1, int(grid_m)) * (path.T / int(grid_m))
    pts = _merge_points(path.breakpoints, grid, float(t))
    return MergedPartition(pts, float(np.max(np.diff(pts))))


def _refine(points: np.ndarray, max_len: float) -> np.ndarray:
    lens = np.diff(points)
    pieces = np.maximum(1, np.ceil(lens / max_len - 1e-9).astype(int))
    if np.all(pieces == 1):
        return points
    out = [points[:1]]
    for lo, ln, k in zip(points[:-1], lens, pieces):
        out.append(lo + ln * np.arange(1, k + 1) / k)
    out = np.concatenate(out)
    out[-1] = points[-1]
    return out


def _ramp_sq(z):
    r = np.maximum(z, 0.0)
    return 0.5 * r * r


def _band_area(lj, lk, shift, u):
    """Area of {(x, y) in [0,lj] x [0,lk] : x - y <= u - shift}."""
    v = u - shift
    clipped = (_ramp_sq(lj - v) - _ramp_sq(-v)) - (_ramp_sq(lj - v - lk) - _ramp_sq(-v - lk))
    return lk * lj - clipped


def band_fraction_exact(lo: np.ndarray, hi: np.ndarray, eps: float) -> np.ndarray:
    """Fraction of each cell pair (j, k) where |x - y| > eps, exactly."""
    a, b = lo[:, None], hi[:, None]
    c, d = lo[None, :], hi[None, :]
    lj, lk = b - a, d - c
    shift = a - c
    inside = _band_area(lj, lk, shift, eps) - _band_area(lj, lk, shift, -eps)
    frac = np.clip(1.0 - inside / (lj * lk), 0.0, 1.0)
    max_dist = np.maximum(b - c, d - a)
    min_dist = np.maximum(np.maximum(c - b, a - d), 0.0)
    frac = np.where(max_dist <= eps, 0.0, frac)
    return np.where(min_dist >= eps, 1.0, frac)


def band_mask_center(lo: np.ndarray, hi: np.ndarray, eps: float) -> np.ndarray:
    c = 0.5 * (lo + hi)
    return (np.abs(c[:, None] - c[None, :]) > eps).astype(float)


@dataclass
class _Geometry:
    """Per-partition data: cell lengths, kernel/grid lookup and the sum tensor."""

    lo: np.ndarray
    lens: np.ndarray
    kernel_idx: np.ndarray
    tensor: np.ndarray  # f-values times band fraction, shape (m',) * n


def _geometry(
    breakpoints: np.ndarray, grid: UniformGrid, t: float, eps: float, rule: DiagonalRule, cfg: QuadratureConfig
) -> _Geometry:
    n = grid.n
    T = grid.T
    gridpts = np.arange(1, grid.m) * (T / grid.m)
    pts = _merge_points(breakpoints, gridpts, t)
    if rule is DiagonalRule.CELL_CENTER and n >= 2:
        pts = _refine(pts, eps * eps / cfg.center_refine)
    m = len(pts) - 1
    if float(m) ** n > cfg.cell_budget:
        raise ResourceError(f"{m}^{n} cell tuples exceed the budget of {cfg.cell_budget}")
    lo, hi = pts[:-1], pts[1:]
    mid = 0.5 * (lo + hi)
    kernel_idx = np.clip(np.searchsorted(breakpoints, mid, side="right") - 1, 0, len(breakpoints) - 2)
    gidx = grid.cell_index(mid)
    tensor = grid.values[np.ix_(*([gidx] * n))].astype(float)
    if n >= 2:
        if rule is DiagonalRule.EXACT_N2:
            tensor = tensor * band_fraction_exact(lo, hi, eps)
        else:
            mask = band_mask_center(lo, hi, eps)
            for i, j in itertools.combinations(range(n), 2):
                shape = [1] * n
                shape[i] = shape[j] = m
                tensor = tensor * mask.reshape(shape)
    return _Geometry(lo, hi - lo, kernel_idx, tensor)


def _contract(tensor: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum over cell tuples of tensor * prod weights, one value per weight row.

    Accumulates in extended precision; each row is reduced independently so
    results do not depend on how rows are batched.
    """
    n = tensor.ndim
    m = tensor.shape[0]
    rows = weights.shape[0]
    out = np.empty(rows)
    if m == 0:
        out[:] = 0.0
        return out
    K = tensor.astype(np.longdouble)
    W = weights.astype(np.longdouble)
    if n == 1:
        for r in range(rows):
            out[r] = float((K * W[r]).sum())
        return out
    if n == 2:
        step = max(1, _CHUNK_ELEMS // (m * m))
        for lo in range(0, rows, step):
            w = W[lo : lo + step]
            inner = (K[None, :, :] * w[:, None, :]).sum(axis=-1)
            out[lo : lo + step] = (inner * w).sum(axis=-1).astype(float)
        return out
    for r in range(rows):
        acc = K
        for _ in range(n):
            acc = (acc * W[r]).sum(axis=-1)
        out[r] = float(acc)
    return out


def _prepare(f: TestFunction, paths, cfg: QuadratureConfig):
    if not paths:
        raise ParameterError("need at least one path")
    eps = paths[0].epsilon
    if any(p.epsilon != eps for p in paths) or any(p.kind != paths[0].kind for p in paths):
        raise ParameterError("all paths must share epsilon and kernel kind")
    if any(p.T != f.T for p in paths):
        raise ParameterError("path horizon must match the integrand horizon")
    rule = cfg.rule_for(f.n)
    grid = to_uniform_grid(f, cfg.grid_m, cfg.cell_budget)
    return eps, rule, grid


def evaluate_Y_batch(
    f: TestFunction,
    paths: list[KernelPath],
    times,
    cfg: QuadratureConfig | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """Matrix of Y values, one row per path and one column per time."""
    cfg = QuadratureConfig() if cfg is None else cfg
    paths = list(paths)
    times = [float(t) for t in times]
    eps, rule, grid = _prepare(f, paths, cfg)
    T = f.T
    for t in times:
        if not (0.0 <= t <= T):
            raise DomainError(f"time {t} outside [0, {T}]")

    out = np.zeros((len(paths), len(times)))
    shared = paths[0].kind is KernelKind.DONSKER and all(
        np.array_equal(p.breakpoints, paths[0].breakpoints) for p in paths
    )
    blocks = block_ranges(len(paths), BLOCK_SIZE)

    if shared:
        geoms = [None if t == 0.0 else _geometry(paths[0].breakpoints, grid, t, eps, rule, cfg) for t in times]

        def run(block):
            lo, hi = block
            levels = np.stack([p.values for p in paths[lo:hi]])
            for col, g in enumerate(geoms):
                if g is not None:
                    out[lo:hi, col] = _contract(g.tensor, levels[:, g.kernel_idx] * g.lens)

    else:

        def run(block):
            lo, hi = block
            for row in range(lo, hi):
                p = paths[row]
                for col, t in enumerate(times):
                    if t == 0.0:
                        continue
                    g = _geometry(p.breakpoints, grid, t, eps, rule, cfg)
                    w = (p.values[g.kernel_idx] * g.lens)[None, :]
                    out[row, col] = _contract(g.tensor, w)[0]

    nw = min(worker_count(workers), len(blocks))
    if nw <= 1:
        for b in blocks:
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            list(pool.map(run, blocks))
    return out


def evaluate_Y(f: TestFunction, path: KernelPath, t: float, cfg: QuadratureConfig | None = None) -> float:
    """Off-diagonal integral of f against one kernel path up to time t."""
    return float(evaluate_Y_batch(f, [path], [t], cfg, workers=1)[0, 0])
