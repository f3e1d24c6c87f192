"""Samples of the limit law I_n(f 1_[0,t]^n).

Three routes, in order of preference:

* exact product of Brownian increments for elementary step functions,
* Hermite closed forms for f = 1 (n <= 3),
* a left-point iterated Ito sum for general n = 2 integrands.

The iterated sum only needs, per segment of the fine grid, the Brownian
increment D and the sum of squared fine increments Q. Batch sampling draws
(D, Q) per segment from their exact joint law instead of materialising every
fine increment: D ~ N(0, k h) and Q = D^2/k + h chi^2_{k-1}, independent parts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, DomainError, ParameterError, PreconditionError
from .testfunctions import (
    NamedClosedForm,
    NamedForm,
    StepRectangles,
    TestFunction,
    UniformGrid,
    symmetrize,
    to_uniform_grid,
)

DEFAULT_H_FRACTION = 1e-4
DEFAULT_GRID_M = 64


class LawTag(enum.Enum):
    EXACT_STEP = "exact_step"
    ITERATED_ITO = "iterated_ito"
    HERMITE = "hermite_closed_form"


@dataclass(frozen=True)
class BrownianGrid:
    step: float
    T: float
    increments: np.ndarray
    cumulative: np.ndarray

    def index(self, t: float) -> int:
        if not (0.0 <= t <= self.T + 1e-12):
            raise DomainError(f"time {t} outside [0, {self.T}]")
        return int(round(t / self.step))


@dataclass(frozen=True)
class ReferenceSample:
    values: np.ndarray
    law_tag: LawTag


def sample_brownian(h: float, T: float, rng: np.random.Generator) -> BrownianGrid:
    """Standard Brownian motion on a uniform grid of about T/h steps."""
    if not (0.0 < h <= T):
        raise ParameterError(f"need 0 < h <= T, got h={h}, T={T}")
    steps = max(1, int(round(T / h)))
    step = T / steps
    inc = rng.standard_normal(steps) * math.sqrt(step)
    cum = np.concatenate(([0.0], np.cumsum(inc)))
    return BrownianGrid(step, float(T), inc, cum)


def _require_elementary(f: TestFunction) -> StepRectangles:
    if not isinstance(f, StepRectangles) or not f.elementary:
        raise PreconditionError("exact step integrals need an elementary step function")
    return f


def _min_spacing(points) -> float:
    pts = np.unique(np.asarray(points, dtype=float))
    return float(np.min(np.diff(pts))) if len(pts) > 1 else math.inf


def _step_products(f: StepRectangles, w_at) -> np.ndarray:
    """sum_k alpha_k prod_i [w_at(b_k^i) - w_at(a_k^i)] with w_at vectorised."""
    total = 0.0
    for term in f.terms:
        prod = term.alpha
        for a, b in term.rect:
            prod = prod * (w_at(b) - w_at(a))
        total = total + prod
    return total


def exact_integral_step(f: TestFunction, W: BrownianGrid, times) -> ReferenceSample:
    """I_n(f 1_[0,t]^n) = sum_k alpha_k prod_i [W(b_k^i ^ t) - W(a_k^i ^ t)]."""
    f = _require_elementary(f)
    if W.step > _min_spacing(f.endpoints()) / 8.0:
        raise PreconditionError("grid step must be at most 1/8 of the smallest endpoint gap")
    out = []
    for t in times:
        W.index(t)
        out.append(_step_products(f, lambda x: W.cumulative[W.index(min(x, t))]))
    return ReferenceSample(np.array(out, dtype=float), LawTag.EXACT_STEP)


def _grid_for(f: TestFunction, grid_m: int | None) -> UniformGrid:
    if isinstance(f, UniformGrid) and grid_m is None:
        return f
    return to_uniform_grid(f, grid_m or DEFAULT_GRID_M)


def _ito2_from_segments(F: np.ndarray, seg_cell: np.ndarray, D: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """2 sum_{i<j} F ΔW_i ΔW_j grouped by segments: D^T F D - sum_s F_ss Q_s."""
    Fs = F[np.ix_(seg_cell, seg_cell)]
    quad = np.einsum("ps,st,pt->p", D, Fs, D)
    return quad - Q @ np.diag(Fs)


def iterated_ito_n2(f: TestFunction, W: BrownianGrid, times, grid_m: int | None = None) -> ReferenceSample:
    """Left-point discretisation of 2 int_0^t int_0^y f(x, y) dW(x) dW(y).

    f is projected onto its uniform grid first; the Brownian grid must refine it.
    """
    if f.n != 2:
        raise CapabilityError("iterated Ito reference is implemented for n = 2")
    if not f.is_symmetric:
        raise PreconditionError("iterated Ito reference needs a symmetric integrand")
    grid = _grid_for(f, grid_m)
    steps = len(W.increments)
    if steps % grid.m:
        raise PreconditionError(f"{steps} Brownian steps do not refine a {grid.m}-cell grid")
    per_cell = steps // grid.m
    out = []
    for t in times:
        k = W.index(t)
        inc = W.increments[:k]
        cell = np.arange(k) // per_cell
        D = np.bincount(cell, weights=inc, minlength=grid.m)[None, :]
        Q = np.bincount(cell, weights=inc * inc, minlength=grid.m)[None, :]
        out.append(_ito2_from_segments(grid.values, np.arange(grid.m), D, Q)[0])
    return ReferenceSample(np.array(out, dtype=float), LawTag.ITERATED_ITO)


def hermite_closed_form(n: int, t: float, w_t) -> float | np.ndarray:
    """I_n(1_[0,t]^n) as a polynomial in W(t)."""
    if n not in (1, 2, 3):
        raise ParameterError(f"closed form available for n in 1..3, got {n}")
    if not t > 0.0:
        raise ParameterError("t must be positive")
    w = np.asarray(w_t, dtype=float)
    if n == 1:
        out = w
    elif n == 2:
        out = w * w - t
    else:
        out = w**3 - 3.0 * t * w
    return float(out) if out.ndim == 0 else out


def reference_method(f: TestFunction) -> LawTag:
    """Best available route for f, or CapabilityError."""
    if isinstance(f, StepRectangles) and f.elementary:
        return LawTag.EXACT_STEP
    if isinstance(f, NamedClosedForm) and f.name is NamedForm.ONE and f.n <= 3:
        return LawTag.HERMITE
    if f.n == 2:
        return LawTag.ITERATED_ITO
    raise CapabilityError(f"no reference law for {type(f).__name__} with n={f.n}")


def _aligned_step(h: float, T: float, grids: list[int]) -> float:
    """Largest step <= h whose grid refines every f-grid in ``grids``."""
    m = math.lcm(*grids) if grids else 1
    cells = max(1, math.ceil(T / (m * h) - 1e-9))
    return T / (m * cells)


def reference_matrix(
    fs: list[TestFunction],
    times,
    count: int,
    h: float | None,
    rng: np.random.Generator,
    grid_m: int | None = None,
) -> tuple[np.ndarray, list[LawTag]]:
    """Joint samples of (I_{n_k}(f_k 1_[0,t]^{n_k}))_{k, t} on one Brownian path.

    Returns an array of shape (count, len(fs) * len(times)), columns ordered
    function-major, and the route used for each function.
    """
    if count < 0:
        raise ParameterError("count must be non-negative")
    times = [float(t) for t in times]
    T = fs[0].T
    if any(f.T != T for f in fs):
        raise ParameterError("all integrands must share the horizon")
    if any(not (0.0 <= t <= T) for t in times):
        raise DomainError(f"times must lie in [0, {T}]")
    tags = [reference_method(f) for f in fs]
    h = DEFAULT_H_FRACTION * T if h is None else float(h)

    grids: list[UniformGrid | None] = []
    for f, tag in zip(fs, tags):
        if tag is LawTag.ITERATED_ITO:
            grids.append(_grid_for(symmetrize(f) if not f.is_symmetric else f, grid_m))
        else:
            grids.append(None)
    h = _aligned_step(h, T, [g.m for g in grids if g is not None])
    for f, tag in zip(fs, tags):
        if tag is LawTag.EXACT_STEP and h > _min_spacing(f.endpoints()) / 8.0:
            raise PreconditionError("grid step must be at most 1/8 of the smallest endpoint gap")

    # skeleton points on the fine grid, as integer step indices
    marks = {0, *(int(round(t / h)) for t in times)}
    for f, tag, g in zip(fs, tags, grids):
        if tag is LawTag.EXACT_STEP:
            marks.update(int(round(x / h)) for x in f.endpoints())
        elif g is not None:
            marks.update(int(round(j * T / g.m / h)) for j in range(g.m + 1))
    top = max(int(round(t / h)) for t in times) if times else 0
    knots = np.array(sorted(k for k in marks if k <= top), dtype=np.int64)
    k_seg = np.diff(knots)
    S = len(k_seg)

    out = np.zeros((count, len(fs) * len(times)))
    if count == 0 or S == 0:
        return out, tags

    D = rng.standard_normal((count, S)) * np.sqrt(k_seg * h)
    chi = np.zeros((count, S))
    multi = k_seg > 1
    if np.any(multi):
        chi[:, multi] = rng.chisquare(k_seg[multi] - 1, size=(count, int(multi.sum())))
    Q = D * D / k_seg + h * chi
    Wk = np.concatenate((np.zeros((count, 1)), np.cumsum(D, axis=1)), axis=1)
    knot_pos = {int(k): i for i, k in enumerate(knots)}

    def w_at_index(k: int) -> np.ndarray:
        if k >= knots[-1]:
            return Wk[:, -1]
        return Wk[:, knot_pos[k]]

    r = len(times)
    for col_f, (f, tag, g) in enumerate(zip(fs, tags, grids)):
        for col_t, t in enumerate(times):
            kt = int(round(t / h))
            col = col_f * r + col_t
            if kt == 0:
                continue
            if tag is LawTag.EXACT_STEP:
                out[:, col] = _step_products(
                    f, lambda x: w_at_index(min(int(round(x / h)), kt))
                )
            elif tag is LawTag.HERMITE:
                out[:, col] = hermite_closed_form(f.n, t, w_at_index(kt))
            else:
                nseg = knot_pos[kt]
                mids = 0.5 * (knots[:nseg] + knots[1 : nseg + 1]) * h
                out[:, col] = _ito2_from_segments(g.values, g.cell_index(mids), D[:, :nseg], Q[:, :nseg])
    return out, tags


def sample_reference_law(
    f: TestFunction,
    times,
    count: int,
    h: float | None = None,
    rng: np.random.Generator | None = None,
    grid_m: int | None = None,
) -> list[ReferenceSample]:
    """``count`` independent reference samples at ``times``."""
    rng = np.random.default_rng() if rng is None else rng
    mat, tags = reference_matrix([f], times, count, h, rng, grid_m)
    return [ReferenceSample(row, tags[0]) for row in mat]
