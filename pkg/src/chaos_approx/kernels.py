"""Donsker and Kac-Stroock kernel paths.

A kernel path is the piecewise-constant derivative ``theta`` of an absolutely
continuous approximation ``eta(t) = int_0^t theta(s) ds`` of Brownian motion.
Paths are stored explicitly as breakpoints and levels so every downstream
integral is exact and replayable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, PreconditionError

SQRT3 = math.sqrt(3.0)
# tolerance when matching breakpoints against partition points
MATCH_TOL = 1e-14


class XiDistribution(enum.Enum):
    """Law of the i.i.d. Donsker innovations; all have mean 0 and variance 1."""

    RADEMACHER = "rademacher"
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self is XiDistribution.RADEMACHER:
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        if self is XiDistribution.GAUSSIAN:
            return rng.standard_normal(size)
        return rng.uniform(-SQRT3, SQRT3, size=size)

    @property
    def fourth_moment(self) -> float:
        return {"rademacher": 1.0, "gaussian": 3.0, "uniform": 9.0 / 5.0}[self.value]


class KernelKind(enum.Enum):
    DONSKER = "donsker"
    KAC_STROOCK = "kac_stroock"


@dataclass(frozen=True, eq=False)
class KernelPath:
    """One realization of theta_eps on [0, T].

    ``values[i]`` is the level of theta on ``[breakpoints[i], breakpoints[i+1])``.
    """

    kind: KernelKind
    epsilon: float
    T: float
    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.breakpoints, dtype=float)
        v = np.ascontiguousarray(self.values, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or len(v) != len(b) - 1 or len(v) == 0:
            raise PreconditionError("need len(values) == len(breakpoints) - 1 >= 1")
        if b[0] != 0.0 or b[-1] != self.T or np.any(np.diff(b) <= 0):
            raise PreconditionError("breakpoints must increase strictly from 0 to T")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("kernel levels must be finite")
        b.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        cum = np.concatenate(([0.0], np.cumsum(v * np.diff(b))))
        cum.flags.writeable = False
        object.__setattr__(self, "_cumulative", cum)

    @property
    def interior_breakpoints(self) -> np.ndarray:
        return self.breakpoints[1:-1]

    def theta_at(self, x) -> np.ndarray:
        """Level of theta at ``x`` (right-continuous)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def __eq__(self, other):
        if not isinstance(other, KernelPath):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.epsilon == other.epsilon
            and self.T == other.T
            and np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _check_params(epsilon: float, T: float) -> None:
    if not (epsilon > 0.0) or not math.isfinite(epsilon):
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if not (T > 0.0) or not math.isfinite(T):
        raise ParameterError(f"horizon T must be positive, got {T}")


def donsker_breakpoints(epsilon: float, T: float) -> np.ndarray:
    """Multiples of eps^2 in (0, T), framed by 0 and T."""
    step = epsilon * epsilon
    count = math.ceil(T / step - 1e-9)
    b = np.arange(count + 1, dtype=float) * step
    b[-1] = T
    return b


def sample_donsker(
    epsilon: float,
    T: float,
    xi: XiDistribution = XiDistribution.RADEMACHER,
    rng: np.random.Generator | None = None,
) -> KernelPath:
    """Donsker kernel: theta(s) = xi_k / eps on the k-th interval of length eps^2."""
    _check_params(epsilon, T)
    rng = np.random.default_rng() if rng is None else rng
    b = donsker_breakpoints(epsilon, T)
    xis = XiDistribution(xi).sample(rng, len(b) - 1)
    return KernelPath(KernelKind.DONSKER, float(epsilon), float(T), b, xis / epsilon)


def sample_kac_stroock(
    epsilon: float, T: float, rng: np.random.Generator | None = None
) -> KernelPath:
    """Kac-Stroock kernel: theta(x) = (-1)^N(x/eps^2) / eps, N a unit Poisson process."""
    _check_params(epsilon, T)
    rng = np.random.default_rng() if rng is None else rng
    horizon = T / (epsilon * epsilon)
    chunk = int(horizon + 6.0 * math.sqrt(horizon) + 16)
    clock = np.cumsum(rng.exponential(size=chunk))
    while clock[-1] < horizon:
        clock = np.concatenate((clock, clock[-1] + np.cumsum(rng.exponential(size=chunk))))
    interior = clock[clock < horizon] * (epsilon * epsilon)
    # a jump landing within rounding of T would create a degenerate interval
    interior = interior[(interior > 0.0) & (interior < T)]
    b = np.concatenate(([0.0], interior, [T]))
    signs = np.where(np.arange(len(b) - 1) % 2 == 0, 1.0, -1.0)
    return KernelPath(KernelKind.KAC_STROOCK, float(epsilon), float(T), b, signs / epsilon)


def sample_path(
    kind: KernelKind,
    epsilon: float,
    T: float,
    rng: np.random.Generator,
    xi: XiDistribution = XiDistribution.RADEMACHER,
) -> KernelPath:
    if KernelKind(kind) is KernelKind.DONSKER:
        return sample_donsker(epsilon, T, xi, rng)
    return sample_kac_stroock(epsilon, T, rng)


def eta_at(path: KernelPath, t) -> float | np.ndarray:
    """int_0^t theta(s) ds, exact for the piecewise-constant path."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0.0) or np.any(tt > path.T) or not np.all(np.isfinite(tt)):
        raise DomainError(f"t must lie in [0, {path.T}]")
    idx = np.clip(np.searchsorted(path.breakpoints, tt, side="right") - 1, 0, len(path.values) - 1)
    out = path._cumulative[idx] + path.values[idx] * (tt - path.breakpoints[idx])
    return float(out) if out.ndim == 0 else out


def cell_weights(path: KernelPath, partition) -> np.ndarray:
    """Integral of theta over each cell of ``partition`` (0 = p_0 < ... < p_m = t).

    The partition must contain every path breakpoint in (0, t) so theta is
    constant on each cell.
    """
    p = np.asarray(partition, dtype=float)
    if p.ndim != 1 or len(p) < 2 or p[0] != 0.0 or np.any(np.diff(p) <= 0):
        raise PreconditionError("partition must increase strictly from 0")
    t = p[-1]
    if t > path.T:
        raise DomainError(f"partition end {t} exceeds horizon {path.T}")
    inner = path.breakpoints[(path.breakpoints > 0.0) & (path.breakpoints < t - MATCH_TOL)]
    if len(inner):
        pos = np.clip(np.searchsorted(p, inner), 1, len(p) - 1)
        near = np.minimum(np.abs(p[pos] - inner), np.abs(p[pos - 1] - inner))
        if np.any(near > MATCH_TOL):
            raise PreconditionError("partition does not refine the kernel breakpoints")
    mid = 0.5 * (p[:-1] + p[1:])
    return path.theta_at(mid) * np.diff(p)
