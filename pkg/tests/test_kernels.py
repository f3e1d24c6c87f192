import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaos_approx.errors import DomainError, ParameterError, PreconditionError
from chaos_approx.kernels import (
    KernelKind,
    KernelPath,
    XiDistribution,
    cell_weights,
    eta_at,
    sample_donsker,
    sample_kac_stroock,
    sample_path,
)


class FixedDraws:
    """Stand-in generator returning prescribed Rademacher signs."""

    def __init__(self, signs):
        self.signs = np.asarray(signs)

    def integers(self, lo, hi, size):
        assert size == len(self.signs)
        return (self.signs + 1) // 2


def test_donsker_unit_eps_values():
    p = sample_donsker(1.0, 3.0, XiDistribution.RADEMACHER, FixedDraws([1, -1, 1]))
    np.testing.assert_array_equal(p.breakpoints, [0, 1, 2, 3])
    np.testing.assert_array_equal(p.values, [1, -1, 1])


def test_donsker_half_eps_scaling():
    p = sample_donsker(0.5, 1.0, XiDistribution.RADEMACHER, FixedDraws([1, 1, -1, 1]))
    np.testing.assert_allclose(p.breakpoints, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(p.values, [2, 2, -2, 2])


def test_donsker_partial_last_interval():
    p = sample_donsker(0.3, 1.0, rng=np.random.default_rng(0))
    # 1 / 0.09 is not an integer; the final short interval still gets a draw
    assert len(p.values) == math.ceil(1 / 0.09)
    assert p.breakpoints[-1] == 1.0
    np.testing.assert_allclose(p.breakpoints[1:-1], np.arange(1, 12) * 0.09)


def test_eta_examples():
    p = sample_donsker(1.0, 3.0, XiDistribution.RADEMACHER, FixedDraws([1, -1, 1]))
    assert eta_at(p, 0.0) == 0.0
    assert eta_at(p, 2.5) == pytest.approx(0.5)
    assert eta_at(p, 3.0) == pytest.approx(float(np.sum(p.values * np.diff(p.breakpoints))))


def test_eta_domain():
    p = sample_donsker(0.5, 1.0, rng=np.random.default_rng(1))
    with pytest.raises(DomainError):
        eta_at(p, 1.5)
    with pytest.raises(DomainError):
        eta_at(p, -0.1)


def test_cell_weights_examples():
    const = KernelPath(KernelKind.DONSKER, 0.5, 2.0, np.array([0.0, 2.0]), np.array([3.0]))
    np.testing.assert_allclose(cell_weights(const, [0.0, 2.0]), [6.0])
    p = sample_donsker(1.0, 3.0, XiDistribution.RADEMACHER, FixedDraws([1, -1, 1]))
    np.testing.assert_allclose(cell_weights(p, [0, 1, 2, 3]), [1, -1, 1])


def test_cell_weights_needs_refinement():
    p = sample_donsker(0.5, 1.0, rng=np.random.default_rng(2))
    with pytest.raises(PreconditionError):
        cell_weights(p, [0.0, 0.3, 1.0])


def test_bad_parameters():
    with pytest.raises(ParameterError):
        sample_donsker(0.0, 1.0)
    with pytest.raises(ParameterError):
        sample_kac_stroock(0.5, -1.0)


def test_kac_stroock_structure():
    p = sample_kac_stroock(0.3, 1.0, np.random.default_rng(3))
    assert p.values[0] == pytest.approx(1 / 0.3)
    assert np.all(np.abs(p.values) == pytest.approx(1 / 0.3))
    assert np.all(p.values[1:] * p.values[:-1] < 0)
    assert np.all(np.diff(p.breakpoints) > 0)


def test_path_immutable():
    p = sample_kac_stroock(0.3, 1.0, np.random.default_rng(3))
    with pytest.raises(ValueError):
        p.values[0] = 0.0


def test_determinism():
    for kind in KernelKind:
        a = sample_path(kind, 0.2, 1.0, np.random.default_rng(11))
        b = sample_path(kind, 0.2, 1.0, np.random.default_rng(11))
        assert a == b


@pytest.mark.parametrize("xi", list(XiDistribution))
def test_xi_moments(xi):
    x = xi.sample(np.random.default_rng(5), 200_000)
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean()) < 4 * se
    assert abs((x * x).mean() - 1.0) <= 4 * (x * x).std() / math.sqrt(len(x)) + 1e-12
    assert np.isfinite(xi.fourth_moment)


def test_donsker_eta_variance():
    rng = np.random.default_rng(6)
    eta = np.array([eta_at(sample_donsker(0.1, 1.0, rng=rng), 1.0) for _ in range(10_000)])
    se = np.std(eta**2, ddof=1) / math.sqrt(len(eta))
    assert abs(np.mean(eta**2) - 1.0) < 4 * se


def test_kac_stroock_jump_count():
    rng = np.random.default_rng(7)
    counts = np.array([len(sample_kac_stroock(1.0, 1.0, rng).breakpoints) - 2 for _ in range(10_000)])
    assert abs(counts.mean() - 1.0) < 4 * counts.std() / math.sqrt(len(counts))


def test_kac_stroock_covariance_example():
    rng = np.random.default_rng(8)
    eps, x, y = 0.5, 0.1, 0.2
    prod = np.array([np.prod(sample_kac_stroock(eps, 1.0, rng).theta_at([x, y])) for _ in range(100_000)])
    exact = 4.0 * math.exp(-0.8)
    assert abs(prod.mean() - exact) < 4 * prod.std() / math.sqrt(len(prod))


def test_kac_stroock_eta_second_moment():
    rng = np.random.default_rng(9)
    eps, t = 0.3, 0.5
    eta = np.array([eta_at(sample_kac_stroock(eps, 1.0, rng), t) for _ in range(20_000)])
    exact = t - 0.5 * eps**2 * (1 - math.exp(-2 * t / eps**2))
    assert abs(np.mean(eta**2) - exact) < 4 * np.std(eta**2) / math.sqrt(len(eta))


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(list(KernelKind)),
    eps=st.floats(0.1, 0.9),
    seed=st.integers(0, 2**32 - 1),
    cuts=st.lists(st.floats(0.01, 0.99), max_size=6),
    t=st.floats(0.05, 1.0),
)
def test_cell_weights_sum_to_eta(kind, eps, seed, cuts, t):
    p = sample_path(kind, eps, 1.0, np.random.default_rng(seed))
    inner = p.breakpoints[(p.breakpoints > 0) & (p.breakpoints < t)]
    extra = [c for c in cuts if c < t]
    part = np.unique(np.concatenate(([0.0], inner, extra, [t])))
    part = part[np.concatenate(([True], np.diff(part) > 1e-12))]
    part[-1] = t
    w = cell_weights(p, part)
    scale = np.abs(w).sum() + 1e-300
    assert abs(w.sum() - eta_at(p, t)) <= 1e-12 * scale
