"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one PASS/FAIL line (collected in the pytest terminal
summary) and then asserts the same verdict. Run standalone with
``python tests/test_acceptance.py``.
"""

import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from chaos_approx import stats
from chaos_approx.kernels import KernelKind, XiDistribution, sample_path
from chaos_approx.offdiag import QuadratureConfig, evaluate_Y_batch
from chaos_approx.reference import hermite_closed_form, iterated_ito_n2, sample_brownian
from chaos_approx.testfunctions import (
    NamedClosedForm,
    NamedForm,
    StepRectangles,
    Term,
    UniformGrid,
    l2_norm_sq,
    one,
    symmetrize,
)

from acceptance_log import record
from oracles import dense_riemann_n2, iterated_ito_n3, increment_product

ROOT = Path(__file__).resolve().parents[1]
SCHEDULE = [0.5, 0.3, 0.2, 0.1]
KINDS = [KernelKind.DONSKER, KernelKind.KAC_STROOCK]

# five elementary functions, interval gaps >= 0.2, endpoints on a 1/20 grid
ELEMENTARY = [
    StepRectangles(2, 1.0, (Term(1.0, ((0.0, 0.2), (0.4, 0.7))),)),
    StepRectangles(2, 1.0, (Term(-2.5, ((0.7, 1.0), (0.1, 0.45))),)),
    StepRectangles(2, 1.0, (Term(1.0, ((0.0, 0.25), (0.5, 0.75))), Term(1.0, ((0.5, 0.75), (0.0, 0.25))))),
    StepRectangles(2, 1.0, (Term(3.0, ((0.05, 0.15), (0.35, 0.55))), Term(-1.0, ((0.6, 0.7), (0.9, 1.0))))),
    StepRectangles(2, 1.0, (Term(0.5, ((0.0, 0.3), (0.5, 1.0))), Term(2.0, ((0.8, 0.95), (0.2, 0.55))), Term(-1.5, ((0.3, 0.4), (0.65, 0.8))))),
]
ALIGNED = QuadratureConfig(grid_m=20)

SMOOTH = {
    NamedForm.ONE: lambda x, y: np.ones_like(x),
    NamedForm.SUM_COORDS: lambda x, y: x + y,
    NamedForm.PRODUCT_COORDS: lambda x, y: x * y,
    NamedForm.EXP_NEG_SUM: lambda x, y: np.exp(-(x + y)),
}


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_1_elementary_exact():
    def run():
        worst = 0.0
        rng = np.random.default_rng(101)
        for kind in KINDS:
            paths = [sample_path(kind, 0.1, 1.0, rng) for _ in range(100)]
            for f in ELEMENTARY:
                assert f.elementary and f.min_gap() >= 0.2 - 1e-12
                Y = evaluate_Y_batch(f, paths, [0.5, 1.0], ALIGNED)
                for i, p in enumerate(paths):
                    for j, t in enumerate((0.5, 1.0)):
                        expect, scale = increment_product(f, p, t)
                        worst = max(worst, abs(Y[i, j] - expect) / scale if scale > 0 else abs(Y[i, j]))
        return worst

    worst, secs = timed(run)
    ok = worst <= 1e-10 and secs < 10
    record(1, "exact elementary agreement", ok, f"max rel err {worst:.2e} (tol 1e-10), {secs:.1f}s (< 10s)")
    assert ok


def random_symmetric_grid(m=16, seed=7):
    rng = np.random.default_rng(seed)
    return symmetrize(UniformGrid(2, 1.0, rng.uniform(-1, 1, size=(m, m))))


@pytest.mark.slow
def test_criterion_2_donsker_bound():
    fs = {
        "one": one(2),
        "sum_coords": NamedClosedForm(2, 1.0, NamedForm.SUM_COORDS),
        "elementary": ELEMENTARY[0],
        "sym_grid16": random_symmetric_grid(),
    }

    def run():
        out = {}
        for name, f in fs.items():
            v, moments = stats.check_second_moment_bound(
                f, KernelKind.DONSKER, SCHEDULE, [0.5, 1.0], 5000, rng=202, xi=XiDistribution.RADEMACHER
            )
            bound = 2 * l2_norm_sq(f)
            slack = max(m.m2 - bound - 3 * m.m2_se for m in moments)
            out[name] = (slack <= 0, slack)
        return out

    out, secs = timed(run)
    ok = all(p for p, _ in out.values()) and secs < 180
    detail = ", ".join(f"{k}: max(m2 - 2||f||^2 - 3se)={s:.3g}" for k, (_, s) in out.items())
    record(2, "Donsker second-moment bound", ok, f"{detail}; {secs:.1f}s (< 180s)")
    assert ok


COV_PAIRS = [(0.1, 0.1), (0.1, 0.12), (0.1, 0.15), (0.1, 0.2), (0.3, 0.32), (0.3, 0.4), (0.5, 0.52), (0.5, 0.55), (0.7, 0.75), (0.2, 0.8)]


def test_criterion_3_kac_stroock_covariance():
    v, secs = timed(lambda: stats.covariance_check([0.5, 0.2], COV_PAIRS, 100_000, T=1.0, rng=303, z_max=4.0))
    ok = v.passed and secs < 60
    record(3, "Kac-Stroock covariance", ok, f"max z {v.statistic:.2f} (tol 4), {secs:.1f}s (< 60s)")
    assert ok


@pytest.mark.slow
def test_criterion_4_weak_convergence_n2():
    def run():
        out = {}
        for kind in KINDS:
            reports, v = stats.fdd_convergence_test(
                one(2), kind, SCHEDULE, [1.0], 10_000, rng=404, energy_threshold=math.inf
            )
            ks_seq = v.extras["ks_sequence"]
            final = v.extras["moments"][-1]
            m2_ok = abs(final["m2"] - 2.0) <= 3 * final["m2_se"] + 0.1
            out[kind.value] = dict(
                ks=ks_seq[-1],
                ks_ok=ks_seq[-1] < 0.05,
                mono=v.extras["monotone"],
                m2=final["m2"],
                m2_se=final["m2_se"],
                m2_ok=m2_ok,
                seq=ks_seq,
            )
        return out

    out, secs = timed(run)
    ok = all(r["ks_ok"] and r["mono"] and r["m2_ok"] for r in out.values()) and secs < 300
    detail = "; ".join(
        f"{k}: KS(eps=0.1)={r['ks']:.4f} (< 0.05: {r['ks_ok']}), KS seq {[round(s, 4) for s in r['seq']]} "
        f"monotone={r['mono']}, m2={r['m2']:.4f}+-{r['m2_se']:.4f} (|m2-2| <= 3se+0.1: {r['m2_ok']})"
        for k, r in out.items()
    )
    record(4, "weak convergence n=2", ok, f"{detail}; {secs:.1f}s (< 300s)")
    assert ok


@pytest.mark.slow
def test_criterion_5_vector_convergence():
    fs = [ELEMENTARY[0], one(2)]

    def run():
        out = {}
        for kind in KINDS:
            _, v = stats.vector_fdd_test(fs, kind, SCHEDULE, [1.0], 5000, rng=505)
            out[kind.value] = v
        return out

    out, secs = timed(run)
    ok = all(v.passed for v in out.values()) and secs < 300
    detail = "; ".join(f"{k}: energy={v.statistic:.4g} vs null 99% {v.threshold:.4g}" for k, v in out.items())
    record(5, "vector convergence d=2", ok, f"{detail}; {secs:.1f}s (< 300s)")
    assert ok


@pytest.mark.slow
def test_criterion_6_tightness():
    pairs = [(0.0, 0.5), (0.25, 0.75), (0.5, 1.0)]

    def run():
        return {
            kind.value: stats.tightness_fourth_moment_test(
                one(2), kind, [0.5, 0.3, 0.2], pairs, 5000, rng=606, xi=XiDistribution.RADEMACHER
            )
            for kind in KINDS
        }

    out, secs = timed(run)
    ok = all(v.passed for v in out.values()) and secs < 300
    detail = "; ".join(f"{k}: max ratio at eps=0.2 {v.statistic:.3g} vs {v.threshold:.3g}" for k, v in out.items())
    record(6, "tightness fourth-moment shadow", ok, f"{detail}; {secs:.1f}s (< 300s)")
    assert ok


GRID_STEP = StepRectangles(
    2,
    1.0,
    (
        Term(2.0, ((0.0, 0.25), (0.5, 1.0))),
        Term(-1.0, ((0.5, 1.0), (0.0, 0.25))),
        Term(0.75, ((0.75, 1.0), (0.0, 0.5))),
        # wholly inside the eps-band, contributes nothing
        Term(4.0, ((0.25, 0.3125), (0.25, 0.3125))),
    ),
)


def step_values(x, y):
    return GRID_STEP.evaluate(np.stack([x.ravel(), y.ravel()], axis=1)).reshape(x.shape)


def test_criterion_7_oracle_equivalence():
    eps = 0.1

    def run():
        rng = np.random.default_rng(707)
        smooth_worst, step_worst = 0.0, 0.0
        for kind in KINDS:
            paths = [sample_path(kind, eps, 1.0, rng) for _ in range(50)]
            for name, fn in SMOOTH.items():
                Y = evaluate_Y_batch(NamedClosedForm(2, 1.0, name), paths, [1.0])[:, 0]
                for y, p in zip(Y, paths):
                    o, scale = dense_riemann_n2(fn, p, 1.0, eps, div=8)
                    smooth_worst = max(smooth_worst, abs(y - o) / scale)
            Y = evaluate_Y_batch(GRID_STEP, paths, [1.0], QuadratureConfig(grid_m=16))[:, 0]
            for y, p in zip(Y, paths):
                o, scale = dense_riemann_n2(step_values, p, 1.0, eps, div=8)
                step_worst = max(step_worst, abs(y - o) / scale)
        return smooth_worst, step_worst

    (smooth_worst, step_worst), secs = timed(run)
    ok = smooth_worst <= 1e-3 and step_worst <= 1e-10 and secs < 60
    record(
        7,
        "oracle equivalence",
        ok,
        f"smooth max |Y-O|/L1 {smooth_worst:.2e} (tol 1e-3), grid-aligned step {step_worst:.2e} (tol 1e-10), "
        f"{secs:.1f}s (< 60s)",
    )
    assert ok


def test_criterion_8_reference_consistency():
    h = 1e-4

    def run():
        rng = np.random.default_rng(808)
        worst2, worst3 = 0.0, 0.0
        for _ in range(100):
            W = sample_brownian(h, 1.0, rng)
            w = W.cumulative[-1]
            got = iterated_ito_n2(one(2), W, [1.0], grid_m=1).values[0]
            worst2 = max(worst2, abs(got - (w * w - 1.0)) / (5 * math.sqrt(2 * h)))
            i3 = iterated_ito_n3(W.increments)
            worst3 = max(worst3, abs(hermite_closed_form(3, 1.0, w) - i3) / (10 * math.sqrt(h) * (1 + abs(w) ** 3)))
        return worst2, worst3

    (w2, w3), secs = timed(run)
    ok = w2 <= 1 and w3 <= 1 and secs < 60
    record(8, "reference self-consistency", ok, f"n=2 err/tol {w2:.3f}, n=3 err/tol {w3:.3f} (<= 1), {secs:.1f}s (< 60s)")
    assert ok


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    plan = ROOT / "plans" / "determinism.json"
    outputs = []
    for threads in ("1", "8"):
        out = tmp_path / f"report_{threads}.json"
        env = dict(os.environ, CHAOS_APPROX_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "chaos_approx.cli", "report", str(plan), "--seed", "42", "--out", str(out)],
            env=env,
            capture_output=True,
            text=True,
        )
        assert proc.returncode in (0, 1), proc.stderr
        lines = [ln for ln in out.read_text().splitlines() if '"wall_clock_seconds"' not in ln]
        outputs.append("\n".join(lines))
    same = outputs[0] == outputs[1]
    seed_ok = json.loads((tmp_path / "report_1.json").read_text())["seed"] == 42
    ok = same and seed_ok
    record(9, "determinism", ok, f"reports with 1 and 8 workers byte-identical (wall clock excluded): {same}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
