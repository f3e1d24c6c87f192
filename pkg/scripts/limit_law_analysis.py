"""How far the fixed-epsilon band law sits from the limit, for f = 1 on [0, 1]^2.

Removing the band |x - y| <= eps turns Y into something whose Brownian
counterpart is I_2(1{|x - y| > eps}) = 2 int_eps^1 W(t - eps) dW(t), with
second moment 2 (1 - eps)^2 instead of 2. This script samples that law on a
fine grid and reports its KS distance to W(1)^2 - 1 and its second moment,
next to the simulated Y for both kernels.

    python scripts/limit_law_analysis.py --count 10000
"""

import argparse

import numpy as np

from chaos_approx import stats
from chaos_approx.offdiag import QuadratureConfig
from chaos_approx.testfunctions import one


def band_law(eps, count, h, rng):
    n = round(1.0 / h)
    lag = round(eps / h)
    out = np.empty(count)
    for i in range(count):
        dW = rng.normal(0.0, np.sqrt(h), n)
        W = np.concatenate(([0.0], np.cumsum(dW)))
        # W at the left end of the band, t_j - eps
        out[i] = 2.0 * np.dot(W[: n - lag], dW[lag:])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--count", type=int, default=10_000)
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.5, 0.3, 0.2, 0.1, 0.05])
    ap.add_argument("--skip-kernels", action="store_true", help="only sample the Brownian band law")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    w = rng.standard_normal(args.count)
    limit = w * w - 1.0
    print(f"{'eps':>6} {'KS(band,lim)':>13} {'m2 band':>9} {'2(1-eps)^2':>11} {'KS(donsker)':>12} {'KS(kac)':>9}")
    for eps in args.epsilons:
        b = band_law(eps, args.count, args.h, rng)
        row = f"{eps:6.3f} {stats.ks_distance(b, limit):13.4f} {np.mean(b * b):9.4f} {2 * (1 - eps) ** 2:11.4f}"
        if not args.skip_kernels:
            for kind in ("donsker", "kac_stroock"):
                Y = stats.simulate([one(2)], kind, eps, [1.0], args.count, QuadratureConfig(), args.seed)[:, 0]
                row += f" {stats.ks_distance(Y, limit):{12 if kind == 'donsker' else 9}.4f}"
        print(row)
    print(f"1% two-sample KS critical value at this count: {stats.ks_critical(args.count, args.count):.4f}")


if __name__ == "__main__":
    main()
