"""Fourth-moment ratios E(Y(t) - Y(s))^4 / ||1_{[s,t]^2}||^4 for f = 1 across epsilon.

At eps = 0.5 the half-interval pairs lie almost wholly inside the band, so the
ratio starts near zero and climbs toward the limit value E(Z^2 - 1)^4 = 60
for (0, 0.5). Printing the table shows the ratios stay bounded.

    python scripts/tightness_ratios.py --kernel kac_stroock --count 5000
"""

import argparse
import json

from chaos_approx import stats
from chaos_approx.testfunctions import one


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kernel", default="donsker", choices=["donsker", "kac_stroock"])
    ap.add_argument("--count", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.5, 0.3, 0.2, 0.1])
    args = ap.parse_args()

    pairs = [(0.0, 0.5), (0.25, 0.75), (0.5, 1.0), (0.0, 1.0)]
    v = stats.tightness_fourth_moment_test(one(2), args.kernel, args.epsilons, pairs, args.count, rng=args.seed)
    print(json.dumps(v.extras["ratios"], indent=2))
    print(v.line())


if __name__ == "__main__":
    main()
