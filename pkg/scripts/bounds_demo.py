"""Check the excess-risk sandwich on random discrete distributions and
report the tightest margins seen at each tau."""

import argparse

import numpy as np

from expectnn import core


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    summary = core.bounds_suite(args.trials, args.seed)
    print(f"lemma    {summary['lemma1_passed']}/{args.trials}")
    print(f"theorem  {summary['theorem1_passed']}/{args.trials}")

    # how tight the two constants are: ratio of excess risk to squared distance
    rng = np.random.default_rng(args.seed)
    print("tau    c_low   min ratio   max ratio   c_high")
    for tau in core.BOUNDS_TAUS:
        lvl = core.ExpectileLevel(tau)
        ratios = []
        for _ in range(200):
            dist = core.random_discrete_dist(rng)
            t = rng.uniform(-10, 10)
            r = core.lemma1_check(dist, t, tau)
            d2 = (t - r.t_star) ** 2
            if d2 > 1e-12:
                ratios.append(r.excess / d2)
        print(f"{tau:<5g} {lvl.c_low:7.3f} {min(ratios):10.4f} {max(ratios):10.4f} {lvl.c_high:8.3f}")


if __name__ == "__main__":
    main()
