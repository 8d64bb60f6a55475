"""Planned levels, sample counts and modeled cost along an epsilon ladder."""

import argparse
import math

from roughmlmc.mlmc import (
    MlmcConstants,
    classical_exponent,
    mlmc_exponent,
    modeled_cost,
    plan_mlmc,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=float, default=0.3)
    ap.add_argument("--beta", type=float, default=0.6)
    ap.add_argument("--h0", type=float, default=1 / 64)
    ap.add_argument("--M", type=int, default=2)
    args = ap.parse_args()
    c = MlmcConstants(1.0, 1.0, 1.0, 1.0, args.alpha, args.beta)
    print(f"exponents: mlmc {mlmc_exponent(c.alpha, c.beta):.4f}, classical {classical_exponent(c.alpha):.4f}")
    print("epsilon,L,d1,N_0,N_L,modeled_cost")
    for k in range(2, 9):
        eps = 0.1 * 2.0**-k
        plan = plan_mlmc(eps, c, args.h0, args.M)
        d1 = "nan" if plan.d1 is None else f"{plan.d1:.4f}"
        print(f"{eps!r},{plan.L},{d1},{plan.samples[0]},{plan.samples[-1]},{modeled_cost(plan, c)!r}")
    if math.isclose(c.alpha, c.beta / 2):
        print("d1 chosen by minimizing the leading cost coefficient")


if __name__ == "__main__":
    main()
