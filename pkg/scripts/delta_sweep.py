"""Sweep the coercivity margin and report the empirical energy constants.

The noise strength beta is raised towards the coercivity limit b - beta^2/2 = delta,
so the margin shrinks; for each value the forward and backward max ratios
over random unit data are printed. Nothing is asserted: the dependence on
the margin is only reported.
"""

import argparse
import math


from bspde.estimates import energy_ratio_backward, energy_ratio_forward
from bspde.grid_ops import SpatialGrid, check_coercivity, coefficient_family
from bspde.time_noise import build_tree


def main():
    ap = argparse.ArgumentParser(description="coercivity-margin sweep of the energy ratios")
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--samples", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--margins", default="0.9,0.5,0.25,0.1,0.05,0.01")
    args = ap.parse_args()

    grid = SpatialGrid(0.0, 1.0, args.M)
    tree = build_tree(1, args.K, 1.0 / args.K)
    print(f"{'delta':>7} {'beta':>8} {'fwd max':>9} {'bwd max':>9}")
    for delta in (float(t) for t in args.margins.split(",")):
        # b = 1: 1 - beta^2 / 2 = delta; the checked constant sits a hair lower to absorb rounding
        beta = math.sqrt(2.0 * (1.0 - delta))
        coeffs = coefficient_family(grid, 1.0, args.K, 1, "sinusoidal", b=1.0, f=0.5, f_amp=0.3,
                                    lam=-0.5, beta=beta, delta=delta * (1 - 1e-9))
        assert check_coercivity(coeffs).margin < 1e-9
        f = energy_ratio_forward(coeffs, tree, -1, args.samples, args.seed)
        b = energy_ratio_backward(coeffs, tree, args.samples, args.seed)
        print(f"{delta:>7.3f} {beta:>8.4f} {f.max_ratio:>9.4f} {b.max_ratio:>9.4f}")


if __name__ == "__main__":
    main()
