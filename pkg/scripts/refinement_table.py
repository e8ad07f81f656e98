"""Print the heat-equation refinement table and optionally write it as CSV.

    python3 scripts/refinement_table.py --h-levels 7,15,31,63 --out conv.csv
"""

import argparse

from bspde.estimates import export_convergence_csv, refinement_study


def ints(text):
    return tuple(int(t) for t in text.split(","))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h-levels", type=ints, default=(7, 15, 31))
    ap.add_argument("--dt-levels", type=ints, default=(8, 16, 32))
    ap.add_argument("--fixed-K", type=int, default=16384, help="time steps for the h study")
    ap.add_argument("--fixed-M", type=int, default=511, help="interior nodes for the dt study")
    ap.add_argument("--T", type=float, default=0.1)
    ap.add_argument("--out")
    args = ap.parse_args()

    tables = [refinement_study("h", args.h_levels, args.T, args.fixed_K),
              refinement_study("dt", args.dt_levels, args.T, args.fixed_M)]
    for tb in tables:
        print(f"\naxis {tb.axis}   (least-squares slope {tb.slope:.3f})")
        print(f"{'level':>7} {'step':>12} {'error':>12} {'order':>7}")
        orders = [float("nan")] + list(tb.orders)
        for lv, st, er, od in zip(tb.levels, tb.steps, tb.errors, orders):
            print(f"{lv:>7} {st:>12.4e} {er:>12.4e} {od:>7.3f}")
    if args.out:
        export_convergence_csv(tables, args.out)
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
