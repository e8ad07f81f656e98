"""Command-line front end.

Exit codes: 0 every check within tolerance, 2 a verification failed,
1 configuration, data, resource or numerical error. The worker count for
instance batches is read from ``BSPDE_THREADS``; results are collected in
submission order, so outputs do not depend on it.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from bspde.backward_solver import (export_backward_csv, solve_backward_adjoint,
                                   solve_backward_fixedpoint, solve_backward_tree)
from bspde.duality import adjoint_pairing_residual, duality_residual, export_duality_csv
from bspde.errors import BSPDEError, ConfigurationError
from bspde.estimates import (energy_ratio_backward, energy_ratio_forward, export_convergence_csv,
                             export_study_csv, export_summary_csv, growth_factor, refinement_study)
from bspde.forward_solver import TreeSystem, assemble_map, export_forward_csv, solve_forward
from bspde.grid_ops import check_coercivity
from bspde.regression import gaussian_paths, solve_backward_regression
from bspde.scenario import load_scenario
from bspde.semigroup import export_semigroup_csv, verify_all_pairs
from bspde.time_noise import export_paths_csv

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2
H_SLOPE = (1.7, 2.3)
DT_SLOPE = (0.8, 1.2)


def threads() -> int:
    raw = os.environ.get("BSPDE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"BSPDE_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def ordered_map(fn, items):
    n = threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _line(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


# ---------------------------------------------------------------------------

def cmd_check_coercivity(sc, args, out):
    rep = check_coercivity(sc.coefficient_set())
    with open(out / "coercivity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_index", "node_index", "margin"])
        for (k, j), m in np.ndenumerate(rep.margins):
            w.writerow([k, j, repr(float(m))])
    ok = _line("coercivity", rep.passed, rep.summary())
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_solve_forward(sc, args, out):
    coeffs = sc.coefficient_set()
    tree = sc.tree()
    phi, Phi, h = sc.forward_data(tree, 0)
    sol = solve_forward(coeffs, tree, phi, Phi, h)
    export_forward_csv(sol, out / "forward.csv")
    export_paths_csv(tree, out / "paths.csv")
    _line("solve-forward", True, f"{tree.n_leaves} paths, max |u(T)| = "
          f"{float(np.max(np.abs(sol.terminal))):.6e}")
    return EXIT_OK


def cmd_solve_backward(sc, args, out):
    coeffs = sc.coefficient_set()
    if args.route == "regression":
        return _regression(sc, coeffs, out)
    tree = sc.tree()
    xi, Psi = sc.backward_data(tree, 0)
    solver = {"tree": solve_backward_tree, "adjoint": solve_backward_adjoint,
              "fixedpoint": solve_backward_fixedpoint}[args.route]
    sol = solver(coeffs, tree, xi, Psi)
    export_backward_csv(sol, out / f"backward_{args.route}.csv")
    extra = ""
    if args.route == "fixedpoint":
        extra = f", {sol.info['method']} after {sol.info['iterations']} sweeps"
    _line("solve-backward", True, f"route {args.route}, |p(0)|_max = "
          f"{float(np.max(np.abs(sol.initial))):.6e}{extra}")
    return EXIT_OK


def _regression(sc, coeffs, out):
    grid = coeffs.grid
    paths = gaussian_paths(sc.N, sc.K, sc.T / sc.K, sc.paths, [sc.seed, 0])
    est = solve_backward_regression(coeffs, paths, sc.markov_source(grid, 0, 10),
                                    sc.markov_terminal(grid, 0, 11), sc.degree, sc.bootstrap,
                                    seed=[sc.seed, 1])
    with open(out / "backward_regression.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", "p0", "p0_se"] + [c for i in range(sc.N)
                                                    for c in (f"chi_{i + 1}", f"chi_{i + 1}_se")])
        for j in range(grid.M):
            row = [j, repr(float(est.p0[j])), repr(float(est.p0_se[j]))]
            for i in range(sc.N):
                row += [repr(float(est.chi0[i, j])), repr(float(est.chi0_se[i, j]))]
            w.writerow(row)
    for note in est.notes:
        print(f"note: {note}")
    _line("solve-backward", True, f"route regression, {paths.n_paths} paths, "
          f"max se(p0) = {float(np.max(est.p0_se)):.3e}")
    return EXIT_OK


def cmd_verify_duality(sc, args, out):
    coeffs = sc.coefficient_set()
    tree = sc.tree()
    system = TreeSystem(coeffs, tree)
    for k in range(tree.K):
        system.level(k)  # fill the cache before threads share it
    L = assemble_map(coeffs, tree, "L", system=system)
    tol = sc.tolerances

    def one(idx):
        phi, Phi, h = sc.forward_data(tree, idx)
        xi, Psi = sc.backward_data(tree, idx)
        rep = duality_residual(coeffs, tree, phi, Phi, h, xi, Psi, str(idx), system=system)
        bwd = solve_backward_tree(coeffs, tree, xi, Psi, system=system)
        y = np.concatenate([xi.flatten(), Psi.ravel()])
        pair = adjoint_pairing_residual(L, phi.flatten(), y,
                                        dual=bwd.p.restrict(0, tree.K - 1).flatten())
        return rep, pair

    results = ordered_map(one, range(sc.instances))
    export_duality_csv([(sc.name, i, r[0]) for i, r in enumerate(results)], out / "duality.csv")
    export_duality_csv([(sc.name, i, r[1]) for i, r in enumerate(results)], out / "pairing.csv")
    worst = max(r[0].residual_relative for r in results)
    worst_pair = max(r[1].residual_relative for r in results)
    ok1 = _line("duality", worst <= tol.duality,
                f"{sc.instances} instances, max relative residual {worst:.3e} (tol {tol.duality:g})")
    ok2 = _line("adjoint-pairing", worst_pair <= tol.pairing,
                f"max relative residual {worst_pair:.3e} (tol {tol.pairing:g})")
    return EXIT_OK if ok1 and ok2 else EXIT_VERIFY


def cmd_verify_semigroup(sc, args, out):
    coeffs = sc.coefficient_set()
    tree = sc.tree()
    theta = args.theta if args.theta is not None else sc.theta
    s = args.s if args.s is not None else sc.s
    pairs = None
    if theta is not None or s is not None:
        if theta is None or s is None:
            raise ConfigurationError("--theta and --s must be given together")
        pairs = [_grid_pair(tree, theta, s)]
    phi, Phi, h = sc.forward_data(tree, 0)
    xi, Psi = sc.backward_data(tree, 0)
    method = args.method or sc.split_method
    n = threads()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            reports = verify_all_pairs(coeffs, tree, xi, Psi, phi, Phi, h, method, pairs, pool)
    else:
        reports = verify_all_pairs(coeffs, tree, xi, Psi, phi, Phi, h, method, pairs)
    export_semigroup_csv([(sc.name, r) for r in reports], tree.N, out / "semigroup.csv")
    tol = sc.tolerances
    bmax = max(r.backward_max for r in reports)
    fmax = max(r.res_forward for r in reports)
    ok1 = _line("semigroup-backward", bmax <= tol.semigroup,
                f"{len(reports)} splits ({method}), max residual {bmax:.3e} (tol {tol.semigroup:g})")
    ok2 = _line("forward-causality", fmax <= tol.causality,
                f"max residual {fmax:.3e} (tol {tol.causality:g})")
    return EXIT_OK if ok1 and ok2 else EXIT_VERIFY


def _grid_pair(tree, theta, s):
    for name, v in (("theta", theta), ("s", s)):
        if not 0 <= v <= tree.K:
            raise ConfigurationError(f"--{name} {v} is not a grid index in 0..{tree.K}")
    if not theta < s:
        raise ConfigurationError(f"need theta < s, got {theta} and {s}")
    return theta, s


def cmd_probe_estimates(sc, args, out):
    levels = _levels(args.levels) or sc.levels or (sc.M, 2 * sc.M)
    fwd, bwd = [], []
    for M in levels:
        scm = sc.with_grid(M)
        coeffs = scm.coefficient_set()
        tree = scm.tree()
        fwd.append(energy_ratio_forward(coeffs, tree, sc.order, sc.samples, sc.seed or 0,
                                        label=f"M={M}"))
        bwd.append(energy_ratio_backward(coeffs, tree, sc.samples, sc.seed or 0, label=f"M={M}"))
    export_study_csv(fwd, out / "study_forward.csv")
    export_summary_csv(fwd, out / "summary_forward.csv")
    export_study_csv(bwd, out / "study_backward.csv")
    export_summary_csv(bwd, out / "summary_backward.csv")
    ok = True
    for name, studies in (("forward", fwd), ("backward", bwd)):
        g = max((growth_factor(a, b) for a, b in zip(studies, studies[1:])), default=0.0)
        maxes = ", ".join(f"{st.label}: {st.max_ratio:.4f}" for st in studies)
        ok &= _line(f"energy-{name}", g <= sc.tolerances.growth,
                    f"max ratios {maxes}; growth {g:+.2%} (limit {sc.tolerances.growth:.0%})")
    return EXIT_OK if ok else EXIT_VERIFY


def _levels(text):
    if not text:
        return None
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigurationError(f"--levels expects comma-separated integers, got {text!r}") from None


def cmd_convergence(sc, args, out):
    h_levels = _levels(args.levels) or sc.h_levels
    th = refinement_study("h", h_levels, sc.conv_T, sc.fixed_K, (sc.left, sc.right))
    td = refinement_study("dt", sc.dt_levels, sc.conv_T, sc.fixed_M, (sc.left, sc.right))
    export_convergence_csv([th, td], out / "convergence.csv")
    ok1 = _line("order-h", H_SLOPE[0] <= th.slope <= H_SLOPE[1],
                f"levels M={list(th.levels)}, slope {th.slope:.3f} (range {H_SLOPE})")
    ok2 = _line("order-dt", DT_SLOPE[0] <= td.slope <= DT_SLOPE[1],
                f"levels K={list(td.levels)}, slope {td.slope:.3f} (range {DT_SLOPE})")
    return EXIT_OK if ok1 and ok2 else EXIT_VERIFY


COMMANDS = {
    "check-coercivity": cmd_check_coercivity,
    "solve-forward": cmd_solve_forward,
    "solve-backward": cmd_solve_backward,
    "verify-duality": cmd_verify_duality,
    "verify-semigroup": cmd_verify_semigroup,
    "probe-estimates": cmd_probe_estimates,
    "convergence": cmd_convergence,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors; 2 is reserved for failed checks
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="bspde", description="Forward/backward stochastic PDE lab.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True, help="scenario file")
    p.add_argument("--out", default="out", help="output directory for CSV files")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--theta", type=int, help="split start (grid index)")
    p.add_argument("--s", type=int, help="split end (grid index)")
    p.add_argument("--levels", help="comma-separated refinement levels")
    p.add_argument("--route", default="tree", choices=["tree", "adjoint", "fixedpoint", "regression"])
    p.add_argument("--method", choices=["adjoint", "tree"], help="sub-interval solve for splits")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario, seed_override=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](sc, args, out)
    except BSPDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
