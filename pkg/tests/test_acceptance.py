"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances."""

import filecmp
import math
import time

import numpy as np
import pytest

from bspde.backward_solver import relative_difference, solve_backward
from bspde.cli import main
from bspde.duality import adjoint_pairing_residual, duality_residual
from bspde.estimates import energy_ratio_backward, energy_ratio_forward, growth_factor, refinement_study
from bspde.forward_solver import TreeSystem, assemble_map, solve_forward
from bspde.grid_ops import SpatialGrid, check_coercivity, coefficient_family
from bspde.scenario import SHIPPED, load_shipped, shipped_path
from bspde.semigroup import verify_all_pairs
from bspde.time_noise import (AdaptedField, build_tree, conditional_expectation, expectation,
                              stochastic_integral)

from conftest import random_field


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok
    return emit


def _shipped():
    out = []
    for name in SHIPPED:
        sc = load_shipped(name)
        out.append((sc, sc.coefficient_set(), sc.tree()))
    return out


def test_criterion_01_duality(report):
    start = time.perf_counter()
    worst = {}
    for sc, c, t in _shipped():
        system = TreeSystem(c, t)
        res = []
        for idx in range(50):
            phi, Phi, h = sc.forward_data(t, idx)
            xi, Psi = sc.backward_data(t, idx)
            res.append(duality_residual(c, t, phi, Phi, h, xi, Psi, system=system).residual_relative)
        worst[sc.name] = max(res)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-10 and elapsed <= 60.0
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    assert report(1, ok, f"duality, 3x50 instances, max rel residual [{detail}] (tol 1e-10); "
                         f"{elapsed:.1f} s (limit 60 s)")


def test_criterion_02_adjoint_pairing(report):
    worst = {}
    for sc, c, t in _shipped():
        system = TreeSystem(c, t)
        L = assemble_map(c, t, "L", system=system)
        rng = np.random.default_rng([sc.seed, 2])
        res = []
        for idx in range(50):
            phi = random_field(t, 0, t.K - 1, c.grid.M, rng)
            xi, Psi = sc.backward_data(t, idx)
            p = solve_backward(c, t, xi, Psi).p.restrict(0, t.K - 1).flatten()
            y = np.concatenate([xi.flatten(), Psi.ravel()])
            res.append(adjoint_pairing_residual(L, phi.flatten(), y, dual=p).residual_relative)
        worst[sc.name] = max(res)
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    assert report(2, max(worst.values()) <= 1e-10,
                  f"<L phi, (xi, Psi)> = <phi, p>, 50 pairs each, max rel [{detail}] (tol 1e-10)")


def test_criterion_03_semigroup(report):
    sc = load_shipped("s1_default")
    c, t = sc.coefficient_set(), sc.tree()
    xi, Psi = sc.backward_data(t, 0)
    phi, Phi, h = sc.forward_data(t, 0)
    reports = verify_all_pairs(c, t, xi, Psi, phi, Phi, h)
    b = max(r.backward_max for r in reports)
    f = max(r.res_forward for r in reports)
    ok = b <= 1e-10 and f <= 1e-12 and len(reports) == t.K * (t.K + 1) // 2
    assert report(3, ok, f"{len(reports)} splits on s1_default: backward max {b:.2e} (tol 1e-10), "
                         f"forward causality max {f:.2e} (tol 1e-12)")


def test_criterion_04_routes(report):
    worst, sweeps, decay_ok = {}, {}, True
    for sc, c, t in _shipped():
        xi, Psi = sc.backward_data(t, 0)
        sols = {r: solve_backward(c, t, xi, Psi, route=r) for r in ("tree", "adjoint", "fixedpoint")}
        names = list(sols)
        worst[sc.name] = max(relative_difference(sols[a], sols[b])
                             for i, a in enumerate(names) for b in names[i + 1:])
        info = sols["fixedpoint"].info
        hist = np.asarray(info["history"])
        sweeps[sc.name] = info["iterations"]
        # geometric decay: strictly decreasing until the tolerance is met
        head = hist[: int(np.argmax(hist <= 1e-12)) + 1]
        decay_ok &= info["converged"] and bool(np.all(np.diff(head) < 0) or head.size == 1)
    ok = max(worst.values()) <= 1e-9 and decay_ok
    detail = ", ".join(f"{k} {worst[k]:.2e} ({sweeps[k]} sweeps)" for k in worst)
    assert report(4, ok, f"tree/adjoint/fixedpoint pairwise max rel [{detail}] (tol 1e-9); "
                         f"Neumann converged with decreasing residuals: {decay_ok}")


def test_criterion_05_exactness(report):
    sc, c, t = _shipped()[1]
    xi, Psi = sc.backward_data(t, 0)
    terminal = all(np.array_equal(solve_backward(c, t, xi, Psi, route=r).p.level(t.K), Psi)
                   for r in ("tree", "adjoint", "fixedpoint"))
    zero_f = not np.any(solve_forward(c, t).u.flatten())
    zb = solve_backward(c, t)
    zero_b = not np.any(zb.p.flatten()) and zb.max_abs_chi() == 0.0
    det = c.with_noise_zeroed()
    x = c.grid.x
    xi_d = AdaptedField.from_function(t, 0, t.K - 1,
                                      lambda k, w: np.tile(np.sin(np.pi * x) * (k + 1), (len(w), 1)))
    Psi_d = np.tile(x * (1 - x), (t.n_leaves, 1))
    chi = max(solve_backward(det, t, xi_d, Psi_d, route=r).max_abs_chi()
              for r in ("tree", "adjoint", "fixedpoint"))
    ok = terminal and zero_f and zero_b and chi <= 1e-12
    assert report(5, ok, f"p_K = Psi bit-exact: {terminal}; zero data -> zero forward {zero_f}, "
                         f"backward {zero_b}; deterministic max|chi| = {chi:.1e} (tol 1e-12)")


def test_criterion_06_moments(report):
    worst = 0.0
    for N, K in ((1, 8), (2, 4)):
        t = build_tree(N, K, 2.0**-4)
        for k in range(K):
            inc = t.increments_into(k + 1)
            worst = max(worst, float(np.max(np.abs(conditional_expectation(t, inc, k)))))
            second = conditional_expectation(t, inc[:, :, None] * inc[:, None, :], k)
            worst = max(worst, float(np.max(np.abs(second - t.dt * np.eye(N)))))
        rng = np.random.default_rng(N)
        xi = AdaptedField(t, 0, tuple(rng.integers(-8, 9, (t.level_size(k), 3)) / 8.0
                                      for k in range(K)))
        for i in range(1, N + 1):
            I = stochastic_integral(xi, i, K)
            lhs = expectation(t, I**2, K)
            rhs = sum(expectation(t, xi.level(k) ** 2, k) * t.dt for k in range(K))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    assert report(6, worst <= 1e-13, f"tree moments and Ito isometry, max error {worst:.1e} (tol 1e-13)")


def test_criterion_07_consistency(report):
    th = refinement_study("h")
    td = refinement_study("dt")
    ok = 1.7 <= th.slope <= 2.3 and 0.8 <= td.slope <= 1.2
    assert report(7, ok, f"heat equation slope in h {th.slope:.3f} over M={list(th.levels)} "
                         f"(range [1.7, 2.3]); slope in dt {td.slope:.3f} over K={list(td.levels)} "
                         f"(range [0.8, 1.2])")


def test_criterion_08_energy(report):
    sc = load_shipped("s1_default")
    c, t = sc.coefficient_set(), sc.tree()
    invariant = True
    for alpha in (2.0**-20, 0.5, 8.0, 2.0**30):
        a = energy_ratio_forward(c, t, -1, 10, sc.seed)
        b = energy_ratio_forward(c, t, -1, 10, sc.seed, scale=alpha)
        ab = energy_ratio_backward(c, t, 10, sc.seed)
        bb = energy_ratio_backward(c, t, 10, sc.seed, scale=alpha)
        invariant &= np.array_equal(a.ratios, b.ratios) and np.array_equal(ab.ratios, bb.ratios)
    growth = {}
    for name in SHIPPED:
        base = load_shipped(name)
        studies_f, studies_b = [], []
        for M in (16, 32):
            s = base.with_grid(M)
            cm, tm = s.coefficient_set(), s.tree()
            studies_f.append(energy_ratio_forward(cm, tm, -1, 50, base.seed))
            studies_b.append(energy_ratio_backward(cm, tm, 50, base.seed))
        growth[name] = (growth_factor(*studies_f), growth_factor(*studies_b))
    worst = max(max(g) for g in growth.values())
    ok = invariant and worst <= 0.10
    detail = ", ".join(f"{k} {g[0]:+.3%}/{g[1]:+.3%}" for k, g in growth.items())
    assert report(8, ok, f"ratios scale-invariant exactly: {invariant}; growth M=16->32 "
                         f"forward/backward [{detail}] (limit 10%)")


def test_criterion_09_coercivity(report):
    g8 = SpatialGrid(0.0, 1.0, 8)
    r1 = check_coercivity(coefficient_family(g8, 1.0, 2, 1, b=1.0), delta=0.9)
    r2 = check_coercivity(coefficient_family(g8, 1.0, 2, 1, b=1.0, beta=math.sqrt(2.0)), delta=0.1)
    g9 = SpatialGrid(0.0, 1.0, 9)
    r3 = check_coercivity(coefficient_family(g9, 1.0, 2, 1, "affine", b=1.0, b_amp=1.0, beta=1.0),
                          delta=0.4)
    m3 = float(np.min(1.0 + g9.x - 0.5)) - 0.4
    ok = (r1.passed and abs(r1.margin - 0.1) <= 1e-15 and not r2.passed
          and abs(r2.margin + 0.1) <= 1e-15 and r3.passed and abs(r3.margin - m3) <= 1e-15)
    assert report(9, ok, f"margins {r1.margin:.15g} (pass {r1.passed}), {r2.margin:.15g} "
                         f"(pass {r2.passed}), {r3.margin:.15g} vs {m3:.15g} (pass {r3.passed})")


def test_criterion_10_determinism(report, tmp_path, monkeypatch, capsys):
    jobs = [("verify-duality", "s1_default", ("duality.csv", "pairing.csv")),
            ("verify-semigroup", "s2_two_noise", ("semigroup.csv",)),
            ("solve-backward", "s3_path_lambda", ("backward_tree.csv",)),
            ("probe-estimates", "s1_default", ("study_forward.csv", "summary_backward.csv"))]
    identical, codes = True, []
    for cmd, name, files in jobs:
        dirs = []
        for run, n in enumerate(("1", "2", "8", "8")):
            monkeypatch.setenv("BSPDE_THREADS", n)
            d = tmp_path / f"{cmd}_{run}"
            codes.append(main([cmd, "--scenario", str(shipped_path(name)), "--out", str(d)]))
            dirs.append(d)
        identical &= all(filecmp.cmp(dirs[0] / f, d / f, shallow=False) for d in dirs[1:] for f in files)
    capsys.readouterr()
    ok = identical and all(c == 0 for c in codes)
    assert report(10, ok, f"{len(jobs)} commands x threads 1/2/8 (+repeat): CSVs byte-identical "
                          f"{identical}, exit codes {sorted(set(codes))}")
