import numpy as np
import pytest
from concurrent.futures import ThreadPoolExecutor

from bspde.errors import ConfigurationError
from bspde.semigroup import (SplitReport, backward_split, all_pairs, export_semigroup_csv,
                             forward_causality_residual, semigroup_residual_chi,
                             semigroup_residual_p, semigroup_residual_p0, split_report,
                             verify_all_pairs)

from conftest import make_problem, random_field

METHODS = ("adjoint", "tree")


@pytest.fixture(scope="module")
def prob():
    c, t = make_problem(M=6, K=4, N=2, path={"lam": 0.3})
    rng = np.random.default_rng(7)
    xi = random_field(t, 0, 3, 6, rng)
    Psi = rng.standard_normal((t.n_leaves, 6))
    phi = random_field(t, 0, 3, 6, rng)
    Phi = rng.standard_normal(6)
    h = [random_field(t, 0, 3, 6, rng) for _ in range(2)]
    return c, t, xi, Psi, phi, Phi, h


@pytest.mark.parametrize("method", METHODS)
def test_zero_data(prob, method):
    c, t, *_ = prob
    assert semigroup_residual_p(c, t, None, None, 1, 3, method) == 0.0
    assert semigroup_residual_p0(c, t, None, None, 1, 3, method) == 0.0
    assert semigroup_residual_chi(c, t, None, None, 1, 3, 2, method) == 0.0
    assert forward_causality_residual(c, t, None, None, None, 1, 3, method) == 0.0


@pytest.mark.parametrize("method", METHODS)
def test_full_interval(prob, method):
    c, t, xi, Psi, phi, Phi, h = prob
    assert semigroup_residual_p(c, t, xi, Psi, 0, t.K, method) <= 1e-13
    assert semigroup_residual_p0(c, t, xi, Psi, 0, t.K, method) <= 1e-13
    assert semigroup_residual_chi(c, t, xi, Psi, 0, t.K, 1, method) <= 1e-13
    assert forward_causality_residual(c, t, phi, Phi, h, 0, t.K, method) <= 1e-13


@pytest.mark.parametrize("method", METHODS)
def test_quarter_split(prob, method):
    c, t, xi, Psi, phi, Phi, h = prob
    r = split_report(c, t, xi, Psi, 1, 3, phi, Phi, h, method)
    assert r.backward_max <= 1e-10
    assert r.res_forward <= 1e-12
    if method == "tree":
        assert r.backward_max == 0.0 and r.res_forward == 0.0


def test_deterministic_chi_both_zero():
    c, t = make_problem(M=5, K=4, N=1, beta=0.0, beta_amp=0.0, beta_bar=0.0, beta_bar_amp=0.0)
    Psi = np.tile(np.linspace(0.1, 0.5, 5), (t.n_leaves, 1))
    assert semigroup_residual_chi(c, t, None, Psi, 1, 3, 1, method="tree") == 0.0
    # the adjoint route leaves rounding-level chi, measured against the solution size
    assert semigroup_residual_chi(c, t, None, Psi, 1, 3, 1) <= 1e-13
    full, sub = backward_split(c, t, None, Psi, 1, 3)
    assert full.max_abs_chi() == 0.0 and sub.max_abs_chi() <= 1e-14


def test_all_pairs_s1(s1):
    sc, c, t = s1
    xi, Psi = sc.backward_data(t, 0)
    phi, Phi, h = sc.forward_data(t, 0)
    reports = verify_all_pairs(c, t, xi, Psi, phi, Phi, h)
    assert [(r.theta, r.s) for r in reports] == all_pairs(t)
    assert len(reports) == t.K * (t.K + 1) // 2
    assert max(r.backward_max for r in reports) <= 1e-10
    assert max(r.res_forward for r in reports) <= 1e-12


def test_executor_order_is_canonical(prob):
    c, t, xi, Psi, phi, Phi, h = prob
    serial = verify_all_pairs(c, t, xi, Psi, phi, Phi, h)
    with ThreadPoolExecutor(4) as pool:
        threaded = verify_all_pairs(c, t, xi, Psi, phi, Phi, h, executor=pool)
    assert serial == threaded


def test_nesting(prob):
    c, t, xi, Psi, phi, Phi, h = prob
    outer = split_report(c, t, xi, Psi, 0, 4, phi, Phi, h)
    for r in (1, 2, 3):
        left = split_report(c, t, xi, Psi, 0, r, phi, Phi, h)
        right = split_report(c, t, xi, Psi, r, 4, phi, Phi, h)
        for rep in (left, right):
            assert rep.backward_max <= max(1e-10, 100 * outer.backward_max)


@pytest.mark.parametrize("theta,s", [(2, 2), (3, 1), (-1, 2), (0, 5), (0.5, 2)])
def test_off_grid(prob, theta, s):
    c, t, xi, Psi, *_ = prob
    with pytest.raises(ConfigurationError):
        semigroup_residual_p(c, t, xi, Psi, theta, s)
    with pytest.raises(ConfigurationError):
        forward_causality_residual(c, t, None, None, None, theta, s)


def test_bad_inputs(prob):
    c, t, xi, Psi, *_ = prob
    with pytest.raises(ConfigurationError):
        semigroup_residual_chi(c, t, xi, Psi, 0, 2, 3)
    with pytest.raises(ConfigurationError):
        semigroup_residual_p(c, t, xi, Psi, 0, 2, method="other")
    with pytest.raises(ConfigurationError):
        SplitReport(2, 1, 0.0, 0.0, ())


def test_csv(prob, tmp_path):
    c, t, xi, Psi, *_ = prob
    r = split_report(c, t, xi, Psi, 0, 2)
    export_semigroup_csv([("x", r)], 2, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "scenario,theta,s,res_p,res_p0,res_chi_1,res_chi_2,res_forward"
    assert lines[1].startswith("x,0,2,")
