import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bspde.duality import (DualityReport, adjoint_pairing_residual, duality_residual,
                           export_duality_csv, pair_slice, pair_x0)
from bspde.errors import ConfigurationError
from bspde.forward_solver import LinearSolveMap, TreeSystem, assemble_map
from bspde.time_noise import build_tree

from conftest import make_problem, random_field


def test_zero_data_both_sides_zero():
    c, t = make_problem(M=5, K=3, N=2)
    rep = duality_residual(c, t)
    assert rep.lhs == 0.0 and rep.rhs == 0.0
    assert rep.residual_relative == 0.0


def test_report_definition():
    r = DualityReport.from_sides(2.0, 1.0)
    assert r.residual_absolute == 1.0 and r.residual_relative == 0.5
    assert DualityReport.from_sides(0.0, 0.0).residual_relative == 0.0
    tiny = DualityReport.from_sides(1e-310, 0.0)
    assert tiny.residual_relative == pytest.approx(1e-310 / 1e-300)


@pytest.mark.parametrize("fixture", ["s1", "s2", "s3"])
def test_shipped_instances(fixture, request):
    sc, c, t = request.getfixturevalue(fixture)
    system = TreeSystem(c, t)
    for idx in range(10):
        phi, Phi, h = sc.forward_data(t, idx)
        xi, Psi = sc.backward_data(t, idx)
        rep = duality_residual(c, t, phi, Phi, h, xi, Psi, system=system)
        assert rep.residual_relative <= 1e-10, (idx, rep)


def test_dual1_form(s1):
    sc, c, t = s1
    phi, _, _ = sc.forward_data(t, 3)
    xi, Psi = sc.backward_data(t, 3)
    assert duality_residual(c, t, phi=phi, xi=xi, Psi=Psi).residual_relative <= 1e-10


def test_h_only_isolates_chi_pairing(s2):
    sc, c, t = s2
    for idx in range(5):
        _, _, h = sc.forward_data(t, idx)
        xi, Psi = sc.backward_data(t, idx)
        for i in range(2):
            only = [None, None]
            only[i] = h[i]
            rep = duality_residual(c, t, h=only, xi=xi, Psi=Psi)
            assert rep.residual_relative <= 1e-10
            assert rep.rhs != 0.0


@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 8.0, 0.125]))
def test_homogeneity_exact(seed, alpha):
    rng = np.random.default_rng(seed)
    c, t = make_problem(M=4, K=3, N=1)
    phi = random_field(t, 0, 2, 4, rng)
    Phi = rng.standard_normal(4)
    h = [random_field(t, 0, 2, 4, rng)]
    xi = random_field(t, 0, 2, 4, rng)
    Psi = rng.standard_normal((t.n_leaves, 4))
    base = duality_residual(c, t, phi, Phi, h, xi, Psi)
    scaled = duality_residual(c, t, phi * alpha, Phi * alpha, [h[0] * alpha], xi, Psi)
    # powers of two scale every floating-point operation exactly
    assert scaled.lhs == alpha * base.lhs and scaled.rhs == alpha * base.rhs
    assert scaled.residual_relative == base.residual_relative


def test_mismatched_trees():
    c, t = make_problem(M=4, K=3, N=1)
    other = build_tree(1, 4, 0.25)
    with pytest.raises(ConfigurationError):
        duality_residual(c, t, phi=random_field(other, 0, 3, 4, np.random.default_rng(0)))


def test_pairings():
    c, t = make_problem(M=4, K=2, N=1)
    a = random_field(t, 0, 1, 4, np.random.default_rng(1))
    assert pair_x0(a, None, c.grid) == 0.0
    expected = sum(t.dt * c.grid.h * t.probability(k) * np.sum(a.level(k) ** 2) for k in (0, 1))
    assert pair_x0(a, a, c.grid) == pytest.approx(expected, rel=1e-15)
    ones = np.ones((t.n_leaves, 4))
    assert pair_slice(ones, ones, t, 2, c.grid) == pytest.approx(4 * c.grid.h)
    with pytest.raises(ConfigurationError):
        pair_x0(a, a.restrict(0, 0), c.grid)


def test_adjoint_pairing_cases(rng):
    c, t = make_problem(M=5, K=3, N=1)
    L = assemble_map(c, t, "L")
    n_out, n_in = L.shape
    assert adjoint_pairing_residual(L, np.zeros(n_in), rng.standard_normal(n_out)).residual_relative == 0
    assert adjoint_pairing_residual(L, rng.standard_normal(n_in), np.zeros(n_out)).residual_relative == 0
    for _ in range(20):
        r = adjoint_pairing_residual(L, rng.standard_normal(n_in), rng.standard_normal(n_out))
        assert r.residual_relative <= 1e-12
    import scipy.sparse as sp
    w = rng.uniform(0.5, 2.0, 7)
    ident = LinearSolveMap("I", (0, 1), t, 7, sp.identity(7, format="csr"), w, w)
    x, y = rng.standard_normal(7), rng.standard_normal(7)
    assert adjoint_pairing_residual(ident, x, y).residual_relative <= 1e-15
    with pytest.raises(ConfigurationError):
        adjoint_pairing_residual(L, np.zeros(n_in + 1), np.zeros(n_out))
    with pytest.raises(ConfigurationError):
        adjoint_pairing_residual(L, np.zeros(n_in), np.zeros(n_out), dual=np.zeros(3))


def test_csv(tmp_path):
    rows = [("s1", 0, DualityReport.from_sides(1.0, 1.0 + 1e-16)), ("s1", 1, DualityReport.from_sides(0, 0))]
    export_duality_csv(rows, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "scenario,instance_seed,lhs,rhs,abs_residual,rel_residual"
    assert len(lines) == 3
