import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bspde.errors import ConfigurationError, ResourceError, StructuralError
from bspde.time_noise import (AdaptedField, TimeGrid, build_tree, check_adapted,
                              children_view, conditional_expectation, expectation,
                              export_paths_csv, increment_correlation, stochastic_integral)


def test_time_grid():
    tg = TimeGrid(1.0, 8)
    assert tg.dt == 0.125
    assert tg.index(3) == 3
    assert tg.index_of_time(0.375) == 3
    assert tg.split(2, 6) == (2, 6)
    with pytest.raises(ConfigurationError):
        tg.index_of_time(0.3)
    with pytest.raises(ConfigurationError):
        tg.index(2.5)
    with pytest.raises(ConfigurationError):
        tg.index(9)
    with pytest.raises(ConfigurationError):
        tg.split(0.5, 0.25)


def test_single_step_tree():
    t = build_tree(1, 1, 0.25)
    assert t.n_leaves == 2
    assert sorted(t.partial_sums(1)[:, 0]) == [-0.5, 0.5]
    assert t.probability(1) == 0.5


def test_two_noise_cross_moment_zero():
    t = build_tree(2, 1, 0.25)
    inc = t.partial_sums(1)
    assert t.n_leaves == 4
    assert np.mean(inc[:, 0] * inc[:, 1]) == 0.0
    assert np.mean(inc[:, 0] ** 2) == 0.25


def test_probabilities_sum_to_one_exactly():
    t = build_tree(1, 12, 1 / 12)
    assert t.n_leaves == 4096
    assert sum([t.probability(12)] * t.n_leaves) == 1.0


def test_size_guard_names_bound():
    with pytest.raises(ResourceError, match=r"2\^20"):
        build_tree(2, 10, 0.1)
    with pytest.raises(ConfigurationError):
        build_tree(3, 2, 0.1)


@pytest.mark.parametrize("N,K,dt", [(1, 6, 2.0**-4), (2, 4, 2.0**-4), (1, 6, 0.1), (2, 4, 1 / 3)])
def test_increment_moments(N, K, dt):
    # bit-exact when sqrt(dt) is dyadic, within 1e-13 otherwise
    t = build_tree(N, K, dt)
    exact = dt in (2.0**-4,)
    for k in range(K):
        inc = t.increments_into(k + 1)
        mean = conditional_expectation(t, inc, k)
        assert np.all(mean == 0.0)
        second = conditional_expectation(t, inc[:, :, None] * inc[:, None, :], k)
        err = np.max(np.abs(second - dt * np.eye(N)))
        assert err == 0.0 if exact else err <= 1e-13 * dt


def test_conditional_expectation_examples():
    t = build_tree(1, 3, 0.25)
    const = np.full((t.level_size(2), 3), 7.0)
    assert np.all(conditional_expectation(t, const, 1) == 7.0)
    dw = t.increments_into(2)[:, 0]
    assert np.all(conditional_expectation(t, dw, 1) == 0.0)
    assert np.all(conditional_expectation(t, dw**2, 1) == 0.25)
    with pytest.raises(StructuralError):
        conditional_expectation(t, dw[:-1], 1)


def test_tower_property(rng):
    t = build_tree(2, 4, 0.25)
    X = rng.standard_normal((t.level_size(4), 3))
    lhs = conditional_expectation(t, conditional_expectation(t, X, 3), 2)
    two_step = X.reshape(t.level_size(2), -1, 3).mean(axis=1)
    assert np.allclose(lhs, two_step, rtol=0, atol=1e-15)


def test_stochastic_integral_of_one_is_brownian_position():
    t = build_tree(1, 5, 0.125)
    one = AdaptedField(t, 0, tuple(np.ones((t.level_size(k), 1)) for k in range(5)))
    assert np.array_equal(stochastic_integral(one, 1, 5)[:, 0], t.partial_sums(5)[:, 0])
    zero = one * 0.0
    assert not np.any(stochastic_integral(zero, 1, 5))


@given(st.integers(0, 10_000), st.sampled_from([(1, 6), (2, 3)]))
def test_ito_isometry_exact(seed, shape):
    # dyadic inputs keep every product exact
    N, K = shape
    rng = np.random.default_rng(seed)
    t = build_tree(N, K, 0.25)
    xi = AdaptedField(t, 0, tuple(rng.integers(-8, 9, (t.level_size(k), 2)) / 8.0 for k in range(K)))
    for i in range(1, N + 1):
        I = stochastic_integral(xi, i, K)
        lhs = expectation(t, I**2, K)
        rhs = sum(expectation(t, xi.level(k) ** 2, k) * t.dt for k in range(K))
        assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, np.max(np.abs(rhs)))


def test_increment_correlation_recovers_martingale_coefficient(rng):
    t = build_tree(1, 3, 0.25)
    a = rng.standard_normal((t.level_size(1), 2))
    c = rng.standard_normal((t.level_size(1), 2))
    X = np.repeat(a, 2, axis=0) + np.repeat(c, 2, axis=0) * t.increments_into(2)[:, :1]
    assert np.allclose(increment_correlation(t, X, 1)[0], c, atol=1e-14)


def test_adapted_field_paths_roundtrip(rng):
    t = build_tree(1, 4, 0.25)
    f = AdaptedField(t, 1, tuple(rng.standard_normal((t.level_size(k), 3)) for k in range(1, 5)))
    paths = f.to_paths()
    assert paths.shape == (16, 4, 3)
    back = AdaptedField.from_paths(t, 1, paths)
    assert all(np.array_equal(a, b) for a, b in zip(back.levels, f.levels))
    paths[0, 0, 0] += 1.0
    assert not check_adapted(t, 1, paths)
    with pytest.raises(StructuralError):
        AdaptedField.from_paths(t, 1, paths)


def test_adapted_field_flatten_roundtrip(rng):
    t = build_tree(2, 3, 0.25)
    f = AdaptedField(t, 0, tuple(rng.standard_normal((t.level_size(k), 5)) for k in range(4)))
    g = AdaptedField.unflatten(t, 0, 3, f.flatten(), (5,))
    assert np.array_equal(g.flatten(), f.flatten())
    with pytest.raises(StructuralError):
        AdaptedField(t, 0, (np.zeros((2, 5)),))
    with pytest.raises(ConfigurationError):
        f.restrict(2, 5)


def test_children_view_layout():
    t = build_tree(2, 2, 1.0)
    vals = np.arange(16.0)
    view = children_view(t, vals, 1)
    assert view.shape == (4, 4)
    assert np.array_equal(view[1], [4, 5, 6, 7])


def test_paths_csv(tmp_path):
    t = build_tree(2, 2, 0.25)
    export_paths_csv(t, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "path_id,step,dw_1,dw_2"
    assert len(lines) == 1 + t.n_leaves * t.K
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    w_end = {}
    for pid, step, *dw in rows:
        w_end.setdefault(int(pid), np.zeros(2))
        w_end[int(pid)] += dw
    assert np.allclose(np.array([w_end[p] for p in range(16)]), t.partial_sums(2))
