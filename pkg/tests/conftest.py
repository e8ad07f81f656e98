import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bspde.grid_ops import SpatialGrid, coefficient_family
from bspde.scenario import load_shipped
from bspde.time_noise import AdaptedField, build_tree

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_field(tree, k0, k1, M, rng):
    return AdaptedField(tree, k0, tuple(rng.standard_normal((tree.level_size(k), M))
                                        for k in range(k0, k1 + 1)))


def make_problem(M=8, K=4, N=1, family="sinusoidal", path=None, **kw):
    grid = SpatialGrid(0.0, 1.0, M)
    params = dict(b=1.0, b_amp=0.2, f=0.5, f_amp=0.3, lam=-0.5, lam_amp=0.2,
                  beta=0.5, beta_amp=0.1, beta_bar=0.3, beta_bar_amp=0.1)
    params.update(kw)
    coeffs = coefficient_family(grid, 1.0, K, N, family, path=path, **params)
    return coeffs, build_tree(N, K, 1.0 / K)


@pytest.fixture(scope="session")
def s1():
    sc = load_shipped("s1_default")
    return sc, sc.coefficient_set(), sc.tree()


@pytest.fixture(scope="session")
def s2():
    sc = load_shipped("s2_two_noise")
    return sc, sc.coefficient_set(), sc.tree()


@pytest.fixture(scope="session")
def s3():
    sc = load_shipped("s3_path_lambda")
    return sc, sc.coefficient_set(), sc.tree()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
