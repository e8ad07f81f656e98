"""Least-squares Monte Carlo route for the backward problem.

Used beyond the tree size guard. Conditional expectations given ``F_k``
are projections on polynomials in the Brownian position ``w_k``, so data
and coefficients must be functions of ``(k, w_k)``.
"""

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from bspde.errors import CoercivityError, ConfigurationError
from bspde.forward_solver import _channel
from bspde.grid_ops import TridiagFactor, check_coercivity, drift_bands, noise_bands

MIN_PATHS = 1000


class RegressionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GaussianPaths:
    dw: np.ndarray  # (paths, K, N)
    dt: float

    @property
    def n_paths(self) -> int:
        return self.dw.shape[0]

    @property
    def K(self) -> int:
        return self.dw.shape[1]

    @property
    def N(self) -> int:
        return self.dw.shape[2]

    def positions(self, k: int) -> np.ndarray:
        """``w(t_k)`` on every path, shape (paths, N)."""
        return self.dw[:, :k].sum(axis=1)

    def take(self, idx) -> "GaussianPaths":
        return GaussianPaths(self.dw[idx], self.dt)


def gaussian_paths(N: int, K: int, dt: float, n_paths: int, seed) -> GaussianPaths:
    if seed is None:
        raise ConfigurationError("Monte Carlo paths need an explicit seed")
    rng = np.random.default_rng(seed)
    return GaussianPaths(rng.standard_normal((n_paths, K, N)) * np.sqrt(dt), dt)


def _exponents(N, degree):
    return [e for e in itertools.product(range(degree + 1), repeat=N) if sum(e) <= degree]


def basis_matrix(w: np.ndarray, t: float, degree: int) -> np.ndarray:
    """Monomials of total degree <= ``degree`` in ``w / sqrt(t)``."""
    z = w / np.sqrt(t) if t > 0 else np.zeros_like(w)
    cols = [np.prod(z ** np.array(e), axis=1) for e in _exponents(w.shape[1], degree)]
    return np.stack(cols, axis=1)


def _design(w, t, degree, k, notes):
    if k == 0:
        # F_0 is trivial: the projection is the plain mean
        return np.ones((w.shape[0], 1))
    d = degree
    while d > 0:
        X = basis_matrix(w, t, d)
        if np.linalg.matrix_rank(X) == X.shape[1]:
            if d < degree:
                msg = f"step {k}: regression basis rank deficient, reduced degree {degree} -> {d}"
                warnings.warn(msg, RegressionWarning, stacklevel=3)
                notes.append(msg)
            return X
        d -= 1
    msg = f"step {k}: regression basis rank deficient, reduced to the constant"
    warnings.warn(msg, RegressionWarning, stacklevel=3)
    notes.append(msg)
    return np.ones((w.shape[0], 1))


def _run(coeffs, paths: GaussianPaths, xi_fn, Psi_fn, degree, notes):
    K, N, dt = paths.K, paths.N, paths.dt
    grid = coeffs.grid
    p = Psi_fn(paths.positions(K))
    p_hist = [p]
    chi_hist = []
    for k in range(K - 1, -1, -1):
        w = paths.positions(k)
        X = _design(w, k * dt, degree, k, notes)
        dw = paths.dw[:, k, :]
        targets = [p] + [p * dw[:, i:i + 1] / dt for i in range(N)]
        beta, *_ = np.linalg.lstsq(X, np.concatenate(targets, axis=1), rcond=None)
        fitted = X @ beta
        M = grid.M
        Ep = fitted[:, :M]
        chis = [fitted[:, M * (i + 1): M * (i + 2)] for i in range(N)]
        lc = coeffs.at(k, w if coeffs.path_dependent else None)
        R = drift_bands(grid, lc).scaled_shift(1.0, -dt).transpose()
        rhs = Ep
        for i in range(N):
            rhs = rhs + dt * _channel(noise_bands(grid, lc, i).transpose()).matvec(chis[i][:, None, :])[:, 0]
        rhs = rhs + dt * np.asarray(xi_fn(k, w), dtype=float)
        p = TridiagFactor(_channel(R)).solve(rhs[:, None, :])[:, 0]
        p_hist.insert(0, p)
        chi_hist.insert(0, np.stack(chis, axis=1))
    return np.stack(p_hist, axis=1), np.stack(chi_hist, axis=1)


@dataclass(frozen=True, eq=False)
class RegressionEstimate:
    p: np.ndarray        # (paths, K+1, M)
    chi: np.ndarray      # (paths, K, N, M)
    p0: np.ndarray       # (M,)
    chi0: np.ndarray     # (N, M)
    p0_se: np.ndarray
    chi0_se: np.ndarray
    notes: tuple = ()


def solve_backward_regression(coeffs, paths: GaussianPaths, xi_fn, Psi_fn, degree=2,
                              n_boot=200, seed=0) -> RegressionEstimate:
    """Regression estimate of (p, chi) with bootstrap standard errors of the
    step-0 values.

    ``xi_fn(k, w)`` returns (paths, M) source values from positions ``w``
    (paths, N); ``Psi_fn(w)`` the terminal values.
    """
    if paths.n_paths < MIN_PATHS:
        raise ConfigurationError(f"regression needs at least {MIN_PATHS} paths, got {paths.n_paths}")
    if paths.N != coeffs.N:
        raise ConfigurationError(f"paths carry {paths.N} noises, coefficients {coeffs.N}")
    if coeffs.n_levels < paths.K + 1:
        raise ConfigurationError("coefficients sampled on too few time levels")
    report = check_coercivity(coeffs)
    if not report.passed:
        raise CoercivityError("refusing a non-coercive problem: " + report.summary(), report)
    notes = []
    p, chi = _run(coeffs, paths, xi_fn, Psi_fn, degree, notes)
    rng = np.random.default_rng(seed)
    boot_p, boot_chi = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegressionWarning)
        for _ in range(n_boot):
            idx = rng.integers(0, paths.n_paths, paths.n_paths)
            bp, bc = _run(coeffs, paths.take(idx), xi_fn, Psi_fn, degree, [])
            boot_p.append(bp[0, 0])
            boot_chi.append(bc[0, 0])
    return RegressionEstimate(p, chi, p[0, 0], chi[0, 0],
                              np.std(boot_p, axis=0, ddof=1), np.std(boot_chi, axis=0, ddof=1),
                              tuple(notes))
