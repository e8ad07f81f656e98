"""Spatial discretization on an interval with homogeneous Dirichlet data.

Interior nodes only are stored; the zero boundary trace is structural.
Operators are tridiagonal and kept as three bands so that the same code
serves one node, a whole tree level, or a Monte Carlo path batch.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from bspde.errors import ConfigurationError, DataError, NumericalError

FIELDS = ("b", "f", "lam", "beta", "beta_bar")


@dataclass(frozen=True)
class SpatialGrid:
    domain_left: float = 0.0
    domain_right: float = 1.0
    M: int = 16

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ConfigurationError(f"need at least 2 interior nodes, got M={self.M}")
        if not self.domain_right > self.domain_left:
            raise ConfigurationError("domain_right must exceed domain_left")

    @property
    def h(self) -> float:
        return (self.domain_right - self.domain_left) / (self.M + 1)

    @property
    def length(self) -> float:
        return self.domain_right - self.domain_left

    @property
    def x(self) -> np.ndarray:
        return self.domain_left + self.h * np.arange(1, self.M + 1)


# ---------------------------------------------------------------------------
# tridiagonal bands

class Bands(NamedTuple):
    """Tridiagonal operator as bands of shape (..., M).

    ``lower[..., j]`` multiplies ``u[j-1]`` and ``upper[..., j]`` multiplies
    ``u[j+1]``; ``lower[..., 0]`` and ``upper[..., M-1]`` are always zero.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def transpose(self) -> "Bands":
        lower = np.zeros_like(self.lower)
        upper = np.zeros_like(self.upper)
        lower[..., 1:] = self.upper[..., :-1]
        upper[..., :-1] = self.lower[..., 1:]
        return Bands(lower, self.diag.copy(), upper)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """Apply to ``u`` of shape (..., M); band leading axes broadcast."""
        out = self.diag * u
        out[..., 1:] += self.lower[..., 1:] * u[..., :-1]
        out[..., :-1] += self.upper[..., :-1] * u[..., 1:]
        return out

    def dense(self) -> np.ndarray:
        if self.diag.ndim != 1:
            raise ConfigurationError("dense() needs bands of a single operator")
        return (np.diag(self.diag) + np.diag(self.lower[1:], -1)
                + np.diag(self.upper[:-1], 1))

    def scaled_shift(self, alpha: float, beta: float) -> "Bands":
        """Bands of ``alpha * I + beta * self``."""
        return Bands(beta * self.lower, alpha + beta * self.diag, beta * self.upper)


class TridiagFactor:
    """Batched Thomas factorization, reusable across right-hand sides.

    No pivoting; the systems built here are diagonally dominant whenever
    the cell Peclet number stays below 2 and ``dt * lam < 1``. A vanishing
    pivot raises ``NumericalError`` instead of returning garbage.
    """

    def __init__(self, bands: Bands, rtol: float = 1e-13):
        lower, diag, upper = np.broadcast_arrays(*bands)
        M = diag.shape[-1]
        self.lower = lower
        self.den = np.empty(diag.shape)
        self.cp = np.empty(diag.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.den[..., 0] = diag[..., 0]
            self.cp[..., 0] = upper[..., 0] / self.den[..., 0]
            for j in range(1, M):
                self.den[..., j] = diag[..., j] - lower[..., j] * self.cp[..., j - 1]
                self.cp[..., j] = upper[..., j] / self.den[..., j]
        scale = np.max(np.abs(diag)) if diag.size else 1.0
        if diag.size and not (np.min(np.abs(self.den)) > rtol * scale and np.all(np.isfinite(self.cp))):
            raise NumericalError("tridiagonal system is (numerically) singular")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for ``rhs`` of shape (..., M).

        Extra axes of ``rhs`` between the factor's batch axes and M are
        allowed only if the caller has inserted matching singleton axes.
        """
        M = rhs.shape[-1]
        y = np.empty(np.broadcast_shapes(rhs.shape, self.den.shape))
        y[..., 0] = rhs[..., 0] / self.den[..., 0]
        for j in range(1, M):
            y[..., j] = (rhs[..., j] - self.lower[..., j] * y[..., j - 1]) / self.den[..., j]
        for j in range(M - 2, -1, -1):
            y[..., j] -= self.cp[..., j] * y[..., j + 1]
        return y


# ---------------------------------------------------------------------------
# coefficients

class LevelCoefficients(NamedTuple):
    """Coefficients at one time level, broadcastable to (nodes, M)."""

    b: np.ndarray
    f: np.ndarray
    lam: np.ndarray
    beta: np.ndarray       # (N, nodes|1, M)
    beta_bar: np.ndarray   # (N, nodes|1, M)


def _path_factor(w):
    # bounded functional of the node's increment partial sums
    return np.tanh(np.sum(w, axis=-1))


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Sampled coefficients b, f, lam (shape (K+1, M)) and beta, beta_bar
    (shape (N, K+1, M)) on the interior nodes and time levels.

    ``path`` optionally maps a field name to an array of the same shape; the
    coefficient at a tree node then reads ``base + path * tanh(sum_i w_i)``
    with ``w`` the node's partial sums of increments. This is the
    omega-dependence of the coefficients, adapted by construction.
    """

    grid: SpatialGrid
    b: np.ndarray
    f: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    beta_bar: np.ndarray
    delta: float = 0.1
    path: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in FIELDS:
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        M = self.grid.M
        if self.b.ndim != 2 or self.b.shape[1] != M:
            raise ConfigurationError(f"b must have shape (K+1, {M}), got {self.b.shape}")
        shape = self.b.shape
        for name in ("f", "lam"):
            if getattr(self, name).shape != shape:
                raise ConfigurationError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.beta.ndim != 3 or self.beta.shape[1:] != shape:
            raise ConfigurationError(f"beta must have shape (N, {shape[0]}, {M}), got {self.beta.shape}")
        if self.beta_bar.shape != self.beta.shape:
            raise ConfigurationError("beta_bar and beta shapes differ")
        path = {}
        for name, arr in dict(self.path).items():
            if name not in FIELDS:
                raise ConfigurationError(f"unknown path-dependent field {name!r}")
            arr = np.array(arr, dtype=float)
            if arr.shape != getattr(self, name).shape:
                raise ConfigurationError(f"path modulation for {name} has wrong shape {arr.shape}")
            if not np.any(arr):
                continue
            path[name] = arr
        object.__setattr__(self, "path", path)
        for name in FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"non-finite entries in coefficient {name}")
        for name, arr in path.items():
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite entries in path modulation of {name}")
        if not self.delta > 0:
            raise ConfigurationError(f"coercivity constant must be positive, got delta={self.delta}")

    @property
    def N(self) -> int:
        return self.beta.shape[0]

    @property
    def n_levels(self) -> int:
        return self.b.shape[0]

    @property
    def path_dependent(self) -> bool:
        return bool(self.path)

    def _field(self, name, k, s):
        base = getattr(self, name)
        if name in ("beta", "beta_bar"):
            out = base[:, k][:, None, :]
            if s is not None and name in self.path:
                out = out + self.path[name][:, k][:, None, :] * s[None, :, None]
            return out
        out = base[k][None, :]
        if s is not None and name in self.path:
            out = out + self.path[name][k][None, :] * s[:, None]
        return out

    def at(self, k: int, w=None) -> LevelCoefficients:
        """Coefficients at time level ``k`` for nodes with partial sums ``w``.

        ``w`` has shape (nodes, N); without it (or without path dependence)
        the node axis has length one.
        """
        if not 0 <= k < self.n_levels:
            raise ConfigurationError(f"time index {k} outside 0..{self.n_levels - 1}")
        s = None
        if w is not None and self.path:
            s = _path_factor(np.atleast_2d(np.asarray(w, dtype=float)))
        return LevelCoefficients(*(self._field(name, k, s) for name in FIELDS))

    def envelope(self, name):
        """(lowest, highest) attainable value of a field over all paths."""
        base = getattr(self, name)
        amp = np.abs(self.path.get(name, 0.0))
        return base - amp, base + amp

    @property
    def bounds(self) -> dict:
        """Sup norms of the coefficients and of their first differences."""
        h = self.grid.h
        out = {}
        for name in FIELDS:
            lo, hi = self.envelope(name)
            out[name] = float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))
            base = getattr(self, name)
            amp = np.abs(self.path.get(name, np.zeros_like(base)))
            dbase = np.abs(np.diff(base, axis=-1)) / h
            damp = np.abs(np.diff(amp, axis=-1)) / h
            out["d" + name] = float(np.max(dbase + damp)) if base.shape[-1] > 1 else 0.0
        return out

    def with_noise_zeroed(self) -> "CoefficientSet":
        """Same drift, ``beta = beta_bar = 0`` (the B_i = 0 operators)."""
        path = {k: v for k, v in self.path.items() if k not in ("beta", "beta_bar")}
        return CoefficientSet(self.grid, self.b, self.f, self.lam,
                              np.zeros_like(self.beta), np.zeros_like(self.beta_bar),
                              self.delta, path)

    def replace(self, **changes) -> "CoefficientSet":
        kwargs = dict(grid=self.grid, b=self.b, f=self.f, lam=self.lam, beta=self.beta,
                      beta_bar=self.beta_bar, delta=self.delta, path=self.path)
        kwargs.update(changes)
        return CoefficientSet(**kwargs)


def _profile(kind, x, t, base, amp):
    x = np.asarray(x)[None, :]
    t = np.asarray(t)[:, None]
    if kind == "constant":
        return np.broadcast_to(base + 0.0 * x * t, (t.shape[0], x.shape[1])).copy()
    if kind == "affine":
        return base + amp * x + 0.0 * t
    if kind == "sinusoidal":
        return base + amp * np.sin(2.0 * math.pi * x) * np.cos(math.pi * t)
    raise ConfigurationError(f"unknown coefficient family {kind!r}")


def support_bump(grid: SpatialGrid, a: float, b: float) -> np.ndarray:
    """``sin^2`` bump on the domain fraction ``[a, b]``, zero elsewhere."""
    if not 0.0 <= a < b <= 1.0:
        raise ConfigurationError(f"support ({a}, {b}) must satisfy 0 <= a < b <= 1")
    s = (grid.x - grid.domain_left) / grid.length
    inside = (s > a) & (s < b)
    return np.where(inside, np.sin(math.pi * (s - a) / (b - a)) ** 2, 0.0)


def coefficient_family(grid: SpatialGrid, T: float, K: int, N: int, family: str = "constant",
                       b=1.0, b_amp=0.0, f=0.0, f_amp=0.0, lam=0.0, lam_amp=0.0,
                       beta=0.0, beta_amp=0.0, beta_bar=0.0, beta_bar_amp=0.0,
                       delta=0.1, path=None, beta_support=None) -> CoefficientSet:
    """Build a coefficient set from a parametric family.

    Each field reads ``base`` (constant), ``base + amp * x`` (affine) or
    ``base + amp * sin(2 pi x) cos(pi t)`` (sinusoidal). ``beta`` and friends
    accept a scalar or one value per noise dimension. ``path`` maps field
    names to scalar modulation amplitudes (see ``CoefficientSet``).
    ``beta_support = (a, b)`` (fractions of the domain) multiplies beta by
    the C1 bump ``sin^2`` on ``[a, b]``, zero outside.
    """
    t = np.linspace(0.0, T, K + 1)
    x = grid.x

    def per_noise(val):
        val = np.atleast_1d(np.asarray(val, dtype=float))
        if val.size == 1:
            val = np.repeat(val, N)
        if val.size != N:
            raise ConfigurationError(f"expected {N} noise values, got {val.size}")
        return val

    beta, beta_amp = per_noise(beta), per_noise(beta_amp)
    beta_bar, beta_bar_amp = per_noise(beta_bar), per_noise(beta_bar_amp)
    fields = dict(
        b=_profile(family, x, t, b, b_amp),
        f=_profile(family, x, t, f, f_amp),
        lam=_profile(family, x, t, lam, lam_amp),
        beta=np.stack([_profile(family, x, t, beta[i], beta_amp[i]) for i in range(N)])
        if N else np.zeros((0, K + 1, grid.M)),
        beta_bar=np.stack([_profile(family, x, t, beta_bar[i], beta_bar_amp[i]) for i in range(N)])
        if N else np.zeros((0, K + 1, grid.M)),
    )
    if beta_support is not None:
        fields["beta"] = fields["beta"] * support_bump(grid, *beta_support)
    path_arrays = {}
    for name, amp in (path or {}).items():
        if name not in FIELDS:
            raise ConfigurationError(f"unknown path-dependent field {name!r}")
        if name in ("beta", "beta_bar"):
            amp = per_noise(amp)
            path_arrays[name] = np.broadcast_to(amp[:, None, None], fields[name].shape).copy()
        else:
            path_arrays[name] = np.full(fields[name].shape, float(amp))
    return CoefficientSet(grid, delta=delta, path=path_arrays, **fields)


# ---------------------------------------------------------------------------
# operators

def drift_bands(grid: SpatialGrid, lc: LevelCoefficients) -> Bands:
    """Bands of A = b d2/dx2 + f d/dx + lam for every node in ``lc``."""
    h = grid.h
    b, f, lam = np.broadcast_arrays(lc.b, lc.f, lc.lam)
    lower = b / h**2 - f / (2 * h)
    upper = b / h**2 + f / (2 * h)
    diag = -2.0 * b / h**2 + lam
    lower = lower.copy()
    upper = upper.copy()
    lower[..., 0] = 0.0
    upper[..., -1] = 0.0
    return Bands(lower, diag, upper)


def noise_bands(grid: SpatialGrid, lc: LevelCoefficients, i: int) -> Bands:
    """Bands of B_i = beta_i d/dx + beta_bar_i for every node in ``lc``."""
    h = grid.h
    beta, beta_bar = np.broadcast_arrays(lc.beta[i], lc.beta_bar[i])
    lower = -beta / (2 * h)
    upper = beta / (2 * h)
    lower[..., 0] = 0.0
    upper[..., -1] = 0.0
    return Bands(lower, beta_bar.copy(), upper)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    matrix: np.ndarray
    time_index: int

    def adjoint(self) -> "DiscreteOperator":
        return DiscreteOperator(self.matrix.T, self.time_index)

    def __matmul__(self, u):
        return self.matrix @ u


def _check_k(coeffs, k):
    if not 0 <= k < coeffs.n_levels:
        raise ConfigurationError(f"time index {k} outside 0..{coeffs.n_levels - 1}")


def _single(coeffs, k, w):
    lc = coeffs.at(k, None if w is None else np.atleast_2d(w))
    # drop the node axis
    return LevelCoefficients(lc.b[0], lc.f[0], lc.lam[0], lc.beta[:, 0], lc.beta_bar[:, 0])


def assemble_A(grid: SpatialGrid, coeffs: CoefficientSet, k: int, w=None) -> DiscreteOperator:
    if coeffs.grid.M != grid.M:
        raise ConfigurationError("coefficient set was sampled on a different grid")
    _check_k(coeffs, k)
    return DiscreteOperator(drift_bands(grid, _single(coeffs, k, w)).dense(), k)


def assemble_B(grid: SpatialGrid, coeffs: CoefficientSet, i: int, k: int, w=None) -> DiscreteOperator:
    """Noise operator for noise index ``i`` in 1..N."""
    if coeffs.grid.M != grid.M:
        raise ConfigurationError("coefficient set was sampled on a different grid")
    if not 1 <= i <= coeffs.N:
        raise ConfigurationError(f"noise index {i} outside 1..{coeffs.N}")
    _check_k(coeffs, k)
    return DiscreteOperator(noise_bands(grid, _single(coeffs, k, w), i - 1).dense(), k)


def assemble_adjoints(grid, coeffs, k, w=None):
    """Discrete adjoints (exact transposes) of A and of every B_i."""
    A = assemble_A(grid, coeffs, k, w)
    Bs = [assemble_B(grid, coeffs, i, k, w) for i in range(1, coeffs.N + 1)]
    return A.adjoint(), [B.adjoint() for B in Bs]


def discretize_A_star(grid: SpatialGrid, coeffs: CoefficientSet, k: int) -> np.ndarray:
    """Direct finite-difference discretization of the formal adjoint
    ``d2(b v) - d(f v) + lam v`` (no transposition involved)."""
    _check_k(coeffs, k)
    h, M = grid.h, grid.M
    b, f, lam = coeffs.b[k], coeffs.f[k], coeffs.lam[k]
    out = np.zeros((M, M))
    for j in range(M):
        out[j, j] = -2.0 * b[j] / h**2 + lam[j]
        if j > 0:
            out[j, j - 1] = b[j - 1] / h**2 + f[j - 1] / (2 * h)
        if j < M - 1:
            out[j, j + 1] = b[j + 1] / h**2 - f[j + 1] / (2 * h)
    return out


@dataclass(frozen=True)
class CoercivityReport:
    passed: bool
    margin: float
    time_index: int
    node_index: int
    margins: np.ndarray = field(repr=False, compare=False)

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"coercivity {status}: min margin {self.margin:.6g} "
                f"at time_index={self.time_index}, node_index={self.node_index}")


def check_coercivity(coeffs: CoefficientSet, delta=None) -> CoercivityReport:
    """Check ``b - 1/2 sum_i beta_i^2 >= delta`` at every node and level.

    Path-dependent coefficients are checked on their worst case over all
    paths, so a pass certifies every tree node.
    """
    delta = coeffs.delta if delta is None else delta
    if not delta > 0:
        raise ConfigurationError(f"coercivity constant must be positive, got delta={delta}")
    b_low, _ = coeffs.envelope("b")
    beta_lo, beta_hi = coeffs.envelope("beta")
    beta_abs = np.maximum(np.abs(beta_lo), np.abs(beta_hi))
    margins = b_low - 0.5 * np.sum(beta_abs**2, axis=0) - delta
    k, j = np.unravel_index(np.argmin(margins), margins.shape)
    margin = float(margins[k, j])
    return CoercivityReport(margin >= 0.0, margin, int(k), int(j), margins)


# ---------------------------------------------------------------------------
# norms

def stiffness_bands(grid: SpatialGrid) -> Bands:
    """Dirichlet stiffness K with ``u.K u = sum (u_{j+1}-u_j)^2 / h``."""
    M, h = grid.M, grid.h
    lower = np.full(M, -1.0 / h)
    upper = np.full(M, -1.0 / h)
    lower[0] = 0.0
    upper[-1] = 0.0
    return Bands(lower, np.full(M, 2.0 / h), upper)


def stiffness_matrix(grid: SpatialGrid) -> np.ndarray:
    return stiffness_bands(grid).dense()


def laplacian_bands(grid: SpatialGrid) -> Bands:
    M, h = grid.M, grid.h
    lower = np.full(M, 1.0 / h**2)
    upper = np.full(M, 1.0 / h**2)
    lower[0] = 0.0
    upper[-1] = 0.0
    return Bands(lower, np.full(M, -2.0 / h**2), upper)


def norm_sq(u, kind: str, grid: SpatialGrid) -> np.ndarray:
    """Squared discrete norm over the last axis (vectorized over the rest).

    H0: ``h sum u^2``; H1: ``u.K u``; Hminus1: ``m.K^{-1} m`` with ``m = h u``,
    the value of the dual-norm supremum; H2: ``h sum (D2 u)^2`` with the
    Dirichlet second difference.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.M:
        raise ConfigurationError(f"field has {u.shape[-1]} entries, grid has {grid.M}")
    if kind == "H0":
        return grid.h * np.sum(u * u, axis=-1)
    if kind == "H1":
        return np.sum(u * stiffness_bands(grid).matvec(u), axis=-1)
    if kind == "Hminus1":
        m = grid.h * u
        z = TridiagFactor(stiffness_bands(grid)).solve(m)
        return np.sum(m * z, axis=-1)
    if kind == "H2":
        d2 = laplacian_bands(grid).matvec(u)
        return grid.h * np.sum(d2 * d2, axis=-1)
    raise ConfigurationError(f"unknown norm kind {kind!r}")


def norm(u, kind: str, grid: SpatialGrid):
    out = np.sqrt(np.maximum(norm_sq(u, kind, grid), 0.0))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# CSV

def _columns(N, path_fields):
    cols = ["node_index", "time_index", "b", "f", "lambda"]
    cols += [f"beta_{i + 1}" for i in range(N)] + [f"beta_bar_{i + 1}" for i in range(N)]
    for name in path_fields:
        if name in ("beta", "beta_bar"):
            cols += [f"{name}_{i + 1}_path" for i in range(N)]
        else:
            cols.append(("lambda" if name == "lam" else name) + "_path")
    return cols


def export_coefficients_csv(coeffs: CoefficientSet, path) -> None:
    """Write one row per (node, time level).

    ``*_path`` columns are appended only for path-dependent fields.
    """
    path_fields = [name for name in FIELDS if name in coeffs.path]
    cols = _columns(coeffs.N, path_fields)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for j in range(coeffs.grid.M):
            for k in range(coeffs.n_levels):
                row = [j, k, coeffs.b[k, j], coeffs.f[k, j], coeffs.lam[k, j]]
                row += list(coeffs.beta[:, k, j]) + list(coeffs.beta_bar[:, k, j])
                for name in path_fields:
                    arr = coeffs.path[name]
                    row += list(arr[:, k, j]) if arr.ndim == 3 else [arr[k, j]]
                writer.writerow([r if isinstance(r, int) else repr(float(r)) for r in row])


def import_coefficients_csv(path, grid: SpatialGrid, n_levels: int, delta: float = 0.1) -> CoefficientSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: empty coefficient table")
    header = list(rows[0].keys())
    N = sum(1 for c in header if c.startswith("beta_") and not c.startswith("beta_bar")
            and not c.endswith("_path"))
    M = grid.M
    arrays = {name: np.full((n_levels, M), np.nan) for name in ("b", "f", "lambda")}
    beta = np.full((N, n_levels, M), np.nan)
    beta_bar = np.full((N, n_levels, M), np.nan)
    path_cols = [c for c in header if c.endswith("_path")]
    path_raw = {c: np.full((n_levels, M), np.nan) for c in path_cols}
    for row in rows:
        try:
            j, k = int(row["node_index"]), int(row["time_index"])
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: bad index columns") from exc
        if not (0 <= j < M and 0 <= k < n_levels):
            raise ConfigurationError(f"{path}: row index ({j}, {k}) outside grid {M} x {n_levels}")
        for name in arrays:
            arrays[name][k, j] = float(row[name])
        for i in range(N):
            beta[i, k, j] = float(row[f"beta_{i + 1}"])
            beta_bar[i, k, j] = float(row[f"beta_bar_{i + 1}"])
        for c in path_cols:
            path_raw[c][k, j] = float(row[c])
    if np.isnan(arrays["b"]).any():
        raise ConfigurationError(f"{path}: table does not cover the whole grid")
    path_arrays = {}
    for c, arr in path_raw.items():
        stem = c[: -len("_path")]
        if stem.startswith("beta_bar_") or stem.startswith("beta_"):
            name, i = stem.rsplit("_", 1)
            path_arrays.setdefault(name, np.zeros((N, n_levels, M)))[int(i) - 1] = arr
        else:
            path_arrays["lam" if stem == "lambda" else stem] = arr
    return CoefficientSet(grid, arrays["b"], arrays["f"], arrays["lambda"], beta, beta_bar,
                          delta, path_arrays)
