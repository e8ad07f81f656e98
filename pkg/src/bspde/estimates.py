"""Empirical probes of the energy estimates and a refinement study.

Discrete norms (all built on ``grid_ops.norm_sq``):

* ``X^m(g) = sqrt(sum_k dt * prob_k * sum_nodes |g_k|_{H^m}^2)`` over steps,
* ``Z^m(g_k) = sqrt(prob_k * sum_nodes |g_k|_{H^m}^2)`` on one slice,
* ``Y^m(u) = X^m(v) + max_k Z^{m-1}(u_k)`` with ``v`` the drift-stage field.

Forward order ``k = -1`` uses ``Y^1`` against ``X^-1, Z^0, X^0`` data norms;
``k = 0`` shifts every index by one. The backward probe uses
``Y^1(p) + sum_i X^0(chi_i)`` against ``X^-1(xi) + Z^0(Psi)``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from bspde.backward_solver import solve_backward_tree
from bspde.errors import ConfigurationError
from bspde.forward_solver import TreeSystem, solve_forward
from bspde.grid_ops import SpatialGrid, coefficient_family, norm_sq
from bspde.time_noise import AdaptedField, build_tree

KIND = {-1: "Hminus1", 0: "H0", 1: "H1", 2: "H2"}
BOUNDARY_CELLS = 2


def x_norm(field, m, grid) -> float:
    if field is None:
        return 0.0
    tree = field.tree
    total = sum(tree.dt * tree.probability(k) * float(np.sum(norm_sq(field.level(k), KIND[m], grid)))
                for k in range(field.start, field.stop + 1))
    return math.sqrt(total)


def z_norm(values, k, tree, m, grid) -> float:
    if values is None:
        return 0.0
    return math.sqrt(tree.probability(k) * float(np.sum(norm_sq(values, KIND[m], grid))))


def y_norm(stage, nodes, m, grid) -> float:
    tree = nodes.tree
    return x_norm(stage, m, grid) + max(z_norm(nodes.level(k), k, tree, m - 1, grid)
                                        for k in range(nodes.start, nodes.stop + 1))


# ---------------------------------------------------------------------------
# random data

def smooth_field(tree, k0, k1, grid, rng, modes=8) -> AdaptedField:
    """Gaussian field: independent N(0, 1/j^2) weights of the first sine
    modes at every node, so the law does not depend on the mesh."""
    s = (grid.x - grid.domain_left) / grid.length
    j = np.arange(1, modes + 1)
    basis = np.sin(math.pi * np.outer(j, s)) / j[:, None]
    return AdaptedField(tree, k0, tuple(rng.standard_normal((tree.level_size(k), modes)) @ basis
                                        for k in range(k0, k1 + 1)))


def smooth_slice(tree, k, grid, rng, modes=8) -> np.ndarray:
    return smooth_field(tree, k, k, grid, rng, modes).level(k)


def _unit(field, nrm):
    return field if nrm == 0.0 else field * (1.0 / nrm)


def random_forward_data(tree, grid, seed, order=-1, idx=0):
    """(phi, Phi, h) with every component rescaled to unit data norm."""
    rng = np.random.default_rng([seed, idx])
    K = tree.K
    phi = smooth_field(tree, 0, K - 1, grid, rng)
    phi = _unit(phi, x_norm(phi, order, grid))
    Phi = smooth_slice(tree, 0, grid, rng)
    Phi = Phi / z_norm(Phi, 0, tree, order + 1, grid)
    h = []
    for _ in range(tree.N):
        hi = smooth_field(tree, 0, K - 1, grid, rng)
        h.append(_unit(hi, x_norm(hi, order + 1, grid)))
    return phi, Phi, h


def random_backward_data(tree, grid, seed, idx=0):
    rng = np.random.default_rng([seed, idx])
    xi = smooth_field(tree, 0, tree.K - 1, grid, rng)
    xi = _unit(xi, x_norm(xi, -1, grid))
    Psi = smooth_slice(tree, tree.K, grid, rng)
    return xi, Psi / z_norm(Psi, tree.K, tree, 0, grid)


# ---------------------------------------------------------------------------

def check_boundary_noise(coeffs, cells=BOUNDARY_CELLS):
    """The second-order estimate needs beta_i = 0 on the boundary; on the
    grid this is asked at the ``cells`` nodes nearest each end."""
    M = coeffs.grid.M
    idx = sorted(set(list(range(cells)) + list(range(M - cells, M))))
    lo, hi = coeffs.envelope("beta")
    bad = np.maximum(np.abs(lo), np.abs(hi))[..., idx]
    if np.any(bad != 0.0):
        raise ConfigurationError(
            "the k=0 estimate requires the noise coefficients beta_i to vanish on the boundary; "
            f"beta is nonzero at the boundary nodes {idx} (max |beta| = {float(np.max(bad)):.3g})")


def forward_ratio(coeffs, tree, phi, Phi, h, order=-1, system=None) -> float:
    """Solution norm over data norm; NaN for zero data (0/0)."""
    grid = coeffs.grid
    data = (x_norm(phi, order, grid) + z_norm(Phi, 0, tree, order + 1, grid)
            + sum(x_norm(hi, order + 1, grid) for hi in (h or [])))
    if data == 0.0:
        return float("nan")
    sol = solve_forward(coeffs, tree, phi, Phi, h, system=system)
    return y_norm(sol.u_stage, sol.u, order + 2, grid) / data


def backward_ratio(coeffs, tree, xi, Psi, system=None) -> float:
    grid = coeffs.grid
    data = x_norm(xi, -1, grid) + (z_norm(Psi, tree.K, tree, 0, grid) if Psi is not None else 0.0)
    if data == 0.0:
        return float("nan")
    sol = solve_backward_tree(coeffs, tree, xi, Psi, system=system)
    num = y_norm(sol.p.restrict(0, tree.K - 1), sol.p, 1, grid) + sum(x_norm(c, 0, grid) for c in sol.chi)
    return num / data


@dataclass(frozen=True)
class RatioStudy:
    label: str
    seeds: tuple
    ratios: np.ndarray  # NaN marks an excluded 0/0 instance

    @property
    def excluded(self) -> int:
        return int(np.sum(np.isnan(self.ratios)))

    @property
    def valid(self) -> np.ndarray:
        return self.ratios[~np.isnan(self.ratios)]

    @property
    def max_ratio(self) -> float:
        v = self.valid
        return float(np.max(v)) if v.size else float("nan")

    @property
    def p95_ratio(self) -> float:
        v = self.valid
        return float(np.percentile(v, 95)) if v.size else float("nan")


def energy_ratio_forward(coeffs, tree, order=-1, samples=50, seed=0, scale=1.0, label=None):
    if order not in (-1, 0):
        raise ConfigurationError(f"order must be -1 or 0, got {order}")
    if order == 0:
        check_boundary_noise(coeffs)
    system = TreeSystem(coeffs, tree)
    ratios = []
    for idx in range(samples):
        phi, Phi, h = random_forward_data(tree, coeffs.grid, seed, order, idx)
        if scale != 1.0:
            phi, Phi, h = phi * scale, Phi * scale, [hi * scale for hi in h]
        ratios.append(forward_ratio(coeffs, tree, phi, Phi, h, order, system))
    return RatioStudy(label or f"M={coeffs.grid.M}", tuple(range(samples)), np.array(ratios))


def energy_ratio_backward(coeffs, tree, samples=50, seed=0, scale=1.0, label=None):
    system = TreeSystem(coeffs, tree)
    ratios = []
    for idx in range(samples):
        xi, Psi = random_backward_data(tree, coeffs.grid, seed, idx)
        if scale != 1.0:
            xi, Psi = xi * scale, Psi * scale
        ratios.append(backward_ratio(coeffs, tree, xi, Psi, system))
    return RatioStudy(label or f"M={coeffs.grid.M}", tuple(range(samples)), np.array(ratios))


def growth_factor(coarse: RatioStudy, fine: RatioStudy) -> float:
    """Relative change of the max ratio from the coarse to the fine study."""
    return fine.max_ratio / coarse.max_ratio - 1.0


def export_study_csv(studies, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "seed", "ratio"])
        for st in studies:
            for seed, r in zip(st.seeds, st.ratios):
                writer.writerow([st.label, seed, repr(float(r))])


def export_summary_csv(studies, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "max_ratio", "p95_ratio", "growth_factor"])
        prev = None
        for st in studies:
            g = "" if prev is None else repr(growth_factor(prev, st))
            writer.writerow([st.label, repr(st.max_ratio), repr(st.p95_ratio), g])
            prev = st


# ---------------------------------------------------------------------------
# refinement

@dataclass(frozen=True)
class ConvergenceTable:
    axis: str              # "h" or "dt"
    levels: tuple          # M or K values
    steps: np.ndarray      # h or dt values
    errors: np.ndarray

    @property
    def orders(self) -> np.ndarray:
        """Observed orders between consecutive levels."""
        return np.log(self.errors[:-1] / self.errors[1:]) / np.log(self.steps[:-1] / self.steps[1:])

    @property
    def slope(self) -> float:
        """Least-squares slope of log error against log step."""
        if np.any(self.errors == 0.0):
            return float("nan")
        return float(np.polyfit(np.log(self.steps), np.log(self.errors), 1)[0])


def heat_error(M, K, T=0.1, domain=(0.0, 1.0), amplitude=1.0) -> float:
    """Max-norm error at time T of the deterministic heat solve started
    from ``amplitude * sin(pi (x - a) / L)`` against the exact decay."""
    grid = SpatialGrid(domain[0], domain[1], M)
    tree = build_tree(0, K, T / K)
    coeffs = coefficient_family(grid, T, K, 0, b=1.0)
    mode = np.sin(math.pi * (grid.x - grid.domain_left) / grid.length)
    sol = solve_forward(coeffs, tree, Phi=amplitude * mode)
    exact = amplitude * math.exp(-(math.pi / grid.length) ** 2 * T) * mode
    return float(np.max(np.abs(sol.terminal[0] - exact)))


DEFAULT_H_LEVELS = (7, 15, 31)
DEFAULT_DT_LEVELS = (8, 16, 32)


def refinement_study(axis="h", levels=None, T=0.1, fixed=None, domain=(0.0, 1.0), amplitude=1.0):
    """Heat-equation errors along one refinement axis.

    ``axis="h"`` varies M at ``fixed`` time steps (default 16384);
    ``axis="dt"`` varies K at ``fixed`` interior nodes (default 511).
    """
    if axis == "h":
        levels = tuple(levels or DEFAULT_H_LEVELS)
        K = fixed or 16384
        steps = np.array([(domain[1] - domain[0]) / (M + 1) for M in levels])
        errs = [heat_error(M, K, T, domain, amplitude) for M in levels]
    elif axis == "dt":
        levels = tuple(levels or DEFAULT_DT_LEVELS)
        M = fixed or 511
        steps = np.array([T / K for K in levels])
        errs = [heat_error(M, K, T, domain, amplitude) for K in levels]
    else:
        raise ConfigurationError(f"axis must be 'h' or 'dt', got {axis!r}")
    if len(levels) < 2:
        raise ConfigurationError("a refinement study needs at least two levels")
    return ConvergenceTable(axis, levels, steps, np.array(errs))


def export_convergence_csv(tables, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "level", "step", "error", "order"])
        for tb in tables:
            orders = [""] + [repr(float(o)) for o in tb.orders]
            for lv, st, er, od in zip(tb.levels, tb.steps, tb.errors, orders):
                writer.writerow([tb.axis, lv, repr(float(st)), repr(float(er)), od])
