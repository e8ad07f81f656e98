"""Forward-backward duality checks."""

import csv
from dataclasses import dataclass

import numpy as np

from bspde.backward_solver import solve_backward_tree
from bspde.errors import ConfigurationError
from bspde.forward_solver import LinearSolveMap, TreeSystem, solve_forward

EPS = 1e-300


@dataclass(frozen=True)
class DualityReport:
    lhs: float
    rhs: float
    residual_absolute: float
    residual_relative: float
    instance: str = ""

    @classmethod
    def from_sides(cls, lhs, rhs, instance=""):
        lhs, rhs = float(lhs), float(rhs)
        diff = abs(lhs - rhs)
        return cls(lhs, rhs, diff, diff / max(abs(lhs), abs(rhs), EPS), instance)

    def passed(self, tol: float) -> bool:
        return self.residual_relative <= tol


def pair_x0(a, b, grid) -> float:
    """Discrete (a, b) over the interval: sum of dt * h * probability * a.b."""
    if a is None or b is None:
        return 0.0
    tree = a.tree
    if a.start != b.start or a.stop != b.stop:
        raise ConfigurationError("pairing fields over different level ranges")
    return sum(tree.dt * grid.h * tree.probability(k) * float(np.sum(a.level(k) * b.level(k)))
               for k in range(a.start, a.stop + 1))


def pair_slice(a, b, tree, k, grid) -> float:
    """Discrete (a, b) on the level-k slice: h * probability * a.b."""
    if a is None or b is None:
        return 0.0
    return grid.h * tree.probability(k) * float(np.sum(np.asarray(a) * np.asarray(b)))


def duality_residual(coeffs, tree, phi=None, Phi=None, h=None, xi=None, Psi=None,
                     instance="", fwd=None, bwd=None, system=None) -> DualityReport:
    """Both sides of the discrete duality identity.

    lhs = (Psi, u_K) + (xi, v);  rhs = (p, phi) + (p_0, Phi) + sum_i (chi_i, h_i)

    where ``v`` is the drift-stage representative of ``u`` on each step.
    Precomputed solutions may be passed to avoid re-solving.
    """
    for f in [phi, xi] + list(h or []):
        if f is not None and not tree.same_shape(f.tree):
            raise ConfigurationError("data live on a different tree")
    grid = coeffs.grid
    system = system or TreeSystem(coeffs, tree)
    fwd = fwd or solve_forward(coeffs, tree, phi, Phi, h, system=system)
    bwd = bwd or solve_backward_tree(coeffs, tree, xi, Psi, system=system)
    k0, k1 = fwd.interval
    if bwd.interval != (k0, k1):
        raise ConfigurationError("forward and backward solutions cover different intervals")
    lhs = pair_slice(bwd.p.level(k1), fwd.terminal, tree, k1, grid) + pair_x0(xi, fwd.u_stage, grid)
    p_x0 = bwd.p.restrict(k0, k1 - 1)
    rhs = pair_x0(phi, p_x0, grid)
    if Phi is not None:
        rhs += pair_slice(bwd.initial, np.broadcast_to(Phi, bwd.initial.shape), tree, k0, grid)
    for i, hi in enumerate(h or []):
        rhs += pair_x0(hi, bwd.chi[i], grid)
    return DualityReport.from_sides(lhs, rhs, instance)


def adjoint_pairing_residual(A: LinearSolveMap, x, y, dual=None) -> DualityReport:
    """``<A x, y>_out`` against ``<x, A^* y>_in`` under the map's weights.

    ``dual`` replaces ``A^* y`` by an independently computed vector (for
    instance the backward recursion), turning the check into a test of the
    weights as well as of the transpose.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_out, n_in = A.shape
    if x.shape != (n_in,) or y.shape != (n_out,):
        raise ConfigurationError(f"pairing needs x of length {n_in} and y of length {n_out}, "
                                 f"got {x.shape} and {y.shape}")
    dual = A.adjoint(y) if dual is None else np.asarray(dual, dtype=float)
    if dual.shape != (n_in,):
        raise ConfigurationError(f"dual vector must have length {n_in}, got {dual.shape}")
    lhs = float(np.sum(A.out_weights * A.apply(x) * y))
    rhs = float(np.sum(A.in_weights * x * dual))
    return DualityReport.from_sides(lhs, rhs, A.which)


def export_duality_csv(rows, path) -> None:
    """``rows``: iterable of (scenario, instance_seed, DualityReport)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "instance_seed", "lhs", "rhs", "abs_residual", "rel_residual"])
        for name, seed, r in rows:
            writer.writerow([name, seed, repr(r.lhs), repr(r.rhs), repr(r.residual_absolute),
                             repr(r.residual_relative)])
