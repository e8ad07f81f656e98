"""Backward problem on the scenario tree: three routes and cross-checks.

* ``tree``: node-wise recursion with the martingale coefficient extracted
  by correlation with the increments.
* ``adjoint``: weighted transposes of the assembled forward maps.
* ``fixedpoint``: noise-free adjoint solves plus the fixed point
  ``zeta = sum_i B_i^T chi_i(zeta)``, falling back to a sparse direct solve.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from bspde.errors import ConfigurationError, NumericalError
from bspde.forward_solver import (TreeSystem, assemble_map, assemble_P, backward_steps,
                                  field_levels, level_array, resolve_interval,
                                  x0_weights)
from bspde.time_noise import AdaptedField, children_view


@dataclass(frozen=True, eq=False)
class BackwardSolution:
    p: AdaptedField          # levels k0..k1
    chi: tuple               # N fields on k0..k1-1
    route: str = "tree"
    info: dict = field(default_factory=dict)

    @property
    def interval(self):
        return self.p.start, self.p.stop

    @property
    def initial(self) -> np.ndarray:
        return self.p.level(self.p.start)

    def max_abs_chi(self) -> float:
        return max((float(np.max(np.abs(c.flatten()))) for c in self.chi), default=0.0)


def _inputs(coeffs, tree, xi, Psi, interval):
    k0, k1 = resolve_interval(tree, interval)
    M = coeffs.grid.M
    xi_l = field_levels(xi, tree, k0, k1 - 1, M, "xi")
    PsiA = level_array(np.zeros(M) if Psi is None else Psi, tree, k1, M, "Psi")
    return k0, k1, xi_l, PsiA


def _package(tree, k0, p_levels, chi_levels, route, info=None):
    p = AdaptedField(tree, k0, tuple(x[:, 0] if x.ndim == 3 else x for x in p_levels))
    chi = tuple(AdaptedField(tree, k0, tuple(x[:, 0] if x.ndim == 3 else x for x in c))
                for c in chi_levels)
    return BackwardSolution(p, chi, route, info or {})


def solve_backward_tree(coeffs, tree, xi=None, Psi=None, interval=None, system=None):
    """Node-wise backward recursion; ``Psi`` is the level-k1 slice."""
    system = system or TreeSystem(coeffs, tree)
    k0, k1, xi_l, PsiA = _inputs(coeffs, tree, xi, Psi, interval)
    p, chis = backward_steps(system, k0, k1, PsiA[:, None, :], xi_l)
    # terminal slice is stored as given
    p[-1] = PsiA
    return _package(tree, k0, p, chis, "tree")


# ---------------------------------------------------------------------------

class AdjointMaps:
    """The maps L, calL and M_i on one interval, assembled once and reused."""

    def __init__(self, coeffs, tree, interval=None):
        self.interval = resolve_interval(tree, interval)
        system = TreeSystem(coeffs, tree)
        self.L = assemble_map(coeffs, tree, "L", self.interval, system=system)
        self.calL = assemble_map(coeffs, tree, "calL", self.interval, system=system)
        self.Mi = [assemble_map(coeffs, tree, f"M{i + 1}", self.interval, system=system)
                   for i in range(tree.N)]
        self.tree = tree
        self.M = coeffs.grid.M


def solve_backward_adjoint(coeffs, tree, xi=None, Psi=None, interval=None, maps=None):
    """``p = L^*[xi; Psi]``, ``p_k0 = calL^*[xi; Psi]``, ``chi_i = M_i^*[xi; Psi]``."""
    maps = maps or AdjointMaps(coeffs, tree, interval)
    k0, k1, xi_l, PsiA = _inputs(coeffs, tree, xi, Psi, interval or maps.interval)
    if (k0, k1) != maps.interval:
        raise ConfigurationError(f"maps assembled for {maps.interval}, asked for {(k0, k1)}")
    M = maps.M
    xi_vec = (np.concatenate([xi_l[k][:, 0].ravel() for k in range(k0, k1)]) if xi_l
              else np.zeros(maps.L.n_interval_rows))
    y = np.concatenate([xi_vec, PsiA.ravel()])
    p_inner = AdaptedField.unflatten(tree, k0, k1 - 1, maps.L.adjoint(y), (M,))
    p0 = maps.calL.adjoint(y).reshape(tree.level_size(k0), M)
    levels = (p0,) + p_inner.levels[1:] + (PsiA,)
    chis = [AdaptedField.unflatten(tree, k0, k1 - 1, Mi.adjoint(y), (M,)).levels for Mi in maps.Mi]
    return _package(tree, k0, levels, chis, "adjoint")


# ---------------------------------------------------------------------------

def solve_backward_fixedpoint(coeffs, tree, xi=None, Psi=None, interval=None, tol=1e-12,
                              max_iter=200, direct=False):
    """Fixed-point route.

    Each sweep solves the noise-free backward problem with source
    ``xi + zeta`` (the transposes of Q_0 and Q_i, applied matrix-free) and
    updates ``zeta = sum_i B_i^T chi_i``. The residual history is stored in
    ``info['history']``. Without convergence (or with ``direct=True``)
    ``(I - P^*) zeta = P^* xi`` is solved on the assembled sparse matrix.
    """
    k0, k1, xi_l, PsiA = _inputs(coeffs, tree, xi, Psi, interval)
    M = coeffs.grid.M
    full = TreeSystem(coeffs, tree)
    zero = TreeSystem(coeffs.with_noise_zeroed(), tree, check=False)
    base = {k: (xi_l[k] if xi_l else np.zeros((tree.level_size(k), 1, M))) for k in range(k0, k1)}

    def sweep(zeta):
        src = {k: base[k] + zeta[k] for k in range(k0, k1)}
        p, chis = backward_steps(zero, k0, k1, PsiA[:, None, :], src)
        new = {}
        for k in range(k0, k1):
            ops = full.level(k)
            acc = np.zeros_like(base[k])
            for i in range(tree.N):
                acc = acc + ops.BT[i].matvec(chis[i][k - k0])
            new[k] = acc
        return p, chis, new

    zeta = {k: np.zeros_like(base[k]) for k in range(k0, k1)}
    history = []
    converged = False
    if not direct:
        for _ in range(max_iter):
            p, chis, new = sweep(zeta)
            diff = max(float(np.max(np.abs(new[k] - zeta[k]))) for k in zeta)
            scale = max(max(float(np.max(np.abs(new[k]))) for k in new), 1e-300)
            zeta = new
            history.append(diff / scale if scale > 1e-300 else 0.0)
            if history[-1] <= tol:
                converged = True
                break
    if not converged:
        zeta = _direct_zeta(coeffs, tree, k0, k1, base, PsiA, full, zero, sweep)
    p, chis, _ = sweep(zeta)
    p[-1] = PsiA
    info = {"history": history, "converged": converged, "iterations": len(history),
            "method": "neumann" if converged else "direct"}
    return _package(tree, k0, p, chis, "fixedpoint", info)


def _direct_zeta(coeffs, tree, k0, k1, base, PsiA, full, zero, sweep):
    """Solve ``(I - P^*) zeta = b`` with ``b`` the first sweep from ``zeta = 0``."""
    M = coeffs.grid.M
    P = assemble_P(coeffs, tree, (k0, k1))
    w = x0_weights(tree, k0, k1, M, coeffs.grid.h)
    Pstar = sp.diags(1.0 / w) @ P.T @ sp.diags(w)
    _, _, b = sweep({k: np.zeros_like(base[k]) for k in base})
    rhs = np.concatenate([b[k][:, 0].ravel() for k in range(k0, k1)])
    A = (sp.identity(P.shape[0], format="csc") - Pstar).tocsc()
    try:
        sol = spla.spsolve(A, rhs)
    except RuntimeError as exc:
        raise NumericalError(f"direct solve of I - P^* failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalError("direct solve of I - P^* returned non-finite values (singular)")
    field_ = AdaptedField.unflatten(tree, k0, k1 - 1, sol, (M,))
    return {k: field_.level(k)[:, None, :] for k in range(k0, k1)}


# ---------------------------------------------------------------------------

def solve_backward(coeffs, tree, xi=None, Psi=None, route="tree", interval=None, **kw):
    if route == "tree":
        return solve_backward_tree(coeffs, tree, xi, Psi, interval)
    if route == "adjoint":
        return solve_backward_adjoint(coeffs, tree, xi, Psi, interval, **kw)
    if route == "fixedpoint":
        return solve_backward_fixedpoint(coeffs, tree, xi, Psi, interval, **kw)
    raise ConfigurationError(f"unknown backward route {route!r}")


def relative_difference(a: BackwardSolution, b: BackwardSolution) -> float:
    """Max-norm difference of (p, chi) relative to the max-norm of ``a``."""
    num, den = 0.0, 0.0
    pairs = [(a.p, b.p)] + list(zip(a.chi, b.chi))
    for x, y in pairs:
        fx, fy = x.flatten(), y.flatten()
        num = max(num, float(np.max(np.abs(fx - fy))))
        den = max(den, float(np.max(np.abs(fx))), float(np.max(np.abs(fy))))
    return num / max(den, 1e-300)


def martingale_remainder(sol: BackwardSolution, k: int) -> np.ndarray:
    """``p_{k+1} - E[p_{k+1}|F_k] - sum_i chi_i dw_i`` at level k+1.

    Zero for one noise; for two noises the four-point tree leaves a product
    term that is orthogonal to both increments.
    """
    tree = sol.p.tree
    nxt = sol.p.level(k + 1)
    view = children_view(tree, nxt, k)
    rest = view - view.mean(axis=1, keepdims=True)
    for i in range(tree.N):
        rest = rest - sol.chi[i].level(k)[:, None] * tree.child_increments[:, i].reshape(1, -1, 1)
    return rest.reshape(nxt.shape)


def reconstruction_check(coeffs, tree, sol: BackwardSolution, xi=None, include_remainder=True):
    """Integrated backward equation on every path, from every start level.

    Returns ``(residual, remainder_max, orthogonality)``: the max-norm of
    ``p_t + int_t^T chi dw - int_t^T (A^T p + sum B^T chi + xi) ds - Psi``
    (``A^T p`` at the left point of each step, i.e. implicit in p_k),
    the largest martingale remainder and its largest correlation with an
    increment. With ``include_remainder`` the remainder is added back.
    """
    system = TreeSystem(coeffs, tree)
    k0, k1 = sol.interval
    M = coeffs.grid.M
    xi_l = field_levels(xi, tree, k0, k1 - 1, M, "xi") if xi is not None else None
    dt = tree.dt
    Psi = sol.p.level(k1)
    # per-step increment  d_k = p_{k+1} - p_k  expressed at level k+1
    acc = np.zeros_like(Psi)  # sum over steps k >= t, evaluated at leaves of level k1
    worst, rem_max, orth = 0.0, 0.0, 0.0
    for k in range(k1 - 1, k0 - 1, -1):
        ops = system.level(k)
        pk = sol.p.level(k)
        drift = ops.AT.matvec(pk[:, None, :])[:, 0]
        for i in range(tree.N):
            drift = drift + ops.BT[i].matvec(sol.chi[i].level(k)[:, None, :])[:, 0]
        if xi_l:
            drift = drift + xi_l[k][:, 0]
        rem = martingale_remainder(sol, k)
        rem_max = max(rem_max, float(np.max(np.abs(rem))) if rem.size else 0.0)
        if tree.N:
            corr = np.abs(np.tensordot(tree.signs.T, children_view(tree, rem, k), axes=([1], [1])))
            orth = max(orth, float(np.max(corr)) * tree.sqrt_dt / tree.branching)
        step = -dt * drift
        mart = np.zeros((tree.level_size(k + 1), M))
        for i in range(tree.N):
            mart += np.repeat(sol.chi[i].level(k), tree.branching, axis=0) * \
                np.tile(tree.child_increments[:, i], tree.level_size(k))[:, None]
        if include_remainder:
            mart = mart + rem
        step = np.repeat(step, tree.branching, axis=0) + mart
        acc = _spread(tree, step, k + 1, k1) + acc
        total = _spread(tree, pk, k, k1) + acc - Psi
        scale = max(float(np.max(np.abs(Psi))), float(np.max(np.abs(pk))), 1e-300)
        worst = max(worst, float(np.max(np.abs(total))) / scale)
    return worst, rem_max, orth


def _spread(tree, values, k, k1):
    """Level-k values repeated onto the level-k1 descendants."""
    return np.repeat(values, tree.branching ** (k1 - k), axis=0)


# ---------------------------------------------------------------------------

def export_backward_csv(sol: BackwardSolution, path) -> None:
    """Rows (path_id, step, node_index, p, chi_1..chi_N); chi blank at the last step."""
    tree = sol.p.tree
    k0, k1 = sol.interval
    N = len(sol.chi)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "step", "node_index", "p"] + [f"chi_{i + 1}" for i in range(N)])
        for leaf in range(tree.level_size(k1)):
            for k in range(k0, k1 + 1):
                node = leaf // tree.branching ** (k1 - k)
                pk = sol.p.level(k)[node]
                for j in range(pk.shape[0]):
                    chis = ([repr(float(c.level(k)[node, j])) for c in sol.chi] if k < k1
                            else [""] * N)
                    writer.writerow([leaf, k, j, repr(float(pk[j]))] + chis)
