"""Split-interval checks: backward anti-causality and forward causality.

A global solve on ``[0, K]`` is compared with a solve on the sub-interval
``[theta, s]`` whose terminal (or initial) data is the global solution
taken node-wise on the level-s (or level-theta) slice.

``method="adjoint"`` realizes the sub-interval solves through the assembled
maps of ``[theta, s]`` (their weighted transposes for the backward problem),
an independent computation. ``method="tree"`` re-runs the recursion on the
sub-interval, which is bit-identical by construction.
"""

import csv
from dataclasses import dataclass

import numpy as np

from bspde.backward_solver import AdjointMaps, solve_backward_adjoint, solve_backward_tree
from bspde.errors import ConfigurationError
from bspde.forward_solver import TreeSystem, solve_forward

EPS = 1e-300


@dataclass(frozen=True)
class SplitReport:
    theta: int
    s: int
    res_p: float
    res_p0: float
    res_chi: tuple
    res_forward: float = float("nan")

    def __post_init__(self):
        if not self.theta < self.s:
            raise ConfigurationError(f"need theta < s, got {self.theta}, {self.s}")

    @property
    def backward_max(self) -> float:
        return max((self.res_p, self.res_p0) + tuple(self.res_chi))


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _rel(a, b, scale=None) -> float:
    """Max-norm difference relative to ``scale`` (default: the max-norm of
    the reference ``a``)."""
    a, b = np.asarray(a), np.asarray(b)
    diff = _maxabs(a - b) if a.size else 0.0
    if not diff:
        return 0.0
    return diff / max(_maxabs(a) if scale is None else scale, EPS)


def _backward_scale(full, theta, s):
    """Joint max-norm of the global (p, chi) on [theta, s].

    chi vanishes identically on deterministic problems, so its residuals are
    measured against the size of the whole solution, not of chi alone."""
    parts = [full.p.restrict(theta, s).flatten()] + [c.restrict(theta, s - 1).flatten()
                                                     for c in full.chi]
    return max(_maxabs(x) for x in parts)


def _check_split(tree, theta, s):
    for name, v in (("theta", theta), ("s", s)):
        if int(v) != v or not 0 <= v <= tree.K:
            raise ConfigurationError(f"{name}={v} is not a grid index in 0..{tree.K}")
    if not theta < s:
        raise ConfigurationError(f"need theta < s, got theta={theta}, s={s}")
    return int(theta), int(s)


def _restrict(field, k0, k1):
    return None if field is None else field.restrict(k0, k1)


def backward_split(coeffs, tree, xi, Psi, theta, s, method="adjoint", full=None, maps=None):
    """Global solution and the sub-interval re-solve on ``[theta, s]``."""
    theta, s = _check_split(tree, theta, s)
    full = full or solve_backward_tree(coeffs, tree, xi, Psi)
    xi_sub = _restrict(xi, theta, s - 1)
    if method == "adjoint":
        maps = maps or AdjointMaps(coeffs, tree, (theta, s))
        sub = solve_backward_adjoint(coeffs, tree, xi_sub, full.p.level(s), (theta, s), maps=maps)
    elif method == "tree":
        sub = solve_backward_tree(coeffs, tree, xi_sub, full.p.level(s), (theta, s))
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return full, sub


def semigroup_residual_p(coeffs, tree, xi, Psi, theta, s, method="adjoint", **kw) -> float:
    full, sub = backward_split(coeffs, tree, xi, Psi, theta, s, method, **kw)
    return _rel(full.p.restrict(theta, s).flatten(), sub.p.flatten(), _backward_scale(full, theta, s))


def semigroup_residual_p0(coeffs, tree, xi, Psi, theta, s, method="adjoint", **kw) -> float:
    full, sub = backward_split(coeffs, tree, xi, Psi, theta, s, method, **kw)
    return _rel(full.p.level(theta), sub.p.level(theta), _backward_scale(full, theta, s))


def semigroup_residual_chi(coeffs, tree, xi, Psi, theta, s, k, method="adjoint", **kw) -> float:
    """Residual of chi_k (``k`` in 1..N) on the steps ``theta .. s-1``."""
    if not 1 <= k <= tree.N:
        raise ConfigurationError(f"noise index {k} outside 1..{tree.N}")
    full, sub = backward_split(coeffs, tree, xi, Psi, theta, s, method, **kw)
    return _rel(full.chi[k - 1].restrict(theta, s - 1).flatten(), sub.chi[k - 1].flatten(),
                _backward_scale(full, theta, s))


def forward_causality_residual(coeffs, tree, phi, Phi, h, theta, s, method="adjoint", full=None,
                               maps=None) -> float:
    """Global forward solve restricted to ``[theta, s]`` against a solve on
    ``[theta, s]`` seeded with ``u_theta``."""
    theta, s = _check_split(tree, theta, s)
    full = full or solve_forward(coeffs, tree, phi, Phi, h)
    seed = full.u.level(theta)
    phi_s = _restrict(phi, theta, s - 1)
    h_s = None if h is None else [hi.restrict(theta, s - 1) for hi in h]
    ref = np.concatenate([full.u_stage.restrict(theta, s - 1).flatten(), full.u.level(s).ravel()])
    if method == "adjoint":
        maps = maps or AdjointMaps(coeffs, tree, (theta, s))
        y = maps.calL.apply(seed.ravel())
        if phi_s is not None:
            y = y + maps.L.apply(phi_s.flatten())
        for Mi, hi in zip(maps.Mi, h_s or []):
            y = y + Mi.apply(hi.flatten())
        return _rel(ref, y)
    if method == "tree":
        sub = solve_forward(coeffs, tree, phi_s, seed, h_s, interval=(theta, s))
        return _rel(ref, np.concatenate([sub.u_stage.flatten(), sub.terminal.ravel()]))
    raise ConfigurationError(f"unknown method {method!r}")


def split_report(coeffs, tree, xi, Psi, theta, s, phi=None, Phi=None, h=None, method="adjoint",
                 backward=None, forward=None) -> SplitReport:
    """All residuals for one split, sharing one set of sub-interval maps."""
    theta, s = _check_split(tree, theta, s)
    maps = AdjointMaps(coeffs, tree, (theta, s)) if method == "adjoint" else None
    full, sub = backward_split(coeffs, tree, xi, Psi, theta, s, method, full=backward, maps=maps)
    scale = _backward_scale(full, theta, s)
    res_p = _rel(full.p.restrict(theta, s).flatten(), sub.p.flatten(), scale)
    res_p0 = _rel(full.p.level(theta), sub.p.level(theta), scale)
    res_chi = tuple(_rel(full.chi[i].restrict(theta, s - 1).flatten(), sub.chi[i].flatten(), scale)
                    for i in range(tree.N))
    res_f = forward_causality_residual(coeffs, tree, phi, Phi, h, theta, s, method, full=forward,
                                       maps=maps)
    return SplitReport(theta, s, res_p, res_p0, res_chi, res_f)


def all_pairs(tree):
    return [(a, b) for a in range(tree.K + 1) for b in range(a + 1, tree.K + 1)]


def verify_all_pairs(coeffs, tree, xi, Psi, phi=None, Phi=None, h=None, method="adjoint",
                     pairs=None, executor=None):
    """Split reports for every grid pair ``theta < s`` (or the given pairs),
    in canonical order whatever the executor schedule."""
    system = TreeSystem(coeffs, tree)
    backward = solve_backward_tree(coeffs, tree, xi, Psi, system=system)
    forward = solve_forward(coeffs, tree, phi, Phi, h, system=system)
    pairs = pairs or all_pairs(tree)

    def one(pair):
        return split_report(coeffs, tree, xi, Psi, pair[0], pair[1], phi, Phi, h, method,
                            backward, forward)

    if executor is None:
        return [one(p) for p in pairs]
    return list(executor.map(one, pairs))


def export_semigroup_csv(rows, N, path) -> None:
    """``rows``: iterable of (scenario, SplitReport)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "theta", "s", "res_p", "res_p0"]
                        + [f"res_chi_{i + 1}" for i in range(N)] + ["res_forward"])
        for name, r in rows:
            writer.writerow([name, r.theta, r.s, repr(r.res_p), repr(r.res_p0)]
                            + [repr(c) for c in r.res_chi] + [repr(r.res_forward)])
