"""Forward problem on the scenario tree and its explicit solution maps.

One step from level k to k+1, with ``R_k = I - dt A_k``::

    R_k v_k  = u_k + dt phi_k                               (drift, implicit)
    u_{k+1}  = v_k + sum_i (B_i,k v_k + h_i,k) dw_i,k        (noise, explicit)

``u`` holds the node values (``u_0 = Phi``), ``v`` the drift-stage values.
``v`` is the representative of the solution in time-integrated pairings:
with this choice the transpose of the scheme is exactly the backward
recursion in ``backward_solver``.
"""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from bspde.errors import CoercivityError, ConfigurationError, DataError, ResourceError
from bspde.grid_ops import Bands, TridiagFactor, check_coercivity, drift_bands, noise_bands
from bspde.time_noise import AdaptedField, ScenarioTree, increment_correlation

MAX_MAP_COLUMNS = 50_000


def _channel(b: Bands) -> Bands:
    return Bands(*(a[:, None, :] for a in b))


@dataclass
class LevelOps:
    R: TridiagFactor
    RT: TridiagFactor
    B: list
    BT: list
    A: Bands
    AT: Bands


class TreeSystem:
    """Per-level operators of a coefficient set on a tree, built on demand.

    Band arrays carry a channel axis, shape (nodes|1, 1, M), so states of
    shape (nodes, channels, M) can be pushed through in one batch.
    """

    def __init__(self, coeffs, tree: ScenarioTree, check=True):
        if coeffs.N != tree.N:
            raise ConfigurationError(f"coefficients have N={coeffs.N}, tree has N={tree.N}")
        if coeffs.n_levels < tree.K + 1:
            raise ConfigurationError(
                f"coefficients sampled on {coeffs.n_levels} time levels, tree needs {tree.K + 1}")
        if check:
            report = check_coercivity(coeffs)
            if not report.passed:
                raise CoercivityError("refusing to solve a non-coercive problem: " + report.summary(),
                                      report)
        self.coeffs = coeffs
        self.tree = tree
        self.grid = coeffs.grid
        self.M = coeffs.grid.M
        self.dt = tree.dt
        self._ops = {}

    def _same_as_previous(self, k):
        c = self.coeffs
        if k == 0 or c.path_dependent or (k - 1) not in self._ops:
            return False
        return all(np.array_equal(a[..., k, :], a[..., k - 1, :])
                   for a in (c.b, c.f, c.lam, c.beta, c.beta_bar))

    def level(self, k: int) -> LevelOps:
        ops = self._ops.get(k)
        if ops is None and self._same_as_previous(k):
            ops = self._ops[k] = self._ops[k - 1]
        if ops is None:
            w = self.tree.partial_sums(k) if self.coeffs.path_dependent else None
            lc = self.coeffs.at(k, w)
            Bs = [noise_bands(self.grid, lc, i) for i in range(self.coeffs.N)]
            A = drift_bands(self.grid, lc)
            R = A.scaled_shift(1.0, -self.dt)
            ops = LevelOps(TridiagFactor(_channel(R)), TridiagFactor(_channel(R.transpose())),
                           [_channel(B) for B in Bs], [_channel(B.transpose()) for B in Bs],
                           _channel(A), _channel(A.transpose()))
            self._ops[k] = ops
        return ops


def forward_steps(system: TreeSystem, k0: int, k1: int, u0, phi=None, h=None):
    """Run the scheme on levels ``k0 .. k1``.

    ``u0`` has shape (nodes at k0, C, M); ``phi`` maps level -> array of
    shape (nodes, C|1, M); ``h`` is a list (one per noise) of such maps.
    Missing levels mean zero input. Returns lists ``u`` (k0..k1) and
    ``v`` (k0..k1-1).
    """
    tree, dt = system.tree, system.dt
    u, v = [u0], []
    for k in range(k0, k1):
        ops = system.level(k)
        rhs = u[-1]
        if phi and phi.get(k) is not None:
            rhs = rhs + dt * phi[k]
        vk = ops.R.solve(rhs)
        v.append(vk)
        if tree.N == 0:
            u.append(vk)
            continue
        nxt = np.broadcast_to(vk[:, None], (vk.shape[0], tree.branching) + vk.shape[1:]).copy()
        for i in range(tree.N):
            noise = ops.B[i].matvec(vk)
            if h and h[i] and h[i].get(k) is not None:
                noise = noise + h[i][k]
            inc = tree.child_increments[:, i].reshape(1, -1, 1, 1)
            nxt += inc * noise[:, None]
        u.append(nxt.reshape((-1,) + vk.shape[1:]))
    return u, v


def backward_steps(system: TreeSystem, k0: int, k1: int, pT, xi=None):
    """Transpose of ``forward_steps``: backward recursion from level ``k1``.

    ``chi_i,k = E[p_{k+1} dw_i,k | F_k] / dt`` and
    ``R_k^T p_k = E[p_{k+1} | F_k] + dt (sum_i B_i,k^T chi_i,k + xi_k)``.
    Returns ``p`` (list k0..k1) and ``chi`` (N lists, k0..k1-1).
    """
    tree, dt = system.tree, system.dt
    p = [pT]
    chis = [[] for _ in range(tree.N)]
    for k in range(k1 - 1, k0 - 1, -1):
        ops = system.level(k)
        nxt = p[0]
        n = tree.level_size(k)
        rhs = nxt.reshape((n, tree.branching) + nxt.shape[1:]).mean(axis=1)
        if tree.N:
            corr = increment_correlation(tree, nxt, k)
            for i in range(tree.N):
                chis[i].insert(0, corr[i])
                rhs = rhs + dt * ops.BT[i].matvec(corr[i])
        if xi and xi.get(k) is not None:
            rhs = rhs + dt * xi[k]
        p.insert(0, ops.RT.solve(rhs))
    return p, chis


# ---------------------------------------------------------------------------
# input normalization

def resolve_interval(tree, interval):
    if interval is None:
        return 0, tree.K
    k0, k1 = (int(x) for x in interval)
    if not 0 <= k0 < k1 <= tree.K:
        raise ConfigurationError(f"interval {interval} is not a grid interval inside 0..{tree.K}")
    return k0, k1


def field_levels(field, tree, k0, k1, M, name):
    """AdaptedField (or None) on levels k0..k1 -> dict level -> (nodes, 1, M)."""
    if field is None:
        return None
    if not isinstance(field, AdaptedField):
        raise ConfigurationError(f"{name} must be an AdaptedField")
    if not tree.same_shape(field.tree):
        raise ConfigurationError(f"{name} lives on a different tree")
    if field.start > k0 or field.stop < k1:
        raise ConfigurationError(f"{name} covers levels {field.start}..{field.stop}, need {k0}..{k1}")
    if field.value_shape != (M,):
        raise ConfigurationError(f"{name} values must have shape ({M},), got {field.value_shape}")
    return {k: field.level(k)[:, None, :] for k in range(k0, k1 + 1)}


def level_array(value, tree, k, M, name):
    """Field at a single level: accepts (M,), (nodes, M) or an AdaptedField."""
    if isinstance(value, AdaptedField):
        value = value.level(k)
    arr = np.asarray(value, dtype=float)
    n = tree.level_size(k)
    if arr.shape == (M,):
        arr = np.broadcast_to(arr, (n, M))
    if arr.shape != (n, M):
        raise ConfigurationError(f"{name} must have shape ({n}, {M}) at level {k}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"non-finite entries in {name}")
    return np.array(arr)


def _noise_levels(h, tree, k0, k1, M):
    if h is None:
        return None
    if len(h) != tree.N:
        raise ConfigurationError(f"expected {tree.N} noise sources, got {len(h)}")
    return [field_levels(hi, tree, k0, k1 - 1, M, f"h_{i + 1}") for i, hi in enumerate(h)]


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ForwardSolution:
    u: AdaptedField        # levels k0..k1, node values
    u_stage: AdaptedField  # levels k0..k1-1, drift-stage values

    @property
    def terminal(self) -> np.ndarray:
        return self.u.level(self.u.stop)

    @property
    def interval(self):
        return self.u.start, self.u.stop


def solve_forward(coeffs, tree, phi=None, Phi=None, h=None, interval=None, system=None):
    """Solve the forward problem on ``interval`` (grid indices, default 0..K).

    ``phi`` and each ``h[i]`` are AdaptedFields covering levels k0..k1-1;
    ``Phi`` is the level-k0 initial field. Non-coercive coefficients are
    refused with ``CoercivityError``.
    """
    system = system or TreeSystem(coeffs, tree)
    k0, k1 = resolve_interval(tree, interval)
    M = coeffs.grid.M
    u0 = np.zeros((tree.level_size(k0), M)) if Phi is None else level_array(Phi, tree, k0, M, "Phi")
    phi_l = field_levels(phi, tree, k0, k1 - 1, M, "phi")
    h_l = _noise_levels(h, tree, k0, k1, M)
    u, v = forward_steps(system, k0, k1, u0[:, None, :], phi_l, h_l)
    return ForwardSolution(AdaptedField(tree, k0, tuple(x[:, 0] for x in u)),
                           AdaptedField(tree, k0, tuple(x[:, 0] for x in v)))


def export_forward_csv(sol: ForwardSolution, path) -> None:
    """Rows (path_id, step, node_index, u) over the leaves of the last level."""
    tree = sol.u.tree
    k0, k1 = sol.interval
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "step", "node_index", "u"])
        for leaf in range(tree.level_size(k1)):
            for k in range(k0, k1 + 1):
                node = leaf // tree.branching ** (k1 - k)
                for j, val in enumerate(sol.u.level(k)[node]):
                    writer.writerow([leaf, k, j, repr(float(val))])


# ---------------------------------------------------------------------------
# explicit maps

MAP_KINDS = ("L", "calL", "Q0", "K")


def _parse_kind(which, N):
    if which in ("L", "Q0"):
        return "phi", None, which == "Q0"
    if which in ("calL", "K"):
        return "Phi", None, which == "K"
    if len(which) == 2 and which[0] in "MQ" and which[1].isdigit():
        i = int(which[1])
        if not 1 <= i <= N:
            raise ConfigurationError(f"noise index {i} outside 1..{N}")
        return "h", i - 1, which[0] == "Q"
    raise ConfigurationError(f"unknown map kind {which!r}")


def x0_weights(tree, k0, k1, M, h):
    """Pairing weights dt * h * probability for levels k0..k1-1."""
    return np.concatenate([np.full(tree.level_size(k) * M, tree.dt * h * tree.probability(k))
                           for k in range(k0, k1)])


def slice_weights(tree, k, M, h):
    return np.full(tree.level_size(k) * M, h * tree.probability(k))


@dataclass(frozen=True, eq=False)
class LinearSolveMap:
    """Explicit sparse matrix of a solution operator.

    Rows: drift-stage values on levels k0..k1-1, then the level-k1 slice.
    Columns: the input (``phi``/``h_i`` on levels k0..k1-1, or ``Phi`` at
    level k0). ``adjoint`` is the transpose with respect to the weighted
    pairings (dt * h * probability inside the interval, h * probability on
    a slice).
    """

    which: str
    interval: tuple
    tree: ScenarioTree
    M: int
    matrix: sp.csr_matrix
    in_weights: np.ndarray
    out_weights: np.ndarray

    @property
    def n_interval_rows(self) -> int:
        k0, k1 = self.interval
        return sum(self.tree.level_size(k) for k in range(k0, k1)) * self.M

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x):
        return self.matrix @ np.asarray(x, dtype=float)

    def adjoint(self, y):
        y = np.asarray(y, dtype=float)
        return (self.matrix.T @ (self.out_weights * y)) / self.in_weights

    def transpose_map(self) -> "LinearSolveMap":
        Wout = sp.diags(self.out_weights)
        Winv = sp.diags(1.0 / self.in_weights)
        return LinearSolveMap(self.which + "*", self.interval, self.tree, self.M,
                              (Winv @ self.matrix.T @ Wout).tocsr(),
                              self.out_weights, self.in_weights)

    def split(self, y):
        """Output vector -> (interval AdaptedField, terminal slice array)."""
        k0, k1 = self.interval
        n = self.n_interval_rows
        inner = AdaptedField.unflatten(self.tree, k0, k1 - 1, y[:n], (self.M,))
        return inner, np.asarray(y[n:]).reshape(self.tree.level_size(k1), self.M)

    def stack(self, inner, terminal):
        """Inverse of ``split``."""
        return np.concatenate([inner.flatten(), np.asarray(terminal, dtype=float).ravel()])


def assemble_map(coeffs, tree, which: str, interval=None, max_columns=MAX_MAP_COLUMNS,
                 system=None) -> LinearSolveMap:
    """Assemble one of L, calL, M<i> or their B_i = 0 versions Q0, K, Q<i>.

    All inputs at one level are pushed through together, one channel per
    spatial index: subtrees of distinct nodes are disjoint, so the response
    on the subtree of node ``j`` is exactly column ``(j, m)``.
    """
    kind, noise_i, zero_noise = _parse_kind(which, tree.N)
    k0, k1 = resolve_interval(tree, interval)
    M, h = coeffs.grid.M, coeffs.grid.h
    if zero_noise:
        system = TreeSystem(coeffs.with_noise_zeroed(), tree)
    else:
        system = system or TreeSystem(coeffs, tree)
    in_levels = [k0] if kind == "Phi" else list(range(k0, k1))
    n_cols = sum(tree.level_size(k) for k in in_levels) * M
    if n_cols > max_columns:
        raise ResourceError(f"map {which} needs {n_cols} columns, above the {max_columns} guard")
    out_offsets, pos = {}, 0
    for l in range(k0, k1 + 1):
        out_offsets[l] = pos
        pos += tree.level_size(l) * M
    n_rows = pos
    in_offsets, pos = {}, 0
    for k in in_levels:
        in_offsets[k] = pos
        pos += tree.level_size(k) * M

    eye = np.eye(M)
    rows, cols, vals = [], [], []
    for k in in_levels:
        n_k = tree.level_size(k)
        unit = np.broadcast_to(eye[None], (n_k, M, M))  # (node, channel, space)
        if kind == "Phi":
            u, v = forward_steps(system, k, k1, np.array(unit))
        elif kind == "phi":
            u, v = forward_steps(system, k, k1, np.zeros((n_k, M, M)), phi={k: unit})
        else:
            hs = [None] * tree.N
            hs[noise_i] = {k: unit}
            u, v = forward_steps(system, k, k1, np.zeros((n_k, M, M)), h=hs)
        responses = [(k + j, v[j]) for j in range(len(v))] + [(k1, u[-1])]
        for l, resp in responses:
            n_l = tree.level_size(l)
            node = np.arange(n_l)
            col_node = node // tree.branching ** (l - k)
            r = out_offsets[l] + (node[:, None, None] * M + np.arange(M)[None, None, :])
            c = in_offsets[k] + (col_node[:, None, None] * M + np.arange(M)[None, :, None])
            r, c = np.broadcast_arrays(r, c)
            mask = resp != 0.0
            rows.append(r[mask])
            cols.append(c[mask])
            vals.append(resp[mask])
    matrix = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n_rows, n_cols))
    in_w = (slice_weights(tree, k0, M, h) if kind == "Phi" else x0_weights(tree, k0, k1, M, h))
    out_w = np.concatenate([x0_weights(tree, k0, k1, M, h), slice_weights(tree, k1, M, h)])
    return LinearSolveMap(which, (k0, k1), tree, M, matrix, in_w, out_w)


# ---------------------------------------------------------------------------
# P = sum_i Q_i B_i

def apply_noise_operators(system: TreeSystem, gamma: AdaptedField, transpose=False):
    """Per-level ``B_i gamma`` (or ``B_i^T gamma``) for every i."""
    out = []
    for i in range(system.tree.N):
        levels = []
        for k in range(gamma.start, gamma.stop + 1):
            ops = system.level(k)
            bands = ops.BT[i] if transpose else ops.B[i]
            levels.append(bands.matvec(gamma.level(k)[:, None, :])[:, 0])
        out.append(AdaptedField(gamma.tree, gamma.start, tuple(levels)))
    return out


def apply_P(coeffs, tree, gamma: AdaptedField, interval=None):
    """``P gamma = sum_i Q_i (B_i gamma)``.

    Returns the drift-stage field on k0..k1-1 and the terminal slice (the
    latter is ``P_0 gamma``).
    """
    k0, k1 = resolve_interval(tree, interval)
    system = TreeSystem(coeffs, tree)
    gamma = gamma.restrict(k0, k1 - 1)
    hs = apply_noise_operators(system, gamma)
    zero = TreeSystem(coeffs.with_noise_zeroed(), tree, check=False)
    sol = solve_forward(coeffs.with_noise_zeroed(), tree, h=hs, interval=(k0, k1), system=zero)
    return sol.u_stage, sol.terminal


def noise_block_matrix(system: TreeSystem, i: int, k0: int, k1: int, transpose=False):
    """Sparse block-diagonal matrix of B_i (per node and level) on k0..k1-1."""
    tree, M = system.tree, system.M
    blocks = []
    for k in range(k0, k1):
        ops = system.level(k)
        b = ops.BT[i] if transpose else ops.B[i]
        n = tree.level_size(k)
        lower, diag, upper = (np.broadcast_to(a[:, 0, :], (n, M)) for a in b)
        blocks.append(sp.diags([lower.ravel()[1:], diag.ravel(), upper.ravel()[:-1]],
                               [-1, 0, 1], shape=(n * M, n * M)))
    return sp.block_diag(blocks, format="csr")


def assemble_P(coeffs, tree, interval=None, q_maps=None):
    """Matrix of P on the drift-stage coordinates of levels k0..k1-1."""
    k0, k1 = resolve_interval(tree, interval)
    system = TreeSystem(coeffs, tree)
    total = None
    for i in range(tree.N):
        Q = q_maps[i] if q_maps else assemble_map(coeffs, tree, f"Q{i + 1}", (k0, k1))
        n = Q.n_interval_rows
        term = Q.matrix[:n] @ noise_block_matrix(system, i, k0, k1)
        total = term if total is None else total + term
    if total is None:
        n = sum(tree.level_size(k) for k in range(k0, k1)) * coeffs.grid.M
        total = sp.csr_matrix((n, n))
    return total.tocsr()


def spectral_radius_probe(matrix, iters=60, seed=0):
    """Power-iteration estimate of the spectral radius.

    Returns ``(radius, history)``; ``history`` holds the growth factors
    ``|P^{n} x| / |P^{n-1} x|``. A vector that vanishes exactly (nilpotent
    matrix) yields radius 0.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(matrix.shape[0])
    x /= np.linalg.norm(x)
    history = []
    for _ in range(iters):
        y = matrix @ x
        ny = np.linalg.norm(y)
        history.append(ny)
        if ny == 0.0:
            return 0.0, history
        x = y / ny
    tail = history[-10:]
    return float(np.exp(np.mean(np.log(tail)))), history
