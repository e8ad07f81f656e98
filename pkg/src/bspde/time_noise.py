"""Time grid, Rademacher scenario tree and tree-adapted fields.

Node ``n`` at level ``k`` has children ``n * 2**N + c`` for ``c`` in
``0 .. 2**N - 1``; bit ``i`` of ``c`` selects the sign of the increment of
noise dimension ``i``. Descendants of a node therefore occupy a contiguous
block at every later level, and all nodes of a level carry the same
probability ``2**(-N k)``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from bspde.errors import ConfigurationError, ResourceError, StructuralError

MAX_TREE_EXPONENT = 18


@dataclass(frozen=True)
class TimeGrid:
    T: float = 1.0
    K: int = 8

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConfigurationError(f"need K >= 1 time steps, got {self.K}")
        if not self.T > 0:
            raise ConfigurationError(f"horizon must be positive, got T={self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.K + 1)

    def index(self, value) -> int:
        """Grid index of ``value`` given as an index (int or integral float).

        Raises ``ConfigurationError`` for off-grid or out-of-range values.
        """
        try:
            v = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"not a grid index: {value!r}") from exc
        if not v.is_integer() or not 0 <= v <= self.K:
            raise ConfigurationError(f"{value!r} is not a grid index in 0..{self.K}")
        return int(v)

    def index_of_time(self, t: float, rtol: float = 1e-12) -> int:
        """Grid index of the time ``t``; off-grid times are rejected."""
        v = float(t) / self.dt
        k = round(v)
        if abs(v - k) > rtol * max(1.0, abs(v)) or not 0 <= k <= self.K:
            raise ConfigurationError(f"time {t!r} is not on the grid (dt = {self.dt!r})")
        return int(k)

    def split(self, theta, s):
        """Validated pair of grid indices ``theta < s``."""
        a, b = self.index(theta), self.index(s)
        if not a < b:
            raise ConfigurationError(f"need theta < s, got theta={a}, s={b}")
        return a, b


class ScenarioTree:
    """Full tree of ``2**N``-ary Rademacher increments ``+-sqrt(dt)``.

    ``N = 0`` gives the single-path deterministic tree.
    """

    def __init__(self, N: int, K: int, dt: float):
        self.N = int(N)
        self.K = int(K)
        self.dt = float(dt)
        self.branching = 2 ** self.N
        self.sqrt_dt = math.sqrt(self.dt)
        c = np.arange(self.branching)
        # (branching, N) signs in {+1, -1}
        self.signs = np.stack([1.0 - 2.0 * ((c >> i) & 1) for i in range(self.N)], axis=1) \
            if self.N else np.zeros((1, 0))
        self.child_increments = self.signs * self.sqrt_dt
        w = [np.zeros((1, self.N))]
        for _ in range(self.K):
            prev = w[-1]
            nxt = prev[:, None, :] + self.child_increments[None, :, :]
            w.append(nxt.reshape(self.level_size(len(w)), self.N))
        self._w = w

    def __repr__(self):
        return f"ScenarioTree(N={self.N}, K={self.K}, dt={self.dt!r})"

    def level_size(self, k: int) -> int:
        return self.branching ** k

    @property
    def n_leaves(self) -> int:
        return self.level_size(self.K)

    def probability(self, k: int) -> float:
        return 1.0 / self.level_size(k)

    def partial_sums(self, k: int) -> np.ndarray:
        """Values of w(t_k) at every level-k node, shape (nodes, N)."""
        return self._w[k]

    def increments_into(self, k: int) -> np.ndarray:
        """Increment leading into each level-k node (k >= 1), shape (nodes, N)."""
        if k < 1:
            raise ConfigurationError("level 0 has no incoming increment")
        return np.tile(self.child_increments, (self.level_size(k - 1), 1))

    def ancestor(self, k: int, node, level: int):
        """Index of the level-``level`` ancestor of ``node`` at level ``k``."""
        return np.asarray(node) // self.branching ** (k - level)

    def node_label(self, k: int, node: int) -> str:
        """Increment string of a node, one child digit per step."""
        digits = []
        for _ in range(k):
            node, c = divmod(node, self.branching)
            digits.append(str(c))
        return "".join(reversed(digits))

    def same_shape(self, other) -> bool:
        return (isinstance(other, ScenarioTree) and self.N == other.N and self.K == other.K
                and self.dt == other.dt)


def build_tree(N: int, K: int, dt: float, max_exponent: int = MAX_TREE_EXPONENT) -> ScenarioTree:
    if N not in (0, 1, 2):
        raise ConfigurationError(f"noise dimension must be 1 or 2 (0 = deterministic), got N={N}")
    if int(K) != K or K < 1:
        raise ConfigurationError(f"need K >= 1 time steps, got {K}")
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if N * K > max_exponent:
        raise ResourceError(
            f"tree with 2^(N*K) = 2^{N * K} leaves exceeds the 2^{max_exponent} guard; "
            "use Monte Carlo mode (regression route) for this size")
    return ScenarioTree(N, K, dt)


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdaptedField:
    """One value array per tree level ``start .. stop``.

    ``levels[j]`` has shape ``(tree.level_size(start + j), *value_shape)``:
    the value at a node depends on its prefix only, so adaptedness cannot
    be violated by anything built through this class.
    """

    tree: ScenarioTree
    start: int
    levels: tuple

    def __post_init__(self):
        levels = tuple(np.asarray(v, dtype=float) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if self.start < 0 or self.start + len(levels) - 1 > self.tree.K:
            raise ConfigurationError("field levels fall outside the tree")
        tail = None
        for j, v in enumerate(levels):
            if v.shape[0] != self.tree.level_size(self.start + j):
                raise StructuralError(
                    f"level {self.start + j} has {v.shape[0]} nodes, "
                    f"tree has {self.tree.level_size(self.start + j)}")
            if tail is None:
                tail = v.shape[1:]
            elif v.shape[1:] != tail:
                raise StructuralError("inconsistent value shapes across levels")

    @property
    def stop(self) -> int:
        return self.start + len(self.levels) - 1

    @property
    def value_shape(self) -> tuple:
        return self.levels[0].shape[1:]

    def level(self, k: int) -> np.ndarray:
        if not self.start <= k <= self.stop:
            raise ConfigurationError(f"level {k} outside {self.start}..{self.stop}")
        return self.levels[k - self.start]

    def restrict(self, k0: int, k1: int) -> "AdaptedField":
        """Levels ``k0 .. k1`` inclusive."""
        if not self.start <= k0 <= k1 <= self.stop:
            raise ConfigurationError(f"cannot restrict {self.start}..{self.stop} to {k0}..{k1}")
        return AdaptedField(self.tree, k0, self.levels[k0 - self.start: k1 - self.start + 1])

    @classmethod
    def zeros(cls, tree, start, stop, value_shape=()):
        value_shape = tuple(np.atleast_1d(value_shape)) if value_shape != () else ()
        return cls(tree, start, tuple(np.zeros((tree.level_size(k),) + value_shape)
                                      for k in range(start, stop + 1)))

    @classmethod
    def from_function(cls, tree, start, stop, fn):
        """Build from ``fn(k, w)`` with ``w`` the level-``k`` partial sums."""
        return cls(tree, start, tuple(np.asarray(fn(k, tree.partial_sums(k)), dtype=float)
                                      for k in range(start, stop + 1)))

    def __add__(self, other):
        self._check_compatible(other)
        return AdaptedField(self.tree, self.start, tuple(a + b for a, b in zip(self.levels, other.levels)))

    def __sub__(self, other):
        self._check_compatible(other)
        return AdaptedField(self.tree, self.start, tuple(a - b for a, b in zip(self.levels, other.levels)))

    def __mul__(self, alpha):
        return AdaptedField(self.tree, self.start, tuple(alpha * a for a in self.levels))

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if (other.tree is not self.tree and not self.tree.same_shape(other.tree)) \
                or other.start != self.start or other.stop != self.stop:
            raise ConfigurationError("fields live on different trees or level ranges")

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.levels])

    @classmethod
    def unflatten(cls, tree, start, stop, vec, value_shape=()):
        value_shape = tuple(value_shape)
        size = int(np.prod(value_shape)) if value_shape else 1
        out, pos = [], 0
        for k in range(start, stop + 1):
            n = tree.level_size(k) * size
            out.append(np.asarray(vec[pos:pos + n]).reshape((tree.level_size(k),) + value_shape))
            pos += n
        if pos != len(vec):
            raise ConfigurationError(f"vector of length {len(vec)} does not match layout ({pos})")
        return cls(tree, start, tuple(out))

    def to_paths(self) -> np.ndarray:
        """Expand to per-leaf-path values, shape (leaves, levels, *value_shape)."""
        leaves = np.arange(self.tree.n_leaves)
        return np.stack([v[self.tree.ancestor(self.tree.K, leaves, self.start + j)]
                         for j, v in enumerate(self.levels)], axis=1)

    @classmethod
    def from_paths(cls, tree, start, values) -> "AdaptedField":
        """Import path-indexed values, shape (leaves, levels, ...).

        Raises ``StructuralError`` unless paths sharing a length-k prefix
        carry identical step-k values.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[0] != tree.n_leaves:
            raise StructuralError(f"expected {tree.n_leaves} paths, got {values.shape[0]}")
        levels = []
        for j in range(values.shape[1]):
            k = start + j
            block = values[:, j].reshape((tree.level_size(k), tree.branching ** (tree.K - k))
                                         + values.shape[2:])
            first = block[:, :1]
            if not np.array_equal(np.broadcast_to(first, block.shape), block):
                raise StructuralError(f"imported values are not adapted at step {k}")
            levels.append(block[:, 0])
        return cls(tree, start, tuple(levels))


def check_adapted(tree, start, values) -> bool:
    try:
        AdaptedField.from_paths(tree, start, values)
    except StructuralError:
        return False
    return True


# ---------------------------------------------------------------------------

def children_view(tree: ScenarioTree, values_next: np.ndarray, k: int) -> np.ndarray:
    """Reshape level-(k+1) values to (level-k nodes, branching, ...)."""
    n_next = tree.level_size(k + 1)
    if values_next.shape[0] != n_next:
        raise StructuralError(
            f"conditional expectation at level {k} needs all {n_next} children, "
            f"got {values_next.shape[0]}")
    return values_next.reshape((tree.level_size(k), tree.branching) + values_next.shape[1:])


def conditional_expectation(tree: ScenarioTree, values_next, k: int, node=None) -> np.ndarray:
    """E[X | F_k] from the level-(k+1) values of X (uniform child weights)."""
    ev = children_view(tree, np.asarray(values_next, dtype=float), k).mean(axis=1)
    return ev if node is None else ev[node]


def increment_correlation(tree: ScenarioTree, values_next, k: int) -> np.ndarray:
    """E[X dW_i | F_k] / dt for every i, shape (N, level-k nodes, ...).

    Exact discrete martingale-representation coefficient of X along w_i.
    """
    view = children_view(tree, np.asarray(values_next, dtype=float), k)
    scale = tree.sqrt_dt / (tree.branching * tree.dt)
    return np.stack([np.tensordot(tree.signs[:, i], view, axes=([0], [1])) * scale
                     for i in range(tree.N)])


def expectation(tree: ScenarioTree, values, k: int):
    values = np.asarray(values, dtype=float)
    if values.shape[0] != tree.level_size(k):
        raise StructuralError(f"level {k} has {tree.level_size(k)} nodes, got {values.shape[0]}")
    return values.mean(axis=0)


def stochastic_integral(xi: AdaptedField, i: int, t: int) -> np.ndarray:
    """Level-``t`` values of ``sum_{xi.start <= k < t} xi_k dw_i,k`` (``i`` in 1..N)."""
    tree = xi.tree
    if not 1 <= i <= tree.N:
        raise ConfigurationError(f"noise index {i} outside 1..{tree.N}")
    if not xi.start <= t <= xi.stop + 1:
        raise ConfigurationError(f"integration end {t} outside {xi.start}..{xi.stop + 1}")
    acc = np.zeros_like(xi.level(xi.start))
    inc = tree.child_increments[:, i - 1]
    for k in range(xi.start, t):
        term = acc[:, None] + xi.level(k)[:, None] * inc.reshape((1, -1) + (1,) * (acc.ndim - 1))
        acc = term.reshape((-1,) + acc.shape[1:])
    return acc


def export_paths_csv(tree: ScenarioTree, path) -> None:
    """Rows (path_id, step, dw_1..dw_N); ``step`` k holds the increment over
    [t_k, t_{k+1}]."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "step"] + [f"dw_{i + 1}" for i in range(tree.N)])
        for leaf in range(tree.n_leaves):
            for k in range(tree.K):
                c = (leaf // tree.branching ** (tree.K - k - 1)) % tree.branching
                writer.writerow([leaf, k] + [repr(float(v)) for v in tree.child_increments[c]])
