"""Scenario files: a line-oriented ``key = value`` format with ``[sections]``.

``#`` starts a comment. Every problem found is reported with its line
number; all of them are collected before raising ``ScenarioError``.
"""

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from bspde.errors import ConfigurationError
from bspde.estimates import smooth_field, smooth_slice
from bspde.grid_ops import SpatialGrid, coefficient_family, import_coefficients_csv
from bspde.time_noise import MAX_TREE_EXPONENT, AdaptedField, TimeGrid, build_tree


class ScenarioError(ConfigurationError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


def _floats(text):
    return tuple(float(t) for t in text.split(","))


def _ints(text):
    return tuple(int(t) for t in text.split(","))


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    conv.__name__ = "one of " + "|".join(options)
    return conv


_float_list = _floats
_float_list.__name__ = "float list"
_int_list = _ints
_int_list.__name__ = "integer list"

SCHEMA = {
    "run": {"name": str, "instances": int, "theta": int, "s": int, "split_method": _choice("adjoint", "tree")},
    "grid": {"M": int, "left": float, "right": float},
    "time": {"T": float, "K": int},
    "noise": {"N": int, "mode": _choice("tree", "montecarlo"), "paths": int, "seed": int,
              "degree": int, "bootstrap": int},
    "coefficients": {
        "family": _choice("constant", "affine", "sinusoidal"), "file": str, "delta": float,
        "b": float, "b_amp": float, "f": float, "f_amp": float, "lam": float, "lam_amp": float,
        "beta": _float_list, "beta_amp": _float_list, "beta_bar": _float_list,
        "beta_bar_amp": _float_list, "beta_support": _float_list,
        "b_path": float, "f_path": float, "lam_path": float, "beta_path": _float_list,
        "beta_bar_path": _float_list,
    },
    "data": {"family": _choice("gaussian", "markov"), "amplitude": float, "modes": int},
    "tolerances": {"duality": float, "semigroup": float, "route": float, "causality": float,
                   "growth": float, "pairing": float},
    "estimates": {"order": int, "samples": int, "levels": _int_list},
    "convergence": {"T": float, "h_levels": _int_list, "dt_levels": _int_list,
                    "fixed_K": int, "fixed_M": int},
}


@dataclass(frozen=True)
class Tolerances:
    duality: float = 1e-10
    semigroup: float = 1e-10
    route: float = 1e-9
    causality: float = 1e-12
    growth: float = 0.10
    pairing: float = 1e-10


@dataclass(frozen=True)
class CoefficientSpec:
    family: str = "constant"
    file: str = ""
    delta: float = 0.1
    b: float = 1.0
    b_amp: float = 0.0
    f: float = 0.0
    f_amp: float = 0.0
    lam: float = 0.0
    lam_amp: float = 0.0
    beta: tuple = (0.0,)
    beta_amp: tuple = (0.0,)
    beta_bar: tuple = (0.0,)
    beta_bar_amp: tuple = (0.0,)
    beta_support: tuple = ()
    b_path: float = 0.0
    f_path: float = 0.0
    lam_path: float = 0.0
    beta_path: tuple = (0.0,)
    beta_bar_path: tuple = (0.0,)


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    M: int = 16
    left: float = 0.0
    right: float = 1.0
    T: float = 1.0
    K: int = 8
    N: int = 1
    mode: str = "tree"
    paths: int = 2000
    seed: int = None
    degree: int = 2
    bootstrap: int = 200
    instances: int = 50
    theta: int = None
    s: int = None
    split_method: str = "adjoint"
    coefficients: CoefficientSpec = field(default_factory=CoefficientSpec)
    data_family: str = "gaussian"
    amplitude: float = 1.0
    modes: int = 8
    tolerances: Tolerances = field(default_factory=Tolerances)
    order: int = -1
    samples: int = 50
    levels: tuple = ()
    conv_T: float = 0.1
    h_levels: tuple = (7, 15, 31)
    dt_levels: tuple = (8, 16, 32)
    fixed_K: int = 16384
    fixed_M: int = 511
    base_dir: str = "."

    # ------------------------------------------------------------------
    @property
    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.left, self.right, self.M)

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.K)

    def tree(self):
        if self.mode != "tree":
            raise ConfigurationError("scenario runs in Monte Carlo mode; no scenario tree is built")
        return build_tree(self.N, self.K, self.T / self.K)

    def with_grid(self, M: int) -> "Scenario":
        from dataclasses import replace
        return replace(self, M=M)

    def coefficient_set(self, grid=None):
        grid = grid or self.grid
        c = self.coefficients
        if c.file:
            path = Path(c.file)
            if not path.is_absolute():
                path = Path(self.base_dir) / path
            return import_coefficients_csv(path, grid, self.K + 1, c.delta)
        path = {}
        for name in ("b", "f", "lam"):
            amp = getattr(c, name + "_path")
            if amp:
                path[name] = amp
        for name in ("beta", "beta_bar"):
            amp = getattr(c, name + "_path")
            if any(amp):
                path[name] = amp
        return coefficient_family(
            grid, self.T, self.K, self.N, c.family, b=c.b, b_amp=c.b_amp, f=c.f, f_amp=c.f_amp,
            lam=c.lam, lam_amp=c.lam_amp, beta=c.beta, beta_amp=c.beta_amp, beta_bar=c.beta_bar,
            beta_bar_amp=c.beta_bar_amp, delta=c.delta, path=path or None,
            beta_support=tuple(c.beta_support) if c.beta_support else None)

    # ------------------------------------------------------------------
    # data families

    def _rng(self, idx, stream):
        if self.seed is None:
            raise ConfigurationError("randomized data needs a seed (scenario [noise] seed or --seed)")
        return np.random.default_rng([self.seed, idx, stream])

    def forward_data(self, tree, idx=0, grid=None):
        """(phi, Phi, h) for instance ``idx``."""
        grid = grid or self.grid
        K, a = tree.K, self.amplitude
        if self.data_family == "gaussian":
            rng = self._rng(idx, 0)
            phi = smooth_field(tree, 0, K - 1, grid, rng, self.modes) * a
            Phi = smooth_slice(tree, 0, grid, rng, self.modes)[0] * a
            h = [smooth_field(tree, 0, K - 1, grid, rng, self.modes) * a for _ in range(tree.N)]
            return phi, Phi, h
        fn = self.markov_source(grid, idx, 1)
        phi = AdaptedField.from_function(tree, 0, K - 1, fn)
        Phi = self.markov_terminal(grid, idx, 2)(np.zeros((1, tree.N)))[0]
        h = [AdaptedField.from_function(tree, 0, K - 1, self.markov_source(grid, idx, 3 + i))
             for i in range(tree.N)]
        return phi, Phi, h

    def backward_data(self, tree, idx=0, grid=None):
        """(xi, Psi) for instance ``idx``; Psi is the level-K slice."""
        grid = grid or self.grid
        if self.data_family == "gaussian":
            rng = self._rng(idx, 1)
            xi = smooth_field(tree, 0, tree.K - 1, grid, rng, self.modes) * self.amplitude
            Psi = smooth_slice(tree, tree.K, grid, rng, self.modes) * self.amplitude
            return xi, Psi
        xi = AdaptedField.from_function(tree, 0, tree.K - 1, self.markov_source(grid, idx, 10))
        Psi = self.markov_terminal(grid, idx, 11)(tree.partial_sums(tree.K))
        return xi, Psi

    def markov_source(self, grid, idx, stream):
        """``fn(k, w)``: a field affine in the Brownian position ``w``."""
        c = self._markov_weights(idx, stream)
        s = (grid.x - grid.domain_left) / grid.length
        base = self.amplitude * c[0] * np.sin(math.pi * s)
        slope = self.amplitude * np.sin(2 * math.pi * s)

        def fn(k, w):
            w = np.atleast_2d(w)
            return base[None, :] + (w @ c[1:1 + w.shape[1]])[:, None] * slope[None, :]
        return fn

    def markov_terminal(self, grid, idx, stream):
        src = self.markov_source(grid, idx, stream)
        s = (grid.x - grid.domain_left) / grid.length
        bump = self.amplitude * s * (1 - s)

        def fn(w):
            return src(0, w) + bump[None, :]
        return fn

    def _markov_weights(self, idx, stream):
        rng = np.random.default_rng([0 if self.seed is None else self.seed, idx, stream])
        return 1.0 + 0.5 * rng.standard_normal(3)


# ---------------------------------------------------------------------------

_FLAT = {
    ("run", "name"): "name", ("run", "instances"): "instances", ("run", "theta"): "theta",
    ("run", "s"): "s", ("run", "split_method"): "split_method",
    ("grid", "M"): "M", ("grid", "left"): "left", ("grid", "right"): "right",
    ("time", "T"): "T", ("time", "K"): "K",
    ("noise", "N"): "N", ("noise", "mode"): "mode", ("noise", "paths"): "paths",
    ("noise", "seed"): "seed", ("noise", "degree"): "degree", ("noise", "bootstrap"): "bootstrap",
    ("data", "family"): "data_family", ("data", "amplitude"): "amplitude", ("data", "modes"): "modes",
    ("estimates", "order"): "order", ("estimates", "samples"): "samples",
    ("estimates", "levels"): "levels",
    ("convergence", "T"): "conv_T", ("convergence", "h_levels"): "h_levels",
    ("convergence", "dt_levels"): "dt_levels", ("convergence", "fixed_K"): "fixed_K",
    ("convergence", "fixed_M"): "fixed_M",
}


def parse_scenario(text: str, base_dir=".", seed_override=None) -> Scenario:
    """Parse and validate scenario text; raises ``ScenarioError`` listing
    every violation with its line number."""
    errors = []
    section = None
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {line!r}")
                continue
            section = line[1:-1].strip()
            if section not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, val = (part.strip() for part in line.split("=", 1))
        if section is None:
            errors.append(f"line {lineno}: key {key!r} outside any section")
            continue
        if section not in SCHEMA:
            continue
        conv = SCHEMA[section].get(key)
        if conv is None:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        try:
            parsed = conv(val)
        except ValueError as exc:
            kind = getattr(conv, "__name__", "value")
            detail = str(exc) if isinstance(exc, ValueError) and "expected" in str(exc) else ""
            errors.append(f"line {lineno}: {section}.{key} = {val!r} is not a valid {kind}"
                          + (f" ({detail})" if detail else ""))
            continue
        if (section, key) in values:
            errors.append(f"line {lineno}: duplicate key {section}.{key} "
                          f"(first set on line {lines[(section, key)]})")
        values[(section, key)] = parsed
        lines[(section, key)] = lineno

    kwargs, coeff, tol = {}, {}, {}
    for (sec, key), v in values.items():
        if sec == "coefficients":
            coeff[key] = v
        elif sec == "tolerances":
            tol[key] = v
        else:
            kwargs[_FLAT[(sec, key)]] = v
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
    try:
        sc = Scenario(coefficients=CoefficientSpec(**coeff), tolerances=Tolerances(**tol),
                      base_dir=str(base_dir), **kwargs)
    except TypeError as exc:  # pragma: no cover - schema and dataclasses agree
        raise ScenarioError(errors + [str(exc)]) from exc
    errors.extend(_validate(sc, lines))
    if errors:
        raise ScenarioError(errors)
    return sc


def _at(lines, sec, key):
    ln = lines.get((sec, key))
    return f"line {ln}: " if ln else ""


def _validate(sc: Scenario, lines):
    errs = []
    if sc.M < 2:
        errs.append(f"{_at(lines, 'grid', 'M')}grid.M = {sc.M}: need at least 2 interior nodes")
    if not sc.right > sc.left:
        errs.append(f"{_at(lines, 'grid', 'right')}grid.right must exceed grid.left")
    if not sc.T > 0:
        errs.append(f"{_at(lines, 'time', 'T')}time.T must be positive")
    if sc.K < 1:
        errs.append(f"{_at(lines, 'time', 'K')}time.K = {sc.K}: need at least one step")
    if sc.N not in (0, 1, 2):
        errs.append(f"{_at(lines, 'noise', 'N')}noise.N = {sc.N}: must be 1 or 2 (0 = deterministic)")
    elif sc.mode == "tree" and sc.N * sc.K > MAX_TREE_EXPONENT:
        ln = lines.get(("time", "K")) or lines.get(("noise", "N"))
        errs.append(f"line {ln}: tree with 2^(N*K) = 2^{sc.N * sc.K} leaves exceeds the "
                    f"2^{MAX_TREE_EXPONENT} guard (N*K <= {MAX_TREE_EXPONENT}); "
                    "use mode = montecarlo")
    randomized = sc.mode == "montecarlo" or sc.data_family == "gaussian"
    if randomized and sc.seed is None:
        why = "Monte Carlo mode" if sc.mode == "montecarlo" else "gaussian data"
        errs.append(f"{_at(lines, 'noise', 'mode')}noise.seed is mandatory for {why}")
    if sc.mode == "montecarlo" and sc.paths < 1000:
        errs.append(f"{_at(lines, 'noise', 'paths')}noise.paths = {sc.paths}: need at least 1000")
    if sc.mode == "montecarlo" and sc.data_family != "markov":
        errs.append(f"{_at(lines, 'data', 'family')}Monte Carlo mode needs data.family = markov")
    if sc.order not in (-1, 0):
        errs.append(f"{_at(lines, 'estimates', 'order')}estimates.order must be -1 or 0")
    if sc.instances < 1:
        errs.append(f"{_at(lines, 'run', 'instances')}run.instances must be positive")
    for sec, key in (("run", "theta"), ("run", "s")):
        v = getattr(sc, key)
        if v is not None and not 0 <= v <= sc.K:
            errs.append(f"{_at(lines, sec, key)}run.{key} = {v} is not a grid index in 0..{sc.K}")
    c = sc.coefficients
    for key in ("beta", "beta_amp", "beta_bar", "beta_bar_amp", "beta_path", "beta_bar_path"):
        v = getattr(c, key)
        if len(v) not in (1, max(sc.N, 1)):
            errs.append(f"{_at(lines, 'coefficients', key)}coefficients.{key} has {len(v)} "
                        f"values, need 1 or N = {sc.N}")
    if c.beta_support and len(c.beta_support) != 2:
        errs.append(f"{_at(lines, 'coefficients', 'beta_support')}coefficients.beta_support "
                    "needs two fractions a, b")
    if not c.delta > 0:
        errs.append(f"{_at(lines, 'coefficients', 'delta')}coefficients.delta must be positive")
    for key, v in vars(sc.tolerances).items():
        if not v > 0:
            errs.append(f"{_at(lines, 'tolerances', key)}tolerances.{key} must be positive")
    return errs


def load_scenario(path, seed_override=None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, base_dir=path.parent, seed_override=seed_override)


SHIPPED = ("s1_default", "s2_two_noise", "s3_path_lambda")


def shipped_path(name: str) -> Path:
    return Path(str(resources.files("bspde") / "scenarios" / f"{name}.cfg"))


def load_shipped(name: str, seed_override=None) -> Scenario:
    return load_scenario(shipped_path(name), seed_override)
