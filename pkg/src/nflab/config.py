"""Plain-text run configuration and field descriptors.

A configuration is a sequence of ``key = value`` lines; ``#`` starts a
comment.  Missing keys take the defaults in :data:`DEFAULTS`; unknown keys
are an error.  Source and initial-conductance fields are given by small
descriptors such as ``gaussian-bump(0.5, 0.1, 2)`` or
``seeded-random(7, 0.5)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigParseError, GridMismatch, InvariantViolation, UnknownKey
from .grid import Grid, read_snapshot
from .params import ModelParams
from .pattern import PatternSpec
from .rng import Prng

DEFAULTS: dict[str, str] = {
    "experiment": "run",
    "dim": "1",
    "n": "127",
    "D": "0.01",
    "c": "1.0",
    "gamma": "2.0",
    "epsilon": "0.001",
    "dt0": "0.001",
    "dt_max": "0.1",
    "t_end": "10.0",
    "cg_tol": "1e-12",
    "steady_tol": "1e-8",
    "source": "constant(1)",
    "initial": "seeded-random(1, 0.5)",
    "bc": "mixed",
    "out": "out",
    "seed": "0",
    "pattern": "halves",
    "horizon": "200.0",
    "check_tol": "1e-4",
    "D_list": "0.1, 0.03, 0.01, 0.003",
    "large_D_factors": "1.1, 1.5",
    "large_D_t_end": "100.0",
    "eps_list": "0.01, 0.001, 0.0001",
    "beta_factors": "0.5, 0.9, 1.1, 2.0",
    "workers": "4",
}

INT_KEYS = {"dim", "n", "seed", "workers"}
FLOAT_KEYS = {"D", "c", "gamma", "epsilon", "dt0", "dt_max", "t_end", "cg_tol",
              "steady_tol", "horizon", "check_tol", "large_D_t_end"}
LIST_KEYS = {"D_list", "large_D_factors", "eps_list", "beta_factors"}

_DESCRIPTOR = re.compile(r"^\s*([A-Za-z][\w-]*)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class Descriptor:
    name: str
    args: tuple[str, ...] = ()

    def floats(self, line=None) -> list[float]:
        try:
            return [float(a) for a in self.args]
        except ValueError:
            raise ConfigParseError(f"non-numeric argument in {self}", line) from None

    def __str__(self):
        return f"{self.name}({', '.join(self.args)})"


def parse_descriptor(text: str, line=None) -> Descriptor:
    match = _DESCRIPTOR.match(text)
    if not match:
        raise ConfigParseError(f"malformed descriptor {text!r}", line)
    name, inner = match.groups()
    args = tuple(a.strip() for a in inner.split(",")) if inner and inner.strip() else ()
    return Descriptor(name, args)


@dataclass
class RunConfig:
    """Validated configuration; ``lines`` maps keys to their source line."""

    values: dict
    lines: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def grid(self) -> Grid:
        return Grid(self.dim, self.n)

    @property
    def params(self) -> ModelParams:
        v = self.values
        return ModelParams(D=v["D"], c=v["c"], gamma=v["gamma"], epsilon=v["epsilon"],
                           cg_tol=v["cg_tol"], dt0=v["dt0"], dt_max=v["dt_max"],
                           t_end=v["t_end"], steady_tol=v["steady_tol"])

    def with_(self, **changes) -> "RunConfig":
        values = dict(self.values)
        values.update(changes)
        return RunConfig(values, dict(self.lines))

    def source_field(self) -> np.ndarray:
        return build_source(self.source, self.grid, self.lines.get("source"))

    def initial_field(self) -> np.ndarray:
        return build_initial(self.initial, self.grid, self.seed, self.lines.get("initial"))

    def pattern_spec(self) -> PatternSpec:
        return build_pattern(self.pattern, self.grid, self.seed, self.lines.get("pattern"))


def _convert(key, raw, line):
    try:
        if key in INT_KEYS:
            return int(raw, 0)
        if key in FLOAT_KEYS:
            return float(raw)
        if key in LIST_KEYS:
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigParseError(f"cannot parse {key} = {raw!r}", line) from None
    if key in ("source", "initial", "pattern"):
        return parse_descriptor(raw, line)
    return raw


def _validate(values, lines):
    def fail(key, msg):
        raise InvariantViolation(msg, lines.get(key))

    checks = [
        ("dim", values["dim"] in (1, 2), "dim must be 1 or 2"),
        ("n", values["n"] >= 3, "n must be >= 3"),
        ("D", values["D"] >= 0, "D must be >= 0"),
        ("c", values["c"] > 0, "c must be > 0"),
        ("gamma", values["gamma"] >= 1, "gamma must be >= 1"),
        ("epsilon", values["epsilon"] >= 0, "epsilon must be >= 0"),
        ("dt0", values["dt0"] > 0, "dt0 must be > 0"),
        ("dt_max", values["dt_max"] >= values["dt0"], "dt_max must be >= dt0"),
        ("t_end", values["t_end"] >= 0, "t_end must be >= 0"),
        ("cg_tol", 0 < values["cg_tol"] < 1, "cg_tol must lie in (0, 1)"),
        ("steady_tol", values["steady_tol"] >= 0, "steady_tol must be >= 0"),
        ("horizon", values["horizon"] > 0, "horizon must be > 0"),
        ("check_tol", values["check_tol"] > 0, "check_tol must be > 0"),
        ("large_D_t_end", values["large_D_t_end"] > 0, "large_D_t_end must be > 0"),
        ("workers", values["workers"] >= 1, "workers must be >= 1"),
        ("bc", values["bc"] in ("mixed", "dirichlet"), "bc must be 'mixed' or 'dirichlet'"),
        ("seed", 0 <= values["seed"] < 2 ** 64, "seed must be an unsigned 64-bit integer"),
        ("D_list", all(d >= 0 for d in values["D_list"]) and values["D_list"],
         "D_list needs nonnegative entries"),
        ("large_D_factors", all(f > 1 for f in values["large_D_factors"]),
         "large_D_factors must exceed 1"),
        ("eps_list", all(e > 0 for e in values["eps_list"]) and values["eps_list"],
         "eps_list needs positive entries"),
        ("beta_factors", all(f >= 0 for f in values["beta_factors"]) and values["beta_factors"],
         "beta_factors need nonnegative entries"),
    ]
    for key, ok, msg in checks:
        if not ok:
            fail(key, msg)
    for key, kinds in (("source", SOURCE_KINDS), ("initial", INITIAL_KINDS),
                       ("pattern", PATTERN_KINDS)):
        if values[key].name not in kinds:
            raise ConfigParseError(
                f"{key}: unknown descriptor {values[key].name!r} "
                f"(expected one of {', '.join(sorted(kinds))})", lines.get(key))


def parse_config(text: str) -> RunConfig:
    """Parse configuration text.

    Raises
    ------
    ConfigParseError, UnknownKey, InvariantViolation
        With the offending line number where one exists.
    """
    raw: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigParseError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in DEFAULTS:
            raise UnknownKey(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigParseError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigParseError(f"empty value for {key!r}", lineno)
        raw[key] = value
        lines[key] = lineno
    values = {key: _convert(key, raw.get(key, default), lines.get(key))
              for key, default in DEFAULTS.items()}
    _validate(values, lines)
    return RunConfig(values, lines)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# -- descriptors -------------------------------------------------------------
SOURCE_KINDS = {"constant", "gaussian-bump", "from-snapshot"}
INITIAL_KINDS = {"constant-vector", "seeded-random", "signed-pattern", "sine", "zero",
                 "from-snapshot"}
PATTERN_KINDS = {"uniform", "halves", "stripes", "window", "random"}


def _snapshot_field(path, grid, components, line):
    snap_grid, data = read_snapshot(path)
    if snap_grid != grid:
        raise GridMismatch(f"snapshot {path} is on a {snap_grid.dim}D grid with n={snap_grid.n}, "
                           f"configuration uses {grid.dim}D n={grid.n}")
    if data.shape[0] != components:
        raise GridMismatch(f"snapshot {path} has {data.shape[0]} components, expected {components}")
    return data


def build_source(desc: Descriptor, grid: Grid, line=None) -> np.ndarray:
    """Source field ``S`` from a descriptor."""
    if desc.name == "constant":
        vals = desc.floats(line) or [1.0]
        return np.full(grid.shape, vals[0])
    if desc.name == "gaussian-bump":
        vals = desc.floats(line)
        if len(vals) != grid.dim + 2:
            raise ConfigParseError(
                f"gaussian-bump takes {grid.dim} center coordinate(s), width and amplitude", line)
        center, width, amp = vals[:grid.dim], vals[grid.dim], vals[grid.dim + 1]
        if width <= 0:
            raise InvariantViolation("gaussian-bump width must be positive", line)
        r2 = sum((x - c0) ** 2 for x, c0 in zip(grid.coords(), center))
        return amp * np.exp(-r2 / (2 * width ** 2))
    if desc.name == "from-snapshot":
        return _snapshot_field(desc.args[0], grid, 1, line)[0]
    raise ConfigParseError(f"unknown source descriptor {desc.name!r}", line)


def build_pattern(desc: Descriptor, grid: Grid, seed: int = 0, line=None) -> PatternSpec:
    if desc.name == "uniform":
        vals = desc.floats(line) or [1.0]
        return PatternSpec.uniform(grid, int(vals[0]))
    if desc.name == "halves":
        return PatternSpec.halves(grid)
    if desc.name == "stripes":
        vals = desc.floats(line) or [2.0]
        return PatternSpec.stripes(grid, int(vals[0]))
    if desc.name == "window":
        lo, hi = desc.floats(line)
        return PatternSpec.window(grid, lo, hi)
    if desc.name == "random":
        u = Prng(seed).uniform(grid.shape)
        return PatternSpec(grid, np.where(u < 0, -1, 1))
    raise ConfigParseError(f"unknown pattern descriptor {desc.name!r}", line)


def build_initial(desc: Descriptor, grid: Grid, seed: int = 0, line=None) -> np.ndarray:
    """Initial conductance (vector field) from a descriptor.

    ``seeded-random(seed, amplitude)`` draws every component at every node
    uniformly from ``[-amplitude, amplitude)`` with splitmix64; the
    one-argument form ``seeded-random(amplitude)`` uses the run ``seed``.
    ``signed-pattern(kind, amplitude[, k])`` puts ``amplitude`` times a
    pattern sign into the first component.
    """
    shape = (grid.dim,) + grid.shape
    if desc.name == "zero":
        return np.zeros(shape)
    if desc.name == "constant-vector":
        vals = desc.floats(line)
        if len(vals) != grid.dim:
            raise ConfigParseError(f"constant-vector needs {grid.dim} component(s)", line)
        return np.stack([np.full(grid.shape, v) for v in vals])
    if desc.name == "seeded-random":
        args = list(desc.args)
        if len(args) == 1:
            # amplitude only: draw from the run seed
            args = [str(seed)] + args
        if len(args) != 2:
            raise ConfigParseError("seeded-random takes (seed, amplitude) or (amplitude)", line)
        try:
            s = int(args[0], 0)
        except ValueError:
            raise ConfigParseError(f"seed {args[0]!r} is not an integer", line) from None
        if not 0 <= s < 2 ** 64:
            raise InvariantViolation("seed must be an unsigned 64-bit integer", line)
        amp = Descriptor("x", (args[1],)).floats(line)[0]
        return Prng(s).uniform(shape, amp)
    if desc.name == "sine":
        vals = desc.floats(line)
        amp, k = (vals + [1.0])[:2] if vals else (1.0, 1.0)
        prof = np.prod([np.sin(k * np.pi * x) for x in grid.coords()], axis=0)
        out = np.zeros(shape)
        out[0] = amp * prof
        return out
    if desc.name == "signed-pattern":
        if not desc.args:
            raise ConfigParseError("signed-pattern takes (kind, amplitude[, k])", line)
        kind = desc.args[0]
        rest = Descriptor("x", desc.args[1:]).floats(line)
        amp = rest[0] if rest else 1.0
        sub = Descriptor(kind, tuple(str(v) for v in rest[1:]))
        out = np.zeros(shape)
        out[0] = amp * build_pattern(sub, grid, seed, line).signs
        return out
    if desc.name == "from-snapshot":
        return _snapshot_field(desc.args[0], grid, grid.dim, line)
    raise ConfigParseError(f"unknown initial descriptor {desc.name!r}", line)
