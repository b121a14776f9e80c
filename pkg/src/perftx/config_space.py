"""Configuration spaces: parameter domains, encoding and seeded sampling.

A configuration space is the Cartesian product of finite parameter domains.
Configurations are plain tuples holding one domain value per parameter, in
parameter order. Enumeration order is lexicographic in the parameter grids,
with the first parameter varying slowest.

All stochastic operations draw from ``numpy.random.Generator(PCG64(seed))``,
which numpy guarantees to be stream-stable across platforms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigSpaceError

KINDS = ("integer-range", "categorical", "binary")
SCALES = ("linear", "log")
DEFAULT_ENUMERATION_CAP = 10**6
_PERMUTATION_LIMIT = 10**7

Configuration = tuple


def make_rng(seed: int) -> np.random.Generator:
    """Return the documented platform-stable generator for ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ParameterSpec:
    """One configuration parameter and its finite domain.

    Parameters
    ----------
    name : str
        Identifier, unique within a space.
    kind : {"integer-range", "categorical", "binary"}
        Domain kind. Ranges carry a numeric ``grid``; the other kinds an
        ordered list of ``labels``.
    grid : tuple of float, optional
        Strictly ascending admissible values of a range parameter.
    labels : tuple of str, optional
        Ordered labels of a categorical or binary parameter.
    min, max : float, optional
        Range bounds; default to the grid endpoints.
    scale : {"linear", "log"}
        Encoding hint for range parameters.
    """

    name: str
    kind: str
    grid: tuple = ()
    labels: tuple = ()
    min: float | None = None
    max: float | None = None
    scale: str = "linear"
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _coords: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.name:
            raise ConfigSpaceError("parameter name must be non-empty")
        if self.kind not in KINDS:
            raise ConfigSpaceError(f"parameter {self.name!r}: unknown kind {self.kind!r}")
        if self.scale not in SCALES:
            raise ConfigSpaceError(f"parameter {self.name!r}: unknown scale {self.scale!r}")
        if self.kind == "integer-range":
            grid = tuple(float(v) for v in self.grid)
            if not grid:
                raise ConfigSpaceError(f"parameter {self.name!r}: empty domain")
            if not all(math.isfinite(v) for v in grid):
                raise ConfigSpaceError(f"parameter {self.name!r}: non-finite grid value")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigSpaceError(f"parameter {self.name!r}: grid must be strictly ascending")
            lo = grid[0] if self.min is None else float(self.min)
            hi = grid[-1] if self.max is None else float(self.max)
            if grid[0] < lo or grid[-1] > hi:
                raise ConfigSpaceError(f"parameter {self.name!r}: grid outside [{lo}, {hi}]")
            if self.scale == "log" and (lo <= 0 or grid[0] <= 0):
                raise ConfigSpaceError(f"parameter {self.name!r}: log scale needs positive values")
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "min", lo)
            object.__setattr__(self, "max", hi)
            values = grid
        else:
            labels = tuple(str(v) for v in self.labels)
            if not labels:
                raise ConfigSpaceError(f"parameter {self.name!r}: empty domain")
            if len(set(labels)) != len(labels):
                raise ConfigSpaceError(f"parameter {self.name!r}: duplicate labels")
            if self.kind == "binary" and len(labels) != 2:
                raise ConfigSpaceError(f"parameter {self.name!r}: binary needs exactly 2 labels")
            if self.scale == "log":
                raise ConfigSpaceError(f"parameter {self.name!r}: log scale needs a numeric range")
            object.__setattr__(self, "labels", labels)
            values = labels
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(values)})
        object.__setattr__(self, "_coords", self._compute_coords())

    @property
    def values(self) -> tuple:
        return self.grid if self.kind == "integer-range" else self.labels

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def coords(self) -> np.ndarray:
        """Encoded coordinate of every domain value, in domain order."""
        return self._coords

    def _compute_coords(self) -> np.ndarray:
        if self.kind == "integer-range":
            v = np.asarray(self.grid, dtype=float)
            lo, hi = self.min, self.max
            if self.scale == "log":
                v, lo, hi = np.log(v), math.log(lo), math.log(hi)
            if hi == lo:
                return np.zeros(len(v))
            return (v - lo) / (hi - lo)
        k = len(self.labels)
        if k == 1:
            return np.zeros(1)
        return np.arange(k, dtype=float) / (k - 1)

    def index_of(self, value: Any) -> int:
        """Position of ``value`` in the domain; raises if absent."""
        if self.kind != "integer-range":
            try:
                return self._index[str(value)]
            except KeyError:
                raise ConfigSpaceError(
                    f"value {value!r} not in domain of {self.name!r}"
                ) from None
        try:
            v = float(value)
        except (TypeError, ValueError):
            raise ConfigSpaceError(f"value {value!r} not in domain of {self.name!r}") from None
        i = self._index.get(v)
        if i is not None:
            return i
        # tolerate values written with fewer digits than the grid carries
        j = int(np.searchsorted(self.grid, v))
        for cand in (j - 1, j):
            if 0 <= cand < len(self.grid) and math.isclose(
                self.grid[cand], v, rel_tol=1e-9, abs_tol=1e-12
            ):
                return cand
        raise ConfigSpaceError(f"value {value!r} not in domain of {self.name!r}")

    def to_json(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "integer-range":
            d.update(min=self.min, max=self.max, grid=list(self.grid), scale=self.scale)
        else:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ParameterSpec":
        kind = d.get("kind", "integer-range")
        grid = d.get("grid", ())
        if isinstance(grid, dict):
            grid = expand_grid(grid)
        return cls(
            name=d["name"],
            kind=kind,
            grid=tuple(grid),
            labels=tuple(d.get("labels", ())),
            min=d.get("min"),
            max=d.get("max"),
            scale=d.get("scale", "linear"),
        )


def expand_grid(shorthand: dict) -> list[float]:
    """Expand ``{"from", "to", "count", "spacing"}`` into explicit grid values.

    Log spacing uses ``numpy.geomspace``; linear spacing ``numpy.linspace``.
    Endpoints are reproduced exactly.
    """
    try:
        lo, hi, count = float(shorthand["from"]), float(shorthand["to"]), int(shorthand["count"])
    except KeyError as exc:
        raise ConfigSpaceError(f"grid shorthand missing field {exc.args[0]!r}") from None
    spacing = shorthand.get("spacing", "linear")
    if count < 1:
        raise ConfigSpaceError("grid shorthand needs count >= 1")
    if spacing == "log":
        if lo <= 0 or hi <= 0:
            raise ConfigSpaceError("log grid shorthand needs positive endpoints")
        values = np.geomspace(lo, hi, count)
    elif spacing == "linear":
        values = np.linspace(lo, hi, count)
    else:
        raise ConfigSpaceError(f"unknown grid spacing {spacing!r}")
    values = [float(v) for v in values]
    values[0] = lo
    values[-1] = hi
    return values


@dataclass(frozen=True)
class ConfigurationSpace:
    """Ordered collection of parameters; the product of their domains."""

    parameters: tuple

    def __post_init__(self):
        params = tuple(self.parameters)
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ConfigSpaceError(f"duplicate parameter name(s): {', '.join(dup)}")
        if not params:
            raise ConfigSpaceError("a configuration space needs at least one parameter")
        object.__setattr__(self, "parameters", params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def dim(self) -> int:
        return len(self.parameters)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.parameters)

    @property
    def cardinality(self) -> int:
        return math.prod(self.sizes)

    def validate(self, config: Sequence) -> Configuration:
        if len(config) != self.dim:
            raise ConfigSpaceError(
                f"configuration has {len(config)} values, space has {self.dim} parameters"
            )
        return tuple(p.values[p.index_of(v)] for p, v in zip(self.parameters, config))

    def indices_of(self, config: Sequence) -> tuple[int, ...]:
        if len(config) != self.dim:
            raise ConfigSpaceError(
                f"configuration has {len(config)} values, space has {self.dim} parameters"
            )
        return tuple(p.index_of(v) for p, v in zip(self.parameters, config))

    def flat_index(self, config: Sequence) -> int:
        """Lexicographic position of ``config`` in :func:`enumerate_space` order."""
        idx = 0
        for p, i in zip(self.parameters, self.indices_of(config)):
            idx = idx * p.size + i
        return idx

    def config_at(self, flat: int) -> Configuration:
        if not 0 <= flat < self.cardinality:
            raise ConfigSpaceError(f"index {flat} outside space of size {self.cardinality}")
        out = []
        for p in reversed(self.parameters):
            flat, i = divmod(flat, p.size)
            out.append(p.values[i])
        return tuple(reversed(out))

    def from_mapping(self, mapping: dict) -> Configuration:
        missing = [n for n in self.names if n not in mapping]
        if missing:
            raise ConfigSpaceError(f"configuration missing parameter(s): {', '.join(missing)}")
        return self.validate([mapping[n] for n in self.names])

    def encode_indices(self, flat: np.ndarray) -> np.ndarray:
        """Encode configurations given by flat indices; returns ``(n, dim)``."""
        flat = np.asarray(flat, dtype=np.int64)
        out = np.empty((flat.size, self.dim))
        rem = flat.copy()
        for j in range(self.dim - 1, -1, -1):
            p = self.parameters[j]
            rem, i = np.divmod(rem, p.size)
            out[:, j] = p.coords[i]
        return out

    def to_json(self) -> dict:
        return {"parameters": [p.to_json() for p in self.parameters]}

    @classmethod
    def from_json(cls, d: dict) -> "ConfigurationSpace":
        if "parameters" not in d:
            raise ConfigSpaceError("space definition needs a 'parameters' list")
        return build_space([ParameterSpec.from_json(p) for p in d["parameters"]])


def build_space(specs: Iterable[ParameterSpec]) -> ConfigurationSpace:
    """Build a space from validated parameter specs."""
    return ConfigurationSpace(tuple(specs))


def load_space(path: str | Path) -> ConfigurationSpace:
    with open(path, encoding="utf-8") as fh:
        return ConfigurationSpace.from_json(json.load(fh))


def enumerate_space(
    space: ConfigurationSpace, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Configuration]:
    """Every configuration in lexicographic order of the parameter grids."""
    if space.cardinality > cap:
        raise ConfigSpaceError(
            f"space has {space.cardinality} configurations, enumeration cap is {cap}"
        )
    return [space.config_at(i) for i in range(space.cardinality)]


def sample_indices(space: ConfigurationSpace, n: int, seed: int) -> np.ndarray:
    """Flat indices of ``n`` distinct configurations drawn uniformly.

    For a fixed seed, the draw for ``n1`` is a prefix of the draw for
    ``n2 >= n1``.
    """
    card = space.cardinality
    if n < 0 or n > card:
        raise ConfigSpaceError(f"cannot draw {n} distinct configurations from {card}")
    rng = make_rng(seed)
    if card <= _PERMUTATION_LIMIT:
        return rng.permutation(card)[:n]
    # sequential rejection keeps the prefix property on huge spaces
    seen: set[int] = set()
    out = []
    while len(out) < n:
        i = int(rng.integers(card))
        if i not in seen:
            seen.add(i)
            out.append(i)
    return np.asarray(out, dtype=np.int64)


def random_sample(space: ConfigurationSpace, n: int, seed: int) -> list[Configuration]:
    """Draw ``n`` distinct configurations without replacement."""
    return [space.config_at(int(i)) for i in sample_indices(space, n, seed)]


def encode(space: ConfigurationSpace, config: Sequence) -> np.ndarray:
    """Numeric vector with one coordinate in [0, 1] per parameter.

    Range parameters are min-max normalised (after a log for log scale),
    binary parameters map to {0, 1} and categoricals to ``index / (k - 1)``.
    """
    idx = space.indices_of(config)
    return np.array([p.coords[i] for p, i in zip(space.parameters, idx)])


def encode_many(space: ConfigurationSpace, configs: Iterable[Sequence]) -> np.ndarray:
    rows = [encode(space, c) for c in configs]
    if not rows:
        return np.empty((0, space.dim))
    return np.vstack(rows)
