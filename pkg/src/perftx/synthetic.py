"""Synthetic source/target response pairs with controllable relatedness.

Two fixed families (generator version 1):

``demo1d``
    One parameter ``x`` on a 200-point linear grid over [0, 6]. Target
    ``t(x) = sin(x) + 0.3 x``.

``surface2d``
    Two log-scaled parameters, ``particles`` (25 values on [5, 10000]) and
    ``refinements`` (27 values on [1, 10000]): 675 configurations. With
    ``u1, u2`` the encoded coordinates in [0, 1], the target is a low plateau
    separated from a high plateau by a steep ridge, plus gentle slopes and a
    shallow interior valley::

        t = 20 + 45 * sigmoid((u1 + u2 - 1.1) / 0.07)
               + 20 * (u1 - 0.35)**2 + 15 * (u2 - 0.3)**2
               - 6 * exp(-((u1 - 0.3)**2 + (u2 - 0.25)**2) / 0.02)

In both families the source is::

    g = (1 + miscalibration) * t + noise_level * std(t) * eta

where ``eta`` is a smooth zero-mean, unit-variance (over the grid) random
Fourier feature field seeded by ``seed``: 64 cosine features with
frequencies drawn from N(0, 1 / 0.15**2) per encoded coordinate. With
``misleading`` the source is the constant ``mean(t)`` instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config_space import (
    ConfigurationSpace,
    ParameterSpec,
    build_space,
    expand_grid,
    make_rng,
    sample_indices,
)
from .errors import ScenarioError, ZeroVarianceError

GENERATOR_VERSION = 1
FAMILIES = ("demo1d", "surface2d")
RFF_FEATURES = 64
RFF_LENGTHSCALE = 0.15


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of a synthetic source/target pair.

    ``noise_level`` is a fraction of the target's standard deviation
    (0.05 means 5 %).
    """

    family: str = "surface2d"
    noise_level: float = 0.0
    miscalibration: float = 0.0
    misleading: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ScenarioError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.noise_level) and self.noise_level >= 0):
            raise ScenarioError("noise_level must be >= 0")
        if not (math.isfinite(self.miscalibration) and self.miscalibration > -1):
            raise ScenarioError("miscalibration must be > -1")

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "noise_level": self.noise_level,
            "miscalibration": self.miscalibration,
            "misleading": self.misleading,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioSpec":
        known = {"family", "noise_level", "miscalibration", "misleading", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class ResponsePair:
    """Target and source response functions over a finite space.

    ``target_table[i]`` and ``source_table[i]`` hold the responses of the
    configuration with flat index ``i``.
    """

    spec: ScenarioSpec
    space: ConfigurationSpace
    target_fn: Callable[[np.ndarray], np.ndarray]
    source_fn: Callable[[np.ndarray], np.ndarray]
    target_table: np.ndarray
    source_table: np.ndarray

    @property
    def inputs(self) -> np.ndarray:
        """Encoded inputs of every configuration, in flat-index order."""
        return self.space.encode_indices(np.arange(self.space.cardinality))

    def true_min(self) -> float:
        return float(self.target_table.min())


def demo1d_space() -> ConfigurationSpace:
    grid = expand_grid({"from": 0.0, "to": 6.0, "count": 200, "spacing": "linear"})
    return build_space([ParameterSpec("x", "integer-range", grid=tuple(grid))])


def surface2d_space() -> ConfigurationSpace:
    return build_space(
        [
            ParameterSpec(
                "particles",
                "integer-range",
                grid=tuple(expand_grid({"from": 5, "to": 10000, "count": 25, "spacing": "log"})),
                scale="log",
            ),
            ParameterSpec(
                "refinements",
                "integer-range",
                grid=tuple(expand_grid({"from": 1, "to": 10000, "count": 27, "spacing": "log"})),
                scale="log",
            ),
        ]
    )


def demo1d_target(x: np.ndarray) -> np.ndarray:
    """``sin(x) + 0.3 x`` on raw parameter values."""
    return np.sin(x) + 0.3 * x


def surface2d_target(U: np.ndarray) -> np.ndarray:
    u1, u2 = U[:, 0], U[:, 1]
    ridge = 45.0 / (1.0 + np.exp(-(u1 + u2 - 1.1) / 0.07))
    bowl = 20.0 * (u1 - 0.35) ** 2 + 15.0 * (u2 - 0.3) ** 2
    valley = 6.0 * np.exp(-((u1 - 0.3) ** 2 + (u2 - 0.25) ** 2) / 0.02)
    return 20.0 + ridge + bowl - valley


class _FourierField:
    """Seeded smooth random field on encoded inputs, unit variance on a grid."""

    def __init__(self, dim: int, seed: int, grid: np.ndarray):
        rng = make_rng(seed)
        self.omega = rng.normal(0.0, 1.0 / RFF_LENGTHSCALE, size=(RFF_FEATURES, dim))
        self.phase = rng.uniform(0.0, 2.0 * math.pi, size=RFF_FEATURES)
        self.weight = rng.normal(0.0, 1.0, size=RFF_FEATURES)
        raw = self._raw(grid)
        self.center = float(raw.mean())
        sd = float(raw.std())
        self.scale = sd if sd > 0 else 1.0

    def _raw(self, U):
        return np.cos(U @ self.omega.T + self.phase) @ self.weight * math.sqrt(2.0 / RFF_FEATURES)

    def __call__(self, U: np.ndarray) -> np.ndarray:
        return (self._raw(np.atleast_2d(U)) - self.center) / self.scale


def make_scenario(spec: ScenarioSpec) -> ResponsePair:
    """Build the response pair described by ``spec``."""
    if spec.family == "demo1d":
        space = demo1d_space()
        lo, hi = space.parameters[0].min, space.parameters[0].max

        def target_fn(U):
            U = np.atleast_2d(U)
            return demo1d_target(lo + U[:, 0] * (hi - lo))

    elif spec.family == "surface2d":
        space = surface2d_space()

        def target_fn(U):
            return surface2d_target(np.atleast_2d(U))

    else:  # pragma: no cover - guarded by ScenarioSpec
        raise ScenarioError(f"unknown family {spec.family!r}")

    grid = space.encode_indices(np.arange(space.cardinality))
    target_table = target_fn(grid)
    t_mean = float(target_table.mean())
    t_std = float(target_table.std())

    if spec.misleading:

        def source_fn(U):
            return np.full(len(np.atleast_2d(U)), t_mean)

    else:
        field = _FourierField(space.dim, spec.seed, grid)
        gain = 1.0 + spec.miscalibration
        amp = spec.noise_level * t_std

        def source_fn(U):
            U = np.atleast_2d(U)
            out = gain * target_fn(U)
            if amp:
                out = out + amp * field(U)
            return out

    source_table = source_fn(grid)
    return ResponsePair(
        spec=spec,
        space=space,
        target_fn=target_fn,
        source_fn=source_fn,
        target_table=target_table,
        source_table=source_table,
    )


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2:
        raise ScenarioError("correlation needs at least two points")
    da, db = a - a.mean(), b - b.mean()
    na, nb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    if na <= 1e-12 * scale * math.sqrt(len(a)):
        raise ZeroVarianceError("first response has zero variance")
    if nb <= 1e-12 * scale * math.sqrt(len(b)):
        raise ZeroVarianceError("second response has zero variance")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def correlation(pair: ResponsePair, n: int | str = "all", seed: int = 0) -> float:
    """Pearson correlation of source versus target responses.

    ``n="all"`` uses the full grid; an integer draws that many distinct
    configurations with ``seed``.
    """
    if n == "all":
        idx = np.arange(pair.space.cardinality)
    else:
        n = int(n)
        if n < 2:
            raise ScenarioError("correlation needs n >= 2")
        idx = sample_indices(pair.space, n, seed)
    return pearson(pair.source_table[idx], pair.target_table[idx])
