"""Sampling cost model, budget-feasible allocations and Pareto fronts.

Total cost of an allocation of ``n_s`` source and ``n_t`` target samples::

    C(n_s, n_t) = c_s * n_s + c_t * n_t + C_train(n_s, n_t)

and an allocation is feasible when ``C <= budget``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

TRAINING_COST_FORMS = ("zero", "linear", "cubic")


@dataclass(frozen=True)
class CostParams:
    c_s: float = 1.0
    c_t: float = 1.0
    training_form: str = "zero"
    training_coef: float = 0.0
    budget: float = math.inf

    def __post_init__(self):
        if self.training_form not in TRAINING_COST_FORMS:
            raise ValueError(f"unknown training cost form {self.training_form!r}")
        for name in ("c_s", "c_t", "training_coef", "budget"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.c_s > self.c_t:
            warnings.warn(
                f"source samples cost more than target samples ({self.c_s} > {self.c_t})",
                stacklevel=2,
            )

    def training_cost(self, n_s: int, n_t: int) -> float:
        n = n_s + n_t
        if self.training_form == "linear":
            return self.training_coef * n
        if self.training_form == "cubic":
            return self.training_coef * n**3
        return 0.0

    def to_json(self) -> dict:
        return {
            "c_s": self.c_s,
            "c_t": self.c_t,
            "training_form": self.training_form,
            "training_coef": self.training_coef,
            "budget": None if math.isinf(self.budget) else self.budget,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CostParams":
        d = dict(d)
        if d.get("budget") is None:
            d["budget"] = math.inf
        return cls(**d)


@dataclass
class Allocation:
    n_s: int
    n_t: int
    total_cost: float
    feasible: bool = True
    achieved_error: float | None = None
    error_std: float | None = None


def total_cost(cp: CostParams, n_s: int, n_t: int) -> float:
    if n_s < 0 or n_t < 0:
        raise ValueError("sample counts must be non-negative")
    return cp.c_s * n_s + cp.c_t * n_t + cp.training_cost(n_s, n_t)


def _order(a: Allocation):
    return (a.total_cost, -a.n_t)


def allocations(
    cp: CostParams, n_s_grid: Iterable[int], n_t_grid: Iterable[int]
) -> list[Allocation]:
    """Every grid pair with its cost and feasibility flag, cheapest first."""
    out = [
        Allocation(n_s, n_t, c, c <= cp.budget)
        for n_s in n_s_grid
        for n_t in n_t_grid
        for c in (total_cost(cp, n_s, n_t),)
    ]
    return sorted(out, key=_order)


def feasible_allocations(
    cp: CostParams, n_s_grid: Iterable[int], n_t_grid: Iterable[int]
) -> list[Allocation]:
    """Grid pairs within budget, by cost ascending then target count descending."""
    return [a for a in allocations(cp, n_s_grid, n_t_grid) if a.feasible]


def pareto_front(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated ``(cost, error)`` points, sorted by cost.

    A point is dominated when another has cost and error both no larger and
    at least one strictly smaller. Exact duplicates collapse to one point.
    """
    pts = sorted(set((float(c), float(e)) for c, e in points))
    front = []
    best = math.inf
    for c, e in pts:
        # same-cost points sort by error, so only the first of a cost can survive
        if e < best and (not front or front[-1][0] != c):
            front.append((c, e))
            best = e
    return front


def best_allocation(allocs: Iterable[Allocation]) -> Allocation | None:
    """Feasible allocation with the lowest error, ties broken by cost."""
    cands = [a for a in allocs if a.feasible and a.achieved_error is not None]
    if not cands:
        return None
    return min(cands, key=lambda a: (a.achieved_error, a.total_cost, -a.n_t))


def indifference_levels(
    cells: Sequence,
    levels: Sequence[float],
    tol: float,
    cp: CostParams | None = None,
) -> dict[float, list[tuple[int, int]]]:
    """Cells whose mean APE lies within ``tol`` (relative) of each level.

    ``cells`` are objects with ``n_s``, ``n_t`` and ``mean_ape`` attributes
    (for example the cells of a sweep report). Each level's cells are sorted
    by total cost under ``cp`` (unit costs when omitted).
    """
    cells = [c for c in cells if getattr(c, "mean_ape", None) is not None]
    if not cells:
        raise ValueError("indifference levels need an evaluated, non-empty grid")
    cp = cp or CostParams()
    out = {}
    for level in levels:
        if level <= 0:
            raise ValueError("levels must be positive")
        hits = [c for c in cells if abs(c.mean_ape - level) <= tol * level]
        hits.sort(key=lambda c: (total_cost(cp, c.n_s, c.n_t), -c.n_t, c.n_s))
        out[level] = [(c.n_s, c.n_t) for c in hits]
    return out


def write_allocations_csv(allocs: Iterable[Allocation], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_s", "n_t", "total_cost", "feasible", "mean_ape", "std_ape"])
        for a in allocs:
            w.writerow(
                [
                    a.n_s,
                    a.n_t,
                    repr(float(a.total_cost)),
                    str(a.feasible).lower(),
                    "" if a.achieved_error is None else repr(float(a.achieved_error)),
                    "" if a.error_std is None else repr(float(a.error_std)),
                ]
            )


def write_pareto_csv(front: Iterable[Allocation], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_s", "n_t", "total_cost", "mean_ape"])
        for a in front:
            w.writerow([a.n_s, a.n_t, repr(float(a.total_cost)), repr(float(a.achieved_error))])


def pareto_allocations(allocs: Iterable[Allocation]) -> list[Allocation]:
    """Allocations on the (cost, error) Pareto front; evaluated ones only."""
    allocs = [a for a in allocs if a.achieved_error is not None]
    front = set(pareto_front([(a.total_cost, a.achieved_error) for a in allocs]))
    chosen, seen = [], set()
    for a in sorted(allocs, key=lambda a: (a.total_cost, a.achieved_error, -a.n_t)):
        key = (float(a.total_cost), float(a.achieved_error))
        if key in front and key not in seen:
            seen.add(key)
            chosen.append(a)
    return chosen
