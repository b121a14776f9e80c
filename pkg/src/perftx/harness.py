"""Evaluation sweeps over (source size, target size) grids.

Each repetition ``r`` fixes, from ``(master_seed, r)``, one holdout of the
target pool into an evaluation set ``D_o`` plus one random ordering of the
remaining target rows and of the source pool. Every cell of that repetition
trains on prefixes of those orderings, so within a repetition larger cells
contain the samples of smaller ones. Results therefore do not depend on the
order in which cells run.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import gp, transfer
from ._engine import FitOptions
from .cost import CostParams, total_cost
from .datasets import MeasurementTable, round_half_up
from .errors import APEError, DataError
from .synthetic import ResponsePair, ScenarioSpec, make_scenario

log = logging.getLogger(__name__)

EVAL_BATCH = 1000


def ape(predicted: float, actual: float) -> float:
    """Absolute percentage error ``|predicted - actual| / actual * 100``.

    Raises :class:`APEError` when ``actual`` is zero. The magnitude of
    ``actual`` is used so the result is non-negative for negative metrics.
    """
    if actual == 0:
        raise APEError("APE is undefined for an actual value of 0")
    return abs(predicted - actual) / abs(actual) * 100.0


def ape_vector(predicted: np.ndarray, actual: np.ndarray) -> np.ndarray:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    zero = np.flatnonzero(actual == 0)
    if zero.size:
        raise APEError(f"APE is undefined for actual value 0 at row {int(zero[0])}")
    return np.abs(predicted - actual) / np.abs(actual) * 100.0


def predict_any(model, X: np.ndarray):
    if isinstance(model, transfer.TransferGPModel):
        return transfer.predict_target_many(model, X)
    return gp.predict_many(model, X)


def mean_ape(model, X_eval: np.ndarray, y_eval: np.ndarray) -> tuple[float, float]:
    """Mean and population standard deviation of per-row APE."""
    if len(y_eval) == 0:
        raise DataError("evaluation set is empty")
    mean, _ = predict_any(model, X_eval)
    a = ape_vector(mean, y_eval)
    return float(a.mean()), float(a.std())


# ---------------------------------------------------------------------------
# problem definition


@dataclass(frozen=True)
class Problem:
    """Source and target pools as encoded inputs and responses."""

    X_source: np.ndarray
    y_source: np.ndarray
    X_target: np.ndarray
    y_target: np.ndarray
    source_reference: int  # size that source fractions refer to
    target_reference: int

    @classmethod
    def from_pair(cls, pair: ResponsePair) -> "Problem":
        X = pair.inputs
        return cls(X, pair.source_table, X, pair.target_table, len(X), len(X))

    @classmethod
    def from_tables(cls, source: MeasurementTable | None, target: MeasurementTable) -> "Problem":
        d = target.space.dim
        Xs = np.empty((0, d)) if source is None else source.X
        ys = np.empty(0) if source is None else source.performance
        return cls(Xs, ys, target.X, target.performance, len(ys), len(target))


@dataclass
class SweepSpec:
    """What to sweep and how.

    ``scenario`` (synthetic) or ``problem`` (measured tables) supplies the
    data. Fractions refer to the full source/target size.
    """

    source_fractions: Sequence[float] = (0.0, 0.25, 0.5, 1.0)
    target_fractions: Sequence[float] = (0.01, 0.025, 0.05, 0.10)
    repetitions: int = 3
    eval_fraction: float = 0.5
    master_seed: int = 0
    scenario: ScenarioSpec | None = None
    problem: Problem | None = None
    cost: CostParams | None = None
    fit: FitOptions = field(default_factory=lambda: FitOptions(restarts=2))
    fixed_rho: float | None = None
    counts: Sequence[tuple[int, int]] | None = None  # explicit cells override fractions

    def __post_init__(self):
        if self.repetitions < 1:
            raise DataError("repetitions must be >= 1")
        if not all(0 <= f <= 1 for f in self.source_fractions):
            raise DataError("source fractions must lie in [0, 1]")
        if not all(0 < f <= 1 for f in self.target_fractions):
            raise DataError("target fractions must lie in (0, 1]")
        if not 0 < self.eval_fraction <= 1:
            raise DataError("eval_fraction must lie in (0, 1]")
        if (self.scenario is None) == (self.problem is None):
            raise DataError("give exactly one of scenario or problem")

    def resolve_problem(self) -> Problem:
        if self.problem is not None:
            return self.problem
        return Problem.from_pair(make_scenario(self.scenario))

    def cells(self, problem: Problem) -> list[tuple[int, int]]:
        if self.counts is not None:
            return [(int(a), int(b)) for a, b in self.counts]
        out = []
        for ft in self.target_fractions:
            nt = max(1, round_half_up(ft * problem.target_reference))
            for fs in self.source_fractions:
                out.append((round_half_up(fs * problem.source_reference), nt))
        return out

    def describe(self) -> dict:
        """JSON-ready description used for the report hash and metadata."""
        return {
            "source_fractions": list(self.source_fractions),
            "target_fractions": list(self.target_fractions),
            "counts": None if self.counts is None else [list(c) for c in self.counts],
            "repetitions": self.repetitions,
            "eval_fraction": self.eval_fraction,
            "master_seed": self.master_seed,
            "scenario": None if self.scenario is None else self.scenario.to_json(),
            "cost": None if self.cost is None else self.cost.to_json(),
            "fit": {
                "restarts": self.fit.restarts,
                "max_iter": self.fit.max_iter,
                "tol": self.fit.tol,
                "seed": self.fit.seed,
                "fixed": sorted(self.fit.fixed),
                "standardize": self.fit.standardize,
            },
            "fixed_rho": self.fixed_rho,
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        if self.problem is not None:
            for a in (self.problem.X_source, self.problem.y_source,
                      self.problem.X_target, self.problem.y_target):
                blob += np.ascontiguousarray(a).tobytes()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RepResult:
    n_s: int
    n_t: int
    rep: int
    mean_ape: float | None
    std_ape: float | None
    mean_pred_var: float | None
    train_s: float | None
    eval_ms: float | None
    rho: float | None
    skipped: bool


@dataclass
class Cell:
    n_s: int
    n_t: int
    repetitions: int
    mean_ape: float | None
    median_ape: float | None
    std_ape: float | None  # spread of per-repetition mean APE
    mean_pred_var: float | None
    train_s_mean: float | None
    train_s_std: float | None
    eval_ms_mean: float | None
    skipped: bool
    total_cost: float | None = None


@dataclass
class SweepReport:
    rows: list[RepResult]
    cells: list[Cell]
    metadata: dict

    def cell(self, n_s: int, n_t: int) -> Cell:
        for c in self.cells:
            if c.n_s == n_s and c.n_t == n_t:
                return c
        raise KeyError((n_s, n_t))

    def reps(self, n_s: int, n_t: int) -> list[RepResult]:
        return [r for r in self.rows if r.n_s == n_s and r.n_t == n_t and not r.skipped]

    def to_json(self) -> dict:
        return {
            "metadata": self.metadata,
            "cells": [asdict(c) for c in self.cells],
            "rows": [asdict(r) for r in self.rows],
        }


def rep_seed(master_seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class _RepDesign:
    eval_idx: np.ndarray
    target_order: np.ndarray
    source_order: np.ndarray


def _design(problem: Problem, eval_fraction: float, seed: int) -> _RepDesign:
    rng = np.random.Generator(np.random.PCG64(seed))
    nt = len(problem.y_target)
    if eval_fraction >= 1:
        eval_idx = np.arange(nt)
        pool = np.arange(nt)
    else:
        perm = rng.permutation(nt)
        n_eval = max(1, round_half_up(eval_fraction * nt))
        eval_idx, pool = np.sort(perm[:n_eval]), perm[n_eval:]
    zero = problem.y_target[eval_idx] == 0
    if zero.any():
        log.debug("excluding %d zero-valued row(s) from the evaluation set", int(zero.sum()))
        eval_idx = eval_idx[~zero]
    if len(eval_idx) == 0:
        raise DataError("evaluation set is empty after excluding zero-valued rows")
    target_order = rng.permutation(pool)
    source_order = rng.permutation(len(problem.y_source))
    return _RepDesign(eval_idx, target_order, source_order)


def fit_cell(problem: Problem, design: _RepDesign, n_s: int, n_t: int,
             opts: FitOptions, fixed_rho: float | None = None):
    """Fit the model for one cell; plain GP when ``n_s == 0``."""
    ti = design.target_order[:n_t]
    Xt, yt = problem.X_target[ti], problem.y_target[ti]
    if n_s == 0:
        return gp.fit(Xt, yt, opts=opts)
    si = design.source_order[:n_s]
    init = None
    if fixed_rho is not None:
        d = Xt.shape[1]
        init = transfer.TransferKernelParams(
            base=gp.KernelParams.default(d), rho=fixed_rho,
            noise_source=1e-2, noise_target=1e-2, source_scale=1.0,
        )
        opts = FitOptions(
            restarts=opts.restarts, max_iter=opts.max_iter, tol=opts.tol, seed=opts.seed,
            fixed=opts.fixed | {"rho", "source_scale"}, standardize=opts.standardize,
        )
    return transfer.fit_transfer(problem.X_source[si], problem.y_source[si], Xt, yt, init, opts)


def _eval_time_ms(model, X_eval: np.ndarray) -> float:
    reps = int(math.ceil(EVAL_BATCH / len(X_eval)))
    Xb = np.tile(X_eval, (reps, 1))[:EVAL_BATCH]
    t0 = time.perf_counter()
    predict_any(model, Xb)
    return (time.perf_counter() - t0) * 1000.0 / EVAL_BATCH


def _run_rep(problem: Problem, spec: SweepSpec, cells, rep: int) -> list[RepResult]:
    design = _design(problem, spec.eval_fraction, rep_seed(spec.master_seed, rep))
    X_eval = problem.X_target[design.eval_idx]
    y_eval = problem.y_target[design.eval_idx]
    out = []
    for n_s, n_t in cells:
        if n_t < 1 or n_t > len(design.target_order) or n_s > len(design.source_order):
            out.append(RepResult(n_s, n_t, rep, None, None, None, None, None, None, True))
            continue
        t0 = time.perf_counter()
        model = fit_cell(problem, design, n_s, n_t, spec.fit, spec.fixed_rho)
        train_s = time.perf_counter() - t0
        mean, var = predict_any(model, X_eval)
        a = ape_vector(mean, y_eval)
        rho = transfer.task_correlation(model) if isinstance(model, transfer.TransferGPModel) else None
        out.append(
            RepResult(
                n_s, n_t, rep, float(a.mean()), float(a.std()), float(var.mean()),
                train_s, _eval_time_ms(model, X_eval), rho, False,
            )
        )
    return out


def _aggregate(rows: list[RepResult], cells, cost: CostParams | None) -> list[Cell]:
    out = []
    for n_s, n_t in cells:
        rs = [r for r in rows if r.n_s == n_s and r.n_t == n_t and not r.skipped]
        tc = None if cost is None else total_cost(cost, n_s, n_t)
        if not rs:
            out.append(Cell(n_s, n_t, 0, None, None, None, None, None, None, None, True, tc))
            continue
        apes = np.array([r.mean_ape for r in rs])
        train = np.array([r.train_s for r in rs])
        out.append(
            Cell(
                n_s, n_t, len(rs),
                mean_ape=float(apes.mean()),
                median_ape=float(np.median(apes)),
                std_ape=float(apes.std()),
                mean_pred_var=float(np.mean([r.mean_pred_var for r in rs])),
                train_s_mean=float(train.mean()),
                train_s_std=float(train.std()),
                eval_ms_mean=float(np.mean([r.eval_ms for r in rs])),
                skipped=False,
                total_cost=tc,
            )
        )
    return out


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepReport:
    """Fit and evaluate every cell for every repetition.

    Cells whose sample sizes exceed the available pools are reported as
    skipped. ``jobs > 1`` runs repetitions in worker processes.
    """
    problem = spec.resolve_problem()
    n_zero = int(np.sum(problem.y_target == 0))
    if n_zero:
        log.warning("%d zero-valued target row(s) are never used for evaluation (APE undefined)",
                    n_zero)
    cells = list(dict.fromkeys(spec.cells(problem)))
    reps = range(spec.repetitions)
    if jobs > 1 and spec.repetitions > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_run_rep, [problem] * len(reps), [spec] * len(reps),
                                [cells] * len(reps), reps))
    else:
        parts = [_run_rep(problem, spec, cells, r) for r in reps]
    rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: (cells.index((r.n_s, r.n_t)), r.rep))
    metadata = {
        "spec": spec.describe(),
        "spec_hash": spec.spec_hash(),
        "master_seed": spec.master_seed,
        "rep_seeds": [rep_seed(spec.master_seed, r) for r in reps],
        "eval_batch": EVAL_BATCH,
    }
    return SweepReport(rows=rows, cells=_aggregate(rows, cells, spec.cost), metadata=metadata)


def demo_predictions(
    related: ResponsePair,
    misleading: ResponsePair,
    n_s: int = 9,
    n_t: int = 3,
    seed: int = 0,
    opts: FitOptions | None = None,
    clamp_rho: float = 0.9,
) -> tuple[dict, dict]:
    """Three models on one shared design, evaluated over the whole space.

    ``no_transfer`` sees the ``n_t`` target samples only, ``transfer`` adds
    ``n_s`` samples of the related source with rho learned, and ``clamped``
    adds the same samples of the misleading source with rho fixed at
    ``clamp_rho``. Returns per-point columns and a summary.
    """
    opts = opts or FitOptions()
    rel = Problem.from_pair(related)
    mis = Problem.from_pair(misleading)
    design = _design(rel, 1.0, seed)
    models = {
        "no_transfer": fit_cell(rel, design, 0, n_t, opts),
        "transfer": fit_cell(rel, design, n_s, n_t, opts),
        "clamped": fit_cell(mis, design, n_s, n_t, opts, fixed_rho=clamp_rho),
    }
    X = rel.X_target
    cols = {
        "x": X[:, 0] if X.shape[1] == 1 else np.arange(len(X)),
        "target": rel.y_target,
        "source": rel.y_source,
        "misleading_source": mis.y_source,
    }
    summary = {
        "seed": seed,
        "n_s": n_s,
        "n_t": n_t,
        "clamp_rho": clamp_rho,
        "target_ids": design.target_order[:n_t].tolist(),
        "source_ids": design.source_order[:n_s].tolist(),
    }
    for name, model in models.items():
        mean, var = predict_any(model, X)
        cols[f"{name}_mean"] = mean
        cols[f"{name}_var"] = var
        keep = rel.y_target != 0
        summary[f"ape_{name}"] = float(ape_vector(mean[keep], rel.y_target[keep]).mean())
        if isinstance(model, transfer.TransferGPModel):
            summary[f"rho_{name}"] = transfer.task_correlation(model)
    return cols, summary


def summarize(report: SweepReport, cost_params: CostParams) -> SweepReport:
    """Annotate every cell with its total cost under ``cost_params``."""
    cells = [
        Cell(**{**asdict(c), "total_cost": total_cost(cost_params, c.n_s, c.n_t)})
        for c in report.cells
    ]
    return SweepReport(rows=report.rows, cells=cells, metadata=dict(report.metadata))


# ---------------------------------------------------------------------------
# files

REPORT_COLUMNS = ["n_s", "n_t", "rep", "mean_ape", "std_ape", "mean_pred_var",
                  "train_s", "eval_ms", "cost", "skipped"]
TIMING_COLUMNS = ("train_s", "eval_ms")


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_report_csv(report: SweepReport, path, cost: CostParams | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            c = None if cost is None else total_cost(cost, r.n_s, r.n_t)
            w.writerow([r.n_s, r.n_t, r.rep, _fmt(r.mean_ape), _fmt(r.std_ape),
                        _fmt(r.mean_pred_var), _fmt(r.train_s), _fmt(r.eval_ms),
                        _fmt(c), str(r.skipped).lower()])


def write_report_json(report: SweepReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_csv(path) -> SweepReport:
    """Rebuild a report (rows and aggregated cells) from ``report.csv``."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(REPORT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing column(s) {sorted(missing)}")

        def num(v):
            return None if v == "" else float(v)

        for line in reader:
            rows.append(
                RepResult(
                    int(line["n_s"]), int(line["n_t"]), int(line["rep"]),
                    num(line["mean_ape"]), num(line["std_ape"]), num(line["mean_pred_var"]),
                    num(line["train_s"]), num(line["eval_ms"]), None,
                    line["skipped"] == "true",
                )
            )
    if not rows:
        raise DataError(f"{path}: report has no rows")
    cells = list(dict.fromkeys((r.n_s, r.n_t) for r in rows))
    return SweepReport(rows=rows, cells=_aggregate(rows, cells, None), metadata={})


def spec_from_json(d: dict, base_dir=None) -> SweepSpec:
    """Build a :class:`SweepSpec` from its JSON form.

    Data is either ``"scenario": {...}`` or ``"data": {"target": path,
    "source": path, "schema": path}`` (relative to ``base_dir``).
    """
    from pathlib import Path

    from .datasets import infer_space, load_csv, load_schema

    d = dict(d)
    known = {"scenario", "data", "source_fractions", "target_fractions", "counts",
             "repetitions", "eval_fraction", "master_seed", "cost", "fit", "fixed_rho"}
    unknown = set(d) - known
    if unknown:
        raise DataError(f"unknown sweep spec field(s): {', '.join(sorted(unknown))}")
    kw: dict[str, Any] = {}
    for k in ("source_fractions", "target_fractions", "repetitions", "eval_fraction",
              "master_seed", "fixed_rho", "counts"):
        if k in d:
            kw[k] = d[k]
    if "scenario" in d:
        kw["scenario"] = ScenarioSpec.from_json(d["scenario"])
    if "data" in d:
        data = d["data"]
        base = Path(base_dir or ".")
        paths = [base / data["target"]] + ([base / data["source"]] if data.get("source") else [])
        space = load_schema(base / data["schema"])[0] if data.get("schema") else infer_space(paths)
        target = load_csv(paths[0], space)
        source = load_csv(paths[1], space) if len(paths) > 1 else None
        kw["problem"] = Problem.from_tables(source, target)
    if "cost" in d:
        kw["cost"] = CostParams.from_json(d["cost"])
    if "fit" in d:
        f = dict(d["fit"])
        f["fixed"] = frozenset(f.get("fixed", ()))
        kw["fit"] = FitOptions(**f)
    return SweepSpec(**kw)
