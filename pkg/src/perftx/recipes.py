"""Reproduction recipes: JSON files naming CLI commands, artifacts and checks.

A recipe looks like::

    {
      "name": "demo1d",
      "acceptance": [5],
      "commands": [["synth", "demo", "--out", "{work}/demo.csv", "--summary", "{work}/demo.json"]],
      "artifacts": ["demo.csv", "demo.json"],
      "checks": [{"check": "demo_transfer_helps", "summary": "demo.json"}]
    }

``{work}`` expands to the recipe's own output directory, and the optional
``files`` mapping (name to JSON content) is written there first. Commands run
through :func:`perftx.cli.main` in order; a recipe passes when every command
exits 0, every artifact exists and every named check holds.
"""
from __future__ import annotations

import csv
import io
import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DataError

TIMING_COLUMNS = frozenset({"train_s", "eval_ms"})
TIMING_KEYS = frozenset({"train_s", "eval_ms", "train_s_mean", "train_s_std", "eval_ms_mean",
                         "train_seconds"})

CHECKS: dict[str, Callable[[Path, dict], str | None]] = {}


def check(name):
    def deco(fn):
        CHECKS[name] = fn
        return fn

    return deco


@dataclass(frozen=True)
class Recipe:
    name: str
    commands: list
    artifacts: list
    checks: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)
    description: str = ""
    files: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "Recipe":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        known = {"name", "commands", "artifacts", "checks", "acceptance", "description", "files"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"{path}: unknown recipe field(s) {sorted(unknown)}")
        for c in d.get("checks", []):
            if c.get("check") not in CHECKS:
                raise DataError(f"{path}: unknown check {c.get('check')!r}")
        return cls(**d)


@dataclass
class RecipeResult:
    name: str
    ok: bool
    failures: list


@dataclass
class RecipeReport:
    results: list

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            out.append(f"{'PASS' if r.ok else 'FAIL'} {r.name}")
            out.extend(f"  - {f}" for f in r.failures)
        return out


def load_recipes(directory) -> list[Recipe]:
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise DataError(f"no recipes found in {directory}")
    return [Recipe.load(p) for p in paths]


def run_recipe(recipe: Recipe, work: Path) -> RecipeResult:
    from .cli import main

    work.mkdir(parents=True, exist_ok=True)
    for name, content in recipe.files.items():
        with open(work / name, "w", encoding="utf-8") as fh:
            json.dump(content, fh, indent=2, sort_keys=True)
            fh.write("\n")
    failures = []
    for cmd in recipe.commands:
        argv = [str(a).replace("{work}", str(work)) for a in cmd]
        rc = main(argv)
        if rc != 0:
            failures.append(f"command exited {rc}: perftx {' '.join(argv)}")
            return RecipeResult(recipe.name, False, failures)
    for a in recipe.artifacts:
        if not (work / a).is_file():
            failures.append(f"missing artifact {a}")
    if not failures:
        for c in recipe.checks:
            try:
                msg = CHECKS[c["check"]](work, c)
            except Exception as exc:  # a broken artifact fails its recipe only
                msg = f"{type(exc).__name__}: {exc}"
            if msg:
                failures.append(f"{c['check']}: {msg}")
    return RecipeResult(recipe.name, not failures, failures)


def verify_recipes(directory="recipes", work=None, names=None) -> RecipeReport:
    """Run every recipe (or those in ``names``) into per-recipe directories."""
    recipes = load_recipes(directory)
    if names:
        missing = set(names) - {r.name for r in recipes}
        if missing:
            raise DataError(f"unknown recipe(s): {', '.join(sorted(missing))}")
        recipes = [r for r in recipes if r.name in names]
    if work is None:
        tmp = tempfile.TemporaryDirectory(prefix="perftx-recipes-")
        root = Path(tmp.name)
    else:
        tmp, root = None, Path(work)
    try:
        return RecipeReport([run_recipe(r, root / r.name) for r in recipes])
    finally:
        if tmp is not None:
            tmp.cleanup()


# ---------------------------------------------------------------------------
# determinism helpers


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    return obj


def normalized_bytes(path) -> bytes:
    """File contents with timing fields removed (CSV columns, JSON keys)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.dumps(_strip(json.loads(text)), sort_keys=True).encode()
    if path.suffix == ".csv":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            return b""
        keep = [i for i, h in enumerate(rows[0]) if h not in TIMING_COLUMNS]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for r in rows:
            w.writerow([r[i] for i in keep])
        return buf.getvalue().encode()
    return path.read_bytes()


# ---------------------------------------------------------------------------
# checks (each returns None on success or a failure message)


def _json(work, name):
    with open(work / name, encoding="utf-8") as fh:
        return json.load(fh)


def _report(work, name):
    from .harness import read_report_csv

    return read_report_csv(work / name)


@check("demo_transfer_helps")
def _demo(work, c):
    s = _json(work, c["summary"])
    if not s["ape_transfer"] < s["ape_no_transfer"]:
        return f"transfer APE {s['ape_transfer']:.3g} not below no-transfer {s['ape_no_transfer']:.3g}"
    return None


@check("cells_ratio")
def _cells_ratio(work, c):
    """Median APE of ``cell`` over ``reference`` compared against ``max``/``min``."""
    rep = _report(work, c["report"])
    a = rep.cell(*c["cell"]).median_ape
    b = _report(work, c.get("reference_report", c["report"])).cell(*c["reference"]).median_ape
    ratio = a / b
    if "max" in c and not ratio <= c["max"]:
        return f"ratio {ratio:.3g} > {c['max']}"
    if "min" in c and not ratio >= c["min"]:
        return f"ratio {ratio:.3g} < {c['min']}"
    return None


def _by_nt(rep):
    out: dict[int, list] = {}
    for cell in rep.cells:
        if not cell.skipped:
            out.setdefault(cell.n_t, []).append(cell)
    return {k: sorted(v, key=lambda c: c.n_s) for k, v in out.items()}


def _median_var(rep, cell):
    return float(np.median([r.mean_pred_var for r in rep.reps(cell.n_s, cell.n_t)]))


@check("transfer_beats_baseline")
def _beats(work, c):
    """Every cell with source data has a lower median APE than n_s = 0."""
    rep = _report(work, c["report"])
    bad = []
    for nt, cells in _by_nt(rep).items():
        base = [x for x in cells if x.n_s == 0]
        if not base:
            continue
        bad += [(x.n_s, nt) for x in cells if x.n_s > 0 and x.median_ape >= base[0].median_ape]
    return f"no improvement at {bad}" if bad else None


@check("sweep_monotone")
def _monotone(work, c):
    """Median APE and median mean predictive variance non-increasing in n_s."""
    rep = _report(work, c["report"])
    bad = []
    for nt, cells in _by_nt(rep).items():
        for a, b in zip(cells, cells[1:]):
            if b.median_ape > a.median_ape:
                bad.append(f"APE ({a.n_s}->{b.n_s}, {nt})")
            if c.get("variance", True) and _median_var(rep, b) > _median_var(rep, a):
                bad.append(f"variance ({a.n_s}->{b.n_s}, {nt})")
    return "increase at " + ", ".join(bad) if bad else None


@check("relatedness_trend")
def _relatedness(work, c):
    """Median APE at one cell rises as the source noise level rises."""
    apes = [_report(work, r).cell(*c["cell"]).median_ape for r in c["reports"]]
    rises = sum(b >= a for a, b in zip(apes, apes[1:]))
    if rises < c.get("min_rises", len(apes) - 1):
        return f"APE rose in only {rises} of {len(apes) - 1} steps: {np.round(apes, 3).tolist()}"
    return None


@check("pareto_front_valid")
def _pareto(work, c):
    """The exported front is exactly the non-dominated set of the allocations."""
    with open(work / c["allocations"], encoding="utf-8") as fh:
        allocs = [r for r in csv.DictReader(fh) if r["feasible"] == "true" and r["mean_ape"]]
    with open(work / c["pareto"], encoding="utf-8") as fh:
        front = [(float(r["total_cost"]), float(r["mean_ape"])) for r in csv.DictReader(fh)]
    pts = [(float(r["total_cost"]), float(r["mean_ape"])) for r in allocs]
    expect = sorted({p for p in pts if not any(
        q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts)})
    if sorted(front) != expect:
        return f"front {front} differs from dominance oracle {expect}"
    return None


@check("warm_start_helps")
def _warm(work, c):
    """Paired traces: warm-start cumulative regret no larger in enough pairs."""
    wins = 0
    for cold, warm in c["pairs"]:
        rc = sum(float(r["regret"]) for r in csv.DictReader(open(work / cold, encoding="utf-8")))
        rw = sum(float(r["regret"]) for r in csv.DictReader(open(work / warm, encoding="utf-8")))
        wins += rw <= rc
    if wins < c["min_wins"]:
        return f"warm start no worse in {wins} of {len(c['pairs'])} pairs (need {c['min_wins']})"
    return None


@check("model_roundtrip")
def _roundtrip(work, c):
    """CLI predictions equal in-process predictions from the saved model."""
    from .cli import load_model
    from .config_space import encode_many
    from .harness import predict_any

    model, space = load_model(work / c["model"])
    at = _json(work, c["at"])
    items = at if isinstance(at, list) else [at]
    mean, var = predict_any(model, encode_many(space, [space.from_mapping(i) for i in items]))
    got = _json(work, c["predictions"])
    got = got if isinstance(got, list) else [got]
    for g, m, v in zip(got, mean, var):
        if abs(g["mean"] - m) > 1e-10 or abs(g["variance"] - v) > 1e-10:
            return f"prediction {g} differs from ({m}, {v})"
    return None


def _oracle_failures(which, instances, seed) -> list[str]:
    from . import gp, oracles, transfer
    from ._engine import FitOptions
    from .cost import CostParams, feasible_allocations, pareto_front

    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(instances):
        n, d = int(rng.integers(2, 21)), int(rng.integers(1, 5))
        X, y = rng.uniform(0, 1, (n, d)), rng.normal(0, 1, n)
        p = gp.KernelParams(tuple(rng.uniform(0.2, 2, d)), float(rng.uniform(0.5, 2)),
                            float(rng.uniform(1e-3, 0.1)), float(rng.normal()))
        if "gp_predict" in which:
            Xq = rng.uniform(0, 1, (5, d))
            m, v = gp.predict_many(gp.condition(X, y, p), Xq)
            mo, vo = oracles.dense_gp_posterior(X, y, Xq, p.lengthscales, p.signal_variance,
                                                p.noise_variance, p.mean_constant)
            if max(np.abs(m - mo).max(), np.abs(v - vo).max()) > 1e-8:
                out.append("posterior differs from the dense-inverse oracle")
        if "gradient" in which:
            v0 = np.concatenate([np.log(p.lengthscales), [math.log(p.signal_variance),
                                 math.log(p.noise_variance), p.mean_constant]])

            def f(v):
                q = gp.KernelParams(tuple(np.exp(v[:d])), float(np.exp(v[d])),
                                    float(np.exp(v[d + 1])), float(v[d + 2]))
                return gp.log_marginal_likelihood(q, X, y)[0]

            g = gp.log_marginal_likelihood(p, X, y)[1]
            fd = oracles.central_difference(f, v0)
            if np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6)) > 1e-4:
                out.append("gradient differs from central differences")
        if "reduction" in which:
            opts = FitOptions(restarts=2, seed=seed)
            a = gp.predict_many(gp.fit(X, y, opts=opts), X)[0]
            b = transfer.predict_target_many(transfer.fit_transfer(None, None, X, y, opts=opts), X)[0]
            if np.abs(a - b).max() > 1e-6:
                out.append("transfer model without source differs from the single-task model")
        if "interpolation" in which:
            q = gp.KernelParams(p.lengthscales, p.signal_variance, 0.0, 0.0)
            m = gp.fit(X, y, q, FitOptions(restarts=2, seed=seed, fixed=frozenset({"noise_variance"})))
            mu, var = gp.predict_many(m, X)
            if np.abs(mu - y).max() > 1e-6 or var.max() > 1e-6:
                out.append("noiseless model does not interpolate its training data")
        if "pareto" in which:
            pts = [(float(c), float(e)) for c, e in rng.integers(0, 8, (int(rng.integers(1, 30)), 2))]
            if pareto_front(pts) != oracles.dominance_front(pts):
                out.append("pareto_front differs from the dominance oracle")
    if "allocations" in which:
        cp = CostParams(c_s=1, c_t=3, budget=18)
        got = [(a.n_s, a.n_t, a.total_cost) for a in feasible_allocations(cp, range(19), range(7))]
        if got != oracles.brute_force_allocations(1, 3, 18, range(19), range(7)):
            out.append("feasible_allocations differs from brute-force enumeration")
    return sorted(set(out))


@check("library_oracles")
def _library_oracles(work, c):
    """Library results against the independent oracles on random instances."""
    which = set(c.get("which", ("gp_predict", "gradient", "interpolation", "reduction", "pareto",
                                "allocations")))
    fails = _oracle_failures(which, int(c.get("instances", 10)), int(c.get("seed", 0)))
    return "; ".join(fails) if fails else None


@check("correlation_trend")
def _correlation_trend(work, c):
    """Median generator correlation over seeds strictly falls with the noise level."""
    from .synthetic import ScenarioSpec, correlation, make_scenario

    meds = []
    for level in c["levels"]:
        vals = [
            correlation(make_scenario(ScenarioSpec(c.get("family", "surface2d"), level,
                                                   c.get("miscalibration", 0.0), False, s)))
            for s in range(c.get("seeds", 20))
        ]
        meds.append(float(np.median(vals)))
    if not all(b < a for a, b in zip(meds, meds[1:])):
        return f"correlation not strictly decreasing: {np.round(meds, 4).tolist()}"
    return None


@check("timing_bounds")
def _timing(work, c):
    """Training, prediction and demo fit times under the given limits (seconds)."""
    import time

    from . import gp, transfer
    from ._engine import FitOptions
    from .harness import predict_any
    from .synthetic import ScenarioSpec, make_scenario

    pair = make_scenario(ScenarioSpec("surface2d", 0.1, 0.3, False, 0))
    rng = np.random.Generator(np.random.PCG64(0))
    idx = rng.permutation(len(pair.target_table))
    n_t = c.get("n_target", 60)
    n_s = c.get("n_total", 600) - n_t
    X = pair.inputs
    opts = FitOptions()
    t0 = time.perf_counter()
    model = transfer.fit_transfer(X[idx[:n_s]], pair.source_table[idx[:n_s]],
                                  X[idx[-n_t:]], pair.target_table[idx[-n_t:]], opts=opts)
    train = time.perf_counter() - t0
    t0 = time.perf_counter()
    for i in range(c.get("predictions", 100)):
        predict_any(model, X[i:i + 1])
    per_pred = (time.perf_counter() - t0) / c.get("predictions", 100)
    demo = make_scenario(ScenarioSpec("demo1d", 0.1, 0.3, False, 1))
    t0 = time.perf_counter()
    transfer.fit_transfer(demo.inputs[:9], demo.source_table[:9], demo.inputs[-3:],
                          demo.target_table[-3:])
    gp.fit(demo.inputs[-3:], demo.target_table[-3:])
    demo_fit = time.perf_counter() - t0
    msgs = []
    if train >= c["train_max"]:
        msgs.append(f"training took {train:.3g} s")
    if per_pred >= c["predict_max"]:
        msgs.append(f"one prediction took {per_pred:.3g} s")
    if demo_fit >= c["demo_max"]:
        msgs.append(f"demo fits took {demo_fit:.3g} s")
    return "; ".join(msgs) if msgs else None
