"""``perftx`` command-line interface.

Exit codes: 0 on success, 1 on a domain error (bad data, infeasible or
malformed spec), 2 on a usage error. Errors go to standard error prefixed
with ``error:``; logs also go to standard error, data goes to files or
standard output.

Seeds resolve in this order: the ``--seed`` flag, the spec file's seed
field, the ``PERFTX_SEED`` environment variable, then 0.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("perftx")

SEED_ENV = "PERFTX_SEED"


class UsageError(Exception):
    pass


def resolve_seed(flag, spec_value=None) -> int:
    if flag is not None:
        return int(flag)
    if spec_value is not None:
        return int(spec_value)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_columns(cols: dict, path):
    names = list(cols)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(cols[n] for n in names)):
            w.writerow([repr(float(v)) for v in row])


def _fit_options(args, seed=0, base=None):
    from ._engine import FitOptions

    base = base or FitOptions()
    kw = {"seed": seed}
    if getattr(args, "restarts", None) is not None:
        kw["restarts"] = args.restarts
    return dataclasses.replace(base, **kw)


# ---------------------------------------------------------------------------
# synth


def _scenario(args, **over):
    from .synthetic import ScenarioSpec

    kw = dict(
        family=args.family,
        noise_level=args.noise,
        miscalibration=args.miscalibration,
        misleading=getattr(args, "misleading", False),
        seed=resolve_seed(args.scenario_seed if hasattr(args, "scenario_seed") else args.seed),
    )
    kw.update(over)
    return ScenarioSpec(**kw)


def cmd_synth_export(args) -> int:
    from .datasets import merge, schema_to_json, table_from_arrays, write_csv
    from .synthetic import make_scenario

    from .config_space import sample_indices

    pair = make_scenario(_scenario(args))
    if args.sample is None:
        idx = np.arange(pair.space.cardinality)
    else:
        idx = np.sort(sample_indices(pair.space, args.sample, resolve_seed(args.seed)))
    table = merge(
        [
            table_from_arrays(pair.space, idx, pair.source_table[idx], "source"),
            table_from_arrays(pair.space, idx, pair.target_table[idx], "target"),
        ],
        name=pair.spec.family,
    )
    write_csv(table, args.out)
    if args.schema_out:
        _write_json(schema_to_json(pair.space), args.schema_out)
    log.info("wrote %d rows to %s", len(table), args.out)
    return 0


def cmd_synth_demo(args) -> int:
    from .harness import demo_predictions
    from .synthetic import ScenarioSpec, make_scenario

    seed = resolve_seed(args.seed)
    related = make_scenario(
        ScenarioSpec("demo1d", args.noise, args.miscalibration, False, args.scenario_seed)
    )
    misleading = make_scenario(ScenarioSpec("demo1d", misleading=True))
    cols, summary = demo_predictions(
        related, misleading, args.n_s, args.n_t, seed, _fit_options(args, seed), args.clamp_rho
    )
    _write_columns(cols, args.out)
    if args.summary:
        _write_json(summary, args.summary)
    else:
        print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# learn / predict


def _load_training(args):
    from .datasets import infer_space, load_csv, load_schema, split_by_environment

    paths = [p for p in (args.data, args.target, args.source) if p]
    space = load_schema(args.schema)[0] if args.schema else infer_space(paths)
    if args.data:
        if args.target or args.source:
            raise UsageError("use either --data or --target/--source")
        table = load_csv(args.data, space)
        if args.source_label in table.environment:
            src, tgt = split_by_environment(table, args.source_label, args.target_label)
        else:
            src, tgt = None, split_by_environment(table, args.target_label, args.target_label)[1]
        return space, src, tgt
    if not args.target:
        raise UsageError("learn needs --target (or --data)")
    tgt = load_csv(args.target, space)
    src = load_csv(args.source, space) if args.source else None
    return space, src, tgt


def cmd_learn(args) -> int:
    from . import gp, transfer

    seed = resolve_seed(args.seed)
    opts = _fit_options(args, seed)
    space, src, tgt = _load_training(args)
    if src is None:
        model = gp.fit(tgt.X, tgt.performance, opts=opts)
    else:
        model = transfer.fit_transfer(src.X, src.performance, tgt.X, tgt.performance, opts=opts)
    doc = model.to_json()
    doc["space"] = space.to_json()
    _write_json(doc, args.model)
    rep = model.fit_report
    log.info("fitted %s model, log marginal likelihood %.6g", doc["kind"], rep.log_marginal_likelihood)
    return 0


def load_model(path):
    """Model and configuration space from a ``learn`` output document."""
    from . import gp, transfer
    from .config_space import ConfigurationSpace
    from .errors import DataError

    doc = _read_json(path)
    kind = doc.get("kind")
    if kind == "gp":
        model = gp.GPModel.from_json(doc)
    elif kind == "transfer":
        model = transfer.TransferGPModel.from_json(doc)
    else:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    space = ConfigurationSpace.from_json(doc["space"]) if "space" in doc else None
    return model, space


def cmd_predict(args) -> int:
    from .config_space import encode_many
    from .errors import DataError
    from .harness import predict_any

    model, space = load_model(args.model)
    at = _read_json(args.at)
    # a flat list of values is one configuration; a list of objects or lists is many
    many = isinstance(at, list) and all(isinstance(a, (dict, list)) for a in at)
    items = at if many else [at]
    if space is None:
        raise DataError(f"{args.model}: model document carries no configuration space")
    configs = []
    for item in items:
        if isinstance(item, dict):
            configs.append(space.from_mapping(item))
        else:
            configs.append(space.validate(item))
    mean, var = predict_any(model, encode_many(space, configs))
    out = [{"mean": float(m), "variance": float(v)} for m, v in zip(mean, var)]
    doc = out if many else out[0]
    if args.out:
        _write_json(doc, args.out)
    else:
        print(json.dumps(doc))
    return 0


# ---------------------------------------------------------------------------
# sweep / pareto


def cmd_sweep(args) -> int:
    from .harness import run_sweep, spec_from_json, write_report_csv, write_report_json

    raw = _read_json(args.spec)
    raw["master_seed"] = resolve_seed(args.seed, raw.get("master_seed"))
    if args.repetitions is not None:
        raw["repetitions"] = args.repetitions
    if args.restarts is not None:
        raw.setdefault("fit", {})["restarts"] = args.restarts
    spec = spec_from_json(raw, base_dir=Path(args.spec).parent)
    report = run_sweep(spec, jobs=args.jobs)
    write_report_csv(report, args.out, spec.cost)
    if args.json:
        write_report_json(report, args.json)
    log.info("swept %d cells x %d repetitions", len(report.cells), spec.repetitions)
    return 0


def _cost_params(args):
    from .cost import CostParams

    d = _read_json(args.cost) if args.cost else {}
    for flag, key in (("c_s", "c_s"), ("c_t", "c_t"), ("budget", "budget"),
                      ("training_form", "training_form"), ("training_coef", "training_coef")):
        v = getattr(args, flag)
        if v is not None:
            d[key] = v
    return CostParams.from_json(d)


def cmd_pareto(args) -> int:
    from .cost import (
        allocations,
        indifference_levels,
        pareto_allocations,
        write_allocations_csv,
        write_pareto_csv,
    )
    from .harness import read_report_csv

    cp = _cost_params(args)
    report = read_report_csv(args.report)
    cells = {(c.n_s, c.n_t): c for c in report.cells if not c.skipped}
    allocs = allocations(cp, sorted({k[0] for k in cells}), sorted({k[1] for k in cells}))
    allocs = [a for a in allocs if (a.n_s, a.n_t) in cells]
    for a in allocs:
        c = cells[(a.n_s, a.n_t)]
        a.achieved_error, a.error_std = c.mean_ape, c.std_ape
    write_allocations_csv(allocs, args.allocations)
    front = pareto_allocations([a for a in allocs if a.feasible])
    write_pareto_csv(front, args.pareto)
    if args.levels:
        levels = indifference_levels(report.cells, args.levels, args.tol, cp)
        print(json.dumps({repr(k): v for k, v in levels.items()}))
    log.info("%d allocations, %d on the Pareto front", len(allocs), len(front))
    return 0


# ---------------------------------------------------------------------------
# adapt


ADAPT_FIELDS = {"scenario", "policy", "kappa", "steps", "n_target", "n_source", "seed",
                "measurement_noise", "cost", "restarts"}


def cmd_adapt(args) -> int:
    from .adapt import Policy, initial_model, run_episode
    from .cost import CostParams
    from .errors import DataError
    from .synthetic import ScenarioSpec, make_scenario

    spec = _read_json(args.spec) if args.spec else {}
    unknown = set(spec) - ADAPT_FIELDS
    if unknown:
        raise DataError(f"unknown adapt spec field(s): {', '.join(sorted(unknown))}")

    def pick(flag, key, default):
        v = getattr(args, flag)
        return v if v is not None else spec.get(key, default)

    scenario = ScenarioSpec.from_json(spec.get("scenario", {"family": "surface2d"}))
    over = {k: getattr(args, a) for k, a in (("family", "family"), ("noise_level", "noise"),
            ("miscalibration", "miscalibration"), ("seed", "scenario_seed"))
            if getattr(args, a) is not None}
    scenario = dataclasses.replace(scenario, **over)
    seed = resolve_seed(args.seed, spec.get("seed"))
    policy = Policy(pick("policy", "policy", "lcb"), float(pick("kappa", "kappa", 1.0)))
    cost = CostParams.from_json(spec.get("cost", {}))
    if args.c_t is not None:
        cost = dataclasses.replace(cost, c_t=args.c_t)
    from ._engine import FitOptions

    restarts = int(pick("restarts", "restarts", 1))
    env = make_scenario(scenario)
    init = initial_model(env, int(pick("n_target", "n_target", 3)),
                         int(pick("n_source", "n_source", 0)), seed,
                         FitOptions(restarts=max(restarts, 2), seed=seed))
    trace = run_episode(env, policy, init, int(pick("steps", "steps", 20)), cost, seed,
                        float(pick("measurement_noise", "measurement_noise", 0.0)),
                        FitOptions(restarts=restarts, seed=seed))
    trace.write_csv(args.out)
    log.info("cumulative regret %.6g over %d steps", trace.cumulative_regret, len(trace))
    return 0


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    from .recipes import verify_recipes

    report = verify_recipes(args.recipes, args.work, names=args.only or None)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# parser


def _add_scenario_flags(p, family_default="surface2d"):
    p.add_argument("--family", default=family_default, choices=("demo1d", "surface2d"))
    p.add_argument("--noise", type=float, default=0.0,
                   help="perturbation amplitude as a fraction of the target std")
    p.add_argument("--miscalibration", type=float, default=0.0)
    p.add_argument("--misleading", action="store_true", help="constant source")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perftx", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"perftx {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    synth = sub.add_parser("synth", help="synthetic source/target scenarios")
    ssub = synth.add_subparsers(dest="synth_command", metavar="ACTION")
    ssub.required = True
    ex = ssub.add_parser("export", help="write a scenario's full grid as a measurement CSV")
    _add_scenario_flags(ex)
    ex.add_argument("--seed", type=int, default=None, help="perturbation seed")
    ex.add_argument("--sample", type=int, default=None,
                    help="export a seeded subset of this many configurations")
    ex.add_argument("--out", required=True)
    ex.add_argument("--schema-out", default=None)
    ex.set_defaults(func=cmd_synth_export)
    demo = ssub.add_parser("demo", help="1-D demo: no transfer, transfer, clamped negative transfer")
    demo.add_argument("--noise", type=float, default=0.1)
    demo.add_argument("--miscalibration", type=float, default=0.3)
    demo.add_argument("--scenario-seed", type=int, default=1)
    demo.add_argument("--n-s", type=int, default=9)
    demo.add_argument("--n-t", type=int, default=3)
    demo.add_argument("--clamp-rho", type=float, default=0.9)
    demo.add_argument("--restarts", type=int, default=None)
    demo.add_argument("--seed", type=int, default=None, help="design seed")
    demo.add_argument("--out", required=True)
    demo.add_argument("--summary", default=None)
    demo.set_defaults(func=cmd_synth_demo)

    learn = sub.add_parser("learn", help="fit a model on measurement CSVs")
    learn.add_argument("--target", default=None)
    learn.add_argument("--source", default=None)
    learn.add_argument("--data", default=None, help="one CSV with an environment column")
    learn.add_argument("--source-label", default="source")
    learn.add_argument("--target-label", default="target")
    learn.add_argument("--schema", default=None, help="space JSON (inferred when omitted)")
    learn.add_argument("--model", required=True)
    learn.add_argument("--restarts", type=int, default=None)
    learn.add_argument("--seed", type=int, default=None)
    learn.set_defaults(func=cmd_learn)

    pred = sub.add_parser("predict", help="predict with a saved model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--at", required=True, help="JSON configuration: an object, a list of values, or a list of either")
    pred.add_argument("--out", default=None, help="write JSON here instead of stdout")
    pred.set_defaults(func=cmd_predict)

    sw = sub.add_parser("sweep", help="run an evaluation sweep from a spec file")
    sw.add_argument("--spec", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--json", default=None)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--repetitions", type=int, default=None)
    sw.add_argument("--restarts", type=int, default=None)
    sw.add_argument("--seed", type=int, default=None)
    sw.set_defaults(func=cmd_sweep)

    pa = sub.add_parser("pareto", help="cost-aware allocations and Pareto front")
    pa.add_argument("--report", required=True)
    pa.add_argument("--cost", default=None, help="cost JSON")
    pa.add_argument("--c-s", dest="c_s", type=float, default=None)
    pa.add_argument("--c-t", dest="c_t", type=float, default=None)
    pa.add_argument("--budget", type=float, default=None)
    pa.add_argument("--training-form", choices=("zero", "linear", "cubic"), default=None)
    pa.add_argument("--training-coef", type=float, default=None)
    pa.add_argument("--allocations", required=True)
    pa.add_argument("--pareto", required=True)
    pa.add_argument("--levels", type=float, nargs="*", default=None)
    pa.add_argument("--tol", type=float, default=0.1)
    pa.set_defaults(func=cmd_pareto)

    ad = sub.add_parser("adapt", help="simulate a self-optimisation loop")
    ad.add_argument("--spec", default=None)
    ad.add_argument("--family", choices=("demo1d", "surface2d"), default=None)
    ad.add_argument("--noise", type=float, default=None)
    ad.add_argument("--miscalibration", type=float, default=None)
    ad.add_argument("--scenario-seed", type=int, default=None)
    ad.add_argument("--policy", choices=("greedy-mean", "lcb"), default=None)
    ad.add_argument("--kappa", type=float, default=None)
    ad.add_argument("--steps", type=int, default=None)
    ad.add_argument("--n-target", type=int, default=None)
    ad.add_argument("--n-source", type=int, default=None)
    ad.add_argument("--measurement-noise", type=float, default=None)
    ad.add_argument("--restarts", type=int, default=None)
    ad.add_argument("--c-t", dest="c_t", type=float, default=None)
    ad.add_argument("--seed", type=int, default=None)
    ad.add_argument("--out", required=True)
    ad.set_defaults(func=cmd_adapt)

    ve = sub.add_parser("verify", help="run reproduction recipes")
    ve.add_argument("--recipes", default="recipes")
    ve.add_argument("--work", default=None, help="output directory (temporary when omitted)")
    ve.add_argument("--only", nargs="*", default=None)
    ve.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    from .errors import PerftxError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PerftxError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        if isinstance(exc, KeyError):
            msg = f"missing field {msg!r}"
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
