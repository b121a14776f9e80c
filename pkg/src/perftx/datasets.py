"""Measurement tables: CSV ingestion, environment tagging and holdout splits.

CSV dialect: UTF-8, comma separated, ``.`` decimal point, mandatory header,
lines starting with ``#`` ignored. Columns are the space's parameter names
plus ``performance`` and the optional ``environment`` and ``replicates``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .config_space import ConfigurationSpace, ParameterSpec, build_space, make_rng
from .errors import ConfigSpaceError, DataError

log = logging.getLogger(__name__)

PERF_COL = "performance"
ENV_COL = "environment"
REP_COL = "replicates"
DEFAULT_ENV = "default"


@dataclass(frozen=True)
class MeasurementTable:
    """Validated configuration/performance rows over one space."""

    space: ConfigurationSpace
    configs: tuple
    performance: np.ndarray
    environment: tuple
    replicates: np.ndarray
    name: str = ""
    units: str = ""
    provenance: str = ""
    dropped: int = 0
    _X: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.configs) < 1:
            raise DataError("a measurement table needs at least one row")
        n = len(self.configs)
        if not (len(self.performance) == len(self.environment) == len(self.replicates) == n):
            raise DataError("column lengths differ")
        if not np.all(np.isfinite(self.performance)):
            raise DataError("non-finite performance value")

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def X(self) -> np.ndarray:
        """Encoded inputs, one row per measurement."""
        if self._X is None:
            idx = np.array([self.space.flat_index(c) for c in self.configs], dtype=np.int64)
            object.__setattr__(self, "_X", self.space.encode_indices(idx))
        return self._X

    @property
    def labels(self) -> list[str]:
        return sorted(set(self.environment))

    def subset(self, rows: Iterable[int], **meta) -> "MeasurementTable":
        rows = np.asarray(list(rows), dtype=np.int64)
        return replace(
            self,
            configs=tuple(self.configs[i] for i in rows),
            performance=self.performance[rows],
            environment=tuple(self.environment[i] for i in rows),
            replicates=self.replicates[rows],
            _X=None if self._X is None else self._X[rows],
            **meta,
        )


@dataclass(frozen=True)
class Split:
    """Disjoint training pool and evaluation set (row indices)."""

    train_pool: np.ndarray
    eval_set: np.ndarray
    seed: int


def schema_to_json(space: ConfigurationSpace, performance_unit: str = "") -> dict:
    d = space.to_json()
    d["performance_unit"] = performance_unit
    return d


def load_schema(path: str | Path) -> tuple[ConfigurationSpace, str]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return ConfigurationSpace.from_json(d), d.get("performance_unit", "")


def _data_lines(fh) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(fh, start=1):
        if line.lstrip().startswith("#") or not line.strip():
            continue
        yield lineno, line


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = list(_data_lines(fh))
    if not lines:
        raise DataError(f"{path}: missing header row")
    linenos = [n for n, _ in lines]
    reader = csv.reader(io.StringIO("".join(line for _, line in lines)))
    rows = list(reader)
    return rows[0], list(zip(linenos[1:], rows[1:]))


def _parse_perf(cell: str) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    v = float(cell)
    return v if math.isfinite(v) else None


def load_csv(
    path: str | Path,
    schema: ConfigurationSpace,
    name: str | None = None,
    units: str = "",
) -> MeasurementTable:
    """Parse and validate a measurement CSV against ``schema``.

    Rows with an empty or non-finite performance are dropped and counted in
    ``MeasurementTable.dropped``.
    """
    header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    allowed = set(schema.names) | {PERF_COL, ENV_COL, REP_COL}
    unknown = [h for h in header if h not in allowed]
    if unknown:
        raise DataError(f"{path}: unknown column(s): {', '.join(unknown)}")
    missing = [c for c in schema.names + [PERF_COL] if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s): {', '.join(missing)}")
    pos = {h: i for i, h in enumerate(header)}
    configs, perf, envs, reps = [], [], [], []
    dropped = 0
    for lineno, row in rows:
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            cfg = schema.validate([row[pos[n]].strip() for n in schema.names])
        except ConfigSpaceError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        try:
            p = _parse_perf(row[pos[PERF_COL]])
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed performance {row[pos[PERF_COL]]!r}") from None
        if p is None:
            dropped += 1
            continue
        env = row[pos[ENV_COL]].strip() if ENV_COL in pos else DEFAULT_ENV
        rep = 1
        if REP_COL in pos and row[pos[REP_COL]].strip():
            try:
                rep = int(row[pos[REP_COL]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed replicate count") from None
            if rep < 1:
                raise DataError(f"{path}:{lineno}: replicate count must be >= 1")
        configs.append(cfg)
        perf.append(p)
        envs.append(env or DEFAULT_ENV)
        reps.append(rep)
    if not configs:
        raise DataError(f"{path}: no valid rows ({dropped} dropped)")
    if dropped:
        log.warning("%s: dropped %d row(s) without a finite performance value", path, dropped)
    return MeasurementTable(
        space=schema,
        configs=tuple(configs),
        performance=np.asarray(perf, dtype=float),
        environment=tuple(envs),
        replicates=np.asarray(reps, dtype=np.int64),
        name=name if name is not None else Path(path).stem,
        units=units,
        provenance=str(path),
        dropped=dropped,
    )


def infer_space(paths: Iterable[str | Path]) -> ConfigurationSpace:
    """Derive a space from the distinct values found in measurement files.

    Numeric columns become ranges over their sorted distinct values; any
    other column becomes a categorical over its sorted labels.
    """
    values: dict[str, set] = {}
    order: list[str] = []
    for path in paths:
        header, rows = _read_rows(path)
        header = [h.strip() for h in header]
        for h in header:
            if h not in (PERF_COL, ENV_COL, REP_COL) and h not in values:
                values[h] = set()
                order.append(h)
        for lineno, row in rows:
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, cell in zip(header, row):
                if h in values:
                    values[h].add(cell.strip())
    if not order:
        raise DataError("no parameter columns found")
    specs = []
    for name in order:
        vals = values[name]
        try:
            nums = sorted({float(v) for v in vals})
            specs.append(ParameterSpec(name, "integer-range", grid=tuple(nums)))
        except ValueError:
            specs.append(ParameterSpec(name, "categorical", labels=tuple(sorted(vals))))
    return build_space(specs)


def _fmt_value(v) -> str:
    return repr(float(v)) if isinstance(v, (float, int, np.floating)) else str(v)


def write_csv(table: MeasurementTable, path: str | Path | io.TextIOBase) -> None:
    """Write ``table`` in the canonical dialect (floats as shortest round-trip repr)."""
    own = not hasattr(path, "write")
    fh = open(path, "w", encoding="utf-8", newline="") if own else path
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.space.names + [PERF_COL, ENV_COL, REP_COL])
        for cfg, p, env, rep in zip(
            table.configs, table.performance, table.environment, table.replicates
        ):
            w.writerow([_fmt_value(v) for v in cfg] + [repr(float(p)), env, int(rep)])
    finally:
        if own:
            fh.close()


def table_from_arrays(
    space: ConfigurationSpace,
    flat_indices: Iterable[int],
    performance: Iterable[float],
    environment: str | Iterable[str] = DEFAULT_ENV,
    name: str = "",
) -> MeasurementTable:
    idx = [int(i) for i in flat_indices]
    perf = np.asarray(list(performance), dtype=float)
    envs = (environment,) * len(idx) if isinstance(environment, str) else tuple(environment)
    return MeasurementTable(
        space=space,
        configs=tuple(space.config_at(i) for i in idx),
        performance=perf,
        environment=envs,
        replicates=np.ones(len(idx), dtype=np.int64),
        name=name,
        _X=space.encode_indices(np.asarray(idx, dtype=np.int64)),
    )


def merge(tables: Iterable[MeasurementTable], name: str = "") -> MeasurementTable:
    tables = list(tables)
    if not tables:
        raise DataError("nothing to merge")
    space = tables[0].space
    if any(t.space != space for t in tables[1:]):
        raise DataError("cannot merge tables over different spaces")
    return MeasurementTable(
        space=space,
        configs=sum((t.configs for t in tables), ()),
        performance=np.concatenate([t.performance for t in tables]),
        environment=sum((t.environment for t in tables), ()),
        replicates=np.concatenate([t.replicates for t in tables]),
        name=name,
        dropped=sum(t.dropped for t in tables),
    )


def relabel(table: MeasurementTable, label: str) -> MeasurementTable:
    return replace(table, environment=(label,) * len(table))


def split_by_environment(
    table: MeasurementTable, source_label: str, target_label: str
) -> tuple[MeasurementTable, MeasurementTable]:
    """Partition rows into source and target tables by environment label."""
    present = set(table.environment)
    for label in (source_label, target_label):
        if label not in present:
            raise DataError(f"environment label {label!r} not present (have {sorted(present)})")
    src = [i for i, e in enumerate(table.environment) if e == source_label]
    tgt = [i for i, e in enumerate(table.environment) if e == target_label]
    return table.subset(src, name=f"{table.name}:{source_label}"), table.subset(
        tgt, name=f"{table.name}:{target_label}"
    )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def holdout(table_or_size: MeasurementTable | int, eval_fraction: float, seed: int) -> Split:
    """Seeded disjoint split; ``|eval| = round_half_up(eval_fraction * n)``, at least 1."""
    n = table_or_size if isinstance(table_or_size, int) else len(table_or_size)
    if not 0 < eval_fraction < 1:
        raise DataError("eval_fraction must lie strictly between 0 and 1")
    n_eval = max(1, round_half_up(eval_fraction * n))
    if n_eval >= n:
        raise DataError(f"holdout of {n_eval} from {n} rows leaves no training pool")
    perm = make_rng(seed).permutation(n)
    return Split(
        train_pool=np.sort(perm[n_eval:]), eval_set=np.sort(perm[:n_eval]), seed=seed
    )
