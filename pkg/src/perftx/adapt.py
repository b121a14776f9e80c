"""Simulated self-optimisation loop whose knowledge is a (transfer) GP.

Each step monitors the current configuration against a synthetic ground
truth, updates the model with the new measurement, plans the next
configuration and executes it. Performance is minimised: the planner picks
the lowest predicted mean (``greedy-mean``) or the lowest optimistic bound
``mean - kappa * std`` (``lcb``).

Regret is measured against the noiseless ground truth,
``target(config) - min(target)``, so it is never negative even when the
monitored measurement carries noise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import gp, transfer
from ._engine import FitOptions
from .config_space import sample_indices
from .cost import CostParams
from .errors import PerftxError
from .harness import predict_any
from .synthetic import ResponsePair

POLICIES = ("greedy-mean", "lcb")
REFIT_LIMIT = 200
ENUMERATION_LIMIT = 10_000
CANDIDATE_SUBSET = 1000
TRACE_COLUMNS = ("step", "config_id", "measured", "pred_mean", "pred_std", "cum_cost", "regret")


class AdaptError(PerftxError):
    pass


@dataclass(frozen=True)
class Policy:
    kind: str = "lcb"
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise AdaptError(f"unknown policy {self.kind!r} (choose from {', '.join(POLICIES)})")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise AdaptError("kappa must be finite and >= 0")

    def score(self, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
        if self.kind == "greedy-mean" or self.kappa == 0:
            return mean
        return mean - self.kappa * np.sqrt(var)


@dataclass(frozen=True)
class LoopState:
    """Knowledge and bookkeeping between two loop iterations."""

    model: gp.GPModel | transfer.TransferGPModel
    environment: ResponsePair
    candidates: np.ndarray
    target_ids: tuple = ()
    target_values: tuple = ()
    step_index: int = 0
    current: int | None = None
    cumulative_cost: float = 0.0

    @property
    def n_target(self) -> int:
        m = self.model
        return m.n_target if isinstance(m, transfer.TransferGPModel) else m.n_train


@dataclass(frozen=True)
class TraceRow:
    step: int
    config_id: int
    measured: float
    pred_mean: float
    pred_std: float
    cum_cost: float
    regret: float


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def cumulative_regret(self) -> float:
        return float(sum(r.regret for r in self.rows))

    def steps_to_within(self, fraction: float, true_min: float) -> int | None:
        """First step whose configuration is within ``fraction`` of the optimum."""
        for r in self.rows:
            if r.regret <= fraction * abs(true_min):
                return r.step
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow(
                    [r.step, r.config_id]
                    + [repr(float(getattr(r, c))) for c in TRACE_COLUMNS[2:]]
                )


def candidate_set(env: ResponsePair, seed: int) -> np.ndarray:
    card = env.space.cardinality
    if card <= ENUMERATION_LIMIT:
        return np.arange(card)
    return np.sort(sample_indices(env.space, CANDIDATE_SUBSET, seed))


def plan(model, env: ResponsePair, candidates: np.ndarray, policy: Policy) -> int:
    """Flat index of the candidate with the lowest policy score (first on ties)."""
    if len(candidates) == 0:
        raise AdaptError("empty candidate set")
    mean, var = predict_any(model, env.space.encode_indices(candidates))
    return int(candidates[int(np.argmin(policy.score(mean, var)))])


def _update(model, X_new: np.ndarray, y_new: float, opts: FitOptions):
    """Add one target observation; refit while small, else condition only."""
    if isinstance(model, transfer.TransferGPModel):
        ns = model.n_source
        Xs, ys = model.train_inputs[:ns], model.train_targets[:ns]
        Xt = np.vstack([model.train_inputs[ns:], X_new])
        yt = np.append(model.train_targets[ns:], y_new)
        if len(Xt) + ns <= REFIT_LIMIT:
            return transfer.fit_transfer(Xs, ys, Xt, yt, model.params, opts)
        return transfer.condition_transfer(Xs, ys, Xt, yt, model.params, standardize=True)
    X = np.vstack([model.train_inputs, X_new])
    y = np.append(model.train_targets, y_new)
    if len(X) <= REFIT_LIMIT:
        return gp.fit(X, y, model.params, opts)
    return gp.condition(X, y, model.params, standardize=True)


def step(
    state: LoopState,
    policy: Policy,
    cost: CostParams,
    noise_sd: float = 0.0,
    rng: np.random.Generator | None = None,
    opts: FitOptions | None = None,
) -> tuple[LoopState, TraceRow]:
    """Monitor, update, plan and execute once.

    Returns the new state and the trace row for the configuration that was
    monitored in this step.
    """
    env = state.environment
    opts = opts or FitOptions(restarts=1)
    current = state.current
    if current is None:
        current = plan(state.model, env, state.candidates, policy)
    x = env.space.encode_indices(np.array([current]))
    m, v = predict_any(state.model, x)
    measured = float(env.target_table[current])
    if noise_sd > 0:
        if rng is None:
            raise AdaptError("a noisy environment needs a random generator")
        measured += float(rng.normal(0.0, noise_sd))
    model = _update(state.model, x, measured, opts)
    nxt = plan(model, env, state.candidates, policy)
    k = state.step_index + 1
    new = replace(
        state,
        model=model,
        target_ids=state.target_ids + (current,),
        target_values=state.target_values + (measured,),
        step_index=k,
        current=nxt,
        cumulative_cost=k * cost.c_t,
    )
    row = TraceRow(
        step=k,
        config_id=current,
        measured=measured,
        pred_mean=float(m[0]),
        pred_std=float(math.sqrt(max(float(v[0]), 0.0))),
        cum_cost=new.cumulative_cost,
        regret=float(env.target_table[current] - env.true_min()),
    )
    return new, row


def initial_model(
    env: ResponsePair,
    n_target: int,
    n_source: int = 0,
    seed: int = 0,
    opts: FitOptions | None = None,
):
    """Fit a starting model on seeded target (and optional source) samples.

    For a fixed seed the target sample does not depend on ``n_source``, so a
    cold start and a warm start with the same seed share their target data.
    """
    if n_target < 1:
        raise AdaptError("the initial model needs at least one target sample")
    ss = np.random.SeedSequence(seed)
    t_seed, s_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    opts = opts or FitOptions(restarts=2)
    ti = sample_indices(env.space, n_target, t_seed)
    Xt, yt = env.space.encode_indices(ti), env.target_table[ti]
    if n_source == 0:
        return gp.fit(Xt, yt, opts=opts)
    si = sample_indices(env.space, n_source, s_seed)
    Xs, ys = env.space.encode_indices(si), env.source_table[si]
    return transfer.fit_transfer(Xs, ys, Xt, yt, opts=opts)


def run_episode(
    environment: ResponsePair,
    policy: Policy,
    initial: gp.GPModel | transfer.TransferGPModel,
    max_steps: int,
    cost_params: CostParams | None = None,
    seed: int = 0,
    measurement_noise: float = 0.0,
    opts: FitOptions | None = None,
) -> Trace:
    """Run ``max_steps`` loop iterations from ``initial``.

    ``measurement_noise`` is the monitoring noise standard deviation as a
    fraction of the target's standard deviation over the space.
    """
    if max_steps < 1:
        raise AdaptError("max_steps must be >= 1")
    if measurement_noise < 0:
        raise AdaptError("measurement_noise must be >= 0")
    cost_params = cost_params or CostParams()
    rng = np.random.Generator(np.random.PCG64(seed))
    noise_sd = measurement_noise * float(environment.target_table.std())
    state = LoopState(
        model=initial,
        environment=environment,
        candidates=candidate_set(environment, seed),
    )
    trace = Trace()
    for _ in range(max_steps):
        state, row = step(state, policy, cost_params, noise_sd, rng, opts)
        trace.rows.append(row)
    return trace
