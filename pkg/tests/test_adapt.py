import csv

import numpy as np
import pytest

from perftx import gp
from perftx.adapt import (
    TRACE_COLUMNS,
    AdaptError,
    LoopState,
    Policy,
    candidate_set,
    initial_model,
    plan,
    run_episode,
    step,
)
from perftx.cost import CostParams
from perftx.gp import KernelParams
from perftx.synthetic import ScenarioSpec, make_scenario

RELATED = ScenarioSpec("surface2d", 0.1, 0.3, False, 0)
SEEDS = range(20)


@pytest.fixture(scope="module")
def env():
    return make_scenario(RELATED)


def exact_model(env):
    """Interpolates the whole target table, so its mean is the truth."""
    X = env.inputs
    return gp.condition(X, env.target_table, KernelParams((0.05, 0.05), 1.0, 0.0),
                        standardize=True)


class TestPolicy:
    def test_scores(self):
        mean, var = np.array([1.0, 2.0]), np.array([0.0, 4.0])
        assert Policy("greedy-mean").score(mean, var).tolist() == [1.0, 2.0]
        assert Policy("lcb", 1.0).score(mean, var).tolist() == [1.0, 0.0]
        assert Policy("lcb", 0.0).score(mean, var).tolist() == [1.0, 2.0]

    @pytest.mark.parametrize("bad", [dict(kind="ucb"), dict(kappa=-1.0), dict(kappa=float("inf"))])
    def test_invalid(self, bad):
        with pytest.raises(AdaptError):
            Policy(**bad)


class TestPlan:
    def test_exact_model_finds_true_argmin(self, env):
        best = plan(exact_model(env), env, candidate_set(env, 0), Policy("lcb", 0.0))
        assert best == int(np.argmin(env.target_table))

    def test_replanning_without_data_is_stable(self, env):
        model = initial_model(env, 5, seed=3)
        c = candidate_set(env, 0)
        assert plan(model, env, c, Policy("lcb", 0.0)) == plan(model, env, c, Policy("lcb", 0.0))

    def test_empty_candidates(self, env):
        with pytest.raises(AdaptError):
            plan(exact_model(env), env, np.array([], dtype=int), Policy())

    def test_small_spaces_are_enumerated(self, env):
        assert np.array_equal(candidate_set(env, 0), np.arange(675))


class TestStep:
    def test_bookkeeping(self, env):
        state = LoopState(model=initial_model(env, 3, seed=1), environment=env,
                          candidates=candidate_set(env, 0))
        cost = CostParams(c_s=1, c_t=3)
        for k in range(1, 4):
            state, row = step(state, Policy(), cost)
            assert state.step_index == k == row.step
            assert state.cumulative_cost == row.cum_cost == 3 * k
            assert state.n_target == 3 + k
            assert row.regret >= 0
            assert row.measured == env.target_table[row.config_id]

    def test_noisy_step_needs_generator(self, env):
        state = LoopState(model=initial_model(env, 3), environment=env, candidates=np.arange(675))
        with pytest.raises(AdaptError):
            step(state, Policy(), CostParams(), noise_sd=1.0)

    def test_transfer_model_keeps_source_rows(self, env):
        state = LoopState(model=initial_model(env, 3, 18, seed=2), environment=env,
                          candidates=np.arange(675))
        state, _ = step(state, Policy(), CostParams())
        assert state.model.n_source == 18 and state.model.n_target == 4


class TestEpisode:
    def test_single_step(self, env):
        assert len(run_episode(env, Policy(), initial_model(env, 3), 1)) == 1

    def test_deterministic(self, env):
        a = run_episode(env, Policy(), initial_model(env, 3, seed=4), 4, seed=4, measurement_noise=0.05)
        b = run_episode(env, Policy(), initial_model(env, 3, seed=4), 4, seed=4, measurement_noise=0.05)
        assert a.rows == b.rows

    def test_regret_and_cost(self, env):
        tr = run_episode(env, Policy(), initial_model(env, 3, 18, seed=5), 6, CostParams(1, 3),
                         seed=5, measurement_noise=0.05)
        assert all(r.regret >= 0 for r in tr.rows)
        assert [r.cum_cost for r in tr.rows] == [3.0 * k for k in range(1, 7)]

    def test_invalid_arguments(self, env):
        with pytest.raises(AdaptError):
            run_episode(env, Policy(), initial_model(env, 3), 0)
        with pytest.raises(AdaptError):
            run_episode(env, Policy(), initial_model(env, 3), 2, measurement_noise=-1)
        with pytest.raises(AdaptError):
            initial_model(env, 0)

    def test_cold_and_warm_share_target_sample(self, env):
        cold, warm = initial_model(env, 3, 0, seed=9), initial_model(env, 3, 18, seed=9)
        np.testing.assert_array_equal(cold.train_inputs, warm.train_inputs[18:])

    def test_trace_csv(self, env, tmp_path):
        tr = run_episode(env, Policy(), initial_model(env, 3), 3)
        tr.write_csv(tmp_path / "trace.csv")
        rows = list(csv.reader(open(tmp_path / "trace.csv")))
        assert tuple(rows[0]) == TRACE_COLUMNS and len(rows) == 4


def test_warm_start_reaches_near_optimum_sooner():
    warm, cold, wins = [], [], 0
    for s in SEEDS:
        env = make_scenario(ScenarioSpec("surface2d", 0.1, 0.3, False, s))
        runs = {}
        for n_s in (18, 0):
            tr = run_episode(env, Policy("lcb", 1.0), initial_model(env, 3, n_s, seed=s), 20,
                             seed=s, measurement_noise=0.01)
            k = tr.steps_to_within(0.10, env.true_min())
            runs[n_s] = (21 if k is None else k, tr.cumulative_regret)
        warm.append(runs[18][0])
        cold.append(runs[0][0])
        wins += runs[18][1] <= runs[0][1]
    assert np.median(warm) <= 10
    assert np.median(cold) >= np.median(warm)
    assert wins >= 14
