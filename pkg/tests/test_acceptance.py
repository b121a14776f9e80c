"""The eleven acceptance criteria, each at its stated tolerance and time budget.

Run ``pytest tests/test_acceptance.py`` to see the per-criterion summary
printed at the end of the session.
"""
import math
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from perftx import _kernels, gp, oracles, transfer
from perftx.adapt import Policy, initial_model, run_episode
from perftx.cost import CostParams, feasible_allocations, pareto_front
from perftx.gp import FitOptions, KernelParams
from perftx.harness import (
    Problem,
    SweepSpec,
    _design,
    ape_vector,
    fit_cell,
    predict_any,
    rep_seed,
    run_sweep,
)
from perftx.recipes import load_recipes, normalized_bytes, run_recipe
from perftx.synthetic import ScenarioSpec, correlation, make_scenario

RECIPES = Path(__file__).resolve().parents[1] / "recipes"
SEEDS = range(20)


def random_kernel(rng, d, noise):
    return KernelParams(
        lengthscales=tuple(rng.uniform(0.2, 2.0, d)),
        signal_variance=float(rng.uniform(0.5, 3.0)),
        noise_variance=noise,
        mean_constant=float(rng.normal()),
    )


def each_core(monkeypatch):
    """Yield once per available kernel core with it installed."""
    names = ["numpy"] + (["cython"] if _kernels.BACKEND == "cython" else [])
    for name in names:
        core = _kernels.get_backend(name)
        for fn in ("se_cross", "se_gram", "weighted_sqdist_sums"):
            f = getattr(core, fn)
            monkeypatch.setattr(
                _kernels, fn,
                lambda *a, _f=f: _f(*(np.ascontiguousarray(x, dtype=np.float64) for x in a)),
            )
        yield name


@pytest.mark.acceptance(1, "GP posterior equals the dense explicit-inverse oracle (1e-8, 50 instances)")
def test_criterion_1_oracle_equivalence(monkeypatch):
    t0 = time.perf_counter()
    for core in each_core(monkeypatch):
        rng = np.random.Generator(np.random.PCG64(1))
        worst = 0.0
        for _ in range(50):
            n, d = int(rng.integers(1, 21)), int(rng.integers(1, 5))
            p = random_kernel(rng, d, float(rng.uniform(1e-4, 0.5)))
            X, y = rng.uniform(size=(n, d)), rng.normal(size=n)
            Xq = rng.uniform(-0.5, 1.5, size=(10, d))
            m, v = gp.predict_many(gp.condition(X, y, p), Xq)
            me, ve = oracles.dense_gp_posterior(X, y, Xq, p.lengthscales, p.signal_variance,
                                                p.noise_variance, p.mean_constant)
            worst = max(worst, np.abs(m - me).max(), np.abs(v - ve).max())
        assert worst <= 1e-8, f"{core}: max deviation {worst:.3g}"
    assert time.perf_counter() - t0 < 10


@pytest.mark.acceptance(2, "likelihood gradient matches central differences (rel 1e-4, 20 instances)")
def test_criterion_2_gradient(monkeypatch):
    t0 = time.perf_counter()
    for core in each_core(monkeypatch):
        rng = np.random.Generator(np.random.PCG64(2))
        for _ in range(20):
            n, d = int(rng.integers(2, 11)), int(rng.integers(1, 5))
            p = random_kernel(rng, d, float(rng.uniform(1e-3, 0.5)))
            X, y = rng.uniform(size=(n, d)), rng.normal(size=n)
            v0 = np.concatenate([np.log(p.lengthscales),
                                 [math.log(p.signal_variance), math.log(p.noise_variance),
                                  p.mean_constant]])

            def f(v):
                q = KernelParams(tuple(np.exp(v[:d])), math.exp(v[d]), math.exp(v[d + 1]), v[d + 2])
                return gp.log_marginal_likelihood(q, X, y)[0]

            _, grad = gp.log_marginal_likelihood(p, X, y)
            fd = oracles.central_difference(f, v0, h=1e-5)
            rel = np.max(np.abs(grad - fd)) / max(1.0, float(np.max(np.abs(fd))))
            assert rel <= 1e-4, f"{core}: relative error {rel:.3g}"
    assert time.perf_counter() - t0 < 10


@pytest.mark.acceptance(3, "noiseless fitted models interpolate (mean 1e-6, variance 1e-6)")
def test_criterion_3_interpolation():
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(10):
        n, d = int(rng.integers(1, 11)), int(rng.integers(1, 4))
        X = rng.uniform(size=(n, d))
        y = np.sin(4 * X).sum(1) + 10
        init = KernelParams((0.5,) * d, 1.0, 0.0)
        model = gp.fit(X, y, init, FitOptions(restarts=2, fixed={"noise_variance"}))
        mu, var = gp.predict_many(model, X)
        assert np.abs(mu - y).max() <= 1e-6
        assert var.max() <= 1e-6


@pytest.mark.acceptance(4, "transfer fit with no source matches the single-task model (1e-6)")
def test_criterion_4_reduction():
    rng = np.random.Generator(np.random.PCG64(4))
    for seed in range(5):
        n, d = int(rng.integers(2, 15)), int(rng.integers(1, 4))
        X, y = rng.uniform(size=(n, d)), rng.normal(size=n) * 20 + 100
        Xq = rng.uniform(size=(30, d))
        opts = FitOptions(restarts=3, seed=seed)
        init = transfer.TransferKernelParams.default(d)
        joint = transfer.fit_transfer(None, None, X, y, init, opts)
        single = gp.fit(X, y, KernelParams(init.base.lengthscales, init.base.signal_variance,
                                           init.noise_target), opts)
        for a, b in zip(transfer.predict_target_many(joint, Xq), gp.predict_many(single, Xq)):
            assert np.abs(a - b).max() <= 1e-6


def _demo_sweep(scenario, fixed_rho=None):
    spec = SweepSpec(scenario=scenario, counts=[(0, 3), (9, 3)], repetitions=20,
                     eval_fraction=1.0, fit=FitOptions(restarts=5), fixed_rho=fixed_rho)
    r = run_sweep(spec)
    return r.cell(9, 3).median_ape, r.cell(0, 3).median_ape


@pytest.mark.acceptance(5, "1-D demo: transfer helps, clamped rho hurts, learned rho contains harm")
def test_criterion_5_demo():
    t0 = time.perf_counter()
    related = ScenarioSpec("demo1d", 0.1, 0.3, False, 1)
    misleading = ScenarioSpec("demo1d", misleading=True)
    with_source, alone = _demo_sweep(related)
    learned, alone_m = _demo_sweep(misleading)
    clamped, alone_c = _demo_sweep(misleading, fixed_rho=0.9)
    assert with_source <= 0.5 * alone, (with_source, alone)
    assert clamped >= alone_c, (clamped, alone_c)
    assert learned <= 1.25 * alone_m, (learned, alone_m)
    assert time.perf_counter() - t0 < 120


@pytest.mark.acceptance(6, "675-point grid: error, variance and spread fall as source data grows")
def test_criterion_6_grid():
    t0 = time.perf_counter()
    spec = SweepSpec(scenario=ScenarioSpec("surface2d", 0.0, 0.3, False, 0), repetitions=20,
                     fit=FitOptions(restarts=1))
    report = run_sweep(spec)
    n_s_levels = [0, 169, 338, 675]
    for n_t in (7, 17, 34, 68):
        cells = [report.cell(n_s, n_t) for n_s in n_s_levels]
        med = [c.median_ape for c in cells]
        var = [c.mean_pred_var for c in cells]
        assert all(b <= a for a, b in zip(med, med[1:])), f"n_t={n_t} median APE {med}"
        assert all(b <= a for a, b in zip(var, var[1:])), f"n_t={n_t} variance {var}"
        assert cells[-1].std_ape <= cells[0].std_ape, f"n_t={n_t} spread"
    assert time.perf_counter() - t0 < 15 * 60


@pytest.mark.acceptance(7, "relatedness: correlation falls with noise and error rises with it")
def test_criterion_7_relatedness():
    t0 = time.perf_counter()
    levels = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30]
    corr, err = [], []
    opts = FitOptions(restarts=1)
    for level in levels:
        cs, apes = [], []
        for s in SEEDS:
            pair = make_scenario(ScenarioSpec("surface2d", level, 0.3, False, s))
            cs.append(correlation(pair))
            problem = Problem.from_pair(pair)
            design = _design(problem, 0.5, rep_seed(0, s))
            model = fit_cell(problem, design, 169, 7, opts)
            mu, _ = predict_any(model, problem.X_target[design.eval_idx])
            apes.append(ape_vector(mu, problem.y_target[design.eval_idx]).mean())
        corr.append(float(np.median(cs)))
        err.append(float(np.median(apes)))
    assert all(b < a for a, b in zip(corr, corr[1:])), corr
    rises = sum(b >= a for a, b in zip(err, err[1:]))
    assert rises >= 4, f"error rose on {rises} of 6 steps: {err}"
    assert time.perf_counter() - t0 < 10 * 60


@pytest.mark.acceptance(8, "timing: 600-sample training, single predictions and demo fits")
def test_criterion_8_timing():
    pair = make_scenario(ScenarioSpec("surface2d", 0.1, 0.3, False, 0))
    idx = np.random.Generator(np.random.PCG64(0)).permutation(675)
    X = pair.inputs
    s, t = idx[:540], idx[-60:]
    t0 = time.perf_counter()
    model = transfer.fit_transfer(X[s], pair.source_table[s], X[t], pair.target_table[t])
    train = time.perf_counter() - t0
    t0 = time.perf_counter()
    for i in range(100):
        transfer.predict_target(model, X[i])
    per_prediction = (time.perf_counter() - t0) / 100
    demo = make_scenario(ScenarioSpec("demo1d", 0.1, 0.3, False, 1))
    t0 = time.perf_counter()
    transfer.fit_transfer(demo.inputs[:9], demo.source_table[:9], demo.inputs[-3:],
                          demo.target_table[-3:])
    gp.fit(demo.inputs[-3:], demo.target_table[-3:])
    demo_fit = time.perf_counter() - t0
    # documented bounds with the allowed 2x slack
    assert train < 200, train
    assert per_prediction < 0.6, per_prediction
    assert demo_fit < 10, demo_fit


@pytest.mark.acceptance(9, "Pareto front and budget enumeration match brute force")
def test_criterion_9_cost():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(9))
    for _ in range(100):
        n = int(rng.integers(1, 200))
        if rng.random() < 0.5:
            pts = [tuple(map(float, p)) for p in rng.integers(0, 10, (n, 2))]
        else:
            pts = [tuple(p) for p in rng.uniform(0, 1, (n, 2))]
        assert pareto_front(pts) == oracles.dominance_front(pts)
    got = feasible_allocations(CostParams(c_s=1, c_t=3, budget=18), [0, 9, 18], [0, 3, 6])
    assert {(a.n_s, a.n_t) for a in got} == {(0, 0), (9, 0), (18, 0), (0, 3), (9, 3), (0, 6)}
    full = [(a.n_s, a.n_t, a.total_cost)
            for a in feasible_allocations(CostParams(c_s=1, c_t=3, budget=18), range(19), range(7))]
    assert full == oracles.brute_force_allocations(1, 3, 18, range(19), range(7))
    assert time.perf_counter() - t0 < 5


@pytest.mark.acceptance(10, "warm-started adaptation has no more regret than cold start (14 of 20)")
def test_criterion_10_adaptation():
    t0 = time.perf_counter()
    wins = 0
    for s in SEEDS:
        env = make_scenario(ScenarioSpec("surface2d", 0.1, 0.3, False, s))
        regret = {}
        for n_s in (0, 18):
            tr = run_episode(env, Policy("lcb", 1.0), initial_model(env, 3, n_s, seed=s), 20,
                             seed=s, measurement_noise=0.01)
            regret[n_s] = tr.cumulative_regret
        wins += regret[18] <= regret[0]
    assert wins >= 14, f"warm start won {wins} of 20"
    assert time.perf_counter() - t0 < 10 * 60


@pytest.mark.acceptance(11, "every recipe reruns byte-identically apart from timing fields")
def test_criterion_11_determinism():
    recipes = load_recipes(RECIPES)
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        for r in recipes:
            first = run_recipe(r, Path(a) / r.name)
            second = run_recipe(r, Path(b) / r.name)
            assert first.ok and second.ok, (r.name, first.failures, second.failures)
            files_a = sorted(p.relative_to(Path(a) / r.name) for p in (Path(a) / r.name).rglob("*")
                             if p.is_file())
            files_b = sorted(p.relative_to(Path(b) / r.name) for p in (Path(b) / r.name).rglob("*")
                             if p.is_file())
            assert files_a == files_b, r.name
            for rel in files_a:
                assert normalized_bytes(Path(a) / r.name / rel) == normalized_bytes(
                    Path(b) / r.name / rel), f"{r.name}/{rel} differs between runs"
