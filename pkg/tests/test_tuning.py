import numpy as np
import pytest

from tscloud.cg import CgConfig
from tscloud.chaos import ChaosConfig, SearchSpace
from tscloud.plant import DEMO_PLANT, UNSTABLE_PLANT, ReferenceSignal, j1, run_closed_loop
from tscloud.tuning import (
    HybridConfig,
    OnlineConfig,
    TuningProblem,
    hybrid_optimize,
    tune_online,
    zero_controller,
)


@pytest.fixture(scope="module")
def problem():
    return TuningProblem(DEMO_PLANT.with_noise(0.1), (3, 3, 5), u_bound=2.0, steps=30, seed=3)


def test_batch_matches_single_runs(problem):
    X = np.random.default_rng(0).random((6, problem.gamma))
    J = problem.batch(X)
    for x, jb in zip(X, J):
        assert j1(problem.simulate(x)) == pytest.approx(jb, rel=1e-12)
        assert problem(x) == jb


def test_pair_first_component_is_j1(problem):
    X = np.random.default_rng(1).random((4, problem.gamma))
    jt, jd = problem.pair(X)
    np.testing.assert_array_equal(jt, problem.batch(X))
    k = np.arange(1, 31)
    for x, d in zip(X, jd):
        e = problem.simulate(x).e
        assert d == pytest.approx(np.sum(k * k * 0.5 * e * e), rel=1e-12)


def test_landscape_deterministic(problem):
    x = np.random.default_rng(2).random(problem.gamma)
    assert problem(x) == problem(x)


def test_zero_controller_outputs_zero():
    ctl = zero_controller(3.0)
    assert ctl(0.7, -0.9) == 0.0
    assert ctl.u_limits == (-3.0, 3.0)


def test_diverging_rows_are_infinite():
    prob = TuningProblem(UNSTABLE_PLANT, (3, 3, 5), u_bound=0.01, steps=200)
    assert prob(np.full(prob.gamma, 0.5)) == np.inf


class TestHybrid:
    def test_sphere(self):
        cfg = HybridConfig(j_stop=1e-6, max_evals=20_000)
        res = hybrid_optimize(lambda x: float(np.sum((x - 0.3) ** 2)), SearchSpace.unit(4), cfg, seed=0)
        assert res.reached and res.best_j <= 1e-6
        assert res.evals == res.chaos_evals + res.cg_evals

    def test_cg_phase_runs_and_budget_respected(self, problem):
        cfg = HybridConfig(chaos=ChaosConfig(max_evals=300, rounds_per_shrink=5),
                           cg=CgConfig(max_iter=20, tol=1e-10, max_evals=400), j_stop=1e-9, max_evals=1500)
        res = hybrid_optimize(problem, problem.space, cfg, seed=1)
        assert res.evals <= 1500
        assert res.cg_evals > 0
        assert {p[0] for p in res.phases} == {"chaos", "cg"}
        best = [h[1] for h in res.history]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert problem(res.best_params) == pytest.approx(res.best_j)

    def test_deterministic(self, problem):
        cfg = HybridConfig(chaos=ChaosConfig(max_evals=200), cg=CgConfig(max_iter=5, max_evals=200),
                           j_stop=1e-9, max_evals=800)
        a = hybrid_optimize(problem, problem.space, cfg, seed=4)
        b = hybrid_optimize(problem, problem.space, cfg, seed=4)
        np.testing.assert_array_equal(a.best_params, b.best_params)
        assert (a.evals, a.best_j) == (b.evals, b.best_j)


class TestOnline:
    def test_improves_on_static_controller(self, problem):
        x0 = np.random.default_rng(5).random(problem.gamma)
        res = tune_online(problem, x0, OnlineConfig(window=10))
        static = j1(problem.simulate(x0))
        assert j1(res.trace) < static
        assert len(res.trace) == problem.steps
        assert [row[0] for row in res.log] == [0, 10, 20]
        assert all(after <= before for _, before, after, _ in res.log)

    def test_single_window_matches_static_when_no_tuning(self, problem):
        x0 = np.random.default_rng(6).random(problem.gamma)
        cfg = OnlineConfig(window=problem.steps, cg=CgConfig(max_iter=0))
        res = tune_online(problem, x0, cfg)
        ref = problem.simulate(x0)
        np.testing.assert_allclose(res.trace.y, ref.y, rtol=1e-12, atol=1e-12)

    def test_window_boundary_state_carried(self, problem):
        # splitting into windows without tuning must reproduce the one-shot run
        x0 = np.random.default_rng(7).random(problem.gamma)
        res = tune_online(problem, x0, OnlineConfig(window=7, cg=CgConfig(max_iter=0)))
        ref = problem.simulate(x0)
        np.testing.assert_allclose(res.trace.y, ref.y, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(res.trace.u, ref.u, rtol=1e-12, atol=1e-12)

    def test_deterministic(self, problem):
        x0 = np.random.default_rng(8).random(problem.gamma)
        a = tune_online(problem, x0)
        b = tune_online(problem, x0)
        assert a.trace.to_csv() == b.trace.to_csv()
        assert a.log == b.log

    def test_bad_window(self):
        with pytest.raises(ValueError):
            OnlineConfig(window=0)


def test_static_reference_run_consistency():
    prob = TuningProblem(DEMO_PLANT, (2, 2, 3), steps=15)
    x = np.random.default_rng(0).random(prob.gamma)
    tr = run_closed_loop(DEMO_PLANT, prob.controller(x), ReferenceSignal(), 15)
    np.testing.assert_array_equal(tr.y, prob.simulate(x).y)
