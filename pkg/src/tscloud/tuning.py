"""Controller tuning problems and the chaos + conjugate-gradient hybrid."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from tscloud.cg import CgConfig, cg_optimize
from tscloud.chaos import ChaosConfig, OptResult, SearchSpace, chaos_optimize, evaluate
from tscloud.controller import (
    CloudController,
    bank_from_alphas,
    build_controller,
    decode,
    param_count,
)
from tscloud.errors import DivergedRun, GradientProbeFailed, ZeroGradient
from tscloud.plant import (
    OVERFLOW,
    ArxPlant,
    ReferenceSignal,
    SimTrace,
    input_gains,
    j2,
    noise_sequence,
    run_closed_loop,
    simulate_bank,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TuningProblem:
    """J1 of a seeded closed-loop run as a function of the flat parameter vector.

    The noise record is drawn once from ``seed`` so the landscape is
    deterministic.  Instances are callable and expose ``batch`` for whole
    populations.  ``pair`` returns J1 together with the smooth squared-error
    index ``sum k^2 e^2 / 2 dt`` that gradient phases descend on.
    """

    plant: ArxPlant
    structure: tuple[int, int, int] = (3, 3, 5)
    u_bound: float = 1.0
    ref: ReferenceSignal = ReferenceSignal()
    steps: int = 30
    dt: float = 1.0
    seed: int = 0
    gains: tuple[float, float] | None = None
    overflow: float = OVERFLOW

    @property
    def gamma(self) -> int:
        return param_count(*self.structure)

    @property
    def space(self) -> SearchSpace:
        return SearchSpace.unit(self.gamma)

    @property
    def u_limits(self) -> tuple[float, float]:
        return (-self.u_bound, self.u_bound)

    def _setup(self):
        r = self.ref.values(self.steps)
        gains = input_gains(r) if self.gains is None else self.gains
        return r, gains, noise_sequence(self.plant.noise_std, self.steps, self.seed)

    def _run(self, X):
        X = np.clip(np.atleast_2d(np.asarray(X, dtype=float)), 0.0, 1.0)
        r, gains, noise = self._setup()
        bank = bank_from_alphas(X, self.structure, self.u_bound, self.u_limits)
        return simulate_bank(self.plant, bank, r, noise, gains, self.overflow)

    def batch(self, X) -> np.ndarray:
        return self._run(X).j1(self.dt)

    def pair(self, X) -> tuple[np.ndarray, np.ndarray]:
        """``(J1, J2)`` per row; J2 is the time-weighted squared error."""
        run = self._run(X)
        k = np.arange(1, self.steps + 1, dtype=float)
        sq = np.sum(k * k * j2(np.nan_to_num(run.e)), axis=1) * self.dt
        sq[run.diverged] = np.inf
        return run.j1(self.dt), sq

    def __call__(self, x) -> float:
        return float(self.batch(np.asarray(x)[None, :])[0])

    def controller(self, x) -> CloudController:
        params = decode(np.clip(x, 0.0, 1.0), self.structure, self.u_bound)
        return build_controller(params, self.u_limits)

    def simulate(self, x) -> SimTrace:
        return run_closed_loop(self.plant, self.controller(x), self.ref, self.steps, self.dt,
                               self.seed, self.gains, self.overflow)


def zero_controller(u_bound: float = 1.0) -> CloudController:
    """One rule covering [-1, 1] with a zero singleton: output is always 0."""
    from tscloud.cloud import TriangularCloud

    c = TriangularCloud(0.0, 1.5, 0.0)
    return CloudController((c,), (c,), np.zeros(1), np.zeros((1, 1), dtype=int), 0.0,
                           (-u_bound, u_bound))


@dataclass(frozen=True)
class HybridConfig:
    """Restarted two-phase search.

    Each round runs a fresh chaos search on J1 until ``chaos.j_stop`` (the
    switch level) or ``chaos.max_evals``, then CG from the chaos best.  CG
    descends on the objective's smooth index when it has one (``pair``) and
    stops as soon as any evaluated J1 reaches ``j_stop``.  Rounds repeat
    while the total budget ``max_evals`` lasts.
    """

    chaos: ChaosConfig = ChaosConfig(max_evals=1500, j_stop=1e-3, rounds_per_shrink=5)
    cg: CgConfig = CgConfig(max_iter=200, tol=1e-10, max_evals=5000)
    j_stop: float = 1e-3
    max_evals: int = 100_000


@dataclass
class HybridResult(OptResult):
    chaos_evals: int = 0
    cg_evals: int = 0
    phases: list = field(default_factory=list)  # (phase, evals, best_j)


class _TargetHit(Exception):
    pass


class _Exhausted(Exception):
    pass


class _DescentView:
    """What the CG phase sees: the descent index, with J1 tracked alongside.

    Every simulated row is counted.  Reaching ``j_stop`` on J1 (or running out
    of budget) aborts the phase through an exception so no evaluation is lost.
    """

    def __init__(self, objective, j_stop: float, budget: int):
        self.objective = objective
        self.pair = getattr(objective, "pair", None)
        self.j_stop = j_stop
        self.budget = budget
        self.evals = 0
        self.best_j = np.inf
        self.best_x = None

    def batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(X) > self.budget - self.evals:
            raise _Exhausted
        if self.pair is not None:
            jt, jd = (np.asarray(v, dtype=float) for v in self.pair(X))
        else:
            jt = jd = evaluate(self.objective, X)
        jt = np.where(np.isnan(jt), np.inf, jt)
        hit = np.flatnonzero(jt <= self.j_stop)
        upto = int(hit[0]) + 1 if hit.size else len(X)
        self.evals += upto
        i = int(np.argmin(jt[:upto]))
        if jt[i] < self.best_j:
            self.best_j, self.best_x = float(jt[i]), X[i].copy()
        if hit.size:
            raise _TargetHit
        return np.where(np.isnan(jd), np.inf, jd)

    def __call__(self, x):
        return float(self.batch(np.asarray(x, dtype=float)[None, :])[0])


def hybrid_optimize(objective, space: SearchSpace, cfg: HybridConfig = HybridConfig(),
                    seed: int = 0) -> HybridResult:
    """Chaos search for a basin, CG to refine it; restarted until ``j_stop`` or budget.

    ``evals`` counts every objective evaluation up to the first one reaching
    ``j_stop``; ``chaos_evals``/``cg_evals`` split it by phase.
    """
    best_x, best_j = None, np.inf
    chaos_evals = cg_evals = 0
    phases, history = [], []
    rnd = 0

    def used():
        return chaos_evals + cg_evals

    while used() < cfg.max_evals and best_j > cfg.j_stop:
        ccfg = ChaosConfig(
            n_traj=cfg.chaos.n_traj, max_evals=min(cfg.chaos.max_evals, cfg.max_evals - used()),
            j_stop=max(cfg.chaos.j_stop, cfg.j_stop), shrink=cfg.chaos.shrink,
            rounds_per_shrink=cfg.chaos.rounds_per_shrink)
        res = chaos_optimize(objective, space, ccfg, seed=seed + 7919 * rnd)
        chaos_evals += res.evals
        if res.best_j < best_j:
            best_x, best_j = res.best_params, res.best_j
        phases.append(("chaos", res.evals, best_j))
        history.append((rnd, best_j, used()))
        if best_j <= cfg.j_stop or used() >= cfg.max_evals:
            break
        view = _DescentView(objective, cfg.j_stop,
                            min(cfg.cg.max_evals, cfg.max_evals - used()))
        gcfg = replace(cfg.cg, max_evals=view.budget, j_stop=-np.inf, clip=(space.lo, space.hi))
        try:
            cg_optimize(view, res.best_params, gcfg)
        except (_TargetHit, _Exhausted, GradientProbeFailed, ZeroGradient):
            pass
        cg_evals += view.evals
        if view.best_j < best_j:
            best_x, best_j = np.clip(view.best_x, space.lo, space.hi), view.best_j
        phases.append(("cg", view.evals, best_j))
        history.append((rnd, best_j, used()))
        logger.debug("hybrid round %d: chaos %d, cg %d, best %.6g", rnd, res.evals, view.evals,
                     best_j)
        rnd += 1
    return HybridResult(best_x, best_j, used(), best_j <= cfg.j_stop, history, rnd,
                        chaos_evals=chaos_evals, cg_evals=cg_evals, phases=phases)


@dataclass(frozen=True)
class OnlineConfig:
    """Sliding-window tuning: before each window of ``window`` steps, CG
    minimizes the predicted J2 of that window from the current plant state."""

    window: int = 10
    cg: CgConfig = CgConfig(max_iter=5, tol=1e-10, max_evals=2000)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class OnlineResult:
    trace: SimTrace
    params: np.ndarray  # final parameter vector
    log: list = field(default_factory=list)  # (window start, predicted J2 before, after, evals)

    @property
    def evals(self) -> int:
        return sum(row[3] for row in self.log)


def _recent(values, n):
    """Most-recent-first history of length ``n``, zero padded."""
    out = np.zeros(n)
    tail = values[::-1][:n]
    out[: len(tail)] = tail
    return out


def tune_online(problem: TuningProblem, x0, cfg: OnlineConfig = OnlineConfig()) -> OnlineResult:
    """Run the seeded closed loop while re-tuning the controller window by window.

    The prediction model is the noise-free plant; the applied run uses the
    problem's noise record, so the result is reproducible.  Raises
    :class:`DivergedRun` with the rows so far if the real loop blows up.
    """
    plant = problem.plant
    r_all, gains, noise = problem._setup()
    na, nb = len(plant.a), len(plant.b)
    x = np.clip(np.asarray(x0, dtype=float), 0.0, 1.0)
    ys, us, es = [], [], []
    e_prev = 0.0
    log = []
    for start in range(0, problem.steps, cfg.window):
        r = r_all[start:start + cfg.window]
        y0, u0 = _recent(np.asarray(ys), na), _recent(np.asarray(us), nb)

        def rollout(X, noise_seg, y0=y0, u0=u0, e0=e_prev, r=r):
            X = np.clip(np.atleast_2d(X), 0.0, 1.0)
            bank = bank_from_alphas(X, problem.structure, problem.u_bound, problem.u_limits)
            n = len(X)
            return simulate_bank(plant, bank, r, noise_seg, gains, problem.overflow,
                                 np.tile(y0, (n, 1)), np.tile(u0, (n, 1)), np.full(n, e0))

        def window_j2(X):
            run = rollout(X, np.zeros(len(r)))
            cost = np.sum(j2(np.nan_to_num(run.e)), axis=1) * problem.dt
            cost[run.diverged] = np.inf
            return cost

        obj = _Batched(window_j2)
        before = obj(x)
        gcfg = replace(cfg.cg, clip=(0.0, 1.0))
        try:
            res = cg_optimize(obj, x, gcfg)
            if res.best_j < before:
                x = np.clip(res.best_params, 0.0, 1.0)
            after = min(res.best_j, before)
        except (GradientProbeFailed, ZeroGradient):
            after = before
        log.append((start, float(before), float(after), obj.count))
        run = rollout(x, noise[start:start + len(r)])
        stop = int(run.diverged_at[0])
        seg = slice(None) if stop < 0 else slice(0, stop)
        ys.extend(run.y[0, seg])
        us.extend(run.u[0, seg])
        es.extend(run.e[0, seg])
        if stop >= 0:
            n_ok = len(ys)
            partial = SimTrace(problem.dt, r_all[:n_ok], ys, us, es)
            raise DivergedRun(f"online run diverged at step {n_ok + 1}", partial)
        e_prev = float(run.e[0, -1])
    trace = SimTrace(problem.dt, r_all, ys, us, es)
    return OnlineResult(trace, x, log)


class _Batched:
    """Counting wrapper exposing a vectorized cost as both scalar and batch objective."""

    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def batch(self, X):
        X = np.atleast_2d(X)
        self.count += len(X)
        return self.fn(X)

    def __call__(self, x):
        return float(self.batch(np.asarray(x, dtype=float)[None, :])[0])
