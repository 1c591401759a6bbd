"""Parallel chaos search with per-variable window contraction, plus a GA baseline.

Every decision variable carries ``n_traj`` independent logistic-map
trajectories ``a <- 4 a (1 - a)``.  Each round advances all trajectories,
maps them into the current search window of each variable and evaluates the
resulting candidates.  Every ``rounds_per_shrink`` rounds each window
contracts by ``shrink`` around the incumbent best.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

EXCLUDED = (0.0, 0.25, 0.5, 0.75, 1.0)


def logistic_step(alpha):
    return 4.0 * alpha * (1.0 - alpha)


def logistic_orbit(alpha0: float, n: int) -> np.ndarray:
    """The first ``n`` iterates after ``alpha0``."""
    out = np.empty(n)
    a = alpha0
    for s in range(n):
        a = 4.0 * a * (1.0 - a)
        out[s] = a
    return out


def scale_to_interval(alpha, lo, hi):
    return lo + alpha * (hi - lo)


def _degenerate(a, atol=1e-12):
    bad = (a <= 0.0) | (a >= 1.0)
    for v in EXCLUDED[1:-1]:
        bad |= np.abs(a - v) < atol
    return bad


def _draw_seeds(rng, shape):
    a = rng.random(shape)
    bad = _degenerate(a)
    while bad.any():
        a[bad] = rng.random(int(bad.sum()))
        bad = _degenerate(a)
    return a


@dataclass(frozen=True)
class SearchSpace:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or not (lo < hi).all():
            raise ValueError("need lo < hi for every variable")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, gamma: int) -> "SearchSpace":
        return cls(np.zeros(gamma), np.ones(gamma))

    @property
    def gamma(self) -> int:
        return len(self.lo)


def evaluate(objective, X: np.ndarray) -> np.ndarray:
    """Evaluate rows of ``X``; uses ``objective.batch`` when the objective has one."""
    if len(X) == 0:
        return np.empty(0)
    batch = getattr(objective, "batch", None)
    if batch is not None:
        J = np.asarray(batch(X), dtype=float)
    else:
        J = np.array([objective(x) for x in X], dtype=float)
    return np.where(np.isnan(J), np.inf, J)


@dataclass
class OptResult:
    best_params: np.ndarray
    best_j: float
    evals: int
    reached: bool = False  # best_j <= j_stop
    history: list = field(default_factory=list)  # (round, best_j, evals)
    iterations: int = 0
    grad_norm: float = float("nan")  # final gradient norm, gradient methods only

    @property
    def evals_to_target(self) -> float:
        """Evaluation count at which the target was hit, ``inf`` when it never was."""
        return float(self.evals) if self.reached else float("inf")


class _Tracker:
    """Best-so-far bookkeeping with sequential-order tie breaking."""

    def __init__(self, j_stop, max_evals):
        self.j_stop = j_stop
        self.max_evals = max_evals
        self.evals = 0
        self.best_j = np.inf
        self.best_x = None
        self.reached = False

    @property
    def room(self):
        return self.max_evals - self.evals

    def offer(self, X, J):
        """Record a batch; returns True when the target is hit inside it."""
        hit = np.flatnonzero(J <= self.j_stop)
        if hit.size:
            # count evaluations only up to the first candidate that hits
            upto = hit[0] + 1
            X, J = X[:upto], J[:upto]
        self.evals += len(J)
        if len(J):
            i = int(np.argmin(J))  # first minimum wins
            if J[i] < self.best_j or self.best_x is None:
                self.best_j = float(J[i])
                self.best_x = np.array(X[i], dtype=float)
        if hit.size:
            self.reached = True
        return bool(hit.size)


@dataclass(frozen=True)
class ChaosConfig:
    n_traj: int = 41
    max_evals: int = 100_000
    j_stop: float = 1e-3
    shrink: float = 0.9
    rounds_per_shrink: int = 50

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not self.j_stop > 0:
            raise ValueError("j_stop must be positive")
        if self.rounds_per_shrink < 1:
            raise ValueError("rounds_per_shrink must be >= 1")


def contract(lo, hi, center, factor):
    """Shrink each window ``[lo, hi]`` by ``factor`` around ``center``, staying inside it."""
    w = (hi - lo) * factor
    new_lo = np.clip(center - w / 2, lo, hi - w)
    new_hi = np.minimum(new_lo + w, hi)
    return new_lo, new_hi


def chaos_optimize(objective, space: SearchSpace, cfg: ChaosConfig = ChaosConfig(), seed: int = 0,
                   x0=None) -> OptResult:
    """Minimize ``objective`` over ``space`` with parallel logistic trajectories.

    ``x0`` optionally seeds the incumbent (it is evaluated first).
    """
    rng = np.random.default_rng(seed)
    gamma = space.gamma
    alphas = _draw_seeds(rng, (gamma, cfg.n_traj))
    lo, hi = space.lo.copy(), space.hi.copy()
    track = _Tracker(cfg.j_stop, cfg.max_evals)
    history = []
    if x0 is not None and track.room > 0:
        x0 = np.asarray(x0, dtype=float)[None, :]
        track.offer(x0, evaluate(objective, x0))
    rnd = 0
    while not track.reached and track.room > 0:
        rnd += 1
        alphas = logistic_step(alphas)
        bad = _degenerate(alphas)
        if bad.any():
            alphas[bad] = _draw_seeds(rng, int(bad.sum()))
        X = scale_to_interval(alphas.T, lo, hi)[: track.room]
        track.offer(X, evaluate(objective, X))
        history.append((rnd, track.best_j, track.evals))
        if rnd % cfg.rounds_per_shrink == 0 and track.best_x is not None:
            lo, hi = contract(lo, hi, track.best_x, cfg.shrink)
    logger.debug("chaos search: %d rounds, %d evals, best %.6g", rnd, track.evals, track.best_j)
    return OptResult(track.best_x, track.best_j, track.evals, track.reached, history, rnd)


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 40
    tournament: int = 3
    crossover_rate: float = 0.9
    blend: float = 0.5
    mutation_rate: float | None = None  # per gene; None means 1/gamma
    mutation_scale: float = 0.1  # fraction of each variable's range
    elitism: int = 1
    max_evals: int = 100_000
    j_stop: float = 1e-3


def _tournament(rng, J, k, n):
    picks = rng.integers(0, len(J), size=(n, k))
    return picks[np.arange(n), np.argmin(J[picks], axis=1)]


def ga_optimize(objective, space: SearchSpace, cfg: GaConfig = GaConfig(), seed: int = 0) -> OptResult:
    """Generational GA: tournament selection, BLX-alpha crossover, gaussian mutation, elitism."""
    rng = np.random.default_rng(seed)
    gamma = space.gamma
    span = space.hi - space.lo
    p_mut = 1.0 / gamma if cfg.mutation_rate is None else cfg.mutation_rate
    track = _Tracker(cfg.j_stop, cfg.max_evals)
    pop = space.lo + rng.random((cfg.pop_size, gamma)) * span
    pop = pop[: track.room]
    J = evaluate(objective, pop)
    track.offer(pop, J)
    pop, J = pop[: len(J)], J
    history = [(0, track.best_j, track.evals)]
    gen = 0
    n_elite = min(cfg.elitism, cfg.pop_size)
    n_child = max(cfg.pop_size - n_elite, 1)
    while not track.reached and track.room > 0 and len(pop):
        gen += 1
        ia = _tournament(rng, J, cfg.tournament, n_child)
        ib = _tournament(rng, J, cfg.tournament, n_child)
        pa, pb = pop[ia], pop[ib]
        lo_p, hi_p = np.minimum(pa, pb), np.maximum(pa, pb)
        d = hi_p - lo_p
        u = rng.random((n_child, gamma))
        blended = lo_p - cfg.blend * d + u * (1 + 2 * cfg.blend) * d
        cross = rng.random(n_child) < cfg.crossover_rate
        kids = np.where(cross[:, None], blended, pa)
        mut = rng.random((n_child, gamma)) < p_mut
        kids = kids + mut * rng.normal(0.0, 1.0, (n_child, gamma)) * cfg.mutation_scale * span
        kids = np.clip(kids, space.lo, space.hi)[: track.room]
        Jk = evaluate(objective, kids)
        track.offer(kids, Jk)
        order = np.argsort(J, kind="stable")[:n_elite]
        pool = np.vstack([pop[order], kids])
        Jpool = np.concatenate([J[order], Jk])
        keep = np.argsort(Jpool, kind="stable")[: cfg.pop_size] if n_elite + len(kids) > cfg.pop_size \
            else np.arange(len(Jpool))
        pop, J = pool[keep], Jpool[keep]
        history.append((gen, track.best_j, track.evals))
    return OptResult(track.best_x, track.best_j, track.evals, track.reached, history, gen)
