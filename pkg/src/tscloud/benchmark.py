"""Evaluations-to-target comparison of the tuning optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from tscloud.cg import CgConfig, cg_optimize
from tscloud.chaos import ChaosConfig, GaConfig, chaos_optimize, ga_optimize
from tscloud.errors import GradientProbeFailed, ZeroGradient
from tscloud.tuning import HybridConfig, hybrid_optimize

METHODS = ("chaos", "cg", "ga", "hybrid")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Shared target and budget; per-method settings are overridden with them."""

    j_stop: float = 2.0
    max_evals: int = 20_000
    n_seeds: int = 20
    methods: tuple[str, ...] = ("hybrid", "chaos", "ga", "cg")
    chaos: ChaosConfig = ChaosConfig(rounds_per_shrink=5)
    ga: GaConfig = GaConfig()
    cg: CgConfig = CgConfig(max_iter=500, tol=1e-10)
    hybrid: HybridConfig = HybridConfig()

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.max_evals < 0 or self.n_seeds < 1:
            raise ValueError("need max_evals >= 0 and n_seeds >= 1")


def run_method(objective, space, method: str, seed: int, cfg: BenchmarkConfig) -> float:
    """Evaluations used to first reach ``cfg.j_stop``; ``inf`` when the budget ran out."""
    if cfg.max_evals == 0:
        return float("inf")
    if method == "chaos":
        res = chaos_optimize(objective, space,
                             replace(cfg.chaos, j_stop=cfg.j_stop, max_evals=cfg.max_evals), seed)
    elif method == "ga":
        res = ga_optimize(objective, space,
                          replace(cfg.ga, j_stop=cfg.j_stop, max_evals=cfg.max_evals), seed)
    elif method == "hybrid":
        res = hybrid_optimize(objective, space,
                              replace(cfg.hybrid, j_stop=cfg.j_stop, max_evals=cfg.max_evals), seed)
    elif method == "cg":
        p0 = space.lo + np.random.default_rng(seed).random(space.gamma) * (space.hi - space.lo)
        gcfg = replace(cfg.cg, j_stop=cfg.j_stop, max_evals=cfg.max_evals,
                       clip=(space.lo, space.hi))
        try:
            res = cg_optimize(objective, p0, gcfg)
        except (GradientProbeFailed, ZeroGradient):
            return float("inf")
    else:
        raise ValueError(f"unknown method {method!r}")
    return res.evals_to_target


@dataclass
class CompareResult:
    j_stop: float
    counts: dict[str, list[float]] = field(default_factory=dict)

    def median(self, method: str) -> float:
        return float(np.median(self.counts[method]))

    def reached_fraction(self, method: str) -> float:
        return float(np.mean(np.isfinite(self.counts[method])))


def compare(objective, space, cfg: BenchmarkConfig = BenchmarkConfig(), seed: int = 0) -> CompareResult:
    """Run every method on seeds ``seed, seed + 1, ...``."""
    out = CompareResult(cfg.j_stop)
    for method in cfg.methods:
        out.counts[method] = [run_method(objective, space, method, seed + k, cfg)
                              for k in range(cfg.n_seeds)]
    return out
