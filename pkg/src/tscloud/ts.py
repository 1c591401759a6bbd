"""Takagi-Sugeno inference over triangular-cloud antecedents.

Rule ``l``: if x_1 is A_1 and ... x_n is A_n then
``y_l = a_0 + a_1 x_1 + ... + a_n x_n``.  Firing strengths use the expected
curves of the antecedent clouds; consequent coefficients ``a_j`` (j >= 1)
may be randomized as ``N(mean_j, sigma_j)`` where ``sigma_j`` is the spread
of cloud drops of ``A_j`` at the current input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tscloud.cloud import TriangularCloud, drops, expected_curve
from tscloud.errors import NoRuleFires


@dataclass(frozen=True)
class TsRule:
    antecedents: tuple[TriangularCloud, ...]
    coeff_means: tuple[float, ...]
    coeff_sigmas: tuple[float, ...] = field(default=None)

    def __post_init__(self):
        n = len(self.antecedents)
        if n < 1:
            raise ValueError("a rule needs at least one antecedent")
        object.__setattr__(self, "antecedents", tuple(self.antecedents))
        object.__setattr__(self, "coeff_means", tuple(float(c) for c in self.coeff_means))
        if len(self.coeff_means) != n + 1:
            raise ValueError(f"expected {n + 1} consequent coefficients, got {len(self.coeff_means)}")
        sig = self.coeff_sigmas
        sig = (0.0,) * (n + 1) if sig is None else tuple(float(s) for s in sig)
        if len(sig) != n + 1:
            raise ValueError(f"expected {n + 1} sigmas, got {len(sig)}")
        if min(sig) < 0:
            raise ValueError("sigmas must be non-negative")
        # a_0 is never randomized
        object.__setattr__(self, "coeff_sigmas", (0.0,) + sig[1:])

    @property
    def n_inputs(self) -> int:
        return len(self.antecedents)

    def consequent(self, x0, coeffs=None) -> float:
        a = np.asarray(self.coeff_means if coeffs is None else coeffs, dtype=float)
        return float(a[0] + a[1:] @ np.asarray(x0, dtype=float))


@dataclass(frozen=True)
class TsModel:
    rules: tuple[TsRule, ...]

    def __post_init__(self):
        rules = tuple(self.rules)
        if not rules:
            raise ValueError("model needs at least one rule")
        dims = {r.n_inputs for r in rules}
        if len(dims) != 1:
            raise ValueError(f"rules disagree on input dimension: {sorted(dims)}")
        object.__setattr__(self, "rules", rules)

    @property
    def input_dim(self) -> int:
        return self.rules[0].n_inputs


@dataclass(frozen=True)
class FiringVector:
    w: np.ndarray
    h: np.ndarray


def _check_dim(rule: TsRule, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (rule.n_inputs,):
        raise ValueError(f"input has shape {x0.shape}, rule expects ({rule.n_inputs},)")
    return x0


def firing_strength(rule: TsRule, x0) -> float:
    """Product of antecedent memberships on the expected curves."""
    x0 = _check_dim(rule, x0)
    w = 1.0
    for cloud, xj in zip(rule.antecedents, x0):
        w *= expected_curve(cloud, xj)
    return float(w)


def normalize(w) -> FiringVector:
    w = np.asarray(w, dtype=float)
    if (w < 0).any():
        raise ValueError("firing strengths must be non-negative")
    total = w.sum()
    if not total > 0:
        raise NoRuleFires("no rule fires for this input")
    return FiringVector(w, w / total)


def consequent_sigma(memberships) -> float:
    """Spread ``max - min`` of a set of sampled membership degrees."""
    m = np.asarray(memberships, dtype=float)
    if m.size == 0:
        raise ValueError("need at least one membership sample")
    return float(m.max() - m.min())


def sample_consequent(rule: TsRule, rng: np.random.Generator, sigmas=None) -> np.ndarray:
    """Draw consequent coefficients; ``a_0`` stays at its mean."""
    mean = np.asarray(rule.coeff_means)
    sig = np.asarray(rule.coeff_sigmas if sigmas is None else sigmas, dtype=float)
    out = mean.copy()
    # draw even for sigma 0 so the rng stream does not depend on the sigma values
    out[1:] = mean[1:] + sig[1:] * rng.standard_normal(len(mean) - 1)
    return out


def drop_sigmas(rule: TsRule, x0, rng: np.random.Generator, n_drops: int = 100) -> np.ndarray:
    """Per-coefficient sigmas from ``n_drops`` drops of each antecedent at ``x0``."""
    x0 = _check_dim(rule, x0)
    sig = np.zeros(rule.n_inputs + 1)
    for j, (cloud, xj) in enumerate(zip(rule.antecedents, x0), start=1):
        sig[j] = consequent_sigma(drops(cloud, xj, n_drops, rng))
    return sig


def infer(model: TsModel, x0, rng: np.random.Generator | None = None,
          mode: str = "deterministic", n_drops: int = 100) -> float:
    """Weighted T-S output for input ``x0``.

    ``mode="stochastic"`` samples every rule's consequent with sigmas taken
    from cloud drops at ``x0`` and needs ``rng``.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown mode {mode!r}")
    x0 = _check_dim(model.rules[0], x0)
    fv = normalize([firing_strength(r, x0) for r in model.rules])
    ys = np.empty(len(model.rules))
    for i, rule in enumerate(model.rules):
        if mode == "stochastic":
            if rng is None:
                raise ValueError("stochastic inference needs an rng")
            coeffs = sample_consequent(rule, rng, drop_sigmas(rule, x0, rng, n_drops))
            ys[i] = rule.consequent(x0, coeffs)
        else:
            ys[i] = rule.consequent(x0)
    return float(fv.h @ ys)
