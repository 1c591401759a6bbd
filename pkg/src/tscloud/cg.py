"""Polak-Ribiere conjugate gradient with finite-difference gradients.

The closed-loop cost has no usable analytic derivative with respect to the
controller parameters, so gradients are central differences of the
objective.  Step lengths come from a bracketing line search refined by
golden-section and parabolic steps; accepted iterates never increase the
objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tscloud.chaos import OptResult, evaluate
from tscloud.errors import GradientProbeFailed, ZeroGradient

GOLDEN = (1 + 5 ** 0.5) / 2
INV_GOLD = 1 / GOLDEN


class CountingObjective:
    """Wraps an objective and counts scalar evaluations (batched calls count per row)."""

    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return float(self.fn(x))

    def batch(self, X):
        X = np.atleast_2d(X)
        self.count += len(X)
        return evaluate(self.fn, X)


class _Clipped:
    def __init__(self, fn, lo, hi):
        self.fn, self.lo, self.hi = fn, lo, hi

    def __call__(self, x):
        return self.fn(np.clip(x, self.lo, self.hi))

    def batch(self, X):
        return evaluate(self.fn, np.clip(X, self.lo, self.hi))


def fd_step(p, rel: float = 1e-6) -> float:
    return rel * (1.0 + float(np.linalg.norm(p)))


def gradient(objective, p, h: float | None = None) -> np.ndarray:
    """Central-difference gradient; all ``2n`` probes are evaluated as one batch."""
    p = np.asarray(p, dtype=float)
    h = fd_step(p) if h is None else h
    if not h > 0:
        raise ValueError("h must be positive")
    n = len(p)
    step = np.eye(n) * h
    probes = np.vstack([p + step, p - step])
    J = evaluate(objective, probes)
    bad = np.flatnonzero(~np.isfinite(J))
    if bad.size:
        i = int(bad[0])
        raise GradientProbeFailed(i % n, J[i])
    return (J[:n] - J[n:]) / (2 * h)


def pr_beta(grad_k, grad_km1) -> float:
    """Polak-Ribiere coefficient ``g_k . (g_k - g_{k-1}) / |g_{k-1}|^2``, clamped at 0."""
    gk = np.asarray(grad_k, dtype=float)
    gm = np.asarray(grad_km1, dtype=float)
    den = float(gm @ gm)
    if den == 0:
        raise ZeroGradient("previous gradient is zero")
    beta = (float(gk @ gk) - float(gk @ gm)) / den
    return max(beta, 0.0)


def _parabola_vertex(a, fa, b, fb, c, fc):
    num = (b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)
    den = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    if den == 0 or not np.isfinite(den):
        return None
    return b - 0.5 * num / den


def line_search(objective, p, direction, f0: float | None = None, step0: float = 0.1,
                rtol: float = 1e-4, max_expand: int = 60, min_step: float = 1e-14):
    """Approximate ``argmin_{eta >= 0} J(p + eta d)``.

    Returns ``(eta, J(p + eta d))``; ``eta = 0`` (with ``f0``) when no decrease
    was found.  The first trial step has length ``step0`` in parameter space.
    """
    p = np.asarray(p, dtype=float)
    d = np.asarray(direction, dtype=float)
    dn = float(np.linalg.norm(d))
    if dn == 0:
        raise ValueError("direction must be nonzero")
    phi = lambda t: float(objective(p + t * d))  # noqa: E731
    f0 = phi(0.0) if f0 is None else f0
    best = [0.0, f0]

    def probe(t):
        f = phi(t)
        if f < best[1]:
            best[0], best[1] = t, f
        return f

    # bracket: a < b < c with f(b) < f(a), f(b) <= f(c)
    a, fa = 0.0, f0
    b = step0 / dn
    fb = probe(b)
    while not fb < fa:
        b *= INV_GOLD ** 2
        if b * dn < min_step:
            return 0.0, f0
        fb = probe(b)
    c = b * (1 + GOLDEN)
    fc = probe(c)
    n = 0
    while fc < fb and n < max_expand:
        a, fa, b, fb = b, fb, c, fc
        c = b + GOLDEN * (b - a)
        fc = probe(c)
        n += 1
    if not fc >= fb:  # unbounded within the expansion budget
        return best[0], best[1]

    # exact on quadratics: parabola through the bracket
    t = _parabola_vertex(a, fa, b, fb, c, fc)
    if t is not None and a < t < c and t != b:
        ft = probe(t)
        if ft < fb:
            if t < b:
                c, fc = b, fb
            else:
                a, fa = b, fb
            b, fb = t, ft
        elif t < b:
            a, fa = t, ft
        else:
            c, fc = t, ft

    # golden-section on [a, c] around b
    while (c - a) > rtol * max(abs(b), min_step):
        if (c - b) > (b - a):
            x = b + (c - b) * (1 - INV_GOLD)
            fx = probe(x)
            if fx < fb:
                a, fa, b, fb = b, fb, x, fx
            else:
                c, fc = x, fx
        else:
            x = b - (b - a) * (1 - INV_GOLD)
            fx = probe(x)
            if fx < fb:
                c, fc, b, fb = b, fb, x, fx
            else:
                a, fa = x, fx
    t = _parabola_vertex(a, fa, b, fb, c, fc)
    if t is not None and a < t < c:
        probe(t)
    return best[0], best[1]


@dataclass(frozen=True)
class CgConfig:
    tol: float = 1e-8  # gradient-norm stop
    max_iter: int = 500
    max_evals: int = 1_000_000
    j_stop: float = -np.inf
    h_rel: float = 1e-6
    step0: float = 0.1
    ls_rtol: float = 1e-4
    clip: tuple[float, float] | None = None  # box applied to every iterate


def cg_optimize(objective, p0, cfg: CgConfig = CgConfig()) -> OptResult:
    """Nonlinear CG (PR+) from ``p0``.

    Stops on gradient norm ``<= tol``, objective ``<= j_stop``, stalled line
    search along steepest descent, or the iteration/evaluation budget.
    ``result.iterations`` counts accepted line-search steps.
    """
    f = CountingObjective(objective if cfg.clip is None else _Clipped(objective, *cfg.clip))
    p = np.asarray(p0, dtype=float).copy()
    J = f(p)
    history = [(0, J, f.count)]
    done = lambda: J <= cfg.j_stop  # noqa: E731

    def grad(x):
        return gradient(f, x, fd_step(x, cfg.h_rel))

    it = 0
    if done() or f.count + 2 * len(p) > cfg.max_evals:
        return _result(p, J, f, cfg, history, it)
    g = grad(p)
    d = -g
    while it < cfg.max_iter and np.linalg.norm(g) > cfg.tol:
        if f.count >= cfg.max_evals:
            break
        eta, J_new = line_search(f, p, d, J, cfg.step0, cfg.ls_rtol)
        if eta == 0:
            if np.array_equal(d, -g):
                break  # no descent even along -grad: stalled
            d = -g
            continue
        it += 1
        p = p + eta * d
        if cfg.clip is not None:
            p = np.clip(p, *cfg.clip)
        J = J_new
        history.append((it, J, f.count))
        if done() or f.count + 2 * len(p) > cfg.max_evals:
            break
        g_new = grad(p)
        if np.linalg.norm(g_new) <= cfg.tol:
            g = g_new
            break
        beta = pr_beta(g_new, g)
        d = -g_new + beta * d
        if d @ g_new >= 0:
            d = -g_new
        g = g_new
    return _result(p, J, f, cfg, history, it, g)


def _result(p, J, f, cfg, history, it, g=None):
    gn = float(np.linalg.norm(g)) if g is not None else float("nan")
    return OptResult(p, float(J), f.count, bool(J <= cfg.j_stop), history, it, gn)
