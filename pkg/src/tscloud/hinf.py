"""Robust H-infinity output-feedback design for uncertain T-S cloud plants.

Each rule ``l`` is a continuous-time linear model ``(A_l, B_l, C_l)`` with
norm-bounded perturbations ``dA = D1 delta E1``, ``dB = D2 delta E2`` and
``dC = D3 delta E3`` whose size is bounded by the widest cloud band of the
rule's antecedents.  Synthesis per rule solves two Riccati equations (the
strict inequalities with an ``eps`` slack), checks the coupling condition
``[[P, I], [I, Q]] > 0`` and evaluates the compensator formulas.  The
disturbance level is normalized to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from tscloud.cloud import TriangularCloud, max_width
from tscloud.errors import NoStabilizingSolution, SingularCoupling

COND_LIMIT = 1e12
SYM_RTOL = 1e-9


def _mat(v, rows=None, cols=None):
    m = np.atleast_2d(np.asarray(v, dtype=float))
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got shape {m.shape}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class UncertainRule:
    """One plant rule; missing factor matrices mean no uncertainty in that channel."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None
    e1: np.ndarray | None = None
    e2: np.ndarray | None = None
    e3: np.ndarray | None = None
    antecedents: tuple[TriangularCloud, ...] = ()

    def __post_init__(self):
        a = _mat(self.a)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("a must be square")
        b = _mat(self.b, rows=n)
        c = _mat(self.c, cols=n)
        m, s = b.shape[1], c.shape[0]
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("a", a)
        set_("b", b)
        set_("c", c)
        # (rows of D, columns of E) per channel
        for d_name, e_name, rows, cols in (("d1", "e1", n, n), ("d2", "e2", n, m),
                                           ("d3", "e3", s, n)):
            d, e = getattr(self, d_name), getattr(self, e_name)
            if d is None and e is None:
                d, e = np.zeros((rows, 1)), np.zeros((1, cols))
            elif d is None or e is None:
                raise ValueError(f"{d_name} and {e_name} must be given together")
            d, e = _mat(d, rows=rows), _mat(e, cols=cols)
            if d.shape[1] != e.shape[0]:
                raise ValueError(f"{d_name} columns must match {e_name} rows")
            set_(d_name, d)
            set_(e_name, e)
        set_("antecedents", tuple(self.antecedents))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.a.shape[0], self.b.shape[1], self.c.shape[0]


@dataclass(frozen=True)
class UncertainTsPlant:
    rules: tuple[UncertainRule, ...]

    def __post_init__(self):
        rules = tuple(self.rules)
        if not rules:
            raise ValueError("plant needs at least one rule")
        if len({r.dims for r in rules}) != 1:
            raise ValueError("all rules must share (n, m, s)")
        object.__setattr__(self, "rules", rules)

    @property
    def n(self) -> int:
        return self.rules[0].dims[0]

    @property
    def m(self) -> int:
        return self.rules[0].dims[1]

    @property
    def s(self) -> int:
        return self.rules[0].dims[2]


@dataclass(frozen=True)
class Compensator:
    a_hat: np.ndarray
    b_c: np.ndarray
    c_c: np.ndarray


@dataclass(frozen=True)
class ClosedLoopRealization:
    a_cl: np.ndarray
    b_cl: np.ndarray
    c_cl: np.ndarray


@dataclass(frozen=True)
class SynthesisCertificate:
    p: np.ndarray
    q: np.ndarray
    n_res: np.ndarray
    coupling_ok: bool


@dataclass(frozen=True)
class AugmentationMatrices:
    c_a: np.ndarray  # E1/E3 blocks of every rule, stacked
    c_b: np.ndarray  # E2 blocks of every rule, stacked
    c_ai: np.ndarray  # d_max * [E1; E3] of this rule
    d_ai: np.ndarray  # d_max * [D1, D2(, D3 when s == n)] of this rule


def uncertainty_bound(rule: UncertainRule) -> float:
    """Largest cloud band width over the rule's antecedents (0 without antecedents)."""
    return max((max_width(c) for c in rule.antecedents), default=0.0)


def augmentation(plant: UncertainTsPlant, i: int) -> AugmentationMatrices:
    rule = plant.rules[i]
    dmax = uncertainty_bound(rule)
    c_a = np.vstack([np.vstack([r.e1, r.e3]) for r in plant.rules])
    c_b = np.vstack([r.e2 for r in plant.rules])
    d_cols = [rule.d1, rule.d2] + ([rule.d3] if rule.d3.shape[0] == plant.n else [])
    return AugmentationMatrices(c_a, c_b, dmax * np.vstack([rule.e1, rule.e3]),
                                dmax * np.hstack(d_cols))


def sample_uncertainty(d_factor, e_factor, bound: float, rng: np.random.Generator) -> np.ndarray:
    """``D delta E`` for a random symmetric ``delta`` with spectral norm at most ``bound``."""
    if not 0 <= bound < 1:
        raise ValueError("bound must lie in [0, 1)")
    d = _mat(d_factor)
    e = _mat(e_factor)
    r = d.shape[1]
    if e.shape[0] != r:
        raise ValueError("d_factor columns must match e_factor rows")
    return d @ sample_delta(r, bound, rng) @ e


def sample_delta(r: int, bound: float, rng: np.random.Generator) -> np.ndarray:
    """Random orthogonal eigenbasis with eigenvalues uniform on ``[-bound, bound]``."""
    v, _ = np.linalg.qr(rng.normal(size=(r, r)))
    lam = rng.uniform(-bound, bound, r)
    delta = (v * lam) @ v.T
    return (delta + delta.T) / 2


def build_closed_loop(rule_i: UncertainRule, comp_j: Compensator) -> ClosedLoopRealization:
    n = rule_i.a.shape[0]
    a_hat = _mat(comp_j.a_hat)
    b_c = _mat(comp_j.b_c)
    c_c = _mat(comp_j.c_c)
    if a_hat.shape != (n, n) or b_c.shape != (n, rule_i.c.shape[0]) \
            or c_c.shape != (rule_i.b.shape[1], n):
        raise ValueError("compensator dimensions do not match the plant rule")
    a_cl = np.block([[rule_i.a, rule_i.b @ c_c], [b_c @ rule_i.c, a_hat]])
    b_cl = np.vstack([np.eye(n), np.zeros((n, n))])
    c_cl = np.hstack([rule_i.c, np.zeros_like(rule_i.c)])
    return ClosedLoopRealization(a_cl, b_cl, c_cl)


def _check_symmetric(m, name="matrix"):
    m = _mat(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(m))))
    if not np.allclose(m, m.T, rtol=0, atol=SYM_RTOL * scale):
        raise ValueError(f"{name} must be symmetric")
    return (m + m.T) / 2


def brl_residual(p, cl: ClosedLoopRealization) -> np.ndarray:
    a, b, c = cl.a_cl, cl.b_cl, cl.c_cl
    return a.T @ p + p @ a + p @ b @ b.T @ p + c.T @ c


def brl_certificate_check(p, cl: ClosedLoopRealization, tol: float = 0.0) -> bool:
    """True iff ``P > tol I`` and the bounded-real matrix has max eigenvalue below ``-tol``."""
    p = _check_symmetric(p, "p")
    if np.linalg.eigvalsh(p).min() <= tol:
        return False
    m = brl_residual(p, cl)
    return bool(np.linalg.eigvalsh((m + m.T) / 2).max() < -tol)


def sum_square_inequality_check(k, mats, tol: float = 1e-9) -> bool:
    """``sum k_i M_i M_i^T - sum_ij k_i k_j M_i M_j^T`` is PSD (up to ``tol``)."""
    k = np.asarray(k, dtype=float)
    if len(k) != len(mats) or len(k) == 0:
        raise ValueError("need one weight per matrix")
    if (k < 0).any() or abs(k.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    ms = [_mat(m) for m in mats]
    lhs = sum(ki * m @ m.T for ki, m in zip(k, ms))
    mbar = sum(ki * m for ki, m in zip(k, ms))
    diff = lhs - mbar @ mbar.T
    return bool(np.linalg.eigvalsh((diff + diff.T) / 2).min() >= -tol)


def default_eps(a) -> float:
    norm = float(np.linalg.norm(_mat(a), 2))
    return 1e-6 * norm if norm > 0 else 1e-6


def _riccati_residual(a, r, s, x):
    f = a @ x + x @ a.T + x @ r @ x + s
    return (f + f.T) / 2


def _hamiltonian_branch(a, r, s, stable: bool):
    """Solution of ``A X + X A^T + X R X + S = 0`` from an ordered Schur form.

    ``stable`` selects the invariant subspace of the left-half-plane
    eigenvalues (``A^T + R X`` Hurwitz); otherwise the right-half-plane one.
    """
    n = a.shape[0]
    h = np.block([[a.T, r], [-s, -a]])
    t, z, sdim = sla.schur(h, output="real", sort="lhp" if stable else "rhp")
    if sdim != n:
        return None
    u1, u2 = z[:n, :n], z[n:, :n]
    if np.linalg.cond(u1) > COND_LIMIT:
        return None
    x = np.linalg.solve(u1.T, u2.T).T
    return (x + x.T) / 2


def _newton_refine(a, r, s, x, steps: int = 8):
    """Newton (Kleinman) corrections; keeps the iterate with the smallest residual."""
    best = x
    best_res = np.linalg.norm(_riccati_residual(a, r, s, x))
    for _ in range(steps):
        if best_res == 0:
            break
        acl = a + x @ r
        try:
            dx = sla.solve_continuous_lyapunov(acl, -_riccati_residual(a, r, s, x))
        except (np.linalg.LinAlgError, ValueError):
            break
        x = x + (dx + dx.T) / 2
        if not np.isfinite(x).all():
            break
        res = np.linalg.norm(_riccati_residual(a, r, s, x))
        if res < best_res:
            best, best_res = x, res
        else:
            break
    return best


def solve_riccati(a, r, s, reg: float = 1e-8) -> np.ndarray:
    """Positive definite solution of ``A X + X A^T + X R X + S = 0`` (``R >= 0``).

    The stabilizing branch is tried first; if it is not positive definite the
    anti-stabilizing (maximal) branch is used, with ``R + reg I`` when ``R`` is
    singular.  The regularization only makes the true residual
    ``-reg X^2`` more negative.
    """
    a, r, s = _mat(a), _mat(r), _mat(s)
    n = a.shape[0]
    r = (r + r.T) / 2
    s = (s + s.T) / 2
    attempts = [(True, r), (False, r)]
    if np.linalg.eigvalsh(r).min() <= reg * max(1.0, float(np.abs(r).max())):
        attempts.append((False, r + reg * np.eye(n)))
    for stable, rr in attempts:
        x = _hamiltonian_branch(a, rr, s, stable)
        if x is None:
            continue
        x = _newton_refine(a, rr, s, x)
        if np.isfinite(x).all() and np.linalg.eigvalsh(x).min() > 0:
            return x
    raise NoStabilizingSolution("no positive definite Riccati solution")


def _checked(x, residual, eps, what):
    worst = float(np.linalg.eigvalsh(residual).max())
    if not worst <= -eps / 2:
        raise NoStabilizingSolution(f"{what} residual max eigenvalue {worst:.3e} > {-eps / 2:.3e}")
    return x


def p_residual(rule: UncertainRule, aug: AugmentationMatrices, p) -> np.ndarray:
    a, b = rule.a, rule.b
    f = a @ p + p @ a.T + p @ aug.c_ai.T @ aug.c_ai @ p + aug.d_ai @ aug.d_ai.T - b @ b.T
    return (f + f.T) / 2


def q_residual(rule: UncertainRule, aug: AugmentationMatrices, q) -> np.ndarray:
    a, c = rule.a, rule.c
    f = q @ a + a.T @ q + q @ aug.d_ai @ aug.d_ai.T @ q + aug.c_ai.T @ aug.c_ai - c.T @ c
    return (f + f.T) / 2


def solve_p_riccati(rule: UncertainRule, aug: AugmentationMatrices, eps: float | None = None):
    """``P > 0`` with ``A P + P A^T + P Ca^T Ca P + Da Da^T - B B^T = -eps I``."""
    eps = default_eps(rule.a) if eps is None else eps
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = rule.a.shape[0]
    s = aug.d_ai @ aug.d_ai.T - rule.b @ rule.b.T + eps * np.eye(n)
    p = solve_riccati(rule.a, aug.c_ai.T @ aug.c_ai, s)
    return _checked(p, p_residual(rule, aug, p), eps, "P")


def solve_q_riccati(rule: UncertainRule, aug: AugmentationMatrices, eps: float | None = None):
    """``(Q, N)`` with ``N = Q A + A^T Q + Q Da Da^T Q + Ca^T Ca - C^T C = -eps I``."""
    eps = default_eps(rule.a) if eps is None else eps
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = rule.a.shape[0]
    s = aug.c_ai.T @ aug.c_ai - rule.c.T @ rule.c + eps * np.eye(n)
    q = solve_riccati(rule.a.T, aug.d_ai @ aug.d_ai.T, s)
    n_res = q_residual(rule, aug, q)
    return _checked(q, n_res, eps, "Q"), n_res


def coupling_check(p, q, tol: float = 0.0) -> bool:
    """``[[P, I], [I, Q]]`` has minimum eigenvalue above ``tol``."""
    p = _check_symmetric(p, "p")
    q = _check_symmetric(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have the same shape")
    eye = np.eye(p.shape[0])
    return bool(np.linalg.eigvalsh(np.block([[p, eye], [eye, q]])).min() > tol)


def coupling_check_schur(p, q) -> bool:
    """Schur-complement form of the strict coupling test: ``P > 0`` and ``Q - P^-1 > 0``."""
    p = _check_symmetric(p, "p")
    q = _check_symmetric(q, "q")
    if np.linalg.eigvalsh(p).min() <= 0:
        return False
    sc = q - np.linalg.inv(p)
    return bool(np.linalg.eigvalsh((sc + sc.T) / 2).min() > 0)


def certify(plant: UncertainTsPlant, j: int, eps: float | None = None) -> SynthesisCertificate:
    rule = plant.rules[j]
    aug = augmentation(plant, j)
    p = solve_p_riccati(rule, aug, eps)
    q, n_res = solve_q_riccati(rule, aug, eps)
    return SynthesisCertificate(p, q, n_res, coupling_check(p, q))


def synthesize_compensator(plant: UncertainTsPlant, j: int, certs) -> Compensator:
    """Compensator ``j`` from its certificate by direct formula evaluation."""
    rule = plant.rules[j]
    cert = certs[j]
    aug = augmentation(plant, j)
    p, q = cert.p, cert.q
    n = p.shape[0]
    gap = np.eye(n) - p @ q
    if np.linalg.cond(gap) > COND_LIMIT:
        raise SingularCoupling(f"I - P Q is singular for rule {j}")
    gap_inv = np.linalg.inv(gap)
    q_inv = np.linalg.inv(q)
    b_c = q_inv @ rule.c.T
    c_c = rule.b.T @ q @ gap_inv
    a_hat = (rule.a + rule.b @ c_c - b_c @ rule.c + q_inv @ aug.c_ai.T @ aug.c_ai
             - q_inv @ cert.n_res @ gap_inv)
    return Compensator(a_hat, b_c, c_c)


@dataclass
class SynthesisResult:
    certificates: list[SynthesisCertificate]
    compensators: list[Compensator]

    @property
    def coupling_ok(self) -> bool:
        return all(c.coupling_ok for c in self.certificates)


def synthesize(plant: UncertainTsPlant, eps: float | None = None) -> SynthesisResult:
    """Certificates and compensators for every rule.

    Raises :class:`NoStabilizingSolution` when a Riccati step fails and
    :class:`SingularCoupling` when ``I - P Q`` cannot be inverted.
    """
    certs = [certify(plant, j, eps) for j in range(len(plant.rules))]
    return SynthesisResult(certs, [synthesize_compensator(plant, j, certs)
                                   for j in range(len(plant.rules))])


def find_brl_certificate(cl: ClosedLoopRealization, eps: float = 1e-9) -> np.ndarray:
    """A ``P`` passing :func:`brl_certificate_check` (stabilizing Riccati solution).

    Exists iff the closed loop is Hurwitz with disturbance gain below one.
    """
    a, b, c = cl.a_cl, cl.b_cl, cl.c_cl
    n = a.shape[0]
    return solve_riccati(a.T, b @ b.T, c.T @ c + eps * np.eye(n))


def rules_overlap(rule_i: UncertainRule, rule_j: UncertainRule) -> bool:
    """Open supports ``(Ex - En, Ex + En)`` intersect in every antecedent coordinate."""
    if len(rule_i.antecedents) != len(rule_j.antecedents):
        raise ValueError("rules have different antecedent dimensions")
    return all(max(a.ex - a.en, b.ex - b.en) < min(a.ex + a.en, b.ex + b.en)
               for a, b in zip(rule_i.antecedents, rule_j.antecedents))


def spectral_abscissa(m) -> float:
    return float(np.max(np.linalg.eigvals(m).real))


@dataclass
class RobustReport:
    abscissae: list[float] = field(default_factory=list)
    active: list[tuple[int, ...]] = field(default_factory=list)  # rules blended per sample

    @property
    def failures(self) -> list[int]:
        return [k for k, v in enumerate(self.abscissae) if not v < 0]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.abscissae, default=float("-inf"))


def perturbed_rule(rule: UncertainRule, bound: float, rng: np.random.Generator) -> UncertainRule:
    """The rule with one draw of ``dA, dB, dC``.

    All three channels share one ``delta`` when their inner dimensions agree;
    otherwise each channel gets its own draw.
    """
    pairs = ((rule.d1, rule.e1), (rule.d2, rule.e2), (rule.d3, rule.e3))
    sizes = {d.shape[1] for d, _ in pairs}
    if len(sizes) == 1:
        delta = sample_delta(sizes.pop(), bound, rng)
        da, db, dc = (d @ delta @ e for d, e in pairs)
    else:
        da, db, dc = (sample_uncertainty(d, e, bound, rng) for d, e in pairs)
    return UncertainRule(rule.a + da, rule.b + db, rule.c + dc, antecedents=rule.antecedents)


def robust_verify(plant: UncertainTsPlant, compensators, n_samples: int = 100,
                  seed: int = 0) -> RobustReport:
    """Spectral abscissa of blended, randomly perturbed closed loops.

    Per sample: an anchor rule is drawn, weights are Dirichlet over the rules
    whose supports overlap it (those that can fire together), every plant
    rule is perturbed within its bound and the loop ``sum h_i h_j A_ij`` is
    assembled.
    """
    rng = np.random.default_rng(seed)
    rules = plant.rules
    n_rules = len(rules)
    report = RobustReport()
    for _ in range(n_samples):
        anchor = int(rng.integers(n_rules))
        active = tuple(i for i in range(n_rules)
                       if i == anchor or rules_overlap(rules[anchor], rules[i]))
        h = rng.dirichlet(np.ones(len(active)))
        pert = [perturbed_rule(rules[i], uncertainty_bound(rules[i]), rng) for i in active]
        a_cl = sum(h[x] * h[y] * build_closed_loop(pert[x], compensators[j]).a_cl
                   for x in range(len(active)) for y, j in enumerate(active))
        report.abscissae.append(spectral_abscissa(a_cl))
        report.active.append(active)
    return report
