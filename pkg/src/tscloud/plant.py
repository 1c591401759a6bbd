"""Discrete ARX plants, reference signals and closed-loop simulation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from tscloud.controller import CloudController, ControllerBank
from tscloud.errors import DivergedRun, NoRuleFires

OVERFLOW = 1e9


@dataclass(frozen=True)
class ArxPlant:
    """``y(k) = sum a_i y(k-i) + sum b_j u(k-j) + delta(k)``, delta ~ N(0, noise_std)."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if not self.a or not self.b:
            raise ValueError("plant needs at least one a and one b coefficient")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    def ar_roots(self) -> np.ndarray:
        """Roots of ``z^p - a_1 z^(p-1) - ... - a_p``; open-loop stable iff all |root| < 1."""
        return np.roots(np.concatenate([[1.0], -np.asarray(self.a)]))

    def with_noise(self, noise_std: float) -> "ArxPlant":
        return ArxPlant(self.a, self.b, noise_std)


UNSTABLE_PLANT = ArxPlant(a=(3.737, -4.212, 1.492), b=(0.17, -0.238, 2.94), noise_std=1.0)
DEMO_PLANT = ArxPlant(a=(0.5,), b=(1.0,), noise_std=0.0)


def plant_step(plant: ArxPlant, y_hist, u_hist, noise: float = 0.0) -> float:
    """One ARX update; ``y_hist[0]`` is ``y(k-1)``, missing history counts as zero."""
    y = 0.0
    for ai, yi in zip(plant.a, y_hist):
        y += ai * yi
    for bj, uj in zip(plant.b, u_hist):
        y += bj * uj
    return y + noise


@dataclass(frozen=True)
class ReferenceSignal:
    kind: str = "step"
    amplitude: float = 1.0
    period: int = 20  # square wave: samples per half period

    def __post_init__(self):
        if self.kind not in ("step", "constant", "square"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.period < 1:
            raise ValueError("period must be >= 1")

    def values(self, steps: int) -> np.ndarray:
        k = np.arange(1, steps + 1)
        if self.kind == "square":
            sign = np.where(((k - 1) // self.period) % 2 == 0, 1.0, -1.0)
            return self.amplitude * sign
        return np.full(steps, float(self.amplitude))


@dataclass
class SimTrace:
    dt: float
    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray = field(default=None)

    def __post_init__(self):
        self.r, self.y, self.u = (np.asarray(v, dtype=float) for v in (self.r, self.y, self.u))
        if self.e is None:
            self.e = self.r - self.y
        self.e = np.asarray(self.e, dtype=float)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, len(self.r) + 1)

    def __len__(self):
        return len(self.r)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "r", "y", "u", "e"])
        for row in zip(self.k, self.r, self.y, self.u, self.e):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, dt: float = 1.0) -> "SimTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda name: np.array([float(r[name]) for r in rows])  # noqa: E731
        return cls(dt, col("r"), col("y"), col("u"), col("e"))


def j1(trace: SimTrace) -> float:
    """Time-weighted absolute error ``sum k^2 |e(k)| dt`` with k from 1."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    k = trace.k.astype(float)
    return float(np.sum(k * k * np.abs(trace.e)) * trace.dt)


def j2(e):
    return 0.5 * np.square(e)


def noise_sequence(std: float, steps: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, 1.0, steps) * std


def input_gains(ref: np.ndarray) -> tuple[float, float]:
    peak = float(np.max(np.abs(ref))) if len(ref) else 0.0
    g = 1.0 / peak if peak > 0 else 1.0
    return g, g


@dataclass
class BankRun:
    """Result of simulating a bank of controllers against one plant and noise record."""

    r: np.ndarray  # (T,)
    y: np.ndarray  # (B, T); NaN after divergence
    u: np.ndarray
    e: np.ndarray
    diverged_at: np.ndarray  # (B,) index of the first bad step, -1 if none

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_at >= 0

    def j1(self, dt: float = 1.0) -> np.ndarray:
        k = np.arange(1, self.r.shape[0] + 1, dtype=float)
        out = np.sum(k * k * np.abs(np.nan_to_num(self.e)), axis=1) * dt
        out[self.diverged] = np.inf
        return out


def simulate_bank(plant: ArxPlant, bank: ControllerBank, r: np.ndarray, noise: np.ndarray,
                  gains: tuple[float, float], overflow: float = OVERFLOW, y0=None, u0=None,
                  e_prev=None) -> BankRun:
    """Closed-loop run of every controller in ``bank`` over the reference ``r``.

    Per step ``k``: the error ``e(k) = r(k) - y(k-1)`` is measured, the
    controller computes ``u(k)``, then the plant produces ``y(k)`` from its
    histories, the new input and the noise sample.  ``y0``/``u0`` are optional
    initial histories ``(B, p)``/``(B, q)`` with the most recent first;
    ``e_prev`` is the error preceding the first step.
    """
    a, b = plant.a, plant.b
    na, nb = len(a), len(b)
    n_b, steps = len(bank), len(r)
    # histories live in padded buffers: column na + k - i holds y(k - i)
    yb = np.zeros((n_b, na + steps))
    ub = np.zeros((n_b, nb + steps))
    if y0 is not None:
        yb[:, :na] = np.asarray(y0, dtype=float)[:, ::-1]
    if u0 is not None:
        ub[:, :nb] = np.asarray(u0, dtype=float)[:, ::-1]
    ep = np.zeros(n_b) if e_prev is None else np.array(e_prev, dtype=float)
    ge, gde = gains
    Y = np.full((n_b, steps), np.nan)
    U = np.full((n_b, steps), np.nan)
    E = np.full((n_b, steps), np.nan)
    bad_at = np.full(n_b, -1)
    alive = np.ones(n_b, dtype=bool)
    for k in range(steps):
        e = r[k] - yb[:, na + k - 1]
        de = e - ep
        u = bank(np.clip(ge * e, -1.0, 1.0), np.clip(gde * de, -1.0, 1.0))
        E[alive, k], U[alive, k] = e[alive], u[alive]
        # NaN input means no rule fired: the row keeps e and u but no output
        nofire = alive & np.isnan(u)
        if nofire.any():
            bad_at[nofire] = k
            alive &= ~nofire
        ub[:, nb + k] = np.where(alive, u, 0.0)
        y = np.full(n_b, noise[k])
        for i, ai in enumerate(a):
            y = y + ai * yb[:, na + k - 1 - i]
        for j, bj in enumerate(b):
            y = y + bj * ub[:, nb + k - j]
        bad = alive & ~(np.abs(y) <= overflow)
        if bad.any():
            bad_at[bad] = k
            alive &= ~bad
        Y[alive, k] = y[alive]
        if not alive.any():
            break
        yb[:, na + k] = np.where(alive, y, 0.0)
        ep = e
    return BankRun(np.asarray(r, dtype=float), Y, U, E, bad_at)


def run_closed_loop(plant: ArxPlant, ctl: CloudController, ref: ReferenceSignal, steps: int,
                    dt: float = 1.0, seed: int = 0, gains=None, overflow: float = OVERFLOW) -> SimTrace:
    """Seeded closed-loop simulation returning the full trace.

    Raises :class:`DivergedRun` (with the rows before the blow-up) when ``|y|``
    exceeds ``overflow``, and :class:`NoRuleFires` on a coverage hole.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    r = ref.values(steps)
    gains = input_gains(r) if gains is None else gains
    noise = noise_sequence(plant.noise_std, steps, seed)
    run = simulate_bank(plant, ControllerBank.stack([ctl]), r, noise, gains, overflow)
    stop = int(run.diverged_at[0])
    if stop < 0:
        return SimTrace(dt, r, run.y[0], run.u[0], run.e[0])
    if np.isnan(run.u[0, stop]):
        raise NoRuleFires(f"no controller rule fires at step {stop + 1}")
    partial = SimTrace(dt, r[:stop], run.y[0, :stop], run.u[0, :stop], run.e[0, :stop])
    raise DivergedRun(f"|y| exceeded {overflow:g} at step {stop + 1}", partial)
