"""Two-input, one-output triangle cloud controller.

Inputs are the normalized error ``e`` and error change ``de``.  Each input
has a family of triangular clouds; rule ``(i, j)`` points at one of ``o``
singleton outputs.  The output is the firing-weighted singleton average
times the gain ``ku``, clamped to the actuator limits.

The flat parameter vector (all entries in [0, 1]) is laid out as::

    ex1[m1] ex2[m2] en1[m1] en2[m2] he1[m1] he2[m2] exu[o] m1 m2 o rl[m1*m2] ku

which gives ``3*m1 + 3*m2 + o + 4 + m1*m2`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tscloud.cloud import TriangularCloud
from tscloud.errors import NoRuleFires

COUNT_MAX = 20
EN_FLOOR = 1e-3
HE_RATIO = 0.999  # he <= HE_RATIO * en / 3 keeps 3*he < en strictly
COVER_MARGIN = 0.02


def param_count(m1: int, m2: int, o: int) -> int:
    """Length of the flat parameter vector for structure ``(m1, m2, o)``."""
    return m1 * 3 + m2 * 3 + o + 4 + m1 * m2


def _slices(m1, m2, o):
    sizes = [("ex1", m1), ("ex2", m2), ("en1", m1), ("en2", m2), ("he1", m1), ("he2", m2),
             ("exu", o), ("m1", 1), ("m2", 1), ("o", 1), ("rl", m1 * m2), ("ku", 1)]
    out, start = {}, 0
    for name, size in sizes:
        out[name] = slice(start, start + size)
        start += size
    return out


@dataclass(frozen=True)
class ControllerParams:
    ex1: np.ndarray
    ex2: np.ndarray
    en1: np.ndarray
    en2: np.ndarray
    he1: np.ndarray
    he2: np.ndarray
    exu: np.ndarray
    m1: int
    m2: int
    o: int
    rl: np.ndarray
    ku: float
    count_slots: tuple[int, int, int] = None  # decoded m1, m2, o slots (informational)

    def __post_init__(self):
        for name, size in [("ex1", self.m1), ("ex2", self.m2), ("en1", self.m1), ("en2", self.m2),
                           ("he1", self.m1), ("he2", self.m2), ("exu", self.o), ("rl", self.m1 * self.m2)]:
            arr = np.asarray(getattr(self, name), dtype=int if name == "rl" else float)
            if arr.shape != (size,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({size},)")
            object.__setattr__(self, name, arr)
        if not all(1 <= k <= COUNT_MAX for k in (self.m1, self.m2, self.o)):
            raise ValueError(f"structure counts must lie in [1, {COUNT_MAX}]")
        if (self.rl < 1).any() or (self.rl > self.o).any():
            raise ValueError(f"rule table entries must lie in [1, {self.o}]")
        if not self.ku >= 0:
            raise ValueError(f"gain must be non-negative, got {self.ku}")

    @property
    def structure(self) -> tuple[int, int, int]:
        return (self.m1, self.m2, self.o)

    def to_dict(self) -> dict:
        return {
            "m1": self.m1, "m2": self.m2, "o": self.o,
            "ex1": self.ex1.tolist(), "ex2": self.ex2.tolist(),
            "en1": self.en1.tolist(), "en2": self.en2.tolist(),
            "he1": self.he1.tolist(), "he2": self.he2.tolist(),
            "exu": self.exu.tolist(), "rl": self.rl.tolist(), "ku": float(self.ku),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerParams":
        keys = ("ex1", "ex2", "en1", "en2", "he1", "he2", "exu", "rl")
        return cls(m1=int(d["m1"]), m2=int(d["m2"]), o=int(d["o"]), ku=float(d["ku"]),
                   **{k: np.asarray(d[k]) for k in keys})


def decode(alphas, structure: tuple[int, int, int], u_bound: float) -> ControllerParams:
    """Map a flat vector in [0, 1]^gamma onto controller parameters.

    Expected values and singletons: ``-2a + 1``; entropies and hyper-entropies:
    ``a`` (entropy floored at ``EN_FLOOR``, hyper-entropy clamped below
    ``en/3``); counts: ``round(20 a)`` in [1, 20]; rule entries:
    ``round(o a)`` in [1, o]; gain: ``u_bound * a``.
    """
    m1, m2, o = structure
    a = np.asarray(alphas, dtype=float)
    gamma = param_count(m1, m2, o)
    if a.shape != (gamma,):
        raise ValueError(f"parameter vector has shape {a.shape}, structure {structure} needs ({gamma},)")
    if not ((a >= 0) & (a <= 1)).all():
        raise ValueError("parameter vector entries must lie in [0, 1]")
    s = _slices(m1, m2, o)
    en1 = np.maximum(a[s["en1"]], EN_FLOOR)
    en2 = np.maximum(a[s["en2"]], EN_FLOOR)
    counts = tuple(int(np.clip(np.round(COUNT_MAX * a[s[k]][0]), 1, COUNT_MAX)) for k in ("m1", "m2", "o"))
    return ControllerParams(
        ex1=-2 * a[s["ex1"]] + 1,
        ex2=-2 * a[s["ex2"]] + 1,
        en1=en1,
        en2=en2,
        he1=np.minimum(a[s["he1"]], HE_RATIO * en1 / 3),
        he2=np.minimum(a[s["he2"]], HE_RATIO * en2 / 3),
        exu=-2 * a[s["exu"]] + 1,
        m1=m1, m2=m2, o=o,
        rl=np.clip(np.round(o * a[s["rl"]]), 1, o).astype(int),
        ku=float(u_bound * a[s["ku"]][0]),
        count_slots=counts,
    )


def encode(params: ControllerParams, u_bound: float) -> np.ndarray:
    """Inverse of :func:`decode` on its range (clamped slots map to their clamped value)."""
    m1, m2, o = params.structure
    s = _slices(m1, m2, o)
    a = np.empty(param_count(m1, m2, o))
    a[s["ex1"]] = (1 - params.ex1) / 2
    a[s["ex2"]] = (1 - params.ex2) / 2
    a[s["en1"]] = params.en1
    a[s["en2"]] = params.en2
    a[s["he1"]] = params.he1
    a[s["he2"]] = params.he2
    a[s["exu"]] = (1 - params.exu) / 2
    slots = params.count_slots or params.structure
    a[s["m1"]], a[s["m2"]], a[s["o"]] = (k / COUNT_MAX for k in slots)
    a[s["rl"]] = params.rl / o
    a[s["ku"]] = params.ku / u_bound
    return np.clip(a, 0.0, 1.0)


def cover(ex, en, margin=COVER_MARGIN):
    """Sort fronts by expected value and widen entropies until [-1, 1] is covered.

    Works row-wise on ``(B, m)`` arrays (1-D input is one row).  Adjacent
    open supports end up overlapping by at least ``margin`` and the outer
    clouds reach ``margin`` past each end of [-1, 1].  Returns the sorted
    expected values, widened entropies and the sort permutation.
    """
    ex, en = np.asarray(ex, dtype=float), np.asarray(en, dtype=float)
    if ex.ndim == 1:
        out = cover(ex[None], en[None], margin)
        return tuple(v[0] for v in out)
    order = np.argsort(ex, axis=1, kind="stable")
    ex = np.take_along_axis(ex, order, axis=1)
    en = np.take_along_axis(en, order, axis=1).copy()
    en[:, 0] = np.maximum(en[:, 0], ex[:, 0] + 1 + margin)
    en[:, -1] = np.maximum(en[:, -1], 1 - ex[:, -1] + margin)
    for i in range(ex.shape[1] - 1):
        gap = (ex[:, i + 1] - ex[:, i]) - (en[:, i] + en[:, i + 1]) + margin
        half = np.where(gap > 0, gap / 2, 0.0)
        en[:, i] += half
        en[:, i + 1] += half
    return ex, en, order


@dataclass(frozen=True)
class CloudController:
    front1: tuple[TriangularCloud, ...]
    front2: tuple[TriangularCloud, ...]
    singletons: np.ndarray
    rule_table: np.ndarray  # (m1, m2) zero-based singleton indices
    ku: float
    u_limits: tuple[float, float]

    def __post_init__(self):
        table = np.asarray(self.rule_table, dtype=int)
        single = np.asarray(self.singletons, dtype=float)
        if table.shape != (len(self.front1), len(self.front2)):
            raise ValueError(f"rule table shape {table.shape} does not match fronts")
        if (table < 0).any() or (table >= len(single)).any():
            raise ValueError("rule table references a missing singleton")
        if self.u_limits[0] > self.u_limits[1]:
            raise ValueError(f"bad limits {self.u_limits}")
        object.__setattr__(self, "rule_table", table)
        object.__setattr__(self, "singletons", single)
        object.__setattr__(self, "front1", tuple(self.front1))
        object.__setattr__(self, "front2", tuple(self.front2))

    @property
    def p_u(self) -> float:
        return max(abs(self.u_limits[0]), abs(self.u_limits[1]))

    def arrays(self):
        """``(ex1, en1, ex2, en2, rule singleton values, ku, lo, hi)`` for vectorized use."""
        ex1 = np.array([c.ex for c in self.front1])
        en1 = np.array([c.en for c in self.front1])
        ex2 = np.array([c.ex for c in self.front2])
        en2 = np.array([c.en for c in self.front2])
        vals = self.singletons[self.rule_table].ravel()
        return ex1, en1, ex2, en2, vals, self.ku, self.u_limits[0], self.u_limits[1]

    def __call__(self, e: float, de: float) -> float:
        return control(self, e, de)


def build_controller(params: ControllerParams, u_limits=None) -> CloudController:
    """Assemble a controller, repairing front coverage of [-1, 1].

    ``u_limits`` defaults to ``(-ku, ku)``; tuning code passes ``(-P_u, P_u)``.
    """
    ex1, en1, p1 = cover(params.ex1, params.en1)
    ex2, en2, p2 = cover(params.ex2, params.en2)
    he1 = np.minimum(params.he1[p1], HE_RATIO * en1 / 3)
    he2 = np.minimum(params.he2[p2], HE_RATIO * en2 / 3)
    table = (params.rl.reshape(params.m1, params.m2) - 1)[np.ix_(p1, p2)]
    if u_limits is None:
        u_limits = (-params.ku, params.ku)
    return CloudController(
        front1=tuple(TriangularCloud(*t) for t in zip(ex1, en1, he1)),
        front2=tuple(TriangularCloud(*t) for t in zip(ex2, en2, he2)),
        singletons=params.exu.copy(),
        rule_table=table,
        ku=params.ku,
        u_limits=(float(u_limits[0]), float(u_limits[1])),
    )


def control(ctl: CloudController, e: float, de: float) -> float:
    """Controller output for normalized inputs ``e`` and ``de``."""
    ex1, en1, ex2, en2, vals, ku, lo, hi = ctl.arrays()
    mu1 = np.maximum(0.0, 1.0 - np.abs(e - ex1) / en1)
    mu2 = np.maximum(0.0, 1.0 - np.abs(de - ex2) / en2)
    w = np.outer(mu1, mu2).ravel()
    total = w.sum()
    if not total > 0:
        raise NoRuleFires(f"no rule fires at e={e}, de={de}")
    u_raw = float((w * vals).sum() / total)
    return float(min(max(ku * u_raw, lo), hi))


@dataclass(frozen=True)
class ControllerBank:
    """A batch of controllers with a shared structure, stored as stacked arrays."""

    ex1: np.ndarray  # (B, m1)
    en1: np.ndarray
    ex2: np.ndarray  # (B, m2)
    en2: np.ndarray
    vals: np.ndarray  # (B, m1*m2) singleton value per rule
    ku: np.ndarray  # (B,)
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def stack(cls, controllers) -> "ControllerBank":
        cols = list(zip(*(c.arrays() for c in controllers)))
        return cls(*(np.array(col, dtype=float) for col in cols))

    def __len__(self):
        return len(self.ku)

    def __call__(self, e: np.ndarray, de: np.ndarray) -> np.ndarray:
        """Outputs for per-controller inputs ``e``, ``de`` of shape (B,); NaN where no rule fires."""
        mu1 = np.maximum(0.0, 1.0 - np.abs(e[:, None] - self.ex1) / self.en1)
        mu2 = np.maximum(0.0, 1.0 - np.abs(de[:, None] - self.ex2) / self.en2)
        w = (mu1[:, :, None] * mu2[:, None, :]).reshape(len(e), -1)
        total = w.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            u_raw = (w * self.vals).sum(axis=1) / total
        return np.clip(self.ku * u_raw, self.lo, self.hi)


def bank_from_alphas(X, structure, u_bound: float, u_limits=None) -> ControllerBank:
    """Vectorized ``build_controller(decode(x))`` for every row of ``X``.

    Produces the same numbers as the one-at-a-time path.
    """
    m1, m2, o = structure
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != param_count(m1, m2, o):
        raise ValueError(f"rows have length {X.shape[1]}, structure {structure} needs {param_count(m1, m2, o)}")
    if not ((X >= 0) & (X <= 1)).all():
        raise ValueError("parameter vector entries must lie in [0, 1]")
    s = _slices(m1, m2, o)
    n = len(X)
    ex1, en1, p1 = cover(-2 * X[:, s["ex1"]] + 1, np.maximum(X[:, s["en1"]], EN_FLOOR))
    ex2, en2, p2 = cover(-2 * X[:, s["ex2"]] + 1, np.maximum(X[:, s["en2"]], EN_FLOOR))
    exu = -2 * X[:, s["exu"]] + 1
    rl = np.clip(np.round(o * X[:, s["rl"]]), 1, o).astype(int).reshape(n, m1, m2) - 1
    rows = np.arange(n)[:, None, None]
    table = rl[rows, p1[:, :, None], p2[:, None, :]].reshape(n, -1)
    vals = np.take_along_axis(exu, table, axis=1)
    ku = u_bound * X[:, s["ku"]][:, 0]
    if u_limits is None:
        lo, hi = -ku, ku
    else:
        lo, hi = np.full(n, float(u_limits[0])), np.full(n, float(u_limits[1]))
    return ControllerBank(ex1, en1, ex2, en2, vals, ku, lo, hi)
