"""Triangular cloud model primitives.

A triangular cloud ``(Ex, En, He)`` has the expected curve
``max(0, 1 - |x - Ex| / En)``.  A cloud drop re-samples the entropy
``En' ~ N(En, He)`` (clamped to ``En +/- 3 He``) and evaluates the same
curve with ``En'``, so every drop lies between the two envelope curves
built from ``En - 3 He`` and ``En + 3 He``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangularCloud:
    ex: float
    en: float
    he: float = 0.0

    def __post_init__(self):
        if not np.isfinite([self.ex, self.en, self.he]).all():
            raise ValueError(f"cloud parameters must be finite: {self}")
        if self.en <= 0:
            raise ValueError(f"entropy must be positive, got en={self.en}")
        if self.he < 0:
            raise ValueError(f"hyper-entropy must be non-negative, got he={self.he}")
        if 3 * self.he >= self.en:
            raise ValueError(f"need 3*he < en, got en={self.en}, he={self.he}")

    @property
    def narrow(self) -> float:
        """Half-width of the inner envelope support, ``En - 3 He``."""
        return self.en - 3 * self.he

    @property
    def wide(self) -> float:
        return self.en + 3 * self.he

    def support(self) -> tuple[float, float]:
        """Open support of the expected curve."""
        return (self.ex - self.en, self.ex + self.en)


@dataclass(frozen=True)
class CloudDrop:
    x: float
    mu: float


@dataclass(frozen=True)
class Envelope:
    y1: float
    y2: float


def _tri(dist, half_width):
    return np.maximum(0.0, 1.0 - dist / half_width)


def expected_curve(cloud: TriangularCloud, x):
    """Membership of ``x`` on the expected curve; vectorizes over ``x``."""
    out = _tri(np.abs(np.asarray(x, dtype=float) - cloud.ex), cloud.en)
    return float(out) if out.ndim == 0 else out


def sample_entropy(cloud: TriangularCloud, rng: np.random.Generator, size=None):
    """Draw ``En'`` from N(En, He) clamped to ``[En - 3He, En + 3He]``."""
    if cloud.he == 0:
        return cloud.en if size is None else np.full(size, cloud.en)
    en = rng.normal(cloud.en, cloud.he, size=size)
    return np.clip(en, cloud.narrow, cloud.wide)


def drop(cloud: TriangularCloud, x: float, rng: np.random.Generator) -> CloudDrop:
    en = sample_entropy(cloud, rng)
    mu = float(_tri(abs(x - cloud.ex), en))
    return CloudDrop(float(x), mu)


def drops(cloud: TriangularCloud, x, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` membership samples at each stimulus in ``x``; shape ``(n,) + shape(x)``."""
    x = np.asarray(x, dtype=float)
    en = sample_entropy(cloud, rng, size=(n,) + x.shape)
    return _tri(np.abs(x - cloud.ex), en)


def envelope(cloud: TriangularCloud, x) -> Envelope:
    dist = np.abs(np.asarray(x, dtype=float) - cloud.ex)
    y1 = _tri(dist, abs(cloud.narrow))
    y2 = _tri(dist, abs(cloud.wide))
    if y1.ndim == 0:
        return Envelope(float(y1), float(y2))
    return Envelope(y1, y2)


def width(cloud: TriangularCloud, x):
    env = envelope(cloud, x)
    return np.abs(env.y1 - env.y2) if np.ndim(env.y1) else abs(env.y1 - env.y2)


def max_width(cloud: TriangularCloud) -> float:
    """Width between the envelopes at the point where the inner curve equals 1/3.

    ``1 - (2/3) |En - 3He| / |En + 3He| - 1/3``; zero when ``He = 0`` and
    approaching 2/3 as ``3 He -> En``.
    """
    ratio = abs(cloud.narrow) / abs(cloud.wide)
    # same quantity as 1 - (2/3) ratio - 1/3, arranged to give exactly 0 for He = 0
    return (2.0 / 3.0) * (1.0 - ratio)


def grid_max_width(cloud: TriangularCloud, n: int = 200_001, inner_only: bool = True) -> tuple[float, float]:
    """Empirical maximum of ``width`` on a dense grid.

    Returns ``(best_width, x_at_best)``.  With ``inner_only`` the grid covers
    the closed inner support ``|x - Ex| <= En - 3He``; otherwise the outer one.
    """
    half = cloud.narrow if inner_only else cloud.wide
    xs = np.linspace(cloud.ex - half, cloud.ex + half, n)
    w = width(cloud, xs)
    i = int(np.argmax(w))
    return float(w[i]), float(xs[i])
