"""T-S triangular cloud models, a tunable cloud controller, and robust H-infinity synthesis."""

from tscloud.cloud import CloudDrop, Envelope, TriangularCloud
from tscloud.errors import (
    DivergedRun,
    GradientProbeFailed,
    NoRuleFires,
    NoStabilizingSolution,
    SingularCoupling,
    ZeroGradient,
)

__all__ = [
    "CloudDrop",
    "DivergedRun",
    "Envelope",
    "GradientProbeFailed",
    "NoRuleFires",
    "NoStabilizingSolution",
    "SingularCoupling",
    "TriangularCloud",
    "ZeroGradient",
]

__version__ = "0.1.0"
