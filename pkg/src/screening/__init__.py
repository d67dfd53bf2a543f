"""Screening of nuclear charges by classical point electrons under a hard-core constraint.

Discrete energies and their minimizers, the continuum limit functional with its
explicit minimizers, recovery sequences, and asymptotic screening experiments.
"""
from .core import (
    CompositeMeasure,
    ElectronConfig,
    EmpiricalMeasure,
    LimitParams,
    NuclearConfig,
    PointAtom,
    RadialMeasure,
    SphericalShell,
    UniformBall,
)

__version__ = "0.1.0"

__all__ = [
    "CompositeMeasure",
    "ElectronConfig",
    "EmpiricalMeasure",
    "LimitParams",
    "NuclearConfig",
    "PointAtom",
    "RadialMeasure",
    "SphericalShell",
    "UniformBall",
    "__version__",
]
