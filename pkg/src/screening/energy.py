"""Discrete-side energies.

``V(x) = sum_i v(x_i) + sum_{i<j} 1/|x_i - x_j|`` with the nuclear potential
``v(x) = -sum_a Z_a/|x - R_a|``, its gradient, the classical total energy and
the empirical-measure functional ``I_{N,Z} = V/Z**2``.

Pair sums are evaluated in fixed row blocks; block partial sums are combined
with ``math.fsum`` so results do not depend on how work is split.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import CompositeMeasure, ElectronConfig, EmpiricalMeasure, NuclearConfig

# Functional value "+infinity" (a legitimate value of the energies, not an error).
INFINITY = math.inf

_BLOCK_ELEMS = 4_000_000


class SingularityError(ArithmeticError):
    """Evaluation point coincides with a nucleus."""


class InfiniteEnergyError(ArithmeticError):
    """Two electrons coincide."""


@dataclass(frozen=True)
class EnergyBreakdown:
    attraction: float
    repulsion: float
    total: float
    nuclear_repulsion: float

    @property
    def classical_total(self) -> float:
        """``V + V_nuc``."""
        return self.total + self.nuclear_repulsion

    def to_dict(self) -> dict:
        return asdict(self)


def _nucleus_distances(points: np.ndarray, nuc: NuclearConfig) -> np.ndarray:
    diff = points[:, None, :] - nuc.positions[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _attraction_terms(points: np.ndarray, positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(dist == 0):
        raise SingularityError("point coincides with a nucleus")
    return -weights[None, :] / dist


def _pair_blocks(points: np.ndarray, kernel):
    """Yield ``sum_{j>i} kernel(|x_i - x_j|)`` for consecutive row blocks."""
    n = len(points)
    rows = max(1, _BLOCK_ELEMS // max(n, 1))
    cols = [points[:, k] for k in range(3)]
    for start in range(0, n - 1, rows):
        stop = min(start + rows, n - 1)
        d2 = np.zeros((stop - start, n - start - 1))
        for c in cols:
            delta = c[start:stop, None] - c[None, start + 1 :]
            d2 += delta * delta
        # keep only j > i within the block
        ii = np.arange(stop - start)[:, None]
        jj = np.arange(n - start - 1)[None, :]
        upper = jj >= ii
        dist = np.sqrt(d2[upper])
        yield kernel(dist)


def repulsion_sum(points: np.ndarray) -> float:
    """``sum_{i<j} 1/|x_i - x_j|``; raises on coincident points."""
    partial = []
    for vals in _pair_blocks(np.asarray(points, dtype=float), lambda r: r):
        if np.any(vals == 0):
            raise InfiniteEnergyError("coincident electrons")
        partial.append(float(np.sum(1.0 / vals)))
    return math.fsum(partial)


def truncated_pair_sum(points: np.ndarray, alpha: float) -> float:
    """``sum_{i<j} min(1/|x_i - x_j|, 1/alpha)``."""
    partial = [
        float(np.sum(1.0 / np.maximum(r, alpha)))
        for r in _pair_blocks(np.asarray(points, dtype=float), lambda r: r)
    ]
    return math.fsum(partial)


def short_range_pair_sum(points: np.ndarray, alpha: float) -> float:
    """``sum_{i<j, |x_i-x_j|<alpha} 1/|x_i - x_j|``."""
    partial = []
    for r in _pair_blocks(np.asarray(points, dtype=float), lambda r: r):
        near = r[r < alpha]
        partial.append(float(np.sum(1.0 / near)) if near.size else 0.0)
    return math.fsum(partial)


def external_potential(x, nuc: NuclearConfig) -> float:
    """``v(x) = -sum_a Z_a / |x - R_a|``."""
    pts = np.asarray(x, dtype=float).reshape(1, 3)
    return math.fsum(_attraction_terms(pts, nuc.positions, nuc.charges)[0])


def particle_energy(cfg: ElectronConfig, nuc: NuclearConfig) -> EnergyBreakdown:
    pts = cfg.points
    if cfg.N:
        attraction = math.fsum(_attraction_terms(pts, nuc.positions, nuc.charges).ravel())
    else:
        attraction = 0.0
    repulsion = repulsion_sum(pts)
    return EnergyBreakdown(
        attraction=attraction,
        repulsion=repulsion,
        total=attraction + repulsion,
        nuclear_repulsion=nuc.nuclear_repulsion(),
    )


def particle_gradient(cfg: ElectronConfig, nuc: NuclearConfig) -> np.ndarray:
    """Analytic gradient of ``V`` with respect to every electron position, shape ``(N, 3)``."""
    x = np.asarray(cfg.points, dtype=float)
    dn = x[:, None, :] - nuc.positions[None, :, :]
    rn = np.sqrt(np.sum(dn * dn, axis=-1))
    if np.any(rn == 0):
        raise SingularityError("electron at a nucleus")
    grad = np.sum(nuc.charges[None, :, None] * dn / rn[..., None] ** 3, axis=1)
    if len(x) > 1:
        de = x[:, None, :] - x[None, :, :]
        re = np.sqrt(np.sum(de * de, axis=-1))
        np.fill_diagonal(re, np.inf)
        if np.any(re == 0):
            raise InfiniteEnergyError("coincident electrons")
        grad -= np.sum(de / re[..., None] ** 3, axis=1)
    return grad


def classical_energy(cfg: ElectronConfig, nuc: NuclearConfig) -> float:
    """``V + V_nuc`` for a given configuration (an upper bound on ``E_class``)."""
    return particle_energy(cfg, nuc).classical_total


def _inside_core(points: np.ndarray, nuc: NuclearConfig) -> bool:
    if len(points) == 0:
        return False
    return bool(np.any(_nucleus_distances(points, nuc) < nuc.hardcore_radius))


def empirical_energy(
    mu: EmpiricalMeasure, nuc: NuclearConfig, fractions: Sequence[float] | None = None
) -> float:
    """``I_{N,Z}(mu)`` for ``mu = (1/Z) sum_i delta_{x_i}``.

    Diagonal excluded.  Returns ``INFINITY`` when a point lies in a hard core or
    when points repeat (the measure is then not of the admissible form).
    """
    pts = mu.points
    if _inside_core(pts, nuc):
        return INFINITY
    if len(pts) > 1 and len(np.unique(pts, axis=0)) < len(pts):
        return INFINITY
    Z = 1.0 / mu.weight
    if fractions is None:
        charges = nuc.charges
    else:
        charges = np.asarray(fractions, dtype=float) * Z
    attraction = math.fsum(_attraction_terms(pts, nuc.positions, charges).ravel()) if len(pts) else 0.0
    return (attraction + repulsion_sum(pts)) / (Z * Z)


def truncated_energy(
    mu, nuc: NuclearConfig, alpha: float, fractions: Sequence[float] | None = None
) -> float:
    """Energy with pair kernel ``min(1/|x-y|, 1/alpha)`` on the full product.

    The diagonal is included; each atom of an empirical measure contributes
    ``weight**2 / alpha`` to the double integral.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    z = nuc.fractions if fractions is None else np.asarray(fractions, dtype=float)
    if isinstance(mu, EmpiricalMeasure):
        pts, w = mu.points, mu.weight
        if len(pts) == 0:
            return 0.0
        attraction = w * math.fsum(_attraction_terms(pts, nuc.positions, z).ravel())
        double = 2.0 * truncated_pair_sum(pts, alpha) + len(pts) / alpha
        return attraction + 0.5 * w * w * double
    if isinstance(mu, CompositeMeasure):
        from .continuum import attraction_integral, truncated_pair_integral

        comps = mu.components
        attraction = attraction_integral(mu, nuc.positions, z)
        terms = []
        for i, ci in enumerate(comps):
            terms.append(truncated_pair_integral(ci, ci, alpha))
            for cj in comps[i + 1 :]:
                terms.append(2.0 * truncated_pair_integral(ci, cj, alpha))
        return attraction + 0.5 * math.fsum(terms)
    raise TypeError(f"unsupported measure type {type(mu).__name__}")
