"""Domain types shared across the package.

Nuclei, electron configurations and the measure classes on which the
continuum energies have closed forms.  All types are frozen; arrays are
copied on construction and marked read-only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class ConfigError(ValueError):
    """Invalid physical configuration (charges, radii, overlap)."""


class InvalidMeasureError(ValueError):
    pass


def _frozen_array(values, shape_tail: tuple[int, ...] = ()) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        arr = arr.reshape((0,) + shape_tail)
    arr.setflags(write=False)
    return arr


def _vec3(v) -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(3)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NuclearConfig:
    """Fixed nuclei with charges ``Z_alpha`` and a common hard-core radius ``d``."""

    positions: np.ndarray
    charges: np.ndarray
    hardcore_radius: float

    def __post_init__(self):
        pos = _frozen_array(self.positions, (3,)).reshape(-1, 3)
        pos.setflags(write=False)
        q = _frozen_array(self.charges).reshape(-1)
        q.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "charges", q)
        object.__setattr__(self, "hardcore_radius", float(self.hardcore_radius))
        if len(pos) < 1:
            raise ConfigError("at least one nucleus is required")
        if len(q) != len(pos):
            raise ConfigError("positions and charges differ in length")
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise ConfigError("nuclear charges must be strictly positive")
        d = self.hardcore_radius
        if not (d > 0 and math.isfinite(d)):
            raise ConfigError("hard-core radius must be positive")
        if len(pos) >= 2 and not d < 0.5 * self.min_separation():
            raise ConfigError(
                f"hard cores overlap: d={d} must be < {0.5 * self.min_separation()}"
            )

    @property
    def M(self) -> int:
        return len(self.positions)

    @property
    def total_charge(self) -> float:
        return float(np.sum(self.charges))

    @property
    def fractions(self) -> np.ndarray:
        """Charge fractions ``Z_alpha / Z``."""
        return self.charges / self.total_charge

    def min_separation(self) -> float:
        if self.M < 2:
            return math.inf
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        return float(np.min(dist[np.triu_indices(self.M, 1)]))

    def nuclear_repulsion(self) -> float:
        """Internuclear energy ``sum_{a<b} Z_a Z_b / |R_a - R_b|`` (0 for one nucleus)."""
        if self.M < 2:
            return 0.0
        i, j = np.triu_indices(self.M, 1)
        dist = np.linalg.norm(self.positions[i] - self.positions[j], axis=1)
        return math.fsum(self.charges[i] * self.charges[j] / dist)

    def diameter(self) -> float:
        """Diameter of the union of closed hard-core balls."""
        if self.M < 2:
            return 2 * self.hardcore_radius
        spread = np.linalg.norm(self.positions[:, None] - self.positions[None], axis=-1)
        return float(np.max(spread)) + 2 * self.hardcore_radius

    def to_dict(self) -> dict:
        return {
            "nuclei": [
                {"R": [float(c) for c in r], "Z": float(z)}
                for r, z in zip(self.positions, self.charges)
            ],
            "d": self.hardcore_radius,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NuclearConfig":
        try:
            nuclei = doc["nuclei"]
            return cls(
                positions=[n["R"] for n in nuclei],
                charges=[n["Z"] for n in nuclei],
                hardcore_radius=doc["d"],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed nuclear config: missing {exc}") from exc

    @classmethod
    def single(cls, Z: float, d: float = 1.0, center=(0.0, 0.0, 0.0)) -> "NuclearConfig":
        return cls(positions=[center], charges=[Z], hardcore_radius=d)


@dataclass(frozen=True)
class ElectronConfig:
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(self.points, (3,)).reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return len(self.points)

    def has_duplicates(self) -> bool:
        if self.N < 2:
            return False
        uniq = np.unique(self.points, axis=0)
        return len(uniq) < self.N

    def to_dict(self) -> dict:
        return {"electrons": [[float(c) for c in p] for p in self.points]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ElectronConfig":
        try:
            return cls(doc["electrons"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed electron config: missing {exc}") from exc


# -- measures -----------------------------------------------------------------


@dataclass(frozen=True)
class PointAtom:
    location: np.ndarray
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "location", _vec3(self.location))
        object.__setattr__(self, "mass", float(self.mass))
        if self.mass < 0:
            raise InvalidMeasureError("negative mass")

    @property
    def center(self) -> np.ndarray:
        return self.location

    @property
    def radius(self) -> float:
        return 0.0

    kind = "point"


@dataclass(frozen=True)
class SphericalShell:
    """Uniform surface measure of total ``mass`` on the sphere ``|x - center| = radius``."""

    center: np.ndarray
    radius: float
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "mass", float(self.mass))
        if not self.radius > 0:
            raise InvalidMeasureError("shell radius must be positive")
        if self.mass < 0:
            raise InvalidMeasureError("negative mass")

    kind = "shell"


@dataclass(frozen=True)
class UniformBall:
    center: np.ndarray
    radius: float
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "mass", float(self.mass))
        if not self.radius > 0:
            raise InvalidMeasureError("ball radius must be positive")
        if self.mass < 0:
            raise InvalidMeasureError("negative mass")

    kind = "ball"


Component = Union[PointAtom, SphericalShell, UniformBall]


@dataclass(frozen=True)
class CompositeMeasure:
    """Finite sum of point atoms, uniform shells and uniform balls.

    Zero-mass components are dropped on construction.
    """

    components: tuple = ()

    def __post_init__(self):
        kept = tuple(c for c in self.components if c.mass > 0)
        object.__setattr__(self, "components", kept)

    @property
    def total_mass(self) -> float:
        return math.fsum(c.mass for c in self.components)

    def scaled(self, factor: float) -> "CompositeMeasure":
        out = []
        for c in self.components:
            if isinstance(c, PointAtom):
                out.append(PointAtom(c.location, c.mass * factor))
            else:
                out.append(type(c)(c.center, c.radius, c.mass * factor))
        return CompositeMeasure(tuple(out))

    def __add__(self, other: "CompositeMeasure") -> "CompositeMeasure":
        return CompositeMeasure(self.components + other.components)

    def to_dict(self) -> dict:
        comps = []
        for c in self.components:
            if isinstance(c, PointAtom):
                comps.append({"kind": "point", "location": c.location.tolist(), "mass": c.mass})
            else:
                comps.append(
                    {"kind": c.kind, "center": c.center.tolist(), "radius": c.radius, "mass": c.mass}
                )
        return {"components": comps}

    @classmethod
    def from_dict(cls, doc: dict) -> "CompositeMeasure":
        comps = []
        for c in doc.get("components", []):
            kind = c["kind"]
            if kind == "point":
                comps.append(PointAtom(c["location"], c["mass"]))
            elif kind == "shell":
                comps.append(SphericalShell(c["center"], c["radius"], c["mass"]))
            elif kind == "ball":
                comps.append(UniformBall(c["center"], c["radius"], c["mass"]))
            else:
                raise InvalidMeasureError(f"unknown component kind {kind!r}")
        return cls(tuple(comps))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """``weight * sum_i delta_{points[i]}``."""

    points: np.ndarray
    weight: float

    def __post_init__(self):
        pts = _frozen_array(self.points, (3,)).reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weight", float(self.weight))
        if not self.weight > 0:
            raise InvalidMeasureError("atom weight must be positive")

    @property
    def total_mass(self) -> float:
        return len(self.points) * self.weight


@dataclass(frozen=True)
class RadialMeasure:
    """Atoms on ``[1, inf)`` standing in for rotation-invariant measures."""

    radii: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        r = _frozen_array(self.radii).reshape(-1)
        m = _frozen_array(self.masses).reshape(-1)
        r.setflags(write=False)
        m.setflags(write=False)
        if len(r) != len(m):
            raise InvalidMeasureError("radii and masses differ in length")
        if np.any(r < 1):
            raise InvalidMeasureError("radial atoms must sit at r >= 1")
        if np.any(m < 0):
            raise InvalidMeasureError("negative mass")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "masses", m)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses)


@dataclass(frozen=True)
class LimitParams:
    """Filling factor ``lam`` and per-nucleus charge fractions ``z``.

    ``normalized=False`` lifts the unit-sum requirement on ``z``.
    """

    lam: float
    z_fractions: tuple = field(default=(1.0,))
    normalized: bool = True

    def __post_init__(self):
        z = tuple(float(v) for v in np.atleast_1d(self.z_fractions))
        object.__setattr__(self, "z_fractions", z)
        object.__setattr__(self, "lam", float(self.lam))
        if not self.lam > 0:
            raise ConfigError("filling factor must be positive")
        if any(v < 0 for v in z):
            raise ConfigError("charge fractions must be nonnegative")
        if self.normalized and abs(math.fsum(z) - 1.0) > 1e-12:
            raise ConfigError(f"charge fractions must sum to 1, got {math.fsum(z)}")

    @property
    def z(self) -> float:
        return math.fsum(self.z_fractions)

    @classmethod
    def from_nuclei(cls, nuc: NuclearConfig, lam: float = 1.0) -> "LimitParams":
        return cls(lam, tuple(nuc.fractions))


# -- operations -----------------------------------------------------------------


def check_admissible(cfg: ElectronConfig, nuc: NuclearConfig) -> bool:
    """True iff every electron is at distance >= d from every nucleus (closed set)."""
    if cfg.N == 0:
        return True
    diff = cfg.points[:, None, :] - nuc.positions[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return bool(np.all(dist >= nuc.hardcore_radius))


def to_empirical(cfg: ElectronConfig, Z: float) -> EmpiricalMeasure:
    if not Z > 0:
        raise InvalidMeasureError("Z must be positive")
    if cfg.has_duplicates():
        raise InvalidMeasureError("empirical measure requires pairwise distinct points")
    return EmpiricalMeasure(cfg.points, 1.0 / Z)


def rescale(nuc: NuclearConfig, cfg: ElectronConfig, s: float) -> tuple[NuclearConfig, ElectronConfig]:
    """Scale all lengths by ``s``; every Coulomb energy scales by ``1/s``."""
    if not s > 0:
        raise ValueError("scale factor must be positive")
    return (
        NuclearConfig(nuc.positions * s, nuc.charges, nuc.hardcore_radius * s),
        ElectronConfig(cfg.points * s),
    )


def nuclear_shells(nuc: NuclearConfig, z: Sequence[float] | None = None) -> CompositeMeasure:
    """Uniform shells of mass ``z_alpha`` on the hard-core spheres."""
    if z is None:
        z = nuc.fractions
    return CompositeMeasure(
        tuple(SphericalShell(r, nuc.hardcore_radius, m) for r, m in zip(nuc.positions, z))
    )


def load_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_nuclei(path: str | Path) -> NuclearConfig:
    return NuclearConfig.from_dict(load_json(path))


def load_electrons(path: str | Path) -> ElectronConfig:
    return ElectronConfig.from_dict(load_json(path))

