"""Screening statistics, asymptotic sweeps and weak* test-function panels."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .continuum import limit_energy
from .core import CompositeMeasure, EmpiricalMeasure, NuclearConfig, PointAtom, SphericalShell, UniformBall
from .optimize import OptimizeOptions, OptimizeResult, detect_absorption, minimize

ESCAPE_RADIUS = 10.0  # in units of d
CAP_SEED = 42


class NotAbsorbedError(ValueError):
    """Statistics that need every electron on a sphere were asked of a configuration that is not."""


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue()


# -- caps ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cap:
    axis: np.ndarray
    angle: float

    @property
    def area_fraction(self) -> float:
        return 0.5 * (1.0 - math.cos(self.angle))


def default_caps(seed: int = CAP_SEED, random_caps: int = 20) -> tuple[Cap, ...]:
    """Six axis hemispheres followed by seeded random caps of angular radius pi/3."""
    caps = []
    for k in range(3):
        for sign in (1.0, -1.0):
            e = np.zeros(3)
            e[k] = sign
            caps.append(Cap(e, math.pi / 2))
    rng = np.random.default_rng(seed)
    for v in rng.standard_normal((random_caps, 3)):
        caps.append(Cap(v / np.linalg.norm(v), math.pi / 3))
    return tuple(caps)


def cap_fraction(directions: np.ndarray, cap: Cap) -> float:
    """Fraction of unit vectors falling in the closed cap."""
    if len(directions) == 0:
        return 0.0
    return float(np.mean(directions @ cap.axis >= math.cos(cap.angle)))


# -- screening statistics ---------------------------------------------------------


@dataclass(frozen=True)
class ScreeningStats:
    per_nucleus_count: tuple[int, ...]
    neutrality_ratios: tuple[float, ...]
    dipole_norms: tuple[float, ...]
    cap_discrepancy: float
    energy_over_N2: float

    def to_dict(self) -> dict:
        return asdict(self)


def screening_stats(
    result: OptimizeResult, nuc: NuclearConfig, caps: Sequence[Cap] | None = None
) -> ScreeningStats:
    cfg = result.config
    absorbed, assign = detect_absorption(cfg, nuc, 1e-6 * nuc.hardcore_radius)
    if not absorbed:
        raise NotAbsorbedError("configuration has electrons off the spheres")
    caps = default_caps() if caps is None else caps
    d = nuc.hardcore_radius
    counts, ratios, dipoles = [], [], []
    worst = 0.0
    for a, (R, Za) in enumerate(zip(nuc.positions, nuc.charges)):
        rel = cfg.points[assign == a] - R
        n = len(rel)
        counts.append(n)
        ratios.append(n / float(Za))
        dipoles.append(float(np.linalg.norm(rel.sum(axis=0))) / (d * n) if n else 0.0)
        if n:
            u = rel / np.linalg.norm(rel, axis=1)[:, None]
            for cap in caps:
                worst = max(worst, abs(cap_fraction(u, cap) - cap.area_fraction))
    N = max(cfg.N, 1)
    return ScreeningStats(
        per_nucleus_count=tuple(counts),
        neutrality_ratios=tuple(ratios),
        dipole_norms=tuple(dipoles),
        cap_discrepancy=worst,
        energy_over_N2=result.energy.total / N**2,
    )


# -- test functions ----------------------------------------------------------------


@dataclass(frozen=True)
class TestFunctionPanel:
    """Radial bumps ``A * exp(1 - 1/(1 - (r/w)^2))`` for ``r < w`` and zero beyond."""

    __test__ = False  # keep pytest from collecting this class

    centers: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        w = np.asarray(self.widths, dtype=float).ravel()
        A = np.asarray(self.amplitudes, dtype=float).ravel()
        if not (len(c) == len(w) == len(A)):
            raise ValueError("panel arrays must have equal length")
        if len(c) < 8:
            raise ValueError("a panel needs at least 8 test functions")
        if np.any(w <= 0):
            raise ValueError("widths must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "amplitudes", A)

    def __len__(self) -> int:
        return len(self.centers)

    def profile(self, j: int, r):
        r = np.asarray(r, dtype=float)
        s = r / self.widths[j]
        out = np.zeros_like(s)
        inside = s < 1
        out[inside] = self.amplitudes[j] * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Matrix ``f_j(x_i)`` of shape ``(len(points), len(panel))``."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        r = np.linalg.norm(pts[:, None, :] - self.centers[None, :, :], axis=-1)
        return np.stack([self.profile(j, r[:, j]) for j in range(len(self))], axis=1)


_GL64_X, _GL64_W = np.polynomial.legendre.leggauss(64)


def _radial_quad(f, lo: float, hi: float, breaks=()) -> float:
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            x = 0.5 * (a + b) + 0.5 * (b - a) * _GL64_X
            total += 0.5 * (b - a) * float(np.dot(_GL64_W, f(x)))
    return total


def _component_integral(panel: TestFunctionPanel, j: int, comp) -> float:
    c, w = panel.centers[j], panel.widths[j]
    if isinstance(comp, PointAtom):
        return comp.mass * float(panel.profile(j, np.linalg.norm(comp.location - c)))
    D = float(np.linalg.norm(comp.center - c))
    a = comp.radius
    if isinstance(comp, SphericalShell):
        # average over the sphere of f(|x - c|): (1 / (2 a D)) int_{|D-a|}^{D+a} f(s) s ds
        lo, hi = abs(D - a), min(D + a, w)
        if lo >= hi:
            return 0.0
        if D == 0:
            return comp.mass * float(panel.profile(j, a))
        return comp.mass * _radial_quad(lambda s: panel.profile(j, s) * s, lo, hi) / (2 * a * D)
    if isinstance(comp, UniformBall):
        # int_0^w f(s) * area(sphere(c, s) inside the ball) ds
        density = comp.mass / (4.0 / 3.0 * math.pi * a**3)

        def shell_area(s):
            s = np.asarray(s, dtype=float)
            if D == 0:
                return np.where(s <= a, 4 * math.pi * s * s, 0.0)
            cos = np.clip((s * s + D * D - a * a) / (2 * s * D), -1.0, 1.0)
            return 2 * math.pi * s * s * (1.0 - cos)

        hi = min(w, D + a)
        if hi <= max(D - a, 0.0):
            return 0.0
        breaks = (abs(D - a),)
        return density * _radial_quad(lambda s: panel.profile(j, s) * shell_area(s), 0.0, hi, breaks)
    raise TypeError(f"unsupported component {type(comp).__name__}")


def panel_integrals(mu, panel: TestFunctionPanel) -> np.ndarray:
    """``int f_j dmu`` for every bump."""
    if isinstance(mu, EmpiricalMeasure):
        if len(mu.points) == 0:
            return np.zeros(len(panel))
        return mu.weight * panel.evaluate(mu.points).sum(axis=0)
    if isinstance(mu, CompositeMeasure):
        return np.array(
            [math.fsum(_component_integral(panel, j, c) for c in mu.components) for j in range(len(panel))]
        )
    raise TypeError(f"unsupported measure type {type(mu).__name__}")


def weakstar_error(mu1, mu2, panel: TestFunctionPanel) -> float:
    """``max_j |int f_j dmu1 - int f_j dmu2|``."""
    if len(panel) == 0:
        raise ValueError("empty panel")
    return float(np.max(np.abs(panel_integrals(mu1, panel) - panel_integrals(mu2, panel))))


# -- sweeps -------------------------------------------------------------------------


def integer_charges(fractions: Sequence[float], Z: int) -> np.ndarray:
    """Split integer ``Z`` by largest remainder (lowest index on ties)."""
    z = np.asarray(fractions, dtype=float)
    z = z / z.sum()
    t = z * Z
    base = np.floor(t).astype(int)
    r = int(Z - base.sum())
    order = np.argsort(-(t - base), kind="stable")
    base[order[:r]] += 1
    return base


def molecule(positions, fractions: Sequence[float], d: float, Z: int) -> NuclearConfig:
    return NuclearConfig(positions, integer_charges(fractions, Z).astype(float), d)


def _with_seed(opts: OptimizeOptions, offset: int) -> OptimizeOptions:
    return replace(opts, seed=int(opts.seed) + offset)


def neutrality_sweep(
    positions, fractions: Sequence[float], d: float, Z_schedule: Sequence[int], opts: OptimizeOptions
) -> Table:
    M = len(fractions)
    cols = ("Z", "N") + tuple(f"count_{a}" for a in range(M)) + tuple(f"ratio_{a}" for a in range(M)) + (
        "max_deviation",
        "absorbed",
    )
    table = Table(cols)
    for k, Z in enumerate(Z_schedule):
        nuc = molecule(positions, fractions, d, int(Z))
        res = minimize(int(Z), nuc, _with_seed(opts, k))
        counts = res.per_nucleus_counts
        ratios = tuple(c / float(q) for c, q in zip(counts, nuc.charges))
        dev = max(abs(r - 1.0) for r in ratios)
        table.rows.append((int(Z), int(Z)) + tuple(counts) + ratios + (dev, res.absorbed))
    return table


def fit_rate(N: Sequence[float], gaps: Sequence[float]) -> float:
    """Least-squares slope of ``log|gap|`` against ``log N`` over the top half of the schedule."""
    N = np.asarray(N, dtype=float)
    g = np.abs(np.asarray(gaps, dtype=float))
    k = len(N) // 2
    sel = slice(k if len(N) - k >= 2 else 0, None)
    x, y = np.log(N[sel]), np.log(np.maximum(g[sel], 1e-300))
    if len(x) < 2:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def energy_sweep(
    positions, fractions: Sequence[float], d: float, Z_schedule: Sequence[int], opts: OptimizeOptions
) -> Table:
    table = Table(("Z", "N", "V_over_N2", "limit", "gap"))
    Ns, gaps = [], []
    for k, Z in enumerate(Z_schedule):
        nuc = molecule(positions, fractions, d, int(Z))
        limit = limit_energy(nuc, 1.0)
        res = minimize(int(Z), nuc, _with_seed(opts, k))
        e = res.energy.total / float(Z) ** 2
        table.rows.append((int(Z), int(Z), e, limit, e - limit))
        Ns.append(Z)
        gaps.append(e - limit)
    table.meta["rate_exponent"] = fit_rate(Ns, gaps)
    return table


def escaped_count(result: OptimizeResult, nuc: NuclearConfig, radius: float = ESCAPE_RADIUS) -> int:
    """Electrons farther than ``radius * d`` from every nucleus."""
    x = result.config.points
    dist = np.linalg.norm(x[:, None, :] - nuc.positions[None, :, :], axis=-1).min(axis=1)
    return int(np.sum(dist > radius * nuc.hardcore_radius))


def saturation_curve(
    positions,
    fractions: Sequence[float],
    d: float,
    Z: int,
    lambda_schedule: Sequence[float],
    opts: OptimizeOptions,
) -> Table:
    table = Table(("lambda", "N", "e", "farthest", "escaped"))
    nuc = molecule(positions, fractions, d, int(Z))
    for k, lam in enumerate(lambda_schedule):
        N = int(round(lam * Z))
        res = minimize(N, nuc, _with_seed(opts, k))
        table.rows.append((float(lam), N, res.energy.total / float(Z) ** 2, res.farthest_distance, escaped_count(res, nuc)))
    return table


def stays_bound(N: int, nuc: NuclearConfig, opts: OptimizeOptions) -> bool:
    """Whether the best configuration keeps every electron within the escape radius."""
    return escaped_count(minimize(N, nuc, opts), nuc) == 0


def instability_sweep(
    positions,
    fractions: Sequence[float],
    d: float,
    Z_schedule: Sequence[int],
    opts: OptimizeOptions,
    max_factor: float = 2.0,
) -> Table:
    """Largest ``N`` (scanning upward from ``Z``) whose best configuration stays bound."""
    table = Table(("Z", "N_hat", "ratio"))
    table.meta["proxy"] = f"all electrons within {ESCAPE_RADIUS} d of a nucleus"
    for k, Z in enumerate(Z_schedule):
        nuc = molecule(positions, fractions, d, int(Z))
        o = _with_seed(opts, k)
        N = int(Z)
        while N < max_factor * Z and stays_bound(N + 1, nuc, o):
            N += 1
        table.rows.append((int(Z), N, N / float(Z)))
    return table
