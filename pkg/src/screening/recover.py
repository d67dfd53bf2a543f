"""Discrete approximations of a continuum target measure.

Given a target ``mu`` with bounded density outside the hard cores, build a cubic
mesh over its support, allocate ``N`` unit charges to the cells in proportion to
the cell masses, and place them on a fine cubic lattice inside each cell.  The
resulting empirical measures have energies ``I_{N,Z}`` approaching ``I(mu)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import TestFunctionPanel, weakstar_error
from .continuum import DomainError, continuum_energy
from .core import (
    CompositeMeasure,
    EmpiricalMeasure,
    LimitParams,
    NuclearConfig,
    PointAtom,
    SphericalShell,
    UniformBall,
)
from .energy import empirical_energy

CSV_COLUMNS = ("Z", "N", "h", "a", "I_NZ", "I_target", "energy_gap", "weakstar_err")

# shells carry no bounded density; they are spread over an annulus this thick (in units of d)
SHELL_THICKNESS = 0.05
# far-away remainder charges may shift the energy by at most this relative amount
FAR_FIELD_TOLERANCE = 1e-6


class MeshTooCoarseError(ValueError):
    """Covering cubes reach into a hard core; a smaller parent size is needed."""


class AllocationError(ValueError):
    """The requested number of charges cannot be distributed over the mesh."""


class LatticeCapacityError(RuntimeError):
    """A cell's lattice has fewer sites than charges assigned to it."""


# -- density pieces ---------------------------------------------------------------


@dataclass(frozen=True)
class _Annulus:
    """Uniform density on ``inner <= |x - center| <= outer`` (``inner = 0`` is a ball)."""

    center: np.ndarray
    inner: float
    outer: float
    mass: float

    @property
    def density(self) -> float:
        return self.mass / (4.0 / 3.0 * math.pi * (self.outer**3 - self.inner**3))


def _density_pieces(mu: CompositeMeasure, d: float) -> list[_Annulus]:
    pieces = []
    for c in mu.components:
        if isinstance(c, PointAtom):
            raise DomainError("point atoms have no bounded density and cannot be recovered")
        if isinstance(c, SphericalShell):
            pieces.append(_Annulus(c.center, c.radius, c.radius + SHELL_THICKNESS * d, c.mass))
        elif isinstance(c, UniformBall):
            pieces.append(_Annulus(c.center, 0.0, c.radius, c.mass))
    return pieces


# -- mesh -------------------------------------------------------------------------


@dataclass(frozen=True)
class Mesh:
    cell_size: float
    cells: np.ndarray  # low corners, shape (K, 3); cube i is [c, c + h) per axis
    parent_size: float
    subdivision: int
    parent_count: int

    @property
    def centers(self) -> np.ndarray:
        return self.cells + 0.5 * self.cell_size

    def __len__(self) -> int:
        return len(self.cells)


def _cube_distance(point: np.ndarray, lows: np.ndarray, size: float) -> np.ndarray:
    """Distance from ``point`` to each closed cube ``[low, low + size]``."""
    gap = np.maximum(np.maximum(lows - point, point - (lows + size)), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def _cube_farthest(point: np.ndarray, lows: np.ndarray, size: float) -> np.ndarray:
    far = np.maximum(np.abs(lows - point), np.abs(lows + size - point))
    return np.sqrt(np.sum(far * far, axis=-1))


def build_mesh(mu: CompositeMeasure, nuc: NuclearConfig, h0: float, n: int) -> Mesh:
    """Parent cubes of side ``h0`` on the grid ``h0 * Z^3`` that meet the support, each split into ``n^3`` cells."""
    if not h0 > 0 or n < 1:
        raise ValueError("need h0 > 0 and n >= 1")
    d = nuc.hardcore_radius
    pieces = _density_pieces(mu, d)
    if not pieces:
        raise DomainError("target has no mass")
    for p in pieces:
        for R in nuc.positions:
            D = float(np.linalg.norm(p.center - R))
            # closest approach of the closed annulus to R
            closest = max(D - p.outer, p.inner - D, 0.0)
            if closest <= d:
                raise DomainError("target support meets the closed hard-core region")

    lo = np.min([p.center - p.outer for p in pieces], axis=0)
    hi = np.max([p.center + p.outer for p in pieces], axis=0)
    i0 = np.floor(lo / h0).astype(int)
    i1 = np.ceil(hi / h0).astype(int)
    grid = np.stack(
        np.meshgrid(*[np.arange(a, b) for a, b in zip(i0, i1)], indexing="ij"), axis=-1
    ).reshape(-1, 3)
    lows = grid * h0
    hit = np.zeros(len(lows), dtype=bool)
    for p in pieces:
        near = _cube_distance(p.center, lows, h0) < p.outer
        if p.inner > 0:
            near &= _cube_farthest(p.center, lows, h0) > p.inner
        hit |= near
    parents = lows[hit]
    for R in nuc.positions:
        if np.any(_cube_distance(R, parents, h0) < d):
            raise MeshTooCoarseError(f"parent cubes of size {h0} reach into a hard core; reduce h0")

    h = h0 / n
    sub = np.stack(np.meshgrid(*[np.arange(n)] * 3, indexing="ij"), axis=-1).reshape(-1, 3) * h
    cells = (parents[:, None, :] + sub[None, :, :]).reshape(-1, 3)
    return Mesh(cell_size=h, cells=cells, parent_size=h0, subdivision=n, parent_count=len(parents))


# -- exact-area / quadrature volumes ----------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _chord_primitive(u, rho):
    """``int_0^u sqrt(rho^2 - t^2) dt`` with ``u`` clipped to ``[-rho, rho]``."""
    u = np.clip(u, -rho, rho)
    s = np.sqrt(np.maximum(rho * rho - u * u, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        asn = np.where(rho > 0, np.arcsin(np.clip(u / np.where(rho > 0, rho, 1.0), -1, 1)), 0.0)
    return 0.5 * (u * s + rho * rho * asn)


def _quadrant_area(Y, Zc, rho):
    """Area of the disk ``|p| < rho`` intersected with ``{y >= Y, z >= Zc}``."""
    half = 2.0 * (_chord_primitive(rho, rho) - _chord_primitive(Y, rho))

    def upper(Y, Zp):
        # Zp >= 0
        w = np.sqrt(np.maximum(rho * rho - Zp * Zp, 0.0))
        lo = np.clip(Y, -w, w)
        val = (_chord_primitive(w, rho) - _chord_primitive(lo, rho)) - Zp * (w - lo)
        return np.where(Zp < rho, val, 0.0)

    return np.where(Zc >= 0, upper(Y, np.abs(Zc)), half - upper(Y, np.abs(Zc)))


def _rect_disk_area(y0, y1, z0, z1, rho):
    q = _quadrant_area
    return q(y0, z0, rho) - q(y1, z0, rho) - q(y0, z1, rho) + q(y1, z1, rho)


def _ball_cube_volume(center: np.ndarray, radius: float, lows: np.ndarray, h: float) -> np.ndarray:
    """Volume of ``B(center, radius)`` inside each cube ``[low, low + h]``."""
    vol = np.zeros(len(lows))
    if radius <= 0 or len(lows) == 0:
        return vol
    near = _cube_distance(center, lows, h)
    far = _cube_farthest(center, lows, h)
    inside = far <= radius
    vol[inside] = h**3
    edge = np.nonzero((near < radius) & ~inside)[0]
    if edge.size == 0:
        return vol
    rel = lows[edge] - center
    x0 = np.maximum(rel[:, 0], -radius)
    x1 = np.minimum(rel[:, 0] + h, radius)
    y0, y1 = rel[:, 1], rel[:, 1] + h
    z0, z1 = rel[:, 2], rel[:, 2] + h
    # the slice area is smooth in x except where the slice circle touches a rectangle edge or corner
    rhos = np.stack(
        [np.abs(y0), np.abs(y1), np.abs(z0), np.abs(z1)]
        + [np.hypot(a, b) for a in (y0, y1) for b in (z0, z1)],
        axis=1,
    )
    xb = np.sqrt(np.maximum(radius**2 - rhos**2, 0.0))
    breaks = np.concatenate([x0[:, None], x1[:, None], xb, -xb], axis=1)
    breaks = np.sort(np.clip(breaks, x0[:, None], x1[:, None]), axis=1)
    a, b = breaks[:, :-1], breaks[:, 1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    xs = mid[..., None] + half[..., None] * _GL_X
    rho = np.sqrt(np.maximum(radius**2 - xs**2, 0.0))
    area = _rect_disk_area(
        y0[:, None, None], y1[:, None, None], z0[:, None, None], z1[:, None, None], rho
    )
    vol[edge] = np.sum(half[..., None] * _GL_W * area, axis=(1, 2))
    return vol


def cell_masses(mu: CompositeMeasure, mesh: Mesh, d: float) -> np.ndarray:
    """Target mass in each cell (shells spread over their annuli)."""
    m = np.zeros(len(mesh))
    for p in _density_pieces(mu, d):
        vol = _ball_cube_volume(p.center, p.outer, mesh.cells, mesh.cell_size)
        if p.inner > 0:
            vol = vol - _ball_cube_volume(p.center, p.inner, mesh.cells, mesh.cell_size)
        piece = p.density * np.maximum(vol, 0.0)
        total = piece.sum()
        if total > 0:
            piece *= p.mass / total  # remove quadrature error in the piece's total
        m += piece
    return m


# -- allocation -------------------------------------------------------------------


@dataclass(frozen=True)
class Allocation:
    per_cell_counts: np.ndarray
    amplitude: float
    cell_masses: np.ndarray = field(repr=False)
    Z: float = 1.0

    @property
    def N(self) -> int:
        return int(self.per_cell_counts.sum())

    def check(self) -> bool:
        """The two-sided count bound and the per-cell 1/Z bound."""
        L = self.per_cell_counts
        target = self.amplitude * self.cell_masses
        ok_zero = np.all(L[self.cell_masses == 0] == 0)
        lower = np.all((L - 1) / self.Z <= target + 1e-12)
        upper = np.all(target <= (L + 1) / self.Z + 1e-12)
        return bool(ok_zero and lower and upper)


def allocate_masses(
    mu: CompositeMeasure,
    mesh: Mesh,
    N: int,
    Z: float,
    lam: float,
    d: float = 0.0,
    masses: np.ndarray | None = None,
) -> Allocation:
    """Largest-remainder rounding of ``Z * phi * mu(Q_i)`` with ``phi = N / (Z * lam)``.

    The counts sum to ``round(N * mass(mu) / lam)``, which is ``N`` when the
    target carries the full mass ``lam``.
    """
    if N < 0:
        raise AllocationError("N must be nonnegative")
    m = cell_masses(mu, mesh, d) if masses is None else np.asarray(masses, dtype=float)
    phi = N / (Z * lam)
    if N == 0:
        return Allocation(np.zeros(len(m), dtype=np.int64), phi, m, Z)
    mass = math.fsum(m)
    if mass <= 0:
        raise AllocationError("mesh carries no target mass")
    t = Z * phi * m
    total = int(round(Z * phi * mass))
    base = np.floor(t).astype(np.int64)
    r = total - int(base.sum())
    frac = t - base
    candidates = np.nonzero(m > 0)[0]
    if r < 0 or r > candidates.size:
        raise AllocationError(f"cannot place remainder {r} on {candidates.size} cells")
    # stable sort keeps the lower index first among equal remainders
    order = candidates[np.argsort(-frac[candidates], kind="stable")]
    base[order[:r]] += 1
    return Allocation(base, phi, m, Z)


# -- lattice ----------------------------------------------------------------------


def lattice_side(L_plus: int) -> int:
    """``ceil(L_plus ** (1/3))`` in exact integer arithmetic."""
    k = max(1, int(round(L_plus ** (1.0 / 3.0))))
    while k**3 < L_plus:
        k += 1
    while k > 1 and (k - 1) ** 3 >= L_plus:
        k -= 1
    return k


def spacing_within_bounds(a: float, h: float, L_plus: float) -> bool:
    """``h / (2 L^(1/3)) <= a <= h / L^(1/3)``."""
    c = L_plus ** (1.0 / 3.0)
    return h / (2 * c) * (1 - 1e-12) <= a <= h / c * (1 + 1e-12)


def place_lattice(mesh: Mesh, alloc: Allocation, Z: float, C: float | None = None) -> EmpiricalMeasure:
    """Put each cell's charges on the first sites (lexicographic) of ``low + a * {0..k-1}^3``."""
    L = alloc.per_cell_counts
    L_plus = max(1, int(L.max()) if L.size else 1)
    k = lattice_side(L_plus)
    h = mesh.cell_size
    a = h / k
    if not spacing_within_bounds(a, h, L_plus):
        raise LatticeCapacityError("lattice spacing outside its bounds")
    if C is not None:
        asymptotic = C * h**3 * Z
        if asymptotic >= L_plus and not spacing_within_bounds(h / lattice_side(math.ceil(asymptotic)), h, asymptotic):
            raise LatticeCapacityError("asymptotic spacing bound violated")
    if np.any(L > k**3):
        raise LatticeCapacityError(f"cell needs {int(L.max())} sites but holds {k**3}")
    sites = np.stack(np.meshgrid(*[np.arange(k)] * 3, indexing="ij"), axis=-1).reshape(-1, 3) * a
    occupied = np.nonzero(L)[0]
    pts = [mesh.cells[i] + sites[: L[i]] for i in occupied]
    points = np.concatenate(pts) if pts else np.zeros((0, 3))
    return EmpiricalMeasure(points, 1.0 / Z)


def lattice_spacing(alloc: Allocation, mesh: Mesh) -> float:
    L_plus = max(1, int(alloc.per_cell_counts.max()) if alloc.per_cell_counts.size else 1)
    return mesh.cell_size / lattice_side(L_plus)


# -- far field --------------------------------------------------------------------


def far_points(count: int, nuc: NuclearConfig, near: np.ndarray, Z: float, scale: float) -> np.ndarray:
    """``count`` points on a ray far from everything, spaced so their energy share is tiny.

    ``scale`` is a reference energy magnitude; the spacing doubles until the
    far points change ``I_{N,Z}`` by less than ``FAR_FIELD_TOLERANCE * scale``.
    """
    if count == 0:
        return np.zeros((0, 3))
    body = np.vstack([nuc.positions, near]) if len(near) else nuc.positions
    diam = max(float(np.max(np.linalg.norm(body - body.mean(axis=0), axis=1))) * 2, 1.0)
    direction = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
    origin = body.mean(axis=0)
    spacing = 1e3 * diam
    n_near = len(near)
    while True:
        # crude upper bound: self-repulsion of the ray plus interaction with the bulk
        self_part = count * (1.0 + math.log(max(count, 1))) / spacing
        cross = count * (n_near + Z) / spacing
        if (self_part + cross) / Z**2 < FAR_FIELD_TOLERANCE * scale:
            break
        spacing *= 2.0
    steps = (1.0 + np.arange(count))[:, None] * spacing
    return origin + steps * direction


# -- the sequence -----------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryStep:
    Z: float
    N: int
    h: float
    a: float
    I_NZ: float
    I_target: float
    energy_gap: float
    weakstar_err: float
    allocation_ok: bool
    short_range: float
    short_range_bound: float
    measure: EmpiricalMeasure = field(repr=False)

    @property
    def relative_gap(self) -> float:
        return abs(self.energy_gap) / abs(self.I_target) if self.I_target else math.inf

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


def default_panel(mu: CompositeMeasure, size: int = 12, seed: int = 7) -> TestFunctionPanel:
    """Bumps centred inside the target's bounding region, widths comparable to its extent."""
    comps = mu.components
    lo = np.min([c.center - c.radius for c in comps], axis=0)
    hi = np.max([c.center + c.radius for c in comps], axis=0)
    extent = float(np.max(hi - lo))
    rng = np.random.default_rng(seed)
    centers = lo + rng.random((size, 3)) * (hi - lo)
    widths = extent * (0.25 + 0.5 * rng.random(size))
    return TestFunctionPanel(centers=centers, widths=widths, amplitudes=np.ones(size))


def _short_range(points: np.ndarray, Z: float, alpha: float, a: float) -> tuple[float, float]:
    from .energy import short_range_pair_sum

    lhs = 2.0 * short_range_pair_sum(points, alpha) / Z**2
    # distinct points of a lattice of spacing a: each has at most one neighbour per site
    rhs = len(points) * lattice_reciprocal_sum(a, alpha, slack=1e-9) / Z**2
    return lhs, rhs


def recovery_sequence(
    mu: CompositeMeasure,
    nuc: NuclearConfig,
    params: LimitParams,
    Z_schedule: Sequence[float],
    mesh_exponent: float = 1.0 / 6.0,
    h0: float = 0.5,
    panel: TestFunctionPanel | None = None,
) -> list[RecoveryStep]:
    """Build ``mu_N`` for each ``Z`` and report energy and weak* diagnostics."""
    if not 0 < mesh_exponent < 1.0 / 3.0:
        raise ValueError("mesh_exponent must lie in (0, 1/3)")
    lam = params.lam
    mass = mu.total_mass
    if mass > lam * (1 + 1e-12):
        raise DomainError("target mass exceeds the filling factor")
    d = nuc.hardcore_radius
    I_target = continuum_energy(mu, nuc, params)
    panel = panel or default_panel(mu)
    z = np.asarray(params.z_fractions, dtype=float)
    steps = []
    for Z in Z_schedule:
        N = int(round(lam * Z))
        # h = h0 * Z^(-exponent) exactly; parents of side n*h stay close to h0
        n = max(1, int(round(Z**mesh_exponent)))
        mesh = build_mesh(mu, nuc, n * h0 * Z ** (-mesh_exponent), n)
        masses = cell_masses(mu, mesh, d)
        alloc = allocate_masses(mu, mesh, N, Z, lam, d, masses)
        N_mesh = alloc.N
        phi = alloc.amplitude
        near = place_lattice(mesh, alloc, Z)
        a = lattice_spacing(alloc, mesh)
        far = far_points(N - N_mesh, nuc, near.points, Z, max(abs(I_target), 1e-3))
        pts = np.vstack([near.points, far]) if len(far) else near.points
        mu_N = EmpiricalMeasure(pts, 1.0 / Z)
        I_NZ = empirical_energy(mu_N, nuc, z)
        err = weakstar_error(EmpiricalMeasure(near.points, 1.0 / Z), mu.scaled(phi), panel)
        sr, bound = _short_range(near.points, Z, mesh.cell_size, a)
        steps.append(
            RecoveryStep(
                Z=float(Z),
                N=N,
                h=mesh.cell_size,
                a=a,
                I_NZ=I_NZ,
                I_target=I_target,
                energy_gap=I_NZ - I_target,
                weakstar_err=err,
                allocation_ok=bool(alloc.check() and (N_mesh == N or mass < lam)),
                short_range=sr,
                short_range_bound=bound,
                measure=mu_N,
            )
        )
    return steps


def to_csv(steps: Sequence[RecoveryStep]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in steps:
        w.writerow([repr(v) if isinstance(v, float) else v for v in s.row()])
    return buf.getvalue()


def lattice_reciprocal_sum(a: float, alpha: float, slack: float = 0.0) -> float:
    """``sum_{y in aZ^3, 0 < |y| < alpha} 1/|y|``.

    ``slack`` widens the cutoff by a relative amount so that sites at distance
    exactly ``alpha`` are counted despite rounding.
    """
    K = int(math.floor(alpha * (1 + slack) / a))
    k = np.arange(-K, K + 1, dtype=float)
    yz = k[:, None] ** 2 + k[None, :] ** 2
    limit = (alpha * (1 + slack) / a) ** 2
    parts = []
    for kx in k:
        r2 = yz + kx * kx
        sel = (r2 > 0) & (r2 < limit)
        parts.append(float(np.sum(1.0 / np.sqrt(r2[sel]))))
    return math.fsum(parts) / a


def riemann_check(alpha: float, a_schedule: Sequence[float]) -> list[tuple[float, float]]:
    """``a^3 * sum_{y in aZ^3, 0<|y|<alpha} 1/|y|`` for each ``a``; tends to ``2 pi alpha^2``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return [(float(a), a**3 * lattice_reciprocal_sum(a, alpha)) for a in a_schedule]
