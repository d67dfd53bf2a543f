"""Electrostatics of composite measures.

Every component (point, uniform shell, uniform ball) has a radial potential
``f(r)`` whose moment ``f(r) r`` has a piecewise-polynomial primitive ``Q``.
Averages over spheres then reduce to ``(Q(D+t) - Q(|D-t|)) / (2 D t)`` and
averages over balls to one-dimensional integrals of piecewise polynomials,
which fixed-order Gauss-Legendre on the polynomial pieces integrates exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CompositeMeasure,
    ConfigError,
    LimitParams,
    NuclearConfig,
    PointAtom,
    RadialMeasure,
    SphericalShell,
    UniformBall,
    nuclear_shells,
)
from .energy import INFINITY


class DomainError(ValueError):
    """Measure support meets the open hard-core region."""


class InfiniteSelfEnergyError(ValueError):
    pass


class UnsupportedCaseError(NotImplementedError):
    pass


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _gl(func, lo: float, hi: float, breaks=()) -> float:
    """Gauss-Legendre on ``[lo, hi]`` split at ``breaks``; exact for piecewise polys of degree <= 15."""
    if hi <= lo:
        return 0.0
    pts = sorted({lo, hi, *(b for b in breaks if lo < b < hi)})
    total = []
    for a, b in zip(pts[:-1], pts[1:]):
        half = 0.5 * (b - a)
        x = a + half * (_GL_X + 1.0)
        total.append(half * float(np.dot(_GL_W, func(x))))
    return math.fsum(total)


# -- radial potentials of unit-mass components ---------------------------------


def _radius(c) -> float:
    return 0.0 if isinstance(c, PointAtom) else c.radius


def radial_potential(kind: str, a: float, r):
    """Potential at distance ``r`` from the centre of a unit-mass component."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        if kind == "point":
            return np.where(r > 0, 1.0 / r, np.inf)
        if kind == "shell":
            return 1.0 / np.maximum(r, a)
        if kind == "ball":
            inside = (3 * a * a - r * r) / (2 * a**3)
            return np.where(r < a, inside, 1.0 / np.maximum(r, a))
    raise ValueError(kind)


def _moment_primitive(kind: str, a: float, r):
    """Primitive of ``radial_potential(r) * r``."""
    r = np.asarray(r, dtype=float)
    if kind == "point":
        return r
    if kind == "shell":
        return np.where(r <= a, r * r / (2 * a), r - a / 2)
    if kind == "ball":
        inside = (1.5 * a * a * r * r - 0.25 * r**4) / (2 * a**3)
        return np.where(r < a, inside, r - 3 * a / 8)
    raise ValueError(kind)


def sphere_average(kind: str, a: float, t, D: float):
    """Average of the unit component's potential over a sphere of radius ``t`` whose
    centre sits at distance ``D`` from the component centre."""
    t = np.asarray(t, dtype=float)
    if D == 0:
        return radial_potential(kind, a, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = (_moment_primitive(kind, a, D + t) - _moment_primitive(kind, a, np.abs(D - t))) / (2 * D * t)
    return np.where(t > 0, avg, radial_potential(kind, a, D))


def _breaks(a: float, D: float) -> list[float]:
    return [abs(a - D), a + D, D, a]


def _ball_average(kind: str, a: float, b: float, D: float) -> float:
    """Average of the unit component's potential over a uniform ball of radius ``b``."""
    return _gl(lambda t: 3 * t * t / b**3 * sphere_average(kind, a, t, D), 0.0, b, _breaks(a, D))


def pair_integral(ci, cj) -> float:
    """``int int 1/|x-y| dci(x) dcj(y)`` in closed form."""
    D = float(np.linalg.norm(ci.center - cj.center))
    mass = ci.mass * cj.mass
    if mass == 0:
        return 0.0
    # use the non-point component as the source when possible
    if isinstance(ci, PointAtom) and not isinstance(cj, PointAtom):
        ci, cj = cj, ci
    kind, a = ci.kind, _radius(ci)
    if isinstance(cj, PointAtom):
        val = float(radial_potential(kind, a, D))
    elif isinstance(cj, SphericalShell):
        val = float(sphere_average(kind, a, cj.radius, D))
    else:
        val = _ball_average(kind, a, cj.radius, D)
    return mass * val


def truncated_pair_integral(ci, cj, alpha: float) -> float:
    """``int int min(1/|x-y|, 1/alpha) dci dcj``.

    The truncated kernel is the potential of a unit shell of radius ``alpha``,
    so the integral equals the Coulomb interaction of ``ci`` with ``cj`` smeared
    over spheres of radius ``alpha``.
    """
    D = float(np.linalg.norm(ci.center - cj.center))
    mass = ci.mass * cj.mass
    if mass == 0:
        return 0.0
    if isinstance(ci, PointAtom) and not isinstance(cj, PointAtom):
        ci, cj = cj, ci
    kind, a = ci.kind, _radius(ci)
    rb = _breaks(a, D)

    def smeared_shell(s: float) -> float:
        # radial law of |y + u|, |y| = s, u uniform on the alpha-sphere: r/(2 s alpha)
        if s == 0:
            return float(sphere_average(kind, a, alpha, D))
        return _gl(
            lambda r: r / (2 * s * alpha) * sphere_average(kind, a, r, D),
            abs(s - alpha),
            s + alpha,
            rb,
        )

    if isinstance(cj, PointAtom):
        val = smeared_shell(0.0)
    elif isinstance(cj, SphericalShell):
        val = smeared_shell(cj.radius)
    else:
        b = cj.radius
        sb = [alpha] + [x - alpha for x in rb] + [alpha - x for x in rb] + [x + alpha for x in rb]
        val = _gl(
            lambda s: np.array([3 * v * v / b**3 * smeared_shell(v) for v in s]), 0.0, b, sb
        )
    return mass * val


def _self_terms(mu: CompositeMeasure) -> float:
    """``int int 1/|x-y| dmu dmu`` (diagonal included)."""
    comps = mu.components
    terms = []
    for i, ci in enumerate(comps):
        if isinstance(ci, PointAtom):
            return INFINITY
        terms.append(pair_integral(ci, ci))
        for cj in comps[i + 1 :]:
            terms.append(2.0 * pair_integral(ci, cj))
    return math.fsum(terms)


def cross_integral(mu1: CompositeMeasure, mu2: CompositeMeasure) -> float:
    return math.fsum(pair_integral(a, b) for a in mu1.components for b in mu2.components)


def attraction_integral(mu: CompositeMeasure, positions, z) -> float:
    """``-sum_a z_a int 1/|x - R_a| dmu``."""
    terms = []
    for R, za in zip(np.asarray(positions, dtype=float), z):
        for c in mu.components:
            D = float(np.linalg.norm(c.center - R))
            terms.append(-za * c.mass * float(radial_potential(c.kind, _radius(c), D)))
    return math.fsum(terms)


# -- public operations -------------------------------------------------------------


def shell_potential(shell: SphericalShell, x) -> float:
    """Newton's theorem: ``m / max(|x - c|, a)``."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - shell.center))
    return shell.mass / max(r, shell.radius)


def _check_support(mu: CompositeMeasure, nuc: NuclearConfig) -> None:
    d = nuc.hardcore_radius
    for c in mu.components:
        for R in nuc.positions:
            D = float(np.linalg.norm(c.center - R))
            if isinstance(c, PointAtom):
                bad = D < d
            elif isinstance(c, SphericalShell):
                # sphere |x - c| = a meets the open ball iff its distance range dips below d
                bad = abs(D - c.radius) < d
            else:
                bad = D - c.radius < d
            if bad:
                raise DomainError(f"{c.kind} component meets the hard core at {R.tolist()}")


def continuum_energy(mu: CompositeMeasure, nuc: NuclearConfig, params: LimitParams) -> float:
    """The continuum functional: nuclear attraction plus half the full Coulomb double integral.

    ``INFINITY`` when the mass exceeds the filling factor or the self-energy diverges.
    """
    _check_support(mu, nuc)
    if mu.total_mass > params.lam * (1 + 1e-14):
        return INFINITY
    if len(params.z_fractions) != nuc.M:
        raise ConfigError("one charge fraction per nucleus required")
    double = _self_terms(mu)
    if double == INFINITY:
        return INFINITY
    return attraction_integral(mu, nuc.positions, params.z_fractions) + 0.5 * double


def _require_finite(mu: CompositeMeasure) -> None:
    if any(isinstance(c, PointAtom) for c in mu.components):
        raise InfiniteSelfEnergyError("point atom with positive mass has infinite self-energy")


def coulomb_norm(mu1: CompositeMeasure, mu2: CompositeMeasure) -> float:
    """``J(mu1 - mu2) = J(mu1) - cross(mu1, mu2) + J(mu2)``."""
    _require_finite(mu1)
    _require_finite(mu2)
    return math.fsum(
        [0.5 * _self_terms(mu1), -cross_integral(mu1, mu2), 0.5 * _self_terms(mu2)]
    )


# -- Fourier representation ------------------------------------------------------


def form_factor(kind: str, a: float, k):
    """Fourier transform of a unit-mass component centred at the origin."""
    k = np.asarray(k, dtype=float)
    if kind == "point":
        return np.ones_like(k)
    t = a * k
    if kind == "shell":
        return np.sinc(t / np.pi)
    if kind == "ball":
        small = np.abs(t) < 1e-3
        ts = np.where(small, 1.0, t)
        big = 3 * (np.sin(ts) - ts * np.cos(ts)) / ts**3
        return np.where(small, 1 - t * t / 10 + t**4 / 280, big)
    raise ValueError(kind)


@dataclass(frozen=True)
class RadialFormFactor:
    kind: str
    scale: float
    mass: float

    def __call__(self, k):
        return self.mass * form_factor(self.kind, self.scale, k)


def _signed_components(mu1: CompositeMeasure, mu2: CompositeMeasure):
    comps = [(c, 1.0) for c in mu1.components] + [(c, -1.0) for c in mu2.components]
    _require_finite(mu1)
    _require_finite(mu2)
    return comps


def _fourier_pair(ci, cj, weight: float, tol: float, damping) -> float:
    """``(1/pi) int_0^inf F_i F_j j0(k D) damping(k) dk`` by Gauss-Legendre panels plus a tail term."""
    D = float(np.linalg.norm(ci.center - cj.center))
    a, b = _radius(ci), _radius(cj)
    scale = max(D, a, b)
    mass2 = abs(weight) * ci.mass * cj.mass
    # |F_shell| <= 1/(a k), |F_ball| <= 6/(a k)^2: pick K with tail bound below 0.1 * tol
    coef, power = mass2, 0
    for kind, r in ((ci.kind, a), (cj.kind, b)):
        q = 1 if kind == "shell" else 2
        coef *= (1.0 if q == 1 else 6.0) / r**q
        power += q
    K = (coef / (math.pi * (power - 1) * 0.1 * tol)) ** (1.0 / (power - 1))
    K = max(K, 50.0 / scale)
    if damping.cutoff is not None:
        K = min(K, damping.cutoff)
    width = math.pi / scale / 2
    if damping.cutoff is not None:
        width = min(width, damping.cutoff / 8)
    n_panel = int(math.ceil(K / width))
    edges = np.linspace(0.0, n_panel * width, n_panel + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (edges[:-1, None] + half[:, None] * (_GL_X[None, :] + 1.0)).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    vals = form_factor(ci.kind, a, nodes) * form_factor(cj.kind, b, nodes)
    vals = vals * np.sinc(nodes * D / np.pi) * damping(nodes)
    body = float(np.dot(weights, vals))
    Kend = edges[-1]
    tail = 0.0
    if damping.cutoff is None and D == 0 and ci.kind == cj.kind == "shell" and a == b:
        # sin^2(ak)/(ak)^2 averages to 1/(2 a^2 k^2) beyond K
        tail = 1.0 / (2 * a * a * Kend)
    return weight * ci.mass * cj.mass * (body + tail) / math.pi


class _NoDamping:
    cutoff = None

    def __call__(self, k):
        return 1.0


class _GaussianDamping:
    def __init__(self, eps: float):
        self.eps = eps
        # exp(-eps^2 k^2) < 1e-18 beyond this
        self.cutoff = math.sqrt(41.5) / eps

    def __call__(self, k):
        return np.exp(-((self.eps * k) ** 2))


def _fourier_sum(mu1, mu2, tol: float, damping) -> float:
    comps = _signed_components(mu1, mu2)
    terms = []
    for i, (ci, si) in enumerate(comps):
        terms.append(_fourier_pair(ci, ci, si * si, tol, damping))
        for cj, sj in comps[i + 1 :]:
            terms.append(_fourier_pair(ci, cj, 2 * si * sj, tol, damping))
    return math.fsum(terms)


def fourier_energy(mu1: CompositeMeasure, mu2: CompositeMeasure, tol: float = 1e-5) -> float:
    """``J(mu1 - mu2)`` from ``1/2 (2 pi)^-3 int 4 pi |k|^-2 |mu1^ - mu2^|^2 dk``.

    After angular integration each component pair contributes
    ``w_i w_j (1/pi) int_0^inf F_i(k) F_j(k) sin(kD)/(kD) dk``.
    """
    return _fourier_sum(mu1, mu2, tol, _NoDamping())


def mollified_energy(
    mu1: CompositeMeasure, mu2: CompositeMeasure, eps: float, tol: float = 1e-5
) -> float:
    """``J`` of the Gaussian-mollified difference, Gaussian of standard deviation ``eps``.

    The squared transform of the mollifier contributes ``exp(-eps^2 k^2)``.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return fourier_energy(mu1, mu2, tol)
    return _fourier_sum(mu1, mu2, tol, _GaussianDamping(eps))


# -- minimizers ----------------------------------------------------------------------


@dataclass(frozen=True)
class MinimizerResult:
    measure: CompositeMeasure
    energy: float
    saturated_mass: float

    def to_dict(self) -> dict:
        return {
            "measure": self.measure.to_dict(),
            "energy": self.energy,
            "saturated_mass": self.saturated_mass,
        }


def explicit_minimizer(nuc: NuclearConfig, params: LimitParams) -> MinimizerResult:
    """Closed-form minimizer: uniform shells on the hard-core spheres.

    One nucleus: a shell of mass ``c = min(lam, z)`` and energy ``-z c/d + c^2/(2d)``.
    Several nuclei with ``lam >= z``: shells of mass ``z_a``.
    """
    z = np.asarray(params.z_fractions, dtype=float)
    if len(z) != nuc.M:
        raise ConfigError("one charge fraction per nucleus required")
    d = nuc.hardcore_radius
    ztot = float(np.sum(z))
    if nuc.M == 1:
        c = min(params.lam, ztot)
        shell = CompositeMeasure((SphericalShell(nuc.positions[0], d, c),))
        return MinimizerResult(shell, -ztot * c / d + c * c / (2 * d), c)
    if params.lam < ztot:
        raise UnsupportedCaseError("no closed form for molecules with lam < z")
    i, j = np.triu_indices(nuc.M, 1)
    sep = np.linalg.norm(nuc.positions[i] - nuc.positions[j], axis=1)
    energy = -math.fsum(z * z / (2 * d)) - math.fsum(z[i] * z[j] / sep)
    return MinimizerResult(nuclear_shells(nuc, z), energy, ztot)


def radial_energy(nu: RadialMeasure, z: float) -> float:
    """``-sum z m_i / r_i + 1/2 sum_ij m_i m_j min(1/r_i, 1/r_j)`` (diagonal included)."""
    r, m = nu.radii, nu.masses
    if len(r) == 0:
        return 0.0
    kernel = np.minimum(1.0 / r[:, None], 1.0 / r[None, :])
    return math.fsum([-z * math.fsum(m / r), 0.5 * float(m @ kernel @ m)])


def _project_capped_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto ``{m >= 0, sum m <= cap}``."""
    w = np.maximum(v, 0.0)
    if w.sum() <= cap:
        return w
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - cap
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def radial_minimize(
    z: float,
    lam: float,
    grid: Sequence[float],
    *,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
) -> RadialMeasure:
    """Minimize the radial functional over masses on ``grid`` with total mass ``<= lam``.

    Projected gradient with Armijo backtracking; stops when the projected-gradient
    norm drops below ``tol``.
    """
    r = np.asarray(sorted(set(float(g) for g in grid)))
    if not np.any(r == 1.0):
        raise ValueError("grid must contain r = 1")
    if np.any(r < 1):
        raise ValueError("grid radii must be >= 1")
    if z == 0:
        return RadialMeasure(r, np.zeros_like(r))
    K = np.minimum(1.0 / r[:, None], 1.0 / r[None, :])
    b = z / r

    def f(m):
        return -b @ m + 0.5 * m @ K @ m

    m = np.zeros_like(r)
    step = 1.0 / np.linalg.eigvalsh(K)[-1]
    for _ in range(max_iterations):
        g = K @ m - b
        pg = m - _project_capped_simplex(m - g, lam)
        if np.linalg.norm(pg) < tol:
            break
        t = step
        fm = f(m)
        while True:
            trial = _project_capped_simplex(m - t * g, lam)
            delta = trial - m
            if f(trial) <= fm + g @ delta + delta @ delta / (2 * t) or t < 1e-14:
                break
            t *= 0.5
        m = trial
        step = min(t * 2.0, 1e6)
    return RadialMeasure(r, m)


def rotation_average(
    mu: CompositeMeasure, center, samples: int, seed: int = 0
) -> CompositeMeasure:
    """Monte Carlo average of ``mu`` over random rotations about ``center``.

    Components concentric with ``center`` are rotation fixed points and are kept;
    each other component is replaced by ``samples`` rotated copies of mass ``m/samples``.
    """
    from scipy.spatial.transform import Rotation

    if samples < 1:
        raise ValueError("samples must be >= 1")
    c0 = np.asarray(center, dtype=float)
    rots = Rotation.random(samples, random_state=np.random.default_rng(seed))
    out = []
    for comp in mu.components:
        offset = comp.center - c0
        if np.linalg.norm(offset) == 0:
            out.append(comp)
            continue
        moved = rots.apply(offset) + c0
        for p in moved:
            if isinstance(comp, PointAtom):
                out.append(PointAtom(p, comp.mass / samples))
            else:
                out.append(type(comp)(p, comp.radius, comp.mass / samples))
    return CompositeMeasure(tuple(out))


def limit_energy(nuc: NuclearConfig, lam: float = 1.0) -> float:
    """Limit value of ``V/Z^2`` for charge fractions taken from ``nuc``."""
    return explicit_minimizer(nuc, LimitParams.from_nuclei(nuc, lam)).energy
