"""Fast property battery over every module, used by ``screening verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import cap_fraction, default_caps, screening_stats
from .continuum import (
    continuum_energy,
    coulomb_norm,
    explicit_minimizer,
    fourier_energy,
    radial_energy,
    radial_minimize,
    shell_potential,
)
from .core import (
    CompositeMeasure,
    ElectronConfig,
    LimitParams,
    NuclearConfig,
    SphericalShell,
    UniformBall,
    check_admissible,
)
from .energy import particle_energy, particle_gradient, repulsion_sum
from .optimize import OptimizeOptions, detect_absorption, minimize
from .recover import (
    allocate_masses,
    build_mesh,
    lattice_spacing,
    place_lattice,
    riemann_check,
    spacing_within_bounds,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def _random_outside(rng, count: int, d: float = 1.0) -> np.ndarray:
    v = rng.standard_normal((count, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return v * (d + 2.0 * rng.random(count))[:, None]


def random_composite(rng, mass: float = 1.0, d: float = 1.0) -> CompositeMeasure:
    """Shells and balls around the origin, all supported outside ``B(0, d)``."""
    comps = []
    k = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(k)) * mass
    for w in weights:
        if rng.random() < 0.5:
            comps.append(SphericalShell(np.zeros(3), d * (1.0 + 2.0 * rng.random()), w))
        else:
            c = rng.standard_normal(3)
            c *= (d + 1.5 + 2.0 * rng.random()) / np.linalg.norm(c)
            comps.append(UniformBall(c, 0.2 + 0.8 * rng.random(), w))
    return CompositeMeasure(tuple(comps))


def check_serialization() -> CheckResult:
    nuc = NuclearConfig([[0, 0, 0], [3, 0, 0]], [2.0, 1.0], 0.5)
    mu = CompositeMeasure((SphericalShell([0, 0, 0], 1.0, 0.5), UniformBall([3, 0, 0], 1.0, 0.5)))
    ok = NuclearConfig.from_dict(nuc.to_dict()).to_dict() == nuc.to_dict() and CompositeMeasure.from_dict(mu.to_dict()).to_dict() == mu.to_dict()
    return CheckResult("core: JSON round trip", bool(ok))


def check_gradient(seeds: int = 10) -> CheckResult:
    worst = 0.0
    for s in range(seeds):
        rng = np.random.default_rng(s)
        nuc = NuclearConfig([[0, 0, 0], [4, 0, 0]], [3.0, 2.0], 1.0)
        x = _random_outside(rng, 5) + nuc.positions[rng.integers(0, 2, 5)]
        g = particle_gradient(ElectronConfig(x), nuc)
        h = 1e-6
        for i in range(len(x)):
            for k in range(3):
                xp, xm = x.copy(), x.copy()
                xp[i, k] += h
                xm[i, k] -= h
                fd = (particle_energy(ElectronConfig(xp), nuc).total - particle_energy(ElectronConfig(xm), nuc).total) / (2 * h)
                worst = max(worst, abs(fd - g[i, k]))
    return CheckResult("energy: gradient vs central differences", worst <= 1e-6, f"max err {worst:.2e}")


def check_translation() -> CheckResult:
    rng = np.random.default_rng(3)
    x = _random_outside(rng, 8)
    shift = np.array([1.5, -2.0, 0.25])
    a, b = repulsion_sum(x), repulsion_sum(x + shift)
    return CheckResult("energy: translation invariance", abs(a - b) <= 1e-12 * abs(a))


def check_newton() -> CheckResult:
    s = SphericalShell([0, 0, 0], 2.0, 3.0)
    ok = math.isclose(shell_potential(s, [5, 0, 0]), 0.6) and math.isclose(shell_potential(s, [0.5, 0, 0]), 1.5)
    return CheckResult("continuum: Newton's theorem", ok)


def check_positivity(pairs: int = 30) -> CheckResult:
    rng = np.random.default_rng(11)
    worst = math.inf
    for _ in range(pairs):
        worst = min(worst, coulomb_norm(random_composite(rng), random_composite(rng)))
    return CheckResult("continuum: Coulomb norm nonnegative", worst >= -1e-9, f"min {worst:.3e}")


def check_square() -> CheckResult:
    nuc = NuclearConfig.single(1.0, 1.0)
    params = LimitParams(10.0)
    rho = CompositeMeasure((SphericalShell([0, 0, 0], 1.0, 1.0),))
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(5):
        mu = random_composite(rng, mass=rng.random() * 2)
        lhs = continuum_energy(mu, nuc, params)
        rhs = coulomb_norm(rho, mu) - coulomb_norm(rho, CompositeMeasure())
        worst = max(worst, abs(lhs - rhs))
    return CheckResult("continuum: completing the square", worst <= 1e-9, f"max err {worst:.2e}")


def check_fourier() -> CheckResult:
    a = CompositeMeasure((SphericalShell([0, 0, 0], 1.0, 1.0),))
    b = CompositeMeasure((SphericalShell([0, 0, 0], 2.0, 1.0),))
    J, F = coulomb_norm(a, b), fourier_energy(a, b)
    return CheckResult("continuum: Fourier identity", abs(J - F) <= 1e-3 * abs(J), f"{J:.6f} vs {F:.6f}")


def check_explicit() -> CheckResult:
    nuc = NuclearConfig.single(1.0, 1.0)
    ok = math.isclose(explicit_minimizer(nuc, LimitParams(1.0)).energy, -0.5)
    ok &= math.isclose(explicit_minimizer(nuc, LimitParams(0.5)).energy, -0.375)
    return CheckResult("continuum: explicit minimizer", ok)


def check_radial() -> CheckResult:
    nu = radial_minimize(1.0, 0.5, [1.0, 1.5, 2.0, 3.0, 5.0])
    m = nu.masses
    ok = abs(m[0] - 0.5) < 1e-6 and m[1:].sum() < 1e-6 and abs(radial_energy(nu, 1.0) + 0.375) < 1e-8
    return CheckResult("continuum: radial minimizer", bool(ok))


def check_optimizer() -> CheckResult:
    nuc = NuclearConfig.single(2.0, 1.0)
    opts = OptimizeOptions(restarts=2)
    r1, r2 = minimize(2, nuc, opts), minimize(2, nuc, opts)
    ok = abs(r1.energy.total + 3.5) < 1e-9 and r1.absorbed and np.array_equal(r1.config.points, r2.config.points)
    ok &= check_admissible(r1.config, nuc)
    return CheckResult("optimize: N=2 atom, determinism, absorption", bool(ok))


def check_molecule() -> CheckResult:
    nuc = NuclearConfig([[-1, 0, 0], [1, 0, 0]], [6.0, 4.0], 0.4)
    r = minimize(10, nuc, OptimizeOptions(restarts=2))
    ok, _ = detect_absorption(r.config, nuc, 1e-6)
    return CheckResult("optimize: molecule absorbed", bool(ok and sum(r.per_nucleus_counts) == 10))


def check_stats() -> CheckResult:
    nuc = NuclearConfig.single(6.0, 1.0)
    r = minimize(6, nuc, OptimizeOptions(restarts=2))
    st = screening_stats(r, nuc)
    ok = st.neutrality_ratios == (1.0,) and st.dipole_norms[0] < 1e-6 and 0 <= st.cap_discrepancy <= 1
    return CheckResult("analysis: octahedron statistics", bool(ok))


def check_caps() -> CheckResult:
    # a fine uniform grid on the sphere reproduces cap areas
    n = 400
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = math.pi * (1 + 5**0.5) * i
    u = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    worst = max(abs(cap_fraction(u, c) - c.area_fraction) for c in default_caps())
    return CheckResult("analysis: cap areas", worst < 0.02, f"max {worst:.3f}")


def check_recovery() -> CheckResult:
    nuc = NuclearConfig.single(1.0, 1.0)
    mu = CompositeMeasure((UniformBall([3, 0, 0], 1.0, 1.0),))
    mesh = build_mesh(mu, nuc, 0.5, 2)
    alloc = allocate_masses(mu, mesh, 500, 500.0, 1.0, 1.0)
    emp = place_lattice(mesh, alloc, 500.0)
    L_plus = max(1, int(alloc.per_cell_counts.max()))
    ok = alloc.N == 500 and alloc.check() and len(emp.points) == 500
    ok &= spacing_within_bounds(lattice_spacing(alloc, mesh), mesh.cell_size, L_plus)
    return CheckResult("recover: allocation and lattice invariants", bool(ok))


def check_riemann() -> CheckResult:
    (_, v1), (_, v2) = riemann_check(1.0, [0.1, 0.05])
    ok = abs(v2 - 2 * math.pi) < abs(v1 - 2 * math.pi) and abs(v2 - 2 * math.pi) < 0.02 * 2 * math.pi
    return CheckResult("recover: Riemann sum converges", ok)


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_serialization,
    check_gradient,
    check_translation,
    check_newton,
    check_positivity,
    check_square,
    check_fourier,
    check_explicit,
    check_radial,
    check_optimizer,
    check_molecule,
    check_stats,
    check_caps,
    check_recovery,
    check_riemann,
)


def run_all() -> list[CheckResult]:
    out = []
    for check in CHECKS:
        try:
            out.append(check())
        except Exception as exc:  # a crashing check is a failed check
            out.append(CheckResult(check.__name__, False, f"{type(exc).__name__}: {exc}"))
    return out
