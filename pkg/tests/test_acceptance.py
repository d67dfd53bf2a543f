"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the pytest
terminal summary, then asserts it.
"""
import math

import numpy as np
import pytest

from screening.analysis import escaped_count, screening_stats
from screening.continuum import (
    continuum_energy,
    coulomb_norm,
    fourier_energy,
    mollified_energy,
    radial_energy,
    radial_minimize,
)
from screening.core import (
    CompositeMeasure,
    ElectronConfig,
    LimitParams,
    NuclearConfig,
    SphericalShell,
    UniformBall,
    nuclear_shells,
)
from screening.energy import particle_energy, particle_gradient
from screening.optimize import detect_absorption
from screening.recover import recovery_sequence, riemann_check

ORIGIN = ((0.0, 0.0, 0.0),)
PAIR = ((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0))
TRIANGLE = ((0.0, 0.0, 0.0), (2.0, 0.0, 0.0), (1.0, 1.7, 0.0))


def _atom(run, N, restarts=32):
    return run(N, ORIGIN, (float(N),), 1.0, restarts)


def _random_measure(rng, mass, d=1.0):
    comps = []
    k = int(rng.integers(1, 4))
    for w in rng.dirichlet(np.ones(k)) * mass:
        if rng.random() < 0.5:
            comps.append(SphericalShell(rng.normal(0, 0.3, 3), d + 0.5 + 2 * rng.random(), w))
        else:
            c = rng.standard_normal(3)
            c *= (d + 1.5 + 2 * rng.random()) / np.linalg.norm(c)
            comps.append(UniformBall(c, 0.2 + 0.9 * rng.random(), w))
    return CompositeMeasure(tuple(comps))


def test_criterion_01_atom_limit_energy(run, criteria):
    gaps = {}
    for N in (20, 50, 100, 200):
        nuc, res = _atom(run, N)
        gaps[N] = abs(res.energy.total / N**2 + 0.5)
    ok = gaps[200] <= 0.06 and gaps[200] < gaps[50]
    criteria(1, ok, "gaps " + ", ".join(f"N={n}: {g:.4f}" for n, g in gaps.items()))
    assert ok


def test_criterion_02_molecule_limit_energy(run, criteria):
    nuc, res = run(200, PAIR, (100.0, 100.0), 0.4, 4)
    value = res.energy.total / 200**2  # Z = N
    gap = abs(value + 0.75)
    criteria(2, gap <= 0.08, f"V/N^2 = {value:.5f}, gap {gap:.4f}")
    assert gap <= 0.08


def test_criterion_03_absorption_battery(run, criteria):
    battery = [_atom(run, N) for N in (20, 50, 100, 200)]
    battery += [
        run(8, ORIGIN, (10.0,), 1.0, 8),
        run(200, PAIR, (100.0, 100.0), 0.4, 4),
        run(100, PAIR, (60.0, 40.0), 0.4, 4),
        run(90, TRIANGLE, (30.0, 30.0, 30.0), 0.5, 4),
        run(25, TRIANGLE, (10.0, 10.0, 10.0), 0.5, 4),
    ]
    flags = [detect_absorption(res.config, nuc, 1e-6)[0] for nuc, res in battery]
    criteria(3, all(flags), f"{sum(flags)}/{len(flags)} best configurations absorbed")
    assert all(flags)


def test_criterion_04_neutrality(run, criteria):
    nuc, res = run(100, PAIR, (60.0, 40.0), 0.4, 4)
    counts = res.per_nucleus_counts
    ok = res.absorbed and abs(counts[0] - 60) <= 3 and abs(counts[1] - 40) <= 3
    criteria(4, ok, f"counts {counts}")
    assert ok


def test_criterion_05_equidistribution(run, criteria):
    nuc, res = _atom(run, 200)
    st = screening_stats(res, nuc)
    ok = st.dipole_norms[0] <= 0.05 and st.cap_discrepancy <= 0.08
    criteria(5, ok, f"dipole {st.dipole_norms[0]:.2e}, cap discrepancy {st.cap_discrepancy:.4f}")
    assert ok


def test_criterion_06_coulomb_positivity(criteria):
    rng = np.random.default_rng(2024)
    worst, worst_self = math.inf, 0.0
    for _ in range(200):
        m = 0.1 + 2 * rng.random()
        a, b = _random_measure(rng, m), _random_measure(rng, m)
        worst = min(worst, coulomb_norm(a, b))
        worst_self = max(worst_self, abs(coulomb_norm(a, a)))
    ok = worst >= -1e-9 and worst_self <= 1e-9
    criteria(6, ok, f"min J {worst:.3e}, max |J(mu - mu)| {worst_self:.1e}")
    assert ok


FOURIER_PAIRS = {
    "concentric shells": (
        CompositeMeasure((SphericalShell([0, 0, 0], 1.0, 1.0),)),
        CompositeMeasure((SphericalShell([0, 0, 0], 2.0, 1.0),)),
    ),
    "shell vs ball": (
        CompositeMeasure((SphericalShell([0, 0, 0], 1.0, 1.0),)),
        CompositeMeasure((UniformBall([0, 0, 0], 1.0, 1.0),)),
    ),
    "two-center disjoint": (
        CompositeMeasure((UniformBall([0, 0, 0], 1.0, 1.0),)),
        CompositeMeasure((UniformBall([3, 0, 0], 1.0, 1.0),)),
    ),
}


def test_criterion_07_fourier_identity(criteria):
    errs = {}
    for name, (a, b) in FOURIER_PAIRS.items():
        J, F = coulomb_norm(a, b), fourier_energy(a, b)
        errs[name] = abs(J - F) / abs(J)
    ok = max(errs.values()) <= 1e-3
    criteria(7, ok, ", ".join(f"{k}: {v:.1e}" for k, v in errs.items()))
    assert ok


def test_criterion_08_mollification(criteria):
    a, b = FOURIER_PAIRS["concentric shells"]
    values = [mollified_energy(a, b, eps) for eps in (1.0, 0.1, 0.01, 0.001)]
    J = coulomb_norm(a, b)
    monotone = all(x <= y for x, y in zip(values, values[1:]))
    close = abs(values[-1] - J) <= 0.01 * J
    criteria(8, monotone and close, "values " + ", ".join(f"{v:.6f}" for v in values) + f" vs J = {J:.6f}")
    assert monotone and close


def test_criterion_09_completing_the_square(criteria):
    nuc = NuclearConfig.single(1.0, 1.0)
    params = LimitParams(10.0)
    rho = nuclear_shells(nuc)
    J_rho = coulomb_norm(rho, CompositeMeasure())
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        mu = _random_measure(rng, 0.2 + 2 * rng.random())
        worst = max(worst, abs(continuum_energy(mu, nuc, params) - (coulomb_norm(rho, mu) - J_rho)))
    criteria(9, worst <= 1e-9, f"max deviation {worst:.2e}")
    assert worst <= 1e-9


def test_criterion_10_radial_theory(criteria):
    nu = radial_minimize(1.0, 0.5, [1.0, 1.5, 2.0, 3.0, 5.0])
    value = radial_energy(nu, 1.0)
    ok = abs(nu.masses[0] - 0.5) <= 1e-6 and nu.masses[1:].sum() < 1e-6 and abs(value + 0.375) <= 1e-8
    criteria(10, ok, f"mass at r=1 {nu.masses[0]:.9f}, elsewhere {nu.masses[1:].sum():.1e}, value {value:.10f}")
    assert ok


def test_criterion_11_recovery_sequence(criteria):
    nuc = NuclearConfig.single(1.0, 1.0)
    mu = CompositeMeasure((UniformBall([3, 0, 0], 1.0, 1.0),))
    steps = recovery_sequence(mu, nuc, LimitParams(1.0), [1e2, 1e3, 1e4], mesh_exponent=1 / 6)
    target_ok = abs(steps[0].I_target - 0.266667) <= 1e-6
    gap = steps[-1].relative_gap
    errs = [s.weakstar_err for s in steps]
    decreasing = all(x > y for x, y in zip(errs, errs[1:]))
    alloc_ok = all(s.allocation_ok and s.N == int(round(s.Z)) for s in steps)
    ok = target_ok and gap <= 0.02 and decreasing and alloc_ok
    criteria(
        11,
        ok,
        f"I = {steps[0].I_target:.6f}, gap at Z=1e4 {gap:.4f} (limit 0.02), "
        f"weak* {', '.join(f'{e:.4f}' for e in errs)}, allocation {'ok' if alloc_ok else 'broken'}",
    )
    assert target_ok and decreasing and alloc_ok
    assert gap <= 0.02


def test_criterion_12_riemann_sum(criteria):
    [(a, value)] = riemann_check(1.0, [0.01])
    rel = abs(value - 2 * math.pi) / (2 * math.pi)
    criteria(12, rel <= 0.01, f"a^3 sum = {value:.6f}, relative error {rel:.2e}")
    assert rel <= 0.01


def test_criterion_13_saturation_and_escape(run, criteria):
    nuc, neutral = run(100, ORIGIN, (100.0,), 1.0, 8)
    _, mid = run(110, ORIGIN, (100.0,), 1.0, 8)
    _, ion = run(120, ORIGIN, (100.0,), 1.0, 8)
    e1 = neutral.energy.total / 1e4
    drift = max(abs(r.energy.total / 1e4 - e1) / abs(e1) for r in (mid, ion))
    escaped = escaped_count(ion, nuc)
    ok = drift <= 0.02 and escaped >= 15
    criteria(13, ok, f"max |e(lam)-e(1)|/|e(1)| over 1.1, 1.2 = {drift:.4f}, escaped {escaped} of 20 (need 15)")
    assert drift <= 0.02
    assert escaped >= 15


def test_criterion_14_gradient(criteria):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(1, 4))
        R = np.arange(M)[:, None] * np.array([4.0, 0, 0]) + rng.normal(0, 0.5, (M, 3))
        nuc = NuclearConfig(R, rng.integers(1, 6, M).astype(float), 0.3)
        N = int(rng.integers(2, 9))
        x = np.zeros((0, 3))
        while len(x) < N:  # admissible points, not too close to one another
            p = R[rng.integers(0, M)] + rng.normal(0, 1.0, 3)
            if np.min(np.linalg.norm(R - p, axis=1)) >= 0.3 and all(np.linalg.norm(x - p, axis=1) >= 0.2):
                x = np.vstack([x, p])
        g = particle_gradient(ElectronConfig(x), nuc)
        h = 1e-5
        fd = np.zeros_like(x)
        for i in range(N):
            for k in range(3):
                xp, xm = x.copy(), x.copy()
                xp[i, k] += h
                xm[i, k] -= h
                fd[i, k] = (
                    particle_energy(ElectronConfig(xp), nuc).total - particle_energy(ElectronConfig(xm), nuc).total
                ) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - g))))
    criteria(14, worst <= 1e-6, f"max |analytic - finite difference| {worst:.2e}")
    assert worst <= 1e-6
