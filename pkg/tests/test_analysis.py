import math

import numpy as np
import pytest

from screening.analysis import (
    Cap,
    NotAbsorbedError,
    TestFunctionPanel,
    cap_fraction,
    default_caps,
    energy_sweep,
    escaped_count,
    fit_rate,
    instability_sweep,
    integer_charges,
    neutrality_sweep,
    panel_integrals,
    saturation_curve,
    screening_stats,
    weakstar_error,
)
from screening.core import CompositeMeasure, ElectronConfig, NuclearConfig, SphericalShell, UniformBall, to_empirical
from screening.energy import particle_energy
from screening.optimize import OptimizeOptions, minimize

FAST = OptimizeOptions(restarts=2)


@pytest.fixture(scope="module")
def antipodal():
    nuc = NuclearConfig.single(2.0, 1.0)
    return nuc, minimize(2, nuc, FAST)


def _panel(size=8, seed=0):
    rng = np.random.default_rng(seed)
    return TestFunctionPanel(rng.normal(0, 1.5, (size, 3)), 1.0 + 2 * rng.random(size), np.ones(size))


def test_antipodal_statistics(antipodal):
    nuc, res = antipodal
    st = screening_stats(res, nuc)
    assert st.per_nucleus_count == (2,)
    assert st.neutrality_ratios == (1.0,)
    assert st.dipole_norms[0] < 1e-6


def test_equatorial_caps_split_antipodal_pair(antipodal):
    _, res = antipodal
    u = res.config.points / np.linalg.norm(res.config.points, axis=1)[:, None]
    # any hemisphere whose boundary misses both points holds exactly one of them
    axis = np.cross(u[0], [0.3, 0.4, 0.5])
    axis = u[0] + 0.1 * axis / np.linalg.norm(axis)
    assert cap_fraction(u, Cap(axis / np.linalg.norm(axis), math.pi / 2)) == 0.5


def test_default_caps_layout():
    caps = default_caps()
    assert len(caps) == 26
    assert [c.angle for c in caps[:6]] == [math.pi / 2] * 6
    assert caps[6].area_fraction == pytest.approx(0.25)
    assert np.array_equal(default_caps()[10].axis, caps[10].axis)


def test_stats_require_absorption():
    nuc = NuclearConfig.single(1.0, 1.0)
    cfg = ElectronConfig([[3.0, 0, 0]])
    res = minimize(1, nuc, FAST)
    from dataclasses import replace

    off = replace(res, config=cfg, energy=particle_energy(cfg, nuc))
    with pytest.raises(NotAbsorbedError):
        screening_stats(off, nuc)


def test_panel_rejects_small_sizes():
    with pytest.raises(ValueError):
        TestFunctionPanel(np.zeros((4, 3)), np.ones(4), np.ones(4))


def test_weakstar_identical_measures_is_zero():
    mu = CompositeMeasure((SphericalShell([0, 0, 0], 1.0, 0.5), UniformBall([2, 0, 0], 0.7, 0.5)))
    assert weakstar_error(mu, mu, _panel()) == 0.0


@pytest.mark.parametrize("comp", [SphericalShell([0.2, 0, 0], 1.0, 1.0), UniformBall([0.5, -0.3, 0], 1.2, 1.0)])
def test_panel_integrals_match_sampling(comp):
    rng = np.random.default_rng(5)
    n = 200_000
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    if isinstance(comp, UniformBall):
        v *= rng.random(n)[:, None] ** (1 / 3)
    pts = comp.center + comp.radius * v
    panel = _panel()
    exact = panel_integrals(CompositeMeasure((comp,)), panel)
    sampled = panel.evaluate(pts).mean(axis=0)
    assert np.max(np.abs(exact - sampled)) < 5e-3


def test_empirical_panel_integral():
    panel = _panel()
    pts = np.array([[0.1, 0, 0], [0, 0.2, 0]])
    direct = panel.evaluate(pts).sum(axis=0) / 4.0
    assert panel_integrals(to_empirical(ElectronConfig(pts), 4.0), panel) == pytest.approx(direct)


def test_fit_rate_recovers_power_law():
    N = np.array([10, 20, 40, 80, 160])
    assert fit_rate(N, 3.0 * N ** -0.5) == pytest.approx(-0.5)


@pytest.mark.parametrize("fractions,Z,expected", [((0.6, 0.4), 100, [60, 40]), ((1, 1, 1), 10, [4, 3, 3])])
def test_integer_charges(fractions, Z, expected):
    assert integer_charges(fractions, Z).tolist() == expected


def test_single_nucleus_ratio_is_one():
    table = neutrality_sweep([[0, 0, 0]], [1.0], 1.0, [4, 6], FAST)
    assert [r for r in table.column("ratio_0")] == [1.0, 1.0]


def test_energy_sweep_columns():
    table = energy_sweep([[-1, 0, 0], [1, 0, 0]], [0.5, 0.5], 0.4, [4, 8], FAST)
    assert table.columns == ("Z", "N", "V_over_N2", "limit", "gap")
    assert table.column("limit")[0] == pytest.approx(-0.75)
    assert "rate_exponent" in table.meta
    assert table.to_csv().count("\n") == 3


def test_small_atoms_hold_extra_electrons():
    nuc = NuclearConfig.single(4.0, 1.0)
    table = saturation_curve([[0, 0, 0]], [1.0], 1.0, 4, [1.0, 1.5], FAST)
    assert table.column("N") == [4, 6]
    assert table.column("escaped") == [0, 0]
    assert escaped_count(minimize(4, nuc, FAST), nuc) == 0


def test_instability_sweep_is_bounded():
    table = instability_sweep([[0, 0, 0]], [1.0], 1.0, [3], FAST, max_factor=2.0)
    [(Z, N_hat, ratio)] = table.rows
    assert Z <= N_hat <= 6 and ratio == N_hat / 3
