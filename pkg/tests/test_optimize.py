import numpy as np
import pytest

from screening.core import ElectronConfig, NuclearConfig
from screening.energy import particle_energy
from screening.optimize import (
    OptimizeOptions,
    RefinementError,
    detect_absorption,
    minimize,
    refine_on_spheres,
)

# minimal 12-point Coulomb energy on the unit sphere (icosahedron), multistart oracle
E12 = 49.165253058
ATOM12 = -144 + E12


@pytest.fixture(scope="module")
def twelve():
    nuc = NuclearConfig.single(12.0, 1.0)
    return nuc, minimize(12, nuc, OptimizeOptions(restarts=8))


def test_single_electron_sits_on_sphere():
    nuc = NuclearConfig.single(1.0, 1.0)
    res = minimize(1, nuc, OptimizeOptions(restarts=2))
    assert res.energy.total == pytest.approx(-1.0, abs=1e-12)
    assert np.linalg.norm(res.config.points[0]) == pytest.approx(1.0, abs=1e-12)


def test_pair_is_antipodal():
    res = minimize(2, NuclearConfig.single(2.0, 1.0), OptimizeOptions(restarts=2))
    assert res.energy.total == pytest.approx(-3.5, abs=1e-10)
    assert np.linalg.norm(res.config.points.sum(axis=0)) < 1e-5


def test_twelve_electrons_icosahedron(twelve):
    nuc, res = twelve
    assert res.energy.total == pytest.approx(ATOM12, abs=1e-6)
    assert res.absorbed
    assert detect_absorption(res.config, nuc, 1e-6)[0]


def test_refine_keeps_exact_configuration(twelve):
    nuc, res = twelve
    again = refine_on_spheres(res, nuc, OptimizeOptions())
    assert again.energy.total <= res.energy.total + 1e-12
    assert again.energy.total == pytest.approx(ATOM12, abs=1e-9)


def test_refine_pulls_back_perturbed_pair():
    nuc = NuclearConfig.single(2.0, 1.0)
    res = minimize(2, nuc, OptimizeOptions(restarts=1))
    pushed = res.config.points * 1.001
    from dataclasses import replace

    moved = replace(res, config=ElectronConfig(pushed), energy=particle_energy(ElectronConfig(pushed), nuc))
    out = refine_on_spheres(moved, nuc, OptimizeOptions())
    assert out.energy.total == pytest.approx(-3.5, abs=1e-10)


def test_refine_rejects_far_electrons():
    nuc = NuclearConfig.single(2.0, 1.0)
    res = minimize(2, nuc, OptimizeOptions(restarts=1))
    from dataclasses import replace

    far = ElectronConfig(res.config.points * 2.0)
    with pytest.raises(RefinementError):
        refine_on_spheres(replace(res, config=far), nuc, OptimizeOptions())


def test_detect_absorption():
    nuc = NuclearConfig([[-2, 0, 0], [2, 0, 0]], [1, 1], 1.0)
    ok, assign = detect_absorption(ElectronConfig([[-1, 0, 0], [3, 0, 0]]), nuc)
    assert ok and assign.tolist() == [0, 1]
    ok, assign = detect_absorption(ElectronConfig([[0, 2, 0]]), NuclearConfig.single(1.0, 1.0))
    assert not ok and assign.tolist() == [-1]


def test_deterministic():
    nuc = NuclearConfig([[-1, 0, 0], [1, 0, 0]], [3.0, 2.0], 0.4)
    a = minimize(5, nuc, OptimizeOptions(restarts=3, seed=4))
    b = minimize(5, nuc, OptimizeOptions(restarts=3, seed=4))
    assert np.array_equal(a.config.points, b.config.points)
    assert a.restart_energies == b.restart_energies


@pytest.mark.parametrize("kwargs", [{"restarts": 0}, {"gradient_tolerance": 0.0}, {"initial_radius_factor": 0.5}])
def test_bad_options(kwargs):
    with pytest.raises(ValueError):
        OptimizeOptions(**kwargs)
