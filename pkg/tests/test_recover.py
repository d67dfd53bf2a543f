import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screening.continuum import DomainError
from screening.core import CompositeMeasure, LimitParams, NuclearConfig, SphericalShell, UniformBall
from screening.recover import (
    CSV_COLUMNS,
    Mesh,
    MeshTooCoarseError,
    _ball_cube_volume,
    allocate_masses,
    build_mesh,
    cell_masses,
    far_points,
    lattice_side,
    place_lattice,
    recovery_sequence,
    riemann_check,
    spacing_within_bounds,
    to_csv,
)

NUC = NuclearConfig.single(1.0, 1.0)
BALL = CompositeMeasure((UniformBall([3, 0, 0], 1.0, 1.0),))


def _eight_cells(h=1.0):
    lows = np.stack(np.meshgrid(*[np.arange(2)] * 3, indexing="ij"), axis=-1).reshape(-1, 3) * h + 5.0
    return Mesh(cell_size=h, cells=lows, parent_size=2 * h, subdivision=2, parent_count=1)


def test_mesh_subdivision_multiplies_cells():
    coarse = build_mesh(BALL, NUC, 2.0, 1)
    fine = build_mesh(BALL, NUC, 2.0, 2)
    assert len(fine) == 8 * len(coarse)
    assert fine.cell_size == 1.0
    assert np.all(np.linalg.norm(coarse.centers, axis=1) > 1.0)


def test_mesh_rejects_touching_support():
    touching = CompositeMeasure((UniformBall([2, 0, 0], 1.0, 1.0),))
    with pytest.raises(DomainError):
        build_mesh(touching, NUC, 0.5, 1)


def test_mesh_too_coarse():
    near = CompositeMeasure((UniformBall([2.5, 0, 0], 1.2, 1.0),))
    with pytest.raises((MeshTooCoarseError, DomainError)):
        build_mesh(near, NUC, 4.0, 1)


def test_cell_masses_sum_to_target():
    mesh = build_mesh(BALL, NUC, 0.5, 2)
    assert math.fsum(cell_masses(BALL, mesh, 1.0)) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.2, 2.0))
def test_ball_cube_volume_bounds(x, y, z, h):
    v = _ball_cube_volume(np.zeros(3), 1.0, np.array([[x, y, z]]), h)[0]
    assert -1e-12 <= v <= min(h**3, 4 * math.pi / 3) + 1e-12


def test_ball_cube_volume_whole_ball():
    v = _ball_cube_volume(np.zeros(3), 1.0, np.array([[-2.0, -2.0, -2.0]]), 4.0)[0]
    assert v == pytest.approx(4 * math.pi / 3, rel=1e-10)
    # an octant of the ball
    v = _ball_cube_volume(np.zeros(3), 1.0, np.array([[0.0, 0.0, 0.0]]), 2.0)[0]
    assert v == pytest.approx(math.pi / 6, rel=1e-10)


@pytest.mark.parametrize("N,expected", [(80, [10] * 8), (81, [11] + [10] * 7)])
def test_allocation_rounding(N, expected):
    mesh = _eight_cells()
    alloc = allocate_masses(BALL, mesh, N, float(N), 1.0, masses=np.full(8, 1 / 8))
    assert alloc.per_cell_counts.tolist() == expected
    assert alloc.N == N and alloc.check()


@pytest.mark.parametrize("L,k", [(1, 1), (8, 2), (27, 3), (28, 4), (64, 4), (65, 5)])
def test_lattice_side(L, k):
    assert lattice_side(L) == k
    assert spacing_within_bounds(1.0 / k, 1.0, L)


def test_lattice_of_27_fills_cell():
    mesh = _eight_cells()
    alloc = allocate_masses(BALL, mesh, 27 * 8, 216.0, 1.0, masses=np.full(8, 1 / 8))
    emp = place_lattice(mesh, alloc, 216.0)
    assert len(emp.points) == 216
    first = emp.points[:27] - mesh.cells[0]
    assert sorted(set(np.round(first[:, 0], 12))) == pytest.approx([0, 1 / 3, 2 / 3])


def test_lattice_of_28_uses_quarter_spacing():
    mesh = _eight_cells()
    alloc = allocate_masses(BALL, mesh, 28 * 8, 224.0, 1.0, masses=np.full(8, 1 / 8))
    emp = place_lattice(mesh, alloc, 224.0)
    steps = np.unique(np.round(emp.points[:28, 2] - mesh.cells[0, 2], 12))
    assert steps[1] == pytest.approx(0.25)


def test_far_points_change_energy_negligibly():
    near = np.array([[3.0, 0, 0], [0, 3.0, 0]])
    pts = far_points(5, NUC, near, 100.0, 0.25)
    d = np.linalg.norm(pts[:, None] - np.vstack([near, [[0, 0, 0]]])[None], axis=-1)
    assert np.all(d > 1e3)
    pairs = np.linalg.norm(pts[:, None] - pts[None], axis=-1)[np.triu_indices(5, 1)]
    contribution = (np.sum(1 / d) + np.sum(1 / pairs)) / 100.0**2
    assert contribution < 1e-6 * 0.25


def test_short_sequence_invariants():
    steps = recovery_sequence(BALL, NUC, LimitParams(1.0), [100.0, 1000.0])
    assert [s.N for s in steps] == [100, 1000]
    assert all(s.allocation_ok for s in steps)
    assert all(s.short_range <= s.short_range_bound for s in steps)
    assert steps[0].I_target == pytest.approx(4 / 15, abs=1e-12)
    text = to_csv(steps)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert len(text.splitlines()) == 3


def test_deficient_mass_goes_far():
    half = CompositeMeasure((UniformBall([3, 0, 0], 1.0, 0.5),))
    [step] = recovery_sequence(half, NUC, LimitParams(1.0), [200.0])
    assert step.N == 200
    far = np.linalg.norm(step.measure.points, axis=1) > 100
    assert far.sum() == 100
    assert step.I_NZ == pytest.approx(step.I_target, abs=0.05)


def test_recovery_shell_target():
    shell = CompositeMeasure((SphericalShell([0, 0, 0], 2.5, 1.0),))
    [step] = recovery_sequence(shell, NUC, LimitParams(1.0), [500.0])
    assert step.allocation_ok and step.N == 500


def test_riemann_sums():
    (a1, v1), (a2, v2) = riemann_check(1.0, [0.1, 0.01])
    assert abs(v2 - 2 * math.pi) < abs(v1 - 2 * math.pi)
    assert v2 == pytest.approx(2 * math.pi, rel=0.01)
    [(_, v)] = riemann_check(0.5, [0.005])
    assert v == pytest.approx(2 * math.pi * 0.25, rel=0.01)


def test_coarse_mesh_near_core_raises():
    shell = CompositeMeasure((SphericalShell([0, 0, 0], 1.5, 1.0),))
    with pytest.raises(MeshTooCoarseError):
        recovery_sequence(shell, NUC, LimitParams(1.0), [500.0])
