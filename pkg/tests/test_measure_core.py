import math

import numpy as np
import pytest

from talenti_lab.measure_core import (
    DomainSpec,
    GridFunction,
    GridMismatchError,
    InfiniteMassError,
    build_grid,
    dirichlet_energy,
    gradient,
    gaussian_potential,
    lp_norm,
    measure_of,
    monomial_potential,
    unit_ball_volume,
    unit_sphere_area,
    zero_potential,
)
from talenti_lab.sets import BorelSet


def _unit_square(resolution=16):
    return build_grid(DomainSpec.box([(0, 1), (0, 1)]), zero_potential(), resolution)


@pytest.mark.parametrize(
    ("dim", "volume", "area"),
    [
        (1, 2.0, 2.0),
        (2, math.pi, 2 * math.pi),
        (3, 4 * math.pi / 3, 4 * math.pi),
    ],
)
def test_unit_ball_and_sphere(dim, volume, area):
    assert unit_ball_volume(dim) == pytest.approx(volume)
    assert unit_sphere_area(dim) == pytest.approx(area)


def test_gaussian_line_mass():
    grid = build_grid(DomainSpec.full(1), gaussian_potential(), 512)

    assert grid.total_mass == pytest.approx(math.sqrt(2 * math.pi), rel=1e-6)
    assert grid.tail_mass <= 1e-8 * grid.total_mass * 10
    assert not grid.closed_faces.any()


def test_gaussian_plane_mass():
    grid = build_grid(DomainSpec.full(2), gaussian_potential(), 128)

    assert grid.total_mass == pytest.approx(2 * math.pi, rel=1e-5)


def test_lebesgue_on_unbounded_domain_needs_a_box():
    with pytest.raises(InfiniteMassError, match="explicit box"):
        build_grid(DomainSpec.full(2), zero_potential(), 32)


def test_explicit_box_on_unbounded_lebesgue():
    grid = build_grid(DomainSpec.full(2), zero_potential(), 32, box=[(-1, 1), (-1, 1)])

    assert grid.total_mass == pytest.approx(4.0)
    assert math.isinf(grid.tail_mass)
    assert grid.metadata()["tail_mass"] is None


def test_bounded_box_domain_has_closed_faces():
    grid = build_grid(DomainSpec.box([(0, 2), (0, 1)]), zero_potential(), 8)

    assert grid.total_mass == pytest.approx(2.0)
    assert grid.closed_faces.all()
    assert grid.spacing == pytest.approx([0.25, 0.125])
    assert grid.tail_mass == 0.0


def test_cone_grid_weights_vanish_outside():
    domain = DomainSpec.cone([[1.0, 0.0]])
    grid = build_grid(domain, monomial_potential([1.0]), 32, box=[(-1, 1), (-1, 1)])

    left = grid.centers[:, 0] < 0
    assert np.all(grid.weights[left] == 0)
    assert np.all(grid.weights[~left] > 0)
    # integral of x over the half square (0, 1) x (-1, 1)
    assert grid.total_mass == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize(
    ("kwargs", "error"),
    [
        ({"kind": "sphere", "dim": 2}, ValueError),
        ({"kind": "full", "dim": 0}, ValueError),
        ({"kind": "full", "dim": 1.5}, TypeError),
        ({"kind": "box", "dim": 1, "bounds": ((1.0, 0.0),)}, ValueError),
        ({"kind": "cone", "dim": 2}, ValueError),
        ({"kind": "slab", "dim": 2, "lower": 1.0, "upper": 1.0}, ValueError),
        ({"kind": "half_space", "dim": 2}, ValueError),
    ],
)
def test_domain_validation(kwargs, error):
    with pytest.raises(error):
        DomainSpec(**kwargs)


def test_domain_contains():
    points = np.array([[0.5, 0.5], [-0.5, 0.5], [0.5, 2.5]])

    assert DomainSpec.cone([[1, 0], [0, 1]]).contains(points).tolist() == [True, False, True]
    assert DomainSpec.slab(2, 0, 1).contains(points).tolist() == [True, True, False]
    assert DomainSpec.half_space(2, 1.0).contains(points).tolist() == [False, False, True]


@pytest.mark.parametrize("resolution", [3, 0])
def test_resolution_must_be_at_least_four(resolution):
    with pytest.raises(ValueError):
        build_grid(DomainSpec.box([(0, 1)]), zero_potential(), resolution)


def test_grid_function_rejects_nonfinite_values():
    grid = _unit_square(4)

    with pytest.raises(ValueError, match="finite"):
        GridFunction(grid, np.full(grid.n_cells, np.nan))
    with pytest.raises(ValueError, match="entries"):
        GridFunction(grid, np.zeros(3))


def test_zero_trace_function_must_vanish_off_support():
    grid = _unit_square(4)
    omega = BorelSet.from_predicate(grid, lambda x: x[:, 0] < 0.5)

    with pytest.raises(ValueError, match="vanish"):
        GridFunction(grid, np.ones(grid.n_cells), support=omega)
    masked = GridFunction(grid, np.ones(grid.n_cells)).masked(omega)
    assert masked.values.sum() == omega.n_cells


def test_operands_on_different_grids_are_rejected():
    a, b = _unit_square(8), _unit_square(16)
    omega = BorelSet.full(a)

    with pytest.raises(GridMismatchError):
        measure_of(omega, b)


def test_norms_of_constant():
    grid = build_grid(DomainSpec.box([(0, 2)]), zero_potential(), 16)
    u = GridFunction(grid, np.full(grid.n_cells, 3.0))

    assert lp_norm(u, None, 1) == pytest.approx(6.0)
    assert lp_norm(u, None, 2) == pytest.approx(3.0 * math.sqrt(2.0))
    assert lp_norm(u, None, math.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(u, None, 0.5)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_energy_of_linear_function(p):
    grid = _unit_square(32)
    u = GridFunction.from_callable(grid, lambda x: 2.0 * x[:, 0])

    assert dirichlet_energy(u, None, p) == pytest.approx(2.0**p)


def test_scaled_grid_multiplies_mass():
    grid = _unit_square(8)

    assert grid.scaled(2.5).total_mass == pytest.approx(2.5)
    assert grid.scaled(2.5).fingerprint != grid.fingerprint
    with pytest.raises(ValueError):
        grid.scaled(0.0)


def test_gradient_is_zero_outside_the_domain():
    grid = build_grid(DomainSpec.half_space(2, 0.0), zero_potential(), 16, box=[(-1, 1), (-1, 1)])
    u = GridFunction.from_callable(grid, lambda x: 3.0 * x[:, 0] - x[:, 1])

    field = gradient(u)

    assert field.shape == (grid.n_cells, 2)
    assert np.all(field[~grid.inside] == 0)
    np.testing.assert_allclose(field[grid.inside], np.tile([3.0, -1.0], (int(grid.inside.sum()), 1)), atol=1e-12)
