import math

import numpy as np
import pytest

from talenti_lab.measure_core import DomainSpec, GridFunction, build_grid, gaussian_potential, lp_norm, zero_potential
from talenti_lab.profiles import euclidean_ball_profile, gaussian_halfspace_profile
from talenti_lab.sets import BorelSet
from talenti_lab.variational import (
    SolverError,
    discrete_energy,
    first_eigenvalue,
    p_laplacian_residual,
    reduced_first_eigenvalue,
    reduced_torsional_rigidity,
    staggered_energy,
    torsional_rigidity,
)

# first zero of the Bessel function J_0
J0_FIRST_ZERO = 2.404825557695773


def _unit_interval(resolution):
    grid = build_grid(DomainSpec.full(1), zero_potential(), resolution, box=[(-0.5, 1.5)])
    return BorelSet.from_predicate(grid, lambda x: (x[:, 0] > 0) & (x[:, 0] < 1))


def _unit_disk(resolution):
    grid = build_grid(DomainSpec.full(2), zero_potential(), resolution, box=[(-1.25, 1.25), (-1.25, 1.25)])
    return BorelSet.from_predicate(grid, lambda x: np.sum(x * x, axis=1) < 1.0)


@pytest.fixture(scope="module")
def interval():
    return _unit_interval(512)


@pytest.fixture(scope="module")
def coarse_interval():
    return _unit_interval(128)


@pytest.fixture(scope="module")
def gaussian_half_line():
    grid = build_grid(DomainSpec.full(1), gaussian_potential(), 512)
    return BorelSet.from_predicate(grid, lambda x: x[:, 0] > 0)


def test_interval_eigenvalue(interval):
    result = first_eigenvalue(interval)

    assert result.lambda_ == pytest.approx(math.pi**2, rel=1e-3)
    assert result.converged
    assert result.iterations > 0
    assert not result.degenerate
    assert lp_norm(result.minimizer, interval, 2) == pytest.approx(1.0)
    assert np.all(result.minimizer.values >= 0)
    assert np.all(result.minimizer.values[~interval.mask] == 0)


def test_disk_eigenvalue():
    disk = _unit_disk(256)

    result = first_eigenvalue(disk)

    assert result.lambda_ == pytest.approx(J0_FIRST_ZERO**2, rel=0.02)


def test_gaussian_half_line_eigenvalue(gaussian_half_line):
    result = first_eigenvalue(gaussian_half_line)

    # u(x) = x solves -u'' + x u' = u
    assert result.lambda_ == pytest.approx(1.0, rel=1e-3)
    residual = p_laplacian_residual(result.minimizer, gaussian_half_line, lam=result.lambda_)
    assert residual < 1e-2


def test_interval_residual(interval):
    result = first_eigenvalue(interval)

    assert p_laplacian_residual(result.minimizer, interval, lam=result.lambda_) < 1e-2
    assert p_laplacian_residual(result.minimizer, interval, lam=0.5 * result.lambda_) > 0.1


def test_interval_torsion(interval):
    result = torsional_rigidity(interval)

    assert result.T == pytest.approx(1.0 / 12.0, rel=1e-3)
    assert result.residual < 1e-10
    assert np.all(result.state.values >= 0)


def test_disk_torsion():
    result = torsional_rigidity(_unit_disk(256))

    assert result.T == pytest.approx(math.pi / 8.0, rel=0.02)


def test_descent_agrees_with_inverse_iteration(coarse_interval):
    direct = first_eigenvalue(coarse_interval, method="inverse_iteration")
    descent = first_eigenvalue(coarse_interval, method="descent")

    assert descent.lambda_ == pytest.approx(direct.lambda_, rel=1e-6)
    history = np.array(descent.history)
    assert np.all(np.diff(history) <= 1e-12 * history[0])


@pytest.mark.parametrize(("p", "q"), [(3.0, 3.0), (1.5, 2.0), (2.0, 1.0)])
def test_eigenvalue_scaling_under_weight_scaling(coarse_interval, p, q):
    c = 3.0
    scaled_grid = coarse_interval.grid.scaled(c)
    scaled = BorelSet(scaled_grid, coarse_interval.mask)

    base = first_eigenvalue(coarse_interval, p=p, q=q)
    rescaled = first_eigenvalue(scaled, p=p, q=q)

    assert rescaled.lambda_ == pytest.approx(base.lambda_ * c ** (1.0 - p / q), rel=1e-4)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_torsion_scaling_under_weight_scaling(coarse_interval, p):
    c = 0.25
    scaled = BorelSet(coarse_interval.grid.scaled(c), coarse_interval.mask)

    base = torsional_rigidity(coarse_interval, p=p)
    rescaled = torsional_rigidity(scaled, p=p)

    assert rescaled.T == pytest.approx(base.T * c ** (p - 1.0), rel=1e-4)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_torsion_is_dual_to_the_q1_eigenvalue(coarse_interval, p):
    torsion = torsional_rigidity(coarse_interval, p=p)
    eigen = first_eigenvalue(coarse_interval, p=p, q=1.0)

    assert torsion.T * eigen.lambda_ == pytest.approx(1.0, rel=1e-3)


def test_eigenvalue_and_torsion_are_monotone_in_the_set(coarse_interval):
    small = BorelSet.from_predicate(coarse_interval.grid, lambda x: (x[:, 0] > 0.25) & (x[:, 0] < 0.75))

    assert small.issubset(coarse_interval)
    assert first_eigenvalue(small).lambda_ > first_eigenvalue(coarse_interval).lambda_
    assert torsional_rigidity(small).T < torsional_rigidity(coarse_interval).T


def test_set_without_dirichlet_boundary_is_degenerate():
    grid = build_grid(DomainSpec.box([(0, 1), (0, 2)]), zero_potential(), 16)
    omega = BorelSet.full(grid)

    result = first_eigenvalue(omega, p=3.0, q=2.0)

    assert result.lambda_ == 0.0
    assert result.degenerate
    assert np.ptp(result.minimizer.values) == pytest.approx(0.0)
    with pytest.raises(SolverError, match="Dirichlet"):
        torsional_rigidity(omega)


def test_solver_argument_validation(coarse_interval):
    with pytest.raises(SolverError):
        first_eigenvalue(BorelSet.empty(coarse_interval.grid))
    with pytest.raises(ValueError, match="p = q = 2"):
        first_eigenvalue(coarse_interval, p=3.0, method="inverse_iteration")
    with pytest.raises(ValueError):
        first_eigenvalue(coarse_interval, method="newton")
    with pytest.raises(ValueError):
        first_eigenvalue(coarse_interval, p=1.0)
    with pytest.raises(ValueError):
        torsional_rigidity(coarse_interval, max_iter=0)


def test_staggered_energy_of_tent(coarse_interval):
    grid = coarse_interval.grid
    x = grid.centers[:, 0]
    u = GridFunction(grid, np.where(coarse_interval.mask, np.minimum(x, 1 - x), 0.0))

    # |u'| = 1 on the interval; the Dirichlet faces see the half-cell slope
    assert discrete_energy(u, coarse_interval, 2.0) == pytest.approx(1.0, rel=0.05)
    assert staggered_energy(coarse_interval).n_dirichlet == 2


def test_reduced_disk_of_area_one():
    result = reduced_first_eigenvalue(euclidean_ball_profile(2), 1.0)

    assert result.lambda_ == pytest.approx(math.pi * J0_FIRST_ZERO**2, rel=1e-3)
    assert result.lambda_ == pytest.approx(18.168, rel=1e-3)


def test_reduced_unit_disk_torsion():
    result = reduced_torsional_rigidity(euclidean_ball_profile(2), math.pi)

    assert result.T == pytest.approx(math.pi / 8.0, rel=1e-3)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_reduced_gaussian_half_space_is_dimension_free(dim):
    theta = np.eye(dim)[0]
    profile = gaussian_halfspace_profile(theta, dim)

    result = reduced_first_eigenvalue(profile, 0.5 * profile.total_mass)

    assert result.lambda_ == pytest.approx(1.0, rel=1e-3)


def test_reduced_problem_validation():
    profile = gaussian_halfspace_profile([1.0], 1)

    with pytest.raises(SolverError):
        reduced_first_eigenvalue(profile, 0.0)
    with pytest.raises(SolverError):
        reduced_first_eigenvalue(profile, profile.total_mass)
