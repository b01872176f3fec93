import dataclasses
import math

import numpy as np
import pytest
from scipy import special

from talenti_lab.measure_core import DomainSpec, build_grid, gaussian_potential, radial_potential
from talenti_lab.profiles import (
    CATALOG,
    MassTable,
    ProfileError,
    affine_perturbation,
    anisotropic_gaussian_profile,
    cone_monomial_profile,
    euclidean_ball_profile,
    euclidean_cone_profile,
    gaussian_halfspace_profile,
    list_catalog,
    log_perturbation,
    perturbed_gaussian_profile,
    piecewise_perturbation,
    quadratic_perturbation,
    radial_logconvex_profile,
    validate_profile,
    zero_perturbation,
)


def _round_trip(profile, masses):
    return profile.cumulative(profile.inverse_cumulative(np.asarray(masses)))


def test_mass_table_inverse():
    table = MassTable(np.linspace(0, 1, 11), np.linspace(0, 1, 11) ** 2)

    assert table(0.5) == pytest.approx(0.25)
    assert table.inverse(0.25) == pytest.approx(0.5)
    assert table.increasing

    falling = MassTable(np.linspace(0, 1, 11), 1 - np.linspace(0, 1, 11))
    assert not falling.increasing
    assert falling.inverse(0.3) == pytest.approx(0.7)


def test_mass_table_rejects_non_monotone_masses():
    with pytest.raises(ValueError):
        MassTable(np.arange(3.0), np.array([0.0, 1.0, 0.5]))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_euclidean_profile(dim):
    profile = euclidean_ball_profile(dim)
    omega_n = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)

    assert profile.cumulative(1.0) == pytest.approx(omega_n)
    assert profile.perimeter_profile(omega_n) == pytest.approx(dim * omega_n)
    assert _round_trip(profile, [0.1, 1.0, 7.0]) == pytest.approx([0.1, 1.0, 7.0])


def test_euclidean_plane_profile_is_the_circle_law():
    profile = euclidean_ball_profile(2)

    for m in (0.5, 1.0, 3.0):
        assert profile.q(m) == pytest.approx(2 * math.sqrt(math.pi * m))


def test_gaussian_line_profile_at_the_median():
    profile = gaussian_halfspace_profile([1.0], 1)
    total = math.sqrt(2 * math.pi)

    assert profile.total_mass == pytest.approx(total)
    assert profile.inverse_cumulative(0.5 * total) == pytest.approx(0.0, abs=1e-12)
    assert profile.q(0.5 * total) == pytest.approx(1.0)
    assert profile.cumulative(1.0) == pytest.approx(total * 0.15865525393145707)


def test_gaussian_direction_is_normalized_with_a_warning():
    with pytest.warns(UserWarning, match="normalized"):
        profile = gaussian_halfspace_profile([3.0, 4.0], 2)

    assert profile.direction == pytest.approx([0.6, 0.8])


@pytest.mark.parametrize(("theta", "dim"), [([0.0, 0.0], 2), ([1.0], 2), ([math.nan, 1.0], 2)])
def test_gaussian_direction_validation(theta, dim):
    with pytest.raises(ProfileError):
        gaussian_halfspace_profile(theta, dim)


@pytest.mark.parametrize(
    ("alphas", "dim", "constant"),
    [
        ([1.0], 2, 2.0 / 3.0),
        ([1.0, 1.0], 2, 1.0 / 8.0),
    ],
)
def test_cone_monomial_constants(alphas, dim, constant):
    profile = cone_monomial_profile(alphas, dim)

    assert profile.cumulative(1.0) == pytest.approx(constant)
    assert profile.cumulative(2.0) == pytest.approx(constant * 2.0 ** (dim + sum(alphas)))


@pytest.mark.parametrize(("alphas", "dim"), [([], 2), ([1.0, 1.0, 1.0], 2), ([-1.0], 2), ([0.0], 1)])
def test_cone_monomial_validation(alphas, dim):
    with pytest.raises(ProfileError):
        cone_monomial_profile(alphas, dim)


def test_cone_monomial_mass_matches_grid():
    profile = cone_monomial_profile([1.0], 2)
    grid = build_grid(profile.domain, profile.potential, 256, box=[(-1, 1), (-1, 1)])
    member = profile.member(grid, 0.8)

    assert member.mass == pytest.approx(profile.cumulative(0.8), rel=0.02)


def test_euclidean_cone_volume_fraction():
    quadrant = euclidean_cone_profile([[1.0, 0.0], [0.0, 1.0]])

    assert quadrant.cumulative(1.0) == pytest.approx(math.pi / 4, rel=1e-2)
    assert euclidean_cone_profile([[1.0]]).cumulative(2.0) == pytest.approx(2.0)


def test_radial_logconvex_profile_matches_quadrature():
    weight = radial_potential(lambda s: np.asarray(s) ** 2, lambda s: 2 * np.asarray(s), "power[k=1, a=2]")
    profile = radial_logconvex_profile(weight, 2, r_max=2.0)

    # 2 pi int_0^1 r exp(r^2) dr = pi (e - 1)
    assert profile.cumulative(1.0) == pytest.approx(math.pi * (math.e - 1), rel=1e-6)
    assert profile.q(profile.cumulative(1.0)) == pytest.approx(2 * math.pi * math.e, rel=1e-3)
    assert not profile.closed_form


def test_radial_profile_rejects_concave_weight():
    with pytest.raises(ProfileError, match="log-convexity"):
        radial_logconvex_profile(gaussian_potential(), 2, r_max=3.0)


def test_anisotropic_gaussian_uses_the_softest_axis():
    profile = anisotropic_gaussian_profile([[4.0, 0.0], [0.0, 1.0]], 2)

    assert profile.direction == pytest.approx([0.0, 1.0])
    assert profile.total_mass == pytest.approx(math.pi)
    assert profile.q(0.5 * math.pi) == pytest.approx(math.pi / math.sqrt(2 * math.pi))


def test_anisotropic_gaussian_degenerate_eigenspace_warns():
    with pytest.warns(UserWarning, match="degenerate"):
        profile = anisotropic_gaussian_profile(np.diag([2.0, 2.0, 5.0]), 3)

    assert profile.direction == pytest.approx([1.0, 0.0, 0.0])
    assert profile.notes


@pytest.mark.parametrize(
    "matrix",
    [
        [[1.0, 0.5], [0.0, 1.0]],
        [[1.0, 0.0], [0.0, -1.0]],
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    ],
)
def test_anisotropic_gaussian_validation(matrix):
    with pytest.raises(ProfileError):
        anisotropic_gaussian_profile(matrix, 2)


def test_anisotropic_gaussian_with_identity_is_the_standard_gaussian():
    with pytest.warns(UserWarning, match="degenerate"):
        anisotropic = anisotropic_gaussian_profile(np.eye(2), 2)
    standard = gaussian_halfspace_profile([1.0, 0.0], 2)

    assert anisotropic.direction == pytest.approx(standard.direction)
    assert anisotropic.total_mass == pytest.approx(standard.total_mass, rel=1e-12)
    t = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(anisotropic.cumulative(t), standard.cumulative(t), rtol=1e-10)
    m = np.linspace(0.5, 6.0, 12)
    np.testing.assert_allclose(anisotropic.q(m), standard.q(m), rtol=1e-10)


@pytest.mark.parametrize("angle", [0.0, math.pi / 3, 2 * math.pi / 3, -math.pi / 4])
def test_anisotropic_gaussian_reduces_to_a_line_along_the_soft_axis(angle):
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    matrix = rotation @ np.diag([4.0, 1.0]) @ rotation.T
    soft_axis = rotation[:, 1]

    profile = anisotropic_gaussian_profile(matrix, 2)

    assert abs(float(profile.direction @ soft_axis)) == pytest.approx(1.0, abs=1e-12)
    assert profile.direction[np.flatnonzero(np.abs(profile.direction) > 1e-12)[0]] > 0
    # marginal along the soft axis is pi * N(0, 1)
    line = gaussian_halfspace_profile([1.0], 1)
    scale = math.pi / line.total_mass
    t = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(profile.cumulative(t), math.pi * special.ndtr(-t), rtol=1e-10)
    np.testing.assert_allclose(profile.cumulative(t), scale * line.cumulative(t), rtol=1e-10)
    m = np.linspace(0.3, 2.8, 6)
    np.testing.assert_allclose(profile.q(m), scale * line.q(m / scale), rtol=1e-10)


def test_perturbed_gaussian_reduces_to_the_standard_gaussian():
    perturbed = perturbed_gaussian_profile(zero_perturbation(), 0.5, dim=2)
    standard = gaussian_halfspace_profile([1.0, 0.0], 2)

    t = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(perturbed.cumulative(t), standard.cumulative(t), rtol=1e-10)
    m = np.linspace(0.5, 6.0, 12)
    np.testing.assert_allclose(perturbed.q(m), standard.q(m), rtol=1e-10)


def test_perturbed_gaussian_on_half_plane_with_log_weight():
    profile = perturbed_gaussian_profile(log_perturbation(1.0), 1.0, (0.0, math.inf), 2)

    # vertical integral of t exp(-t^2) over (0, inf) is 1/2, horizontal one sqrt(pi)
    assert profile.total_mass == pytest.approx(0.5 * math.sqrt(math.pi), rel=1e-9)
    assert profile.domain.kind == "half_space"
    assert profile.notes == ("vertical half-spaces only",)


def test_perturbed_gaussian_rejects_convex_phi():
    with pytest.raises(ProfileError, match="concavity"):
        perturbed_gaussian_profile(quadratic_perturbation(-1.0), 0.5, dim=2)


def test_perturbed_gaussian_needs_horizontal_direction():
    with pytest.raises(ProfileError, match="horizontal"):
        perturbed_gaussian_profile(quadratic_perturbation(1.0), 0.5, dim=2, theta=[0.0, 1.0])
    with pytest.raises(ProfileError, match="horizontal"):
        perturbed_gaussian_profile(affine_perturbation(1.0), 0.5, dim=2, theta=[0.6, 0.8])
    affine = perturbed_gaussian_profile(affine_perturbation(1.0), 0.5, dim=2)
    assert affine.notes == ("affine perturbation, horizontal family",)


def test_perturbed_gaussian_line_is_tabulated():
    profile = perturbed_gaussian_profile(affine_perturbation(1.0), 0.5, dim=1)

    assert not profile.closed_form
    # exp(t - t^2/2) = e^(1/2) exp(-(t-1)^2/2)
    assert profile.total_mass == pytest.approx(math.sqrt(2 * math.pi * math.e), rel=1e-9)
    assert profile.cumulative(1.0) == pytest.approx(0.5 * profile.total_mass, rel=1e-5)
    with pytest.raises(ProfileError):
        perturbed_gaussian_profile(quadratic_perturbation(1.0), 0.5, dim=1)


def test_piecewise_perturbation():
    phi = piecewise_perturbation([[-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])

    assert phi.value(np.array([-2.0, 0.0, 0.5, 2.0])).tolist() == [-1.0, 1.0, 0.5, -1.0]
    assert phi.derivative(np.array([-0.5, 0.5])).tolist() == [1.0, -1.0]
    with pytest.raises(ProfileError):
        piecewise_perturbation([[0.0, 0.0]])


def test_profile_rejects_foreign_grid():
    profile = gaussian_halfspace_profile([1.0, 0.0], 2)
    grid = build_grid(DomainSpec.full(1), gaussian_potential(), 16)

    with pytest.raises(ProfileError):
        profile.check_grid(grid)


def test_window_keeps_ball_families_off_truncation_faces():
    profile = euclidean_ball_profile(2)
    grid = build_grid(profile.domain, profile.potential, 64, box=[(-1, 2), (-1, 1)])

    assert profile.window_radius(grid) == 1.0
    assert profile.mass_limit(grid) == pytest.approx(math.pi, rel=0.02)
    assert gaussian_halfspace_profile([1.0, 0.0], 2).window(build_grid(DomainSpec.full(2), gaussian_potential(), 16)) is None


def test_validate_euclidean_disks():
    profile = euclidean_ball_profile(2)
    grid = build_grid(profile.domain, profile.potential, 256, box=[(-1, 1), (-1, 1)])

    report = validate_profile(profile, grid, samples=6, n_levels=4)

    assert report.check("shape_range").passed
    assert report.check("finite_levels").passed
    assert report.check("saturation").value <= 0.03
    assert report.check("isoperimetry").passed
    assert report.to_dict()["profile"] == "euclidean"


def test_validate_reports_failures_instead_of_raising():
    profile = gaussian_halfspace_profile([1.0, 0.0], 2)
    grid = build_grid(profile.domain, profile.potential, 64)

    report = validate_profile(profile, grid, samples=2, n_levels=3, saturation_tolerance=0.0)

    assert not report.check("saturation").passed
    assert not report.passed
    with pytest.raises(KeyError):
        report.check("convexity")


def test_validate_flags_a_shape_that_stops_short_of_one():
    profile = gaussian_halfspace_profile([1.0], 1)
    short = dataclasses.replace(profile, shape=lambda t: 0.9 * special.expit(t))
    grid = build_grid(profile.domain, profile.potential, 256)

    report = validate_profile(short, grid, samples=2, n_levels=3)

    check = report.check("shape_range")
    assert not check.passed
    assert check.value == pytest.approx(0.9)
    assert not report.passed
    assert validate_profile(profile, grid, samples=2, n_levels=3).check("shape_range").passed


def test_catalog_lists_every_profile_kind():
    kinds = [entry["kind"] for entry in list_catalog()]

    assert len(kinds) == len(CATALOG) == 6
    assert kinds == [
        "euclidean",
        "radial_logconvex",
        "cone_monomial",
        "gaussian",
        "anisotropic_gaussian",
        "perturbed_gaussian",
    ]
