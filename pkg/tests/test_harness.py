import math

import numpy as np
import pytest

from talenti_lab.harness import (
    EXPERIMENTS,
    VERDICTS,
    _upper_verdict,
    convergence_study,
    default_tolerance,
    run_experiment,
    verify_faber_krahn,
    verify_isoperimetry,
    verify_norm_preservation,
    verify_polya_szego,
    verify_saint_venant,
    verify_saturation,
)
from talenti_lab.measure_core import build_grid, radial_potential
from talenti_lab.profiles import (
    anisotropic_gaussian_profile,
    cone_monomial_profile,
    euclidean_ball_profile,
    euclidean_cone_profile,
    gaussian_halfspace_profile,
    log_perturbation,
    perturbed_gaussian_profile,
    radial_logconvex_profile,
)


@pytest.fixture(scope="module")
def gaussian_line():
    profile = gaussian_halfspace_profile([1.0], 1)
    return profile, build_grid(profile.domain, profile.potential, 256)


@pytest.fixture(scope="module")
def lebesgue_disks():
    profile = euclidean_ball_profile(2)
    return profile, build_grid(profile.domain, profile.potential, 128, box=[(-1, 1), (-1, 1)])


def _numbers(report):
    return [(c.seed, c.mass, c.lhs, c.rhs, c.verdict) for c in report.cases]


@pytest.mark.parametrize(("resolution", "expected"), [(64, 0.05), (255, 0.05), (256, 0.02), (1024, 0.02)])
def test_default_tolerance(resolution, expected):
    assert default_tolerance(resolution) == expected


@pytest.mark.parametrize(
    ("margin", "converged", "slack", "verdict"),
    [
        (0.3, True, 0.0, "pass"),
        (-0.01, True, 0.0, "pass"),
        (-0.06, True, 0.0, "fail"),
        (-0.06, True, 0.02, "inconclusive"),
        (0.3, False, 0.0, "inconclusive"),
    ],
)
def test_upper_verdict(margin, converged, slack, verdict):
    assert _upper_verdict(margin, 0.05, converged, slack) == verdict


def test_norm_preservation_on_gaussian_line():
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 2048)

    report = verify_norm_preservation(profile, grid, n_samples=3, seed=4)

    assert report.passed
    assert report.exit_status == 0
    assert [c.seed for c in report.cases] == [4, 5, 6]
    assert set(report.cases[0].extra) == {"gap_p1", "gap_p2", "gap_p3"}


def test_norm_preservation_on_lebesgue_disks(lebesgue_disks):
    profile, grid = lebesgue_disks

    report = verify_norm_preservation(profile, grid, n_samples=3)

    assert report.passed


def test_polya_szego_on_lebesgue_disks(lebesgue_disks):
    profile, grid = lebesgue_disks

    report = verify_polya_szego(profile, grid, n_samples=3, seed=1)

    assert report.tolerance == 0.05
    assert report.passed
    assert all(c.lhs <= c.rhs * 1.05 for c in report.cases)
    assert report.summary == {
        "cases": 3,
        "pass": 3,
        "fail": 0,
        "inconclusive": 0,
        "worst_margin": report.worst_margin,
    }


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_polya_szego_on_gaussian_line(p):
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 2048)

    report = verify_polya_szego(profile, grid, p=p, n_samples=2, seed=6)

    assert report.p == p
    assert report.tolerance == 0.02
    assert report.passed


def test_faber_krahn_on_gaussian_line(gaussian_line):
    profile, grid = gaussian_line

    report = verify_faber_krahn(profile, grid, n_sets=2, seed=3)

    assert report.passed
    for case in report.cases:
        assert case.lhs == pytest.approx(case.extra["lambda_reduced"])
        assert case.extra["cross_check_gap"] < 0.05


@pytest.mark.parametrize(("p", "q"), [(2.0, 1.0), (3.0, 2.0)])
def test_faber_krahn_beyond_the_linear_case(p, q):
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 512)

    report = verify_faber_krahn(profile, grid, p=p, q=q, n_sets=2, cross_check=False)

    assert (report.p, report.q) == (p, q)
    assert report.passed
    assert all(c.lhs <= c.rhs * (1 + report.tolerance) for c in report.cases)


def test_faber_krahn_with_fixed_mass(gaussian_line):
    profile, grid = gaussian_line
    mass = 0.5 * grid.total_mass

    report = verify_faber_krahn(profile, grid, n_sets=2, mass=mass, cross_check=False)

    for case in report.cases:
        assert case.mass == pytest.approx(mass, abs=grid.max_weight)
        assert "lambda_sharp_grid" not in case.extra
    assert report.parameters["mass"] == mass


def test_saint_venant_on_gaussian_line(gaussian_line):
    profile, grid = gaussian_line

    report = verify_saint_venant(profile, grid, n_sets=2, seed=8)

    assert report.passed
    assert all(c.extra["duality_gap"] < 0.01 for c in report.cases)


def test_cases_do_not_depend_on_thread_count(gaussian_line):
    profile, grid = gaussian_line

    serial = verify_saint_venant(profile, grid, n_sets=3, seed=2, threads=1, duality=False)
    pooled = verify_saint_venant(profile, grid, n_sets=3, seed=2, threads=2, duality=False)

    assert _numbers(serial) == _numbers(pooled)


def test_threads_must_be_positive(gaussian_line):
    profile, grid = gaussian_line

    with pytest.raises(ValueError, match="threads"):
        verify_isoperimetry(profile, grid, n_sets=2, threads=0)


def _radial_square():
    weight = radial_potential(lambda s: np.asarray(s) ** 2, lambda s: 2 * np.asarray(s), "power[k=1, a=2]")
    profile = radial_logconvex_profile(weight, 2, r_max=2.0)
    return profile, build_grid(profile.domain, profile.potential, 64, box=[(-1, 1), (-1, 1)])


def _monomial_half_square():
    profile = cone_monomial_profile([1.0], 2)
    return profile, build_grid(profile.domain, profile.potential, 64, box=[(-1, 1), (-1, 1)])


def _lebesgue_quadrant():
    profile = euclidean_cone_profile([[1.0, 0.0], [0.0, 1.0]])
    return profile, build_grid(profile.domain, profile.potential, 64, box=[(0, 1), (0, 1)])


def _anisotropic_plane():
    profile = anisotropic_gaussian_profile([[4.0, 0.0], [0.0, 1.0]], 2)
    return profile, build_grid(profile.domain, profile.potential, 64)


def _log_half_plane():
    profile = perturbed_gaussian_profile(log_perturbation(1.0), 1.0, (0.0, math.inf), 2)
    return profile, build_grid(profile.domain, profile.potential, 64, box=[(-4, 4), (0, 4)])


@pytest.mark.parametrize(
    "setup",
    [_radial_square, _monomial_half_square, _lebesgue_quadrant, _anisotropic_plane, _log_half_plane],
)
def test_norm_preservation_for_each_family(setup):
    profile, grid = setup()

    report = verify_norm_preservation(profile, grid, n_samples=2, seed=1, exponents=(1.0, math.inf), tolerance=0.1)

    assert report.profile == profile.name
    assert report.passed
    assert all(c.extra["gap_pinf"] == 0.0 for c in report.cases)


def test_saturation_on_gaussian_line():
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 512)

    report = verify_saturation(profile, grid, n_levels=4)

    assert len(report.cases) == 4
    assert report.passed
    with pytest.raises(ValueError):
        verify_saturation(profile, grid, n_levels=0)


def test_saturation_on_the_monomial_quarter_plane():
    profile = cone_monomial_profile([1.0, 1.0], 2)
    grid = build_grid(profile.domain, profile.potential, 256, box=[(0, 1), (0, 1)])

    report = verify_saturation(profile, grid, n_levels=10)

    assert len(report.cases) == 10
    assert report.passed


def test_isoperimetry_on_gaussian_line():
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 512)

    report = verify_isoperimetry(profile, grid, n_sets=5)

    assert report.passed
    frame = report.to_frame()
    assert list(frame["index"]) == [0, 1, 2, 3, 4]
    assert {"lhs", "rhs", "margin", "verdict"} <= set(frame.columns)


def test_report_to_dict(gaussian_line):
    profile, grid = gaussian_line

    data = verify_isoperimetry(profile, grid, n_sets=2).to_dict()

    assert data["experiment"] == "isoperimetry"
    assert data["profile"] == profile.name
    assert data["grid"]["resolution"] == 256
    assert data["summary"]["cases"] == 2
    assert all(case["verdict"] in VERDICTS for case in data["cases"])


def test_experiment_needs_at_least_one_case(gaussian_line):
    profile, grid = gaussian_line

    with pytest.raises(ValueError, match="cases"):
        verify_isoperimetry(profile, grid, n_sets=0)


def test_run_experiment_dispatch(gaussian_line):
    profile, grid = gaussian_line

    assert run_experiment("isoperimetry", profile, grid, n_sets=1).kind == "isoperimetry"
    assert "convergence" not in EXPERIMENTS
    with pytest.raises(ValueError, match="unknown experiment"):
        run_experiment("brunn_minkowski", profile, grid)


def test_convergence_study_records_each_resolution():
    profile = gaussian_halfspace_profile([1.0], 1)

    def factory(resolution):
        return build_grid(profile.domain, profile.potential, resolution)

    report = convergence_study("norm_preservation", profile, factory, [128, 256, 512], n_samples=2)

    assert report.kind == "convergence"
    assert [c.extra["resolution"] for c in report.cases] == [128, 256, 512]
    assert report.cases[0].verdict == "pass"
    assert math.isnan(report.cases[0].rhs)
    assert report.parameters["study"] == "norm_preservation"
    assert report.tolerance == 2.0


@pytest.mark.parametrize("resolutions", [[64, 128], [64, 64, 128], [128, 64, 256]])
def test_convergence_study_validates_resolutions(resolutions):
    profile = gaussian_halfspace_profile([1.0], 1)

    with pytest.raises(ValueError, match="resolutions"):
        convergence_study(
            "norm_preservation",
            profile,
            lambda r: build_grid(profile.domain, profile.potential, r),
            resolutions,
        )
