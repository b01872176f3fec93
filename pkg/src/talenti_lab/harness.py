"""Verification experiments for the weighted Polya-Szego, Faber-Krahn and Saint-Venant inequalities.

Every experiment draws its random cases from per-case seeds (seed + index),
runs them on a thread pool and assembles the report in case order, so a
report depends only on its inputs and never on the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import logging
import math
import os
import time
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from .measure_core import WeightedGrid, dirichlet_energy, lp_norm
from .profiles import IsoperimetricProfile, saturation_gaps
from .rearrangement import equimeasurability_report, symmetrize, symmetrize_set
from .sets import BorelSet, random_borel_set, random_lipschitz_function, weighted_perimeter
from .variational import (
    first_eigenvalue,
    reduced_first_eigenvalue,
    reduced_torsional_rigidity,
    torsional_rigidity,
)

logger = logging.getLogger(__name__)

VERDICTS = ("pass", "fail", "inconclusive")
EXPERIMENTS = (
    "polya_szego",
    "faber_krahn",
    "saint_venant",
    "saturation",
    "norm_preservation",
    "isoperimetry",
)

SATURATION_TOLERANCE = 0.03
ISOPERIMETRY_TOLERANCE = 0.05
NORM_TOLERANCE = 0.02
DUALITY_TOLERANCE = 0.01
CONVERGENCE_NOISE_FACTOR = 2.0
MASS_FRACTIONS = (0.1, 0.9)


def default_tolerance(resolution: int) -> float:
    """Inequality tolerance for a grid resolution: 5% below 256 cells per axis, 2% from 256 on."""

    return 0.05 if resolution < 256 else 0.02


@dataclass(frozen=True)
class CaseRecord:
    """One sample of an experiment.

    ``margin`` is the signed relative slack of the inequality (>= 0 when the
    inequality holds without any tolerance).
    """

    index: int
    seed: int
    mass: float
    lhs: float
    rhs: float
    margin: float
    tolerance: float
    verdict: str
    extra: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {
            "index": self.index,
            "seed": self.seed,
            "mass": self.mass,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }
        for key, value in self.extra.items():
            if np.isscalar(value) or value is None:
                row[key] = value
        return row


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    profile: str
    grid: dict
    p: Optional[float]
    q: Optional[float]
    cases: tuple[CaseRecord, ...]
    tolerance: float
    wall_time: float = 0.0
    parameters: dict = field(default_factory=dict)

    @property
    def counts(self) -> dict[str, int]:
        return {verdict: sum(1 for c in self.cases if c.verdict == verdict) for verdict in VERDICTS}

    @property
    def worst_margin(self) -> float:
        return min((c.margin for c in self.cases), default=math.inf)

    @property
    def passed(self) -> bool:
        return all(c.verdict == "pass" for c in self.cases)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1

    @property
    def summary(self) -> dict:
        counts = self.counts
        return {
            "cases": len(self.cases),
            "pass": counts["pass"],
            "fail": counts["fail"],
            "inconclusive": counts["inconclusive"],
            "worst_margin": self.worst_margin,
        }

    def to_dict(self) -> dict:
        return {
            "experiment": self.kind,
            "profile": self.profile,
            "grid": dict(self.grid),
            "p": self.p,
            "q": self.q,
            "tolerance": self.tolerance,
            "parameters": dict(self.parameters),
            "summary": self.summary,
            "cases": [asdict(c) for c in self.cases],
            "wall_time": self.wall_time,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.to_row() for c in self.cases])


def _upper_verdict(margin: float, tolerance: float, converged: bool = True, slack: float = 0.0) -> str:
    if not converged:
        return "inconclusive"
    if margin >= -tolerance:
        return "pass"
    if margin >= -tolerance - slack:
        return "inconclusive"
    return "fail"


def _warm(grid: WeightedGrid) -> None:
    # fill the cached geometry before workers share the grid
    for name in ("centers", "inside", "closed_faces", "fingerprint", "axes"):
        getattr(grid, name)


def _run_cases(case: Callable[[int], CaseRecord], n_cases: int, threads: Optional[int]) -> tuple[CaseRecord, ...]:
    if n_cases < 1:
        raise ValueError("number of cases must be >= 1")
    if threads is not None and threads < 1:
        raise ValueError("threads must be >= 1")
    workers = threads if threads is not None else os.cpu_count() or 1
    if workers == 1 or n_cases == 1:
        return tuple(case(i) for i in range(n_cases))
    with ThreadPoolExecutor(max_workers=min(workers, n_cases)) as pool:
        return tuple(pool.map(case, range(n_cases)))


def _random_mass(profile: IsoperimetricProfile, grid: WeightedGrid, case_seed: int, mass: Optional[float]) -> float:
    if mass is not None:
        return float(mass)
    rng = np.random.default_rng(case_seed)
    return float(rng.uniform(*MASS_FRACTIONS) * profile.mass_limit(grid))


def _random_case_set(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    case_seed: int,
    mass: Optional[float],
) -> BorelSet:
    target = _random_mass(profile, grid, case_seed, mass)
    return random_borel_set(grid, target, case_seed, window=profile.window(grid))


def _report(
    kind: str,
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    p: Optional[float],
    q: Optional[float],
    cases: tuple[CaseRecord, ...],
    tolerance: float,
    started: float,
    parameters: dict,
) -> ExperimentReport:
    report = ExperimentReport(
        kind=kind,
        profile=profile.name,
        grid=grid.metadata(),
        p=p,
        q=q,
        cases=cases,
        tolerance=tolerance,
        wall_time=time.perf_counter() - started,
        parameters=parameters,
    )
    logger.info("%s on %s: %s", kind, profile.name, report.summary)
    return report


def verify_polya_szego(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    p: float = 2.0,
    n_samples: int = 30,
    seed: int = 0,
    *,
    tolerance: Optional[float] = None,
    threads: Optional[int] = None,
) -> ExperimentReport:
    """energy(u#) <= energy(u) * (1 + tol) for random zero-trace u on random omega."""

    profile.check_grid(grid)
    tol = default_tolerance(grid.resolution) if tolerance is None else tolerance
    started = time.perf_counter()
    _warm(grid)

    def case(index: int) -> CaseRecord:
        case_seed = seed + index
        omega = _random_case_set(profile, grid, case_seed, None)
        u = random_lipschitz_function(omega, case_seed)
        u_sharp = symmetrize(u, omega, profile, grid)
        energy = dirichlet_energy(u, None, p)
        energy_sharp = dirichlet_energy(u_sharp, None, p)
        margin = (energy - energy_sharp) / energy
        norms = equimeasurability_report(u, u_sharp, grid)
        return CaseRecord(
            index,
            case_seed,
            omega.mass,
            energy_sharp,
            energy,
            margin,
            tol,
            _upper_verdict(margin, tol),
            {"norm_gap": norms.worst_norm_gap},
        )

    cases = _run_cases(case, n_samples, threads)
    return _report("polya_szego", profile, grid, p, None, cases, tol, started, {"n_samples": n_samples, "seed": seed})


def verify_faber_krahn(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    p: float = 2.0,
    q: float = 2.0,
    n_sets: int = 20,
    seed: int = 0,
    *,
    mass: Optional[float] = None,
    tolerance: Optional[float] = None,
    threads: Optional[int] = None,
    cross_check: bool = True,
) -> ExperimentReport:
    """lambda(omega#) <= lambda(omega) * (1 + tol).

    lambda(omega#) comes from the one-dimensional reduction along the family;
    the grid solve on omega# is kept as a cross-check.
    """

    profile.check_grid(grid)
    tol = default_tolerance(grid.resolution) if tolerance is None else tolerance
    started = time.perf_counter()
    _warm(grid)

    def case(index: int) -> CaseRecord:
        case_seed = seed + index
        omega = _random_case_set(profile, grid, case_seed, mass)
        original = first_eigenvalue(omega, grid, p, q)
        reduced = reduced_first_eigenvalue(profile, omega.mass, p, q)
        extra = {
            "lambda_reduced": reduced.lambda_,
            "iterations": original.iterations,
            "residual": original.residual,
        }
        converged = original.converged and reduced.converged
        if cross_check:
            omega_sharp = symmetrize_set(omega, profile, grid)
            on_grid = first_eigenvalue(omega_sharp, grid, p, q)
            extra["lambda_sharp_grid"] = on_grid.lambda_
            extra["mass_sharp"] = omega_sharp.mass
            extra["cross_check_gap"] = abs(on_grid.lambda_ - reduced.lambda_) / reduced.lambda_
        margin = (original.lambda_ - reduced.lambda_) / original.lambda_
        slack = max(original.residual, reduced.residual)
        return CaseRecord(
            index,
            case_seed,
            omega.mass,
            reduced.lambda_,
            original.lambda_,
            margin,
            tol,
            _upper_verdict(margin, tol, converged, slack),
            extra,
        )

    cases = _run_cases(case, n_sets, threads)
    return _report(
        "faber_krahn", profile, grid, p, q, cases, tol, started, {"n_sets": n_sets, "seed": seed, "mass": mass}
    )


def verify_saint_venant(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    p: float = 2.0,
    n_sets: int = 20,
    seed: int = 0,
    *,
    mass: Optional[float] = None,
    tolerance: Optional[float] = None,
    threads: Optional[int] = None,
    duality: bool = True,
) -> ExperimentReport:
    """T(omega#) >= T(omega) * (1 - tol), with the check T(omega) * lambda_{p,1}(omega) = 1."""

    profile.check_grid(grid)
    tol = default_tolerance(grid.resolution) if tolerance is None else tolerance
    started = time.perf_counter()
    _warm(grid)

    def case(index: int) -> CaseRecord:
        case_seed = seed + index
        omega = _random_case_set(profile, grid, case_seed, mass)
        original = torsional_rigidity(omega, grid, p)
        reduced = reduced_torsional_rigidity(profile, omega.mass, p)
        converged = original.converged and reduced.converged
        margin = (reduced.T - original.T) / original.T
        extra = {"T_reduced": reduced.T, "iterations": original.iterations}
        verdict = _upper_verdict(margin, tol, converged, max(original.residual, reduced.residual))
        if duality:
            dual = first_eigenvalue(omega, grid, p, 1.0)
            gap = abs(original.T * dual.lambda_ - 1.0)
            extra["lambda_p1"] = dual.lambda_
            extra["duality_gap"] = gap
            if verdict == "pass" and gap > DUALITY_TOLERANCE:
                verdict = "fail" if dual.converged else "inconclusive"
        return CaseRecord(index, case_seed, omega.mass, reduced.T, original.T, margin, tol, verdict, extra)

    cases = _run_cases(case, n_sets, threads)
    return _report(
        "saint_venant", profile, grid, p, None, cases, tol, started, {"n_sets": n_sets, "seed": seed, "mass": mass}
    )


def verify_saturation(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    n_levels: int = 10,
    *,
    tolerance: float = SATURATION_TOLERANCE,
) -> ExperimentReport:
    """Perimeter of mid-range family members against the isoperimetric profile q."""

    profile.check_grid(grid)
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    started = time.perf_counter()
    cases = tuple(
        CaseRecord(
            index,
            0,
            row["mass"],
            row["perimeter"],
            row["profile"],
            -row["gap"],
            tolerance,
            "pass" if row["gap"] <= tolerance else "fail",
            {"level": row["level"], "param": row["param"]},
        )
        for index, row in enumerate(saturation_gaps(profile, grid, n_levels))
    )
    return _report("saturation", profile, grid, None, None, cases, tolerance, started, {"n_levels": n_levels})


def verify_norm_preservation(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    n_samples: int = 30,
    seed: int = 0,
    *,
    exponents: Sequence[float] = (1.0, 2.0, 3.0),
    tolerance: float = NORM_TOLERANCE,
    threads: Optional[int] = None,
) -> ExperimentReport:
    """| ||u||_p - ||u#||_p | / ||u||_p <= tol for random (omega, u)."""

    profile.check_grid(grid)
    started = time.perf_counter()
    _warm(grid)

    def case(index: int) -> CaseRecord:
        case_seed = seed + index
        omega = _random_case_set(profile, grid, case_seed, None)
        u = random_lipschitz_function(omega, case_seed)
        u_sharp = symmetrize(u, omega, profile, grid)
        gaps = {}
        for exponent in exponents:
            norm = lp_norm(u, None, exponent)
            gaps[f"gap_p{exponent:g}"] = abs(norm - lp_norm(u_sharp, None, exponent)) / norm
        worst = max(gaps.values())
        return CaseRecord(
            index,
            case_seed,
            omega.mass,
            lp_norm(u_sharp, None, 2.0),
            lp_norm(u, None, 2.0),
            -worst,
            tolerance,
            "pass" if worst <= tolerance else "fail",
            gaps,
        )

    cases = _run_cases(case, n_samples, threads)
    return _report(
        "norm_preservation", profile, grid, None, None, cases, tolerance, started, {"n_samples": n_samples, "seed": seed}
    )


def verify_isoperimetry(
    profile: IsoperimetricProfile,
    grid: WeightedGrid,
    n_sets: int = 100,
    seed: int = 0,
    *,
    tolerance: float = ISOPERIMETRY_TOLERANCE,
    threads: Optional[int] = None,
) -> ExperimentReport:
    """Spot check: weighted_perimeter(omega) >= q(mass(omega)) * (1 - tol) on random sets."""

    profile.check_grid(grid)
    started = time.perf_counter()
    _warm(grid)

    def case(index: int) -> CaseRecord:
        case_seed = seed + index
        omega = _random_case_set(profile, grid, case_seed, None)
        perimeter = weighted_perimeter(omega, grid)
        bound = float(profile.perimeter_profile(omega.mass))
        margin = (perimeter - bound) / bound
        return CaseRecord(
            index, case_seed, omega.mass, perimeter, bound, margin, tolerance, _upper_verdict(margin, tolerance)
        )

    cases = _run_cases(case, n_sets, threads)
    return _report("isoperimetry", profile, grid, None, None, cases, tolerance, started, {"n_sets": n_sets, "seed": seed})


_RUNNERS: dict[str, Callable[..., ExperimentReport]] = {
    "polya_szego": verify_polya_szego,
    "faber_krahn": verify_faber_krahn,
    "saint_venant": verify_saint_venant,
    "saturation": verify_saturation,
    "norm_preservation": verify_norm_preservation,
    "isoperimetry": verify_isoperimetry,
}


def run_experiment(kind: str, profile: IsoperimetricProfile, grid: WeightedGrid, **params) -> ExperimentReport:
    try:
        runner = _RUNNERS[kind]
    except KeyError:
        raise ValueError(f"unknown experiment {kind!r}; expected one of {EXPERIMENTS}") from None
    return runner(profile, grid, **params)


def _violation(report: ExperimentReport) -> float:
    return max(0.0, -report.worst_margin)


def convergence_study(
    kind: str,
    profile: IsoperimetricProfile,
    grid_factory: Callable[[int], WeightedGrid],
    resolutions: Sequence[int],
    **params,
) -> ExperimentReport:
    """Rerun an experiment under refinement and check that the worst violation does not grow.

    The violation at each resolution is max(0, -worst margin); it must stay
    within a factor 2 of the previous resolution's.
    """

    resolutions = [int(r) for r in resolutions]
    if len(resolutions) < 3:
        raise ValueError("convergence_study needs at least 3 resolutions")
    if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("resolutions must be strictly increasing")

    started = time.perf_counter()
    cases = []
    previous: Optional[float] = None
    grid = None
    for index, resolution in enumerate(resolutions):
        grid = grid_factory(resolution)
        report = run_experiment(kind, profile, grid, **params)
        violation = _violation(report)
        if previous is None:
            margin, verdict = 0.0, "pass"
        else:
            margin = CONVERGENCE_NOISE_FACTOR * previous - violation
            verdict = "pass" if margin >= -1e-12 else "fail"
        cases.append(
            CaseRecord(
                index,
                params.get("seed", 0),
                math.nan,
                violation,
                math.nan if previous is None else previous,
                margin,
                CONVERGENCE_NOISE_FACTOR,
                verdict,
                {
                    "resolution": resolution,
                    "worst_margin": report.worst_margin,
                    "experiment_passed": report.passed,
                    "cases": len(report.cases),
                },
            )
        )
        logger.info("refinement %d: violation %.4g", resolution, violation)
        previous = violation

    return _report(
        "convergence",
        profile,
        grid,
        params.get("p"),
        params.get("q"),
        tuple(cases),
        CONVERGENCE_NOISE_FACTOR,
        started,
        {"study": kind, "resolutions": resolutions, **{k: v for k, v in params.items() if np.isscalar(v)}},
    )
