"""CLI for the weighted symmetrization laboratory."""

from __future__ import annotations

import argparse
import json
from pathlib import Path
import sys
from typing import Callable, Optional

from . import harness
from .artifacts import (
    atomic_write_json,
    report_stem,
    write_grid_function_binary,
    write_grid_function_csv,
    write_profile_table,
    write_report,
    write_step_csv,
)
from .config import ConfigError, RunConfig, build_profile, build_run_grid, load_config
from .measure_core import GridFunction, WeightedGrid, dirichlet_energy
from .profiles import IsoperimetricProfile, list_catalog
from .rearrangement import decreasing_rearrangement, equimeasurability_report, symmetrize, symmetrize_set
from .sets import BorelSet, random_borel_set, random_lipschitz_function
from .variational import (
    first_eigenvalue,
    p_laplacian_residual,
    reduced_first_eigenvalue,
    reduced_torsional_rigidity,
    torsional_rigidity,
)

PROG = "talenti_lab"

COMMANDS = {
    "symmetrize": "Symmetrize a random function on a random set and check equimeasurability",
    "eigen": "First (p, q)-eigenvalue of a random set and of its symmetrization",
    "torsion": "p-torsional rigidity of a random set and of its symmetrization",
    "verify-ps": "Polya-Szego experiment",
    "verify-fk": "Faber-Krahn experiment",
    "verify-sv": "Saint-Venant experiment with the duality check",
    "verify-saturation": "Perimeter of family members against the isoperimetric profile",
    "verify-iso": "Isoperimetric spot check on random sets",
    "converge": "Refinement study of one experiment over config 'resolutions'",
}
VERIFY_STUDIES = {
    "verify-ps": "polya_szego",
    "verify-fk": "faber_krahn",
    "verify-sv": "saint_venant",
    "verify-saturation": "saturation",
    "verify-iso": "isoperimetry",
}


def _say(message: str) -> None:
    print(f"[{PROG}] {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration.")
    common.add_argument("--seed", type=int)
    common.add_argument("--res", type=int, help="Cells per axis.")
    common.add_argument("--p", type=float)
    common.add_argument("--q", type=float)
    common.add_argument("--out", help="Output directory for reports and field dumps.")
    common.add_argument("--threads", type=int, help="Worker threads (default: all cores).")
    common.add_argument("--json", action="store_true", help="Print the result summary as JSON.")

    p = argparse.ArgumentParser(
        prog="python -m talenti_lab.cli",
        description="Weighted Talenti symmetrization: Polya-Szego, Faber-Krahn and Saint-Venant checks.",
    )
    subparsers = p.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=help_text)

    listing = subparsers.add_parser("list-profiles", help="List the profile catalog")
    listing.add_argument("--json", action="store_true", help="Machine-readable schema.")
    return p


def _experiment_params(kind: str, config: RunConfig) -> dict:
    tol = config.tolerance
    if kind == "polya_szego":
        return dict(p=config.p, n_samples=config.n_samples, seed=config.seed, tolerance=tol, threads=config.threads)
    if kind == "faber_krahn":
        return dict(
            p=config.p,
            q=config.q,
            n_sets=config.n_sets,
            seed=config.seed,
            mass=config.mass,
            tolerance=tol,
            threads=config.threads,
        )
    if kind == "saint_venant":
        return dict(
            p=config.p, n_sets=config.n_sets, seed=config.seed, mass=config.mass, tolerance=tol, threads=config.threads
        )
    if kind == "saturation":
        return dict(n_levels=config.n_levels, tolerance=harness.SATURATION_TOLERANCE if tol is None else tol)
    if kind == "norm_preservation":
        return dict(
            n_samples=config.n_samples,
            seed=config.seed,
            tolerance=harness.NORM_TOLERANCE if tol is None else tol,
            threads=config.threads,
        )
    return dict(
        n_sets=config.n_sets,
        seed=config.seed,
        tolerance=harness.ISOPERIMETRY_TOLERANCE if tol is None else tol,
        threads=config.threads,
    )


def _emit_report(report: harness.ExperimentReport, config: RunConfig, stem: str, as_json: bool) -> int:
    json_path, csv_path = write_report(report, config.out, stem, config.to_dict())
    summary = report.summary
    _say(
        f"{report.kind}: {summary['pass']}/{summary['cases']} pass, "
        f"{summary['fail']} fail, {summary['inconclusive']} inconclusive, "
        f"worst margin {summary['worst_margin']:.4g}"
    )
    _say(f"wrote {json_path} and {csv_path}")
    if as_json:
        print(json.dumps({"experiment": report.kind, "summary": summary, "report": str(json_path)}))
    return report.exit_status


def _case_set(profile: IsoperimetricProfile, grid: WeightedGrid, config: RunConfig) -> BorelSet:
    mass = config.mass if config.mass is not None else 0.5 * profile.mass_limit(grid)
    return random_borel_set(grid, mass, config.seed, window=profile.window(grid))


def _dump(out: Path, stem: str, fields: dict[str, GridFunction]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, u in fields.items():
        write_grid_function_csv(u, out / f"{stem}_{name}.csv")
        write_grid_function_binary(u, out / f"{stem}_{name}.bin")


def _write_record(record: dict, config: RunConfig, stem: str, as_json: bool) -> Path:
    path = Path(config.out) / f"{stem}.json"
    atomic_write_json(path, {**record, "config": config.to_dict()})
    _say(f"wrote {path}")
    if as_json:
        print(json.dumps(record, default=str))
    return path


def _run_symmetrize(config: RunConfig, profile: IsoperimetricProfile, grid: WeightedGrid, stem: str, as_json: bool) -> int:
    omega = _case_set(profile, grid, config)
    u = random_lipschitz_function(omega, config.seed)
    u_sharp = symmetrize(u, omega, profile, grid)
    omega_sharp = symmetrize_set(omega, profile, grid)
    report = equimeasurability_report(u, u_sharp, grid, p_test=max(config.p, 1.0))
    tolerance = harness.NORM_TOLERANCE if config.tolerance is None else config.tolerance
    record = {
        "experiment": "symmetrize",
        "profile": profile.describe(),
        "grid": grid.metadata(),
        "mass": omega.mass,
        "mass_sharp": omega_sharp.mass,
        "energy": dirichlet_energy(u, None, config.p),
        "energy_sharp": dirichlet_energy(u_sharp, None, config.p),
        "equimeasurability": report.to_dict(),
        "tolerance": tolerance,
    }
    _write_record(record, config, stem, as_json)
    if config.dump_fields:
        out = Path(config.out)
        _dump(
            out,
            stem,
            {"omega": omega.indicator(), "u": u, "u_sharp": u_sharp, "omega_sharp": omega_sharp.indicator()},
        )
        write_step_csv(decreasing_rearrangement(u, grid), out / f"{stem}_rearrangement.csv")
        write_profile_table(profile, grid, out / f"{stem}_profile.csv")
    _say(f"worst norm gap {report.worst_norm_gap:.3g} (tolerance {tolerance:g})")
    return 0 if report.worst_norm_gap <= tolerance else 1


def _run_eigen(config: RunConfig, profile: IsoperimetricProfile, grid: WeightedGrid, stem: str, as_json: bool) -> int:
    omega = _case_set(profile, grid, config)
    result = first_eigenvalue(omega, grid, config.p, config.q)
    reduced = reduced_first_eigenvalue(profile, omega.mass, config.p, config.q)
    residual = p_laplacian_residual(result.minimizer, omega, grid, None, config.p, result.lambda_, config.q)
    record = {
        "experiment": "eigen",
        "profile": profile.describe(),
        "grid": grid.metadata(),
        "mass": omega.mass,
        "eigen": result.to_dict(),
        "euler_lagrange_residual": residual,
        "symmetrized": reduced.to_dict(),
    }
    _write_record(record, config, stem, as_json)
    if config.dump_fields:
        _dump(Path(config.out), stem, {"omega": omega.indicator(), "minimizer": result.minimizer})
    _say(f"lambda(omega)={result.lambda_:.6g} lambda(omega#)={reduced.lambda_:.6g} iterations={result.iterations}")
    return 0 if result.converged and reduced.converged else 1


def _run_torsion(config: RunConfig, profile: IsoperimetricProfile, grid: WeightedGrid, stem: str, as_json: bool) -> int:
    omega = _case_set(profile, grid, config)
    result = torsional_rigidity(omega, grid, config.p)
    reduced = reduced_torsional_rigidity(profile, omega.mass, config.p)
    record = {
        "experiment": "torsion",
        "profile": profile.describe(),
        "grid": grid.metadata(),
        "mass": omega.mass,
        "torsion": result.to_dict(),
        "symmetrized": reduced.to_dict(),
    }
    _write_record(record, config, stem, as_json)
    if config.dump_fields:
        _dump(Path(config.out), stem, {"omega": omega.indicator(), "state": result.state})
    _say(f"T(omega)={result.T:.6g} T(omega#)={reduced.T:.6g}")
    return 0 if result.converged and reduced.converged else 1


def _run_verify(config: RunConfig, profile: IsoperimetricProfile, grid: WeightedGrid, stem: str, as_json: bool) -> int:
    kind = VERIFY_STUDIES[config.experiment]
    report = harness.run_experiment(kind, profile, grid, **_experiment_params(kind, config))
    return _emit_report(report, config, stem, as_json)


def _run_converge(config: RunConfig, profile: IsoperimetricProfile, stem: str, as_json: bool) -> int:
    _say(
        f"converge study={config.study} profile={config.profile_id} "
        f"resolutions={list(config.resolutions)} seed={config.seed}"
    )
    report = harness.convergence_study(
        config.study,
        profile,
        lambda resolution: build_run_grid(profile, config, resolution),
        config.resolutions,
        **_experiment_params(config.study, config),
    )
    return _emit_report(report, config, stem, as_json)


_HANDLERS: dict[str, Callable[..., int]] = {
    "symmetrize": _run_symmetrize,
    "eigen": _run_eigen,
    "torsion": _run_torsion,
    "verify-ps": _run_verify,
    "verify-fk": _run_verify,
    "verify-sv": _run_verify,
    "verify-saturation": _run_verify,
    "verify-iso": _run_verify,
}


def run(config: RunConfig, *, as_json: bool = False) -> int:
    """Execute one configured run; 0 when every verdict passes, 1 otherwise."""

    profile = build_profile(config.profile, config.box)
    if config.experiment == "converge":
        stem = report_stem(config.experiment, config.profile_id, config.resolutions[-1], config.seed)
        return _run_converge(config, profile, stem, as_json)

    resolution = config.resolution
    grid = build_run_grid(profile, config, resolution)
    stem = report_stem(config.experiment, config.profile_id, resolution, config.seed)
    _say(
        f"{config.experiment} profile={config.profile_id} res={resolution} "
        f"seed={config.seed} cells={grid.n_cells} mass={grid.total_mass:.6g}"
    )
    return _HANDLERS[config.experiment](config, profile, grid, stem, as_json)


def list_profiles(as_json: bool = False) -> int:
    catalog = list_catalog()
    if as_json:
        print(json.dumps(catalog, indent=2))
        return 0
    for entry in catalog:
        params = ", ".join(f"{k}: {v}" for k, v in entry["parameters"].items())
        print(f"{entry['kind']:<22} {entry['family']:<12} {entry['measure']}  [{params}]")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    if args.command == "list-profiles":
        return list_profiles(args.json)

    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = config.with_overrides(
            experiment=args.command,
            seed=args.seed,
            resolution=args.res,
            p=args.p,
            q=args.q,
            out=args.out,
            threads=args.threads,
        )
        return run(config, as_json=args.json)
    except ConfigError as e:
        print(f"ERROR: invalid config key '{e.key}': {e.message}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as e:
        print(f"ERROR: {args.command} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
