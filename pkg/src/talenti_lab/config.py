"""Run configuration: one JSON document per run, with ``kind``-dispatched builders."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import json
import logging
import math
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .measure_core import InfiniteMassError, WeightedGrid, build_grid, radial_potential, zero_potential
from .profiles import (
    ConcavePerturbation,
    IsoperimetricProfile,
    ProfileError,
    affine_perturbation,
    anisotropic_gaussian_profile,
    cone_monomial_profile,
    euclidean_ball_profile,
    euclidean_cone_profile,
    gaussian_halfspace_profile,
    log_perturbation,
    perturbed_gaussian_profile,
    piecewise_perturbation,
    quadratic_perturbation,
    radial_logconvex_profile,
    zero_perturbation,
)

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = (
    "symmetrize",
    "eigen",
    "torsion",
    "verify-ps",
    "verify-fk",
    "verify-sv",
    "verify-saturation",
    "verify-iso",
    "converge",
)
STUDY_KINDS = ("polya_szego", "faber_krahn", "saint_venant", "saturation", "norm_preservation", "isoperimetry")
PROFILE_KINDS = (
    "euclidean",
    "radial_logconvex",
    "cone_monomial",
    "gaussian",
    "anisotropic_gaussian",
    "perturbed_gaussian",
)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "verify-ps"
    profile: Mapping[str, Any] = field(default_factory=lambda: {"kind": "gaussian", "dim": 1})
    resolution: int = 128
    resolutions: tuple[int, ...] = ()
    box: Optional[tuple[tuple[float, float], ...]] = None
    tail_tolerance: float = 1e-8
    p: float = 2.0
    q: float = 2.0
    n_samples: int = 30
    n_sets: int = 20
    n_levels: int = 10
    mass: Optional[float] = None
    seed: int = 0
    out: str = "reports"
    threads: Optional[int] = None
    tolerance: Optional[float] = None
    dump_fields: bool = False
    study: str = "norm_preservation"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config", "top level must be an object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown key")
        return cls().with_overrides(**data)

    def with_overrides(self, **values: Any) -> "RunConfig":
        """Return a copy with the given entries validated and replaced; None leaves a value alone."""

        updates = {}
        for key, value in values.items():
            if value is None:
                continue
            parser = _PARSERS.get(key)
            if parser is None:
                raise ConfigError(key, "unknown key")
            updates[key] = parser(key, value)
        config = replace(self, **updates)
        config.validate()
        return config

    def validate(self) -> None:
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigError("experiment", f"must be one of {EXPERIMENT_KINDS}")
        if self.study not in STUDY_KINDS:
            raise ConfigError("study", f"must be one of {STUDY_KINDS}")
        if self.experiment == "converge" and len(self.resolutions) < 3:
            raise ConfigError("resolutions", "converge needs at least 3 resolutions")
        if self.profile.get("kind") not in PROFILE_KINDS:
            raise ConfigError("profile.kind", f"must be one of {PROFILE_KINDS}")

    @property
    def profile_id(self) -> str:
        return str(self.profile["kind"])

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "profile": json.loads(json.dumps(self.profile)),
            "resolution": self.resolution,
            "resolutions": list(self.resolutions),
            "box": None if self.box is None else [list(pair) for pair in self.box],
            "tail_tolerance": self.tail_tolerance,
            "p": self.p,
            "q": self.q,
            "n_samples": self.n_samples,
            "n_sets": self.n_sets,
            "n_levels": self.n_levels,
            "mass": self.mass,
            "seed": self.seed,
            "threads": self.threads,
            "tolerance": self.tolerance,
            "dump_fields": self.dump_fields,
            "study": self.study,
        }


def _int(minimum: int):
    def parse(key: str, value: Any) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "must be an integer")
        if value < minimum:
            raise ConfigError(key, f"must be >= {minimum}")
        return value

    return parse


def _number(minimum: float, *, strict: bool = False):
    def parse(key: str, value: Any) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "must be a number")
        value = float(value)
        if not math.isfinite(value) or value < minimum or (strict and value == minimum):
            raise ConfigError(key, f"must be {'>' if strict else '>='} {minimum:g}")
        return value

    return parse


def _choice(options: tuple[str, ...]):
    def parse(key: str, value: Any) -> str:
        if value not in options:
            raise ConfigError(key, f"must be one of {options}")
        return value

    return parse


def _string(key: str, value: Any) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(key, "must be a non-empty string")
    return value


def _flag(key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(key, "must be true or false")
    return value


def _profile(key: str, value: Any) -> Mapping[str, Any]:
    if not isinstance(value, Mapping) or "kind" not in value:
        raise ConfigError(key, "must be an object with a 'kind'")
    if value["kind"] not in PROFILE_KINDS:
        raise ConfigError(f"{key}.kind", f"unknown profile kind {value['kind']!r}")
    return dict(value)


def _box(key: str, value: Any) -> tuple[tuple[float, float], ...]:
    try:
        pairs = tuple((float(lo), float(hi)) for lo, hi in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, "must be a list of [lo, hi] pairs") from exc
    if not pairs or any(not lo < hi for lo, hi in pairs):
        raise ConfigError(key, "every pair needs lo < hi")
    return pairs


def _resolutions(key: str, value: Any) -> tuple[int, ...]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(key, "must be a list of integers")
    parse = _int(4)
    parsed = tuple(parse(key, v) for v in value)
    if any(b <= a for a, b in zip(parsed, parsed[1:])):
        raise ConfigError(key, "must be strictly increasing")
    return parsed


def _tail(key: str, value: Any) -> float:
    value = _number(0.0, strict=True)(key, value)
    if value >= 1:
        raise ConfigError(key, "must be < 1")
    return value


_PARSERS = {
    "experiment": _choice(EXPERIMENT_KINDS),
    "profile": _profile,
    "resolution": _int(4),
    "resolutions": _resolutions,
    "box": _box,
    "tail_tolerance": _tail,
    "p": _number(1.0, strict=True),
    "q": _number(1.0),
    "n_samples": _int(1),
    "n_sets": _int(1),
    "n_levels": _int(1),
    "mass": _number(0.0, strict=True),
    "seed": _int(0),
    "out": _string,
    "threads": _int(1),
    "tolerance": _number(0.0),
    "dump_fields": _flag,
    "study": _choice(STUDY_KINDS),
}


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return RunConfig.from_mapping(data)


# ---- builders ----


def _field(spec: Mapping[str, Any], key: str, prefix: str, default: Any = ...) -> Any:
    if key in spec:
        return spec[key]
    if default is ...:
        raise ConfigError(f"{prefix}.{key}", "is required")
    return default


def _dim(spec: Mapping[str, Any], prefix: str) -> int:
    return _int(1)(f"{prefix}.dim", _field(spec, "dim", prefix))


def build_radial_weight(spec: Mapping[str, Any], prefix: str = "profile.potential"):
    kind = spec.get("kind") if isinstance(spec, Mapping) else None
    if kind == "zero":
        return zero_potential()
    if kind == "power":
        k = _number(0.0)(f"{prefix}.k", _field(spec, "k", prefix, 1.0))
        a = _number(1.0)(f"{prefix}.a", _field(spec, "a", prefix, 2.0))
        return radial_potential(
            lambda s: k * np.asarray(s, dtype=float) ** a,
            lambda s: k * a * np.asarray(s, dtype=float) ** (a - 1.0),
            description=f"power[k={k:g}, a={a:g}]",
        )
    raise ConfigError(f"{prefix}.kind", "must be 'zero' or 'power'")


def build_perturbation(spec: Mapping[str, Any], prefix: str = "profile.phi") -> ConcavePerturbation:
    kind = spec.get("kind") if isinstance(spec, Mapping) else None
    if kind == "zero":
        return zero_perturbation()
    if kind == "affine":
        slope = _number(-math.inf)(f"{prefix}.slope", _field(spec, "slope", prefix, 0.0))
        intercept = _number(-math.inf)(f"{prefix}.intercept", _field(spec, "intercept", prefix, 0.0))
        return affine_perturbation(slope, intercept)
    if kind == "quadratic":
        return quadratic_perturbation(_number(0.0)(f"{prefix}.k", _field(spec, "k", prefix)))
    if kind == "log":
        return log_perturbation(_number(0.0)(f"{prefix}.k", _field(spec, "k", prefix)))
    if kind == "piecewise":
        try:
            return piecewise_perturbation(_field(spec, "points", prefix))
        except ProfileError as exc:
            raise ConfigError(f"{prefix}.points", str(exc)) from exc
    raise ConfigError(f"{prefix}.kind", "must be one of zero, affine, quadratic, log, piecewise")


def _slab(spec: Mapping[str, Any], prefix: str) -> tuple[float, float]:
    value = _field(spec, "slab", prefix, [None, None])
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{prefix}.slab", "must be [a, b] with null for an infinite end")
    lo = -math.inf if value[0] is None else float(value[0])
    hi = math.inf if value[1] is None else float(value[1])
    return lo, hi


def _reach(box: Optional[tuple[tuple[float, float], ...]]) -> Optional[float]:
    if box is None:
        return None
    corner = np.max(np.abs(np.asarray(box, dtype=float)), axis=1)
    return float(np.linalg.norm(corner))


def build_profile(
    spec: Mapping[str, Any],
    box: Optional[tuple[tuple[float, float], ...]] = None,
) -> IsoperimetricProfile:
    """Profile for a ``{"kind": ...}`` object; errors name the offending key."""

    prefix = "profile"
    kind = spec.get("kind")
    try:
        if kind == "euclidean":
            return euclidean_ball_profile(_dim(spec, prefix))
        if kind == "radial_logconvex":
            weight = build_radial_weight(_field(spec, "potential", prefix, {"kind": "zero"}))
            return radial_logconvex_profile(weight, _dim(spec, prefix), r_max=_reach(box))
        if kind == "cone_monomial":
            if "normals" in spec and "alphas" not in spec:
                return euclidean_cone_profile(spec["normals"])
            return cone_monomial_profile(_field(spec, "alphas", prefix), _dim(spec, prefix))
        if kind == "gaussian":
            dim = _dim(spec, prefix)
            return gaussian_halfspace_profile(_field(spec, "theta", prefix, np.eye(dim)[0].tolist()), dim)
        if kind == "anisotropic_gaussian":
            return anisotropic_gaussian_profile(_field(spec, "matrix", prefix), _dim(spec, prefix))
        if kind == "perturbed_gaussian":
            phi = build_perturbation(_field(spec, "phi", prefix, {"kind": "zero"}))
            c = _number(0.0, strict=True)(f"{prefix}.c", _field(spec, "c", prefix, 0.5))
            return perturbed_gaussian_profile(
                phi, c, _slab(spec, prefix), _dim(spec, prefix), theta=spec.get("theta")
            )
    except (ProfileError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(prefix, str(exc)) from exc
    raise ConfigError(f"{prefix}.kind", f"unknown profile kind {kind!r}")


def build_run_grid(profile: IsoperimetricProfile, config: RunConfig, resolution: Optional[int] = None) -> WeightedGrid:
    try:
        return build_grid(
            profile.domain,
            profile.potential,
            config.resolution if resolution is None else resolution,
            config.tail_tolerance,
            box=config.box,
        )
    except InfiniteMassError as exc:
        raise ConfigError("box", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError("box" if config.box is not None else "resolution", str(exc)) from exc
