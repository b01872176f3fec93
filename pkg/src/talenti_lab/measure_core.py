"""Weighted measure spaces discretized on uniform cell-centered grids.

A measure mu = exp(W) dx on an open set X is represented by midpoint
quadrature: every cell of a Cartesian grid over a bounding box carries the
weight exp(W(x_i)) * cell volume when its center lies in X and exactly 0
otherwise. Unbounded domains with finite mass are truncated to a box chosen
from a radial tail bound; the estimated mass left outside is kept on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
import hashlib
import itertools
import logging
import math
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

if TYPE_CHECKING:
    from .sets import BorelSet

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ("full", "box", "cone", "slab", "half_space")
MIN_RESOLUTION = 4

# Radial envelope used for tail bounds.
_TAIL_RADIUS_MAX = 256.0
_TAIL_NODES = 16384

ArrayFn = Callable[[np.ndarray], np.ndarray]


class GridMismatchError(ValueError):
    """Raised when two operands are defined on different grids."""


class InfiniteMassError(ValueError):
    """Raised when an unbounded domain carries infinite mass and no box was given."""


def unit_ball_volume(dim: int) -> float:
    """Lebesgue volume of the unit ball in R^dim."""

    return float(math.pi ** (dim / 2) / special.gamma(dim / 2 + 1))


def unit_sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim (2 for dim = 1)."""

    return float(dim * unit_ball_volume(dim))


@dataclass(frozen=True)
class Potential:
    """Log-density W of a measure, vectorized over points of shape (n, dim)."""

    evaluate: ArrayFn
    gradient: Optional[ArrayFn] = None
    description: str = "W"
    # w with W(x) = w(|x|) when the potential is radial.
    radial: Optional[ArrayFn] = None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluate(np.atleast_2d(points)), dtype=float)


def zero_potential() -> Potential:
    return Potential(
        evaluate=lambda x: np.zeros(x.shape[0]),
        gradient=lambda x: np.zeros_like(x, dtype=float),
        description="lebesgue",
        radial=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
    )


def gaussian_potential() -> Potential:
    """Standard Gaussian potential W(x) = -|x|^2 / 2."""

    return Potential(
        evaluate=lambda x: -0.5 * np.sum(x * x, axis=1),
        gradient=lambda x: -np.asarray(x, dtype=float),
        description="gaussian",
        radial=lambda s: -0.5 * np.asarray(s, dtype=float) ** 2,
    )


def quadratic_form_potential(matrix: np.ndarray) -> Potential:
    """W(x) = -<Ax, x> / 2 for a symmetric matrix A."""

    a = np.array(matrix, dtype=float)
    return Potential(
        evaluate=lambda x: -0.5 * np.einsum("ij,jk,ik->i", x, a, x),
        gradient=lambda x: -(x @ a.T),
        description=f"quadratic_form{a.tolist()}",
    )


def radial_potential(w: ArrayFn, dw: Optional[ArrayFn] = None, description: str = "radial") -> Potential:
    """Potential W(x) = w(|x|) from a scalar profile w and its derivative dw."""

    def evaluate(x: np.ndarray) -> np.ndarray:
        return np.asarray(w(np.linalg.norm(x, axis=1)), dtype=float)

    gradient = None
    if dw is not None:

        def gradient(x: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(x, axis=1)
            scale = np.zeros_like(r)
            nz = r > 0
            scale[nz] = np.asarray(dw(r[nz]), dtype=float) / r[nz]
            return x * scale[:, None]

    return Potential(evaluate=evaluate, gradient=gradient, description=description, radial=w)


def monomial_potential(alphas: Sequence[float]) -> Potential:
    """W(x) = sum_i alpha_i log x_i over the first len(alphas) coordinates."""

    alpha = np.array(alphas, dtype=float)
    k = alpha.size

    def evaluate(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x[:, :k]) @ alpha

    def gradient(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        with np.errstate(divide="ignore"):
            out[:, :k] = alpha / x[:, :k]
        return out

    return Potential(evaluate=evaluate, gradient=gradient, description=f"monomial{alpha.tolist()}")


@dataclass(frozen=True)
class DomainSpec:
    """Open set X the measure lives on.

    ``box`` uses ``bounds`` (one (lo, hi) pair per axis), ``cone`` uses inward
    ``normals`` (x in X iff <x, n> > 0 for every normal), ``slab`` and
    ``half_space`` bound the last coordinate by ``lower`` / ``upper``.
    """

    kind: str
    dim: int
    normals: tuple[tuple[float, ...], ...] = ()
    lower: Optional[float] = None
    upper: Optional[float] = None
    bounds: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"domain kind must be one of {DOMAIN_KINDS}, got {self.kind!r}")
        if isinstance(self.dim, bool) or not isinstance(self.dim, int):
            raise TypeError("dim must be an integer")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "box":
            if len(self.bounds) != self.dim:
                raise ValueError("box bounds need one (lo, hi) pair per axis")
            for lo, hi in self.bounds:
                if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                    raise ValueError("box bounds must be finite with lo < hi")
        if self.kind == "cone":
            if not self.normals:
                raise ValueError("cone needs at least one normal")
            for normal in self.normals:
                if len(normal) != self.dim:
                    raise ValueError("cone normals must have length dim")
                if not np.any(np.asarray(normal) != 0):
                    raise ValueError("cone normals must be nonzero")
        if self.kind == "slab":
            lo = -math.inf if self.lower is None else self.lower
            hi = math.inf if self.upper is None else self.upper
            if not lo < hi:
                raise ValueError("slab needs lower < upper")
        if self.kind == "half_space" and (self.lower is None or not math.isfinite(self.lower)):
            raise ValueError("half_space needs a finite lower bound")

    @classmethod
    def full(cls, dim: int) -> "DomainSpec":
        return cls(kind="full", dim=dim)

    @classmethod
    def box(cls, bounds: Sequence[Sequence[float]]) -> "DomainSpec":
        pairs = tuple((float(lo), float(hi)) for lo, hi in bounds)
        return cls(kind="box", dim=len(pairs), bounds=pairs)

    @classmethod
    def cone(cls, normals: Sequence[Sequence[float]]) -> "DomainSpec":
        rows = tuple(tuple(float(v) for v in n) for n in normals)
        return cls(kind="cone", dim=len(rows[0]) if rows else 0, normals=rows)

    @classmethod
    def slab(cls, dim: int, lower: float, upper: float) -> "DomainSpec":
        return cls(kind="slab", dim=dim, lower=float(lower), upper=float(upper))

    @classmethod
    def half_space(cls, dim: int, lower: float = 0.0) -> "DomainSpec":
        return cls(kind="half_space", dim=dim, lower=float(lower))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership predicate, vectorized over points of shape (n, dim)."""

        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "full":
            return np.ones(x.shape[0], dtype=bool)
        if self.kind == "box":
            b = np.asarray(self.bounds)
            return np.all((x > b[:, 0]) & (x < b[:, 1]), axis=1)
        if self.kind == "cone":
            return np.all(x @ np.asarray(self.normals).T > 0, axis=1)
        lo, hi = self.axis_limits(self.dim - 1)
        return (x[:, -1] > lo) & (x[:, -1] < hi)

    def axis_limits(self, axis: int) -> tuple[float, float]:
        if self.kind == "box":
            return self.bounds[axis]
        if axis == self.dim - 1 and self.kind in ("slab", "half_space"):
            lo = -math.inf if self.lower is None else self.lower
            hi = math.inf if self.upper is None else self.upper
            return lo, hi
        return -math.inf, math.inf

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(v) for k in range(self.dim) for v in self.axis_limits(k))

    def anchor(self) -> np.ndarray:
        """A reference point of X (the vertex for cones) used to center truncation boxes."""

        point = np.zeros(self.dim)
        for k in range(self.dim):
            lo, hi = self.axis_limits(k)
            if math.isfinite(lo) and math.isfinite(hi):
                point[k] = 0.5 * (lo + hi)
            elif math.isfinite(lo):
                point[k] = lo
            elif math.isfinite(hi):
                point[k] = hi
        return point


@dataclass(frozen=True, eq=False)
class WeightedGrid:
    """Cell-centered grid over an axis-aligned box carrying the discretized measure."""

    domain: DomainSpec
    potential: Potential
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    resolution: int
    weights: np.ndarray
    tail_mass: float = 0.0

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.resolution**self.dim

    @cached_property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / self.resolution

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [
            self.lower[k] + (np.arange(self.resolution) + 0.5) * self.spacing[k]
            for k in range(self.dim)
        ]

    @cached_property
    def centers(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @cached_property
    def inside(self) -> np.ndarray:
        return self.weights > 0

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def max_weight(self) -> float:
        return float(np.max(self.weights))

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha1()
        digest.update(np.asarray(self.lower, dtype=float).tobytes())
        digest.update(np.asarray(self.upper, dtype=float).tobytes())
        digest.update(np.int64(self.resolution).tobytes())
        digest.update(np.ascontiguousarray(self.weights).tobytes())
        return digest.hexdigest()

    @cached_property
    def closed_faces(self) -> np.ndarray:
        """(dim, 2) flags: True where a box face lies on the boundary of X.

        Closed faces carry the natural boundary condition; the others are
        truncations of X and act as Dirichlet walls for zero-trace problems.
        """

        flags = np.zeros((self.dim, 2), dtype=bool)
        center = 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))
        for k in range(self.dim):
            for side, bound in enumerate((self.lower[k], self.upper[k])):
                probe = center.copy()
                probe[k] = bound + (-0.5 if side == 0 else 0.5) * self.spacing[k]
                flags[k, side] = not bool(self.domain.contains(probe[None, :])[0])
        return flags

    def reshape(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def scaled(self, factor: float) -> "WeightedGrid":
        """Same grid with every cell weight multiplied by ``factor`` > 0."""

        if not factor > 0:
            raise ValueError("factor must be > 0")
        return replace(self, weights=self.weights * factor, tail_mass=self.tail_mass * factor)

    def metadata(self) -> dict:
        return {
            "dim": self.dim,
            "resolution": self.resolution,
            "box": [[float(lo), float(hi)] for lo, hi in zip(self.lower, self.upper)],
            "tail_mass": float(self.tail_mass) if math.isfinite(self.tail_mass) else None,
            "total_mass": self.total_mass,
            "domain": self.domain.kind,
            "potential": self.potential.description,
            "fingerprint": self.fingerprint,
        }


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Scalar field sampled at cell centers.

    When ``support`` is given the function is tagged zero-trace on that set
    and must vanish on every cell outside it.
    """

    grid: WeightedGrid
    values: np.ndarray
    support: Optional["BorelSet"] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.n_cells:
            raise ValueError(f"values must have {self.grid.n_cells} entries, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        if self.support is not None:
            check_same_grid(self.grid, self.support.grid)
            if np.any(values[~self.support.mask] != 0):
                raise ValueError("zero-trace function must vanish outside its support")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: WeightedGrid, fn: ArrayFn) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.centers), dtype=float))

    def masked(self, omega: "BorelSet") -> "GridFunction":
        """Extension to zero of the restriction to omega."""

        check_same_grid(self.grid, omega.grid)
        return GridFunction(self.grid, np.where(omega.mask, self.values, 0.0), support=omega)

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * factor, support=self.support)

    def shaped(self) -> np.ndarray:
        return self.grid.reshape(self.values)


def check_same_grid(a: WeightedGrid, b: WeightedGrid) -> None:
    if a is b:
        return
    if a.fingerprint != b.fingerprint:
        raise GridMismatchError("operands are defined on different grids")


def _validate_resolution(resolution: int) -> None:
    if isinstance(resolution, bool) or not isinstance(resolution, (int, np.integer)):
        raise TypeError("resolution must be an integer")
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}")


def _ray_directions(dim: int) -> np.ndarray:
    dirs = [d for d in itertools.product((-1.0, 0.0, 1.0), repeat=dim) if any(d)]
    arr = np.asarray(dirs)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def _radial_envelope(domain: DomainSpec, potential: Potential) -> tuple[np.ndarray, np.ndarray, float]:
    """Radial mass density envelope around the domain anchor.

    Returns (radii, scaled density, log scale) where the true density is
    scaled density * exp(log scale).
    """

    radii = np.linspace(0.0, _TAIL_RADIUS_MAX, _TAIL_NODES + 1)[1:]
    anchor = domain.anchor()
    log_env = np.full(radii.size, -np.inf)
    for direction in _ray_directions(domain.dim):
        points = anchor + radii[:, None] * direction
        ok = domain.contains(points)
        if not np.any(ok):
            continue
        logs = np.full(radii.size, -np.inf)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            logs[ok] = potential(points[ok])
        log_env = np.maximum(log_env, np.where(np.isnan(logs), -np.inf, logs))
    with np.errstate(invalid="ignore"):
        log_density = math.log(unit_sphere_area(domain.dim)) + (domain.dim - 1) * np.log(radii) + log_env
    finite = np.isfinite(log_density)
    if np.any(log_density == np.inf) or not np.any(finite):
        return radii, np.full(radii.size, np.inf), 0.0
    shift = float(np.max(log_density[finite]))
    return radii, np.exp(log_density - shift), shift


def _tail_profile(domain: DomainSpec, potential: Potential) -> Optional[tuple[np.ndarray, np.ndarray, float]]:
    """(radii, mass beyond each radius, total) or None when the mass is not finite."""

    radii, density, shift = _radial_envelope(domain, potential)
    if not np.all(np.isfinite(density)):
        return None
    cumulative = integrate.cumulative_trapezoid(density, radii, initial=0.0)
    total = float(cumulative[-1])
    if total <= 0 or density[-1] * radii[-1] > 1e-12 * total:
        return None
    scale = math.exp(shift) if shift < 700 else math.inf
    return radii, (total - cumulative) * scale, total * scale


def build_grid(
    domain: DomainSpec,
    potential: Potential,
    resolution: int,
    tail_tolerance: float = 1e-8,
    *,
    box: Optional[Sequence[Sequence[float]]] = None,
) -> WeightedGrid:
    """Discretize (X, exp(W) dx) on a ``resolution``^dim cell-centered grid.

    The bounding box is, in order of preference: the explicit ``box``; the
    domain's own bounds when X is bounded; a box around the domain anchor whose
    radius leaves at most ``tail_tolerance`` of the mass outside.
    """

    _validate_resolution(resolution)
    if not 0 < tail_tolerance < 1:
        raise ValueError("tail_tolerance must be in (0, 1)")

    dim = domain.dim
    if box is not None:
        pairs = [(float(lo), float(hi)) for lo, hi in box]
        if len(pairs) != dim or any(not lo < hi for lo, hi in pairs):
            raise ValueError("box needs one (lo, hi) pair with lo < hi per axis")
        lower = tuple(lo for lo, _ in pairs)
        upper = tuple(hi for _, hi in pairs)
        tail = 0.0 if domain.bounded else _explicit_box_tail(domain, potential, lower, upper)
    elif domain.bounded:
        lower = tuple(domain.axis_limits(k)[0] for k in range(dim))
        upper = tuple(domain.axis_limits(k)[1] for k in range(dim))
        tail = 0.0
    else:
        profile = _tail_profile(domain, potential)
        if profile is None:
            raise InfiniteMassError("infinite-mass truncation requires explicit box")
        radii, beyond, total = profile
        idx = int(np.searchsorted(-beyond, -tail_tolerance * total))
        idx = min(idx, radii.size - 1)
        radius = float(radii[idx])
        tail = float(beyond[idx])
        anchor = domain.anchor()
        lower_list, upper_list = [], []
        for k in range(dim):
            lo, hi = domain.axis_limits(k)
            lower_list.append(max(lo, anchor[k] - radius))
            upper_list.append(min(hi, anchor[k] + radius))
        lower, upper = tuple(lower_list), tuple(upper_list)
        logger.debug("truncation radius %.4g, tail mass %.3g", radius, tail)

    spacing = (np.asarray(upper) - np.asarray(lower)) / resolution
    axes = [lower[k] + (np.arange(resolution) + 0.5) * spacing[k] for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.reshape(-1) for m in mesh], axis=1)

    inside = domain.contains(centers)
    log_w = np.full(centers.shape[0], -np.inf)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        log_w[inside] = potential(centers[inside])
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise ValueError("potential must be finite on the domain")
    weights = np.exp(log_w) * float(np.prod(spacing))

    grid = WeightedGrid(
        domain=domain,
        potential=potential,
        lower=lower,
        upper=upper,
        resolution=int(resolution),
        weights=weights,
        tail_mass=tail,
    )
    # centers were already computed; reuse them
    grid.__dict__["centers"] = centers
    return grid


def _explicit_box_tail(
    domain: DomainSpec,
    potential: Potential,
    lower: Sequence[float],
    upper: Sequence[float],
) -> float:
    profile = _tail_profile(domain, potential)
    if profile is None:
        return math.inf
    radii, beyond, _ = profile
    anchor = domain.anchor()
    reach = math.inf
    for k in range(domain.dim):
        lo, hi = domain.axis_limits(k)
        if not math.isfinite(lo):
            reach = min(reach, anchor[k] - lower[k])
        if not math.isfinite(hi):
            reach = min(reach, upper[k] - anchor[k])
    if not math.isfinite(reach):
        return 0.0
    if reach <= 0:
        return float(beyond[0])
    return float(np.interp(reach, radii, beyond))


def measure_of(omega: "BorelSet", grid: WeightedGrid) -> float:
    """mu-mass of a set: the sum of its cell weights."""

    check_same_grid(omega.grid, grid)
    return float(np.sum(grid.weights[omega.mask]))


def _selection(u: GridFunction, omega: Optional["BorelSet"]) -> np.ndarray:
    if omega is None:
        return u.grid.inside
    check_same_grid(u.grid, omega.grid)
    return omega.mask & u.grid.inside


def lp_norm(u: GridFunction, omega: Optional["BorelSet"] = None, p: float = 2.0) -> float:
    """Weighted L^p norm over omega (all of X when omega is None); p may be inf."""

    if not p >= 1:
        raise ValueError("p must be >= 1")
    sel = _selection(u, omega)
    magnitude = np.abs(u.values[sel])
    if math.isinf(p):
        return float(np.max(magnitude)) if magnitude.size else 0.0
    return float(np.sum(magnitude**p * u.grid.weights[sel]) ** (1.0 / p))


def gradient(u: GridFunction) -> np.ndarray:
    """Central-difference gradient, one-sided at the box boundary, zero outside X.

    Returns an array of shape (n_cells, dim).
    """

    grid = u.grid
    parts = np.gradient(u.shaped(), *grid.spacing, edge_order=1)
    if grid.dim == 1:
        parts = [parts]
    field = np.stack([np.asarray(part).reshape(-1) for part in parts], axis=1)
    field[~grid.inside] = 0.0
    return field


def dirichlet_energy(u: GridFunction, omega: Optional["BorelSet"] = None, p: float = 2.0) -> float:
    """Sum over omega of |grad u|^p * w with the central-difference gradient."""

    if not p > 1:
        raise ValueError("p must be > 1")
    sel = _selection(u, omega)
    norms = np.linalg.norm(gradient(u)[sel], axis=1)
    return float(np.sum(norms**p * u.grid.weights[sel]))
