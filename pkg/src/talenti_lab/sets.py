"""Borel sets on weighted grids: relative perimeter and random test sets."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .measure_core import GridFunction, WeightedGrid, check_same_grid, measure_of

logger = logging.getLogger(__name__)

# Mollifier bandwidth, in cells.
PERIMETER_BANDWIDTH = 2.0
MIN_BUMP_WIDTH_CELLS = 4.0


@dataclass(frozen=True, eq=False)
class BorelSet:
    """Per-cell indicator of a subset of X."""

    grid: WeightedGrid
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.array(self.mask, dtype=bool).reshape(-1)
        if mask.size != self.grid.n_cells:
            raise ValueError(f"mask must have {self.grid.n_cells} entries, got {mask.size}")
        if np.any(mask & ~self.grid.inside):
            raise ValueError("set must lie inside the domain (cells with zero weight)")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_mask(cls, grid: WeightedGrid, mask: np.ndarray) -> "BorelSet":
        """Build a set from any boolean mask, dropping cells outside X."""

        return cls(grid, np.asarray(mask, dtype=bool).reshape(-1) & grid.inside)

    @classmethod
    def from_predicate(cls, grid: WeightedGrid, predicate: Callable[[np.ndarray], np.ndarray]) -> "BorelSet":
        return cls.from_mask(grid, predicate(grid.centers))

    @classmethod
    def full(cls, grid: WeightedGrid) -> "BorelSet":
        return cls(grid, grid.inside.copy())

    @classmethod
    def empty(cls, grid: WeightedGrid) -> "BorelSet":
        return cls(grid, np.zeros(grid.n_cells, dtype=bool))

    @property
    def mass(self) -> float:
        return measure_of(self, self.grid)

    @property
    def n_cells(self) -> int:
        return int(np.count_nonzero(self.mask))

    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def covers_domain(self) -> bool:
        return bool(np.array_equal(self.mask, self.grid.inside))

    def complement(self) -> "BorelSet":
        return BorelSet(self.grid, self.grid.inside & ~self.mask)

    def issubset(self, other: "BorelSet") -> bool:
        check_same_grid(self.grid, other.grid)
        return bool(np.all(~self.mask | other.mask))

    def __and__(self, other: "BorelSet") -> "BorelSet":
        check_same_grid(self.grid, other.grid)
        return BorelSet(self.grid, self.mask & other.mask)

    def __or__(self, other: "BorelSet") -> "BorelSet":
        check_same_grid(self.grid, other.grid)
        return BorelSet(self.grid, self.mask | other.mask)

    def indicator(self) -> GridFunction:
        return GridFunction(self.grid, self.mask.astype(float), support=self)


def _masked_gradient(values: np.ndarray, inside: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    """Gradient whose stencils only pair cells that are both inside X.

    Each axis averages the available forward and backward differences; a cell
    with no inside neighbor along an axis gets 0 there.
    """

    parts = []
    for k in range(values.ndim):
        v = np.moveaxis(values, k, 0)
        m = np.moveaxis(inside, k, 0)
        diff = (v[1:] - v[:-1]) / spacing[k]
        ok = m[1:] & m[:-1]
        total = np.zeros_like(v)
        count = np.zeros_like(v)
        total[:-1] += np.where(ok, diff, 0.0)
        count[:-1] += ok
        total[1:] += np.where(ok, diff, 0.0)
        count[1:] += ok
        part = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
        parts.append(np.moveaxis(part, 0, k))
    return np.stack(parts, axis=-1)


def weighted_perimeter(
    omega: BorelSet,
    grid: Optional[WeightedGrid] = None,
    *,
    bandwidth: float = PERIMETER_BANDWIDTH,
) -> float:
    """Weighted perimeter of omega relative to X.

    The indicator is mollified with a Gaussian kernel of ``bandwidth`` cells,
    normalized by the mollified indicator of X so that the boundary of X does
    not register, and exp(W)|grad| of the result is integrated over X.
    """

    grid = omega.grid if grid is None else grid
    check_same_grid(omega.grid, grid)
    if omega.is_empty() or omega.covers_domain():
        return 0.0

    inside = grid.reshape(grid.inside)
    chi = grid.reshape(omega.mask).astype(float)
    numerator = ndimage.gaussian_filter(chi, sigma=bandwidth, mode="reflect")
    denominator = ndimage.gaussian_filter(inside.astype(float), sigma=bandwidth, mode="reflect")
    smoothed = np.zeros_like(chi)
    smoothed[inside] = numerator[inside] / denominator[inside]

    slope = np.linalg.norm(_masked_gradient(smoothed, inside, grid.spacing), axis=-1)
    weights = grid.reshape(grid.weights)
    return float(np.sum(slope[inside] * weights[inside]))


def _weighted_spread(grid: WeightedGrid, candidates: np.ndarray) -> float:
    w = grid.weights[candidates]
    x = grid.centers[candidates]
    mean = np.average(x, axis=0, weights=w)
    var = np.average((x - mean) ** 2, axis=0, weights=w)
    return float(np.sqrt(np.mean(var)))


def _bump_field(
    grid: WeightedGrid,
    rng: np.random.Generator,
    candidates: np.ndarray,
    n_bumps: int,
    *,
    signed: bool,
) -> np.ndarray:
    """Sum of Gaussian bumps centered at mu-distributed points of ``candidates``."""

    idx = np.flatnonzero(candidates)
    prob = grid.weights[idx] / np.sum(grid.weights[idx])
    picks = rng.choice(idx, size=n_bumps, p=prob)
    jitter = (rng.random((n_bumps, grid.dim)) - 0.5) * grid.spacing
    centers = grid.centers[picks] + jitter

    spread = _weighted_spread(grid, candidates)
    min_width = MIN_BUMP_WIDTH_CELLS * float(np.max(grid.spacing))
    widths = np.maximum(spread * rng.uniform(0.15, 0.6, size=n_bumps), min_width)
    amplitudes = rng.uniform(0.5, 1.5, size=n_bumps)
    if signed:
        amplitudes *= rng.choice((-1.0, 1.0), size=n_bumps)

    field = np.zeros(grid.n_cells)
    x = grid.centers
    for center, width, amplitude in zip(centers, widths, amplitudes):
        sq = np.sum((x - center) ** 2, axis=1)
        field += amplitude * np.exp(-0.5 * sq / width**2)
    return field


def random_borel_set(
    grid: WeightedGrid,
    target_mass: float,
    seed: int,
    *,
    window: Optional[BorelSet] = None,
) -> BorelSet:
    """Superlevel set of a random smooth field with mu-mass ``target_mass``.

    The field is a sum of 5-20 bumps with random signs, widths and centers.
    The threshold level is found by binary search over the sorted field, so
    the achieved mass is within half a cell weight of the target. Restricting
    to ``window`` keeps the set inside a sub-region (for instance away from
    truncation faces). Deterministic in (grid, target_mass, seed, window).
    """

    candidates = grid.inside.copy()
    if window is not None:
        check_same_grid(grid, window.grid)
        candidates &= window.mask
    available = float(np.sum(grid.weights[candidates]))
    if not 0 < target_mass < available:
        raise ValueError(f"target_mass must be in (0, {available:.6g}), got {target_mass}")

    rng = np.random.default_rng(seed)
    n_bumps = int(rng.integers(5, 21))
    field = _bump_field(grid, rng, candidates, n_bumps, signed=True)

    idx = np.flatnonzero(candidates)
    order = idx[np.argsort(-field[idx], kind="stable")]
    cumulative = np.cumsum(grid.weights[order])
    k = min(int(np.searchsorted(cumulative, target_mass)), cumulative.size - 1)
    count = k + 1
    if k > 0 and abs(cumulative[k - 1] - target_mass) <= abs(cumulative[k] - target_mass):
        count = k
    mask = np.zeros(grid.n_cells, dtype=bool)
    mask[order[:count]] = True
    logger.debug("random set: %d bumps, mass %.6g (target %.6g)", n_bumps, cumulative[count - 1], target_mass)
    return BorelSet(grid, mask)


def random_lipschitz_function(omega: BorelSet, seed: int) -> GridFunction:
    """Random zero-trace Lipschitz function on omega.

    A positive base plus 3-10 Gaussian bumps (widths >= 4 cells), multiplied
    by a ramp in the distance to the complement of omega that reaches 1 three
    cells inside. Faces of the box that lie on the boundary of X do not count
    as complement.
    """

    grid = omega.grid
    if omega.is_empty():
        return GridFunction(grid, np.zeros(grid.n_cells), support=omega)
    rng = np.random.default_rng(seed)
    n_bumps = int(rng.integers(3, 11))
    base = rng.uniform(0.1, 0.5)
    field = base + _bump_field(grid, rng, omega.mask, n_bumps, signed=False)

    pad = tuple((bool(closed[0]), bool(closed[1])) for closed in grid.closed_faces)
    padded = np.pad(grid.reshape(omega.mask), 1, mode="constant", constant_values=pad)
    dist = ndimage.distance_transform_edt(padded, sampling=grid.spacing)
    dist = dist[tuple(slice(1, -1) for _ in range(grid.dim))].reshape(-1)
    h = float(np.min(grid.spacing))
    ramp = np.clip((dist - 0.5 * h) / (3.0 * h), 0.0, 1.0)

    values = np.where(omega.mask, field * ramp, 0.0)
    return GridFunction(grid, values, support=omega)


def superlevel_set(u: GridFunction, t: float) -> BorelSet:
    """Cells of X where |u| > t."""

    return BorelSet(u.grid, (np.abs(u.values) > t) & u.grid.inside)
