"""Distribution functions, decreasing rearrangements and Talenti symmetrization.

Everything here is exact bookkeeping on the discrete measure: the
distribution function and the rearrangement are step maps built from the
sorted cell values, and the symmetrization transplants the rearrangement onto
the superlevel family of a profile by accumulating cell weights along that
family.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import TYPE_CHECKING, Optional

import numpy as np

from .measure_core import GridFunction, WeightedGrid, check_same_grid, lp_norm
from .sets import BorelSet

if TYPE_CHECKING:
    from .profiles import IsoperimetricProfile

logger = logging.getLogger(__name__)

DEFAULT_TEST_EXPONENT = 3.0


@dataclass(frozen=True, eq=False)
class MonotoneStep:
    """Right-continuous non-increasing step map on [0, inf).

    ``values[k]`` holds on [breakpoints[k], breakpoints[k + 1]) and
    ``value_at_infinity`` from the last breakpoint on. Queries below the first
    breakpoint return the leading value.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    value_at_infinity: float = 0.0

    def __post_init__(self) -> None:
        breakpoints = np.array(self.breakpoints, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if breakpoints.size == 0:
            raise ValueError("at least one breakpoint is required")
        if values.size != breakpoints.size - 1:
            raise ValueError("need exactly one value per interval between breakpoints")
        if np.any(np.diff(breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        tail = float(self.value_at_infinity)
        if np.any(np.diff(values) > 0) or (values.size and tail > values[-1]):
            raise ValueError("step values must be non-increasing")
        breakpoints.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "breakpoints", breakpoints)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "value_at_infinity", tail)

    @property
    def leading_value(self) -> float:
        return float(self.values[0]) if self.values.size else self.value_at_infinity

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        extended = np.append(self.values, self.value_at_infinity)
        out = np.where(idx < 0, self.leading_value, extended[np.clip(idx, 0, self.values.size)])
        return float(out) if out.ndim == 0 else out

    def support_end(self, level: float) -> float:
        """Right end of {s : self(s) > level} = [t_0, end)."""

        above = np.flatnonzero(self.values > level)
        if self.value_at_infinity > level:
            return math.inf
        if above.size == 0:
            return float(self.breakpoints[0])
        return float(self.breakpoints[above[-1] + 1])


def _sorted_levels(u: GridFunction, grid: WeightedGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cells of X sorted by |u| descending: (magnitudes, cumulative weights, block ends).

    Cumulative weights are accumulated cell by cell so that equal weights give
    identical partial sums regardless of which cells they come from.
    """

    idx = np.flatnonzero(grid.inside)
    magnitude = np.abs(u.values[idx])
    order = np.argsort(-magnitude, kind="stable")
    magnitude = magnitude[order]
    cumulative = np.cumsum(grid.weights[idx][order])
    ends = np.flatnonzero(np.r_[magnitude[1:] != magnitude[:-1], True])
    return magnitude, cumulative, ends


def distribution_function(u: GridFunction, grid: Optional[WeightedGrid] = None) -> MonotoneStep:
    """Phi(t) = mu({|u| > t}) as an exact step map."""

    grid = u.grid if grid is None else grid
    check_same_grid(u.grid, grid)
    magnitude, cumulative, ends = _sorted_levels(u, grid)
    if magnitude.size == 0:
        return MonotoneStep(np.array([0.0]), np.array([]))

    levels = magnitude[ends][::-1]
    # mass of {|u| >= level} for each ascending level
    at_least = cumulative[ends][::-1]
    if levels[0] > 0:
        return MonotoneStep(np.r_[0.0, levels], at_least)
    return MonotoneStep(levels, at_least[1:])


def decreasing_rearrangement(u: GridFunction, grid: Optional[WeightedGrid] = None) -> MonotoneStep:
    """u*(s) = inf{t >= 0 : Phi_u(t) <= s}, built from tie blocks of |u|."""

    grid = u.grid if grid is None else grid
    check_same_grid(u.grid, grid)
    magnitude, cumulative, ends = _sorted_levels(u, grid)
    positive = magnitude[ends] > 0
    levels = magnitude[ends][positive]
    masses = cumulative[ends][positive]
    # blocks too light to move the running sum occupy no interval of [0, inf)
    grows = np.diff(np.r_[0.0, masses]) > 0
    return MonotoneStep(np.r_[0.0, masses[grows]], levels[grows])


def family_masses(profile: "IsoperimetricProfile", grid: WeightedGrid) -> np.ndarray:
    """sigma_i: mu-mass of the cells strictly before x_i along the profile family.

    Cells are ordered by the profile's monotone key (the order of M(param));
    cells with equal key form a block sharing the mass accumulated before it.
    Cells outside X get +inf.
    """

    profile.check_grid(grid)
    idx = np.flatnonzero(grid.inside)
    key = profile.order_key(grid.centers[idx])
    order = np.argsort(key, kind="stable")
    key = key[order]
    cumulative = np.cumsum(grid.weights[idx][order])
    before = np.r_[0.0, cumulative[:-1]]
    starts = np.r_[True, key[1:] != key[:-1]]
    block_start = np.maximum.accumulate(np.where(starts, np.arange(key.size), 0))

    sigma = np.full(grid.n_cells, np.inf)
    sigma[idx[order]] = before[block_start]
    return sigma


def symmetrize(
    u: GridFunction,
    omega: BorelSet,
    profile: "IsoperimetricProfile",
    grid: Optional[WeightedGrid] = None,
) -> GridFunction:
    """(mu, f)-Talenti symmetrization u# of u restricted to omega.

    u#(x_i) = u~*(sigma_i) where u~ is u extended by zero outside omega and
    sigma_i comes from ``family_masses``. The result is non-negative, constant
    on tie blocks of the family and zero outside omega#.
    """

    grid = u.grid if grid is None else grid
    check_same_grid(u.grid, grid)
    check_same_grid(omega.grid, grid)
    extended = GridFunction(grid, np.where(omega.mask, u.values, 0.0))
    star = decreasing_rearrangement(extended, grid)
    sigma = family_masses(profile, grid)
    values = np.zeros(grid.n_cells)
    inside = grid.inside
    values[inside] = star(sigma[inside])
    return GridFunction(grid, values)


def symmetrize_set(
    omega: BorelSet,
    profile: "IsoperimetricProfile",
    grid: Optional[WeightedGrid] = None,
) -> BorelSet:
    """omega# = {chi_omega# > 0}, the family member with the mass of omega."""

    grid = omega.grid if grid is None else grid
    sharp = symmetrize(omega.indicator(), omega, profile, grid)
    return BorelSet(grid, sharp.values > 0)


@dataclass(frozen=True)
class EquimeasurabilityReport:
    """Distribution and norm gaps between a function and its symmetrization."""

    levels: tuple[float, ...]
    distribution_gap: float
    norm_gaps: dict[str, float]
    absolute_norm_gaps: dict[str, float]
    max_cell_weight: float

    @property
    def worst_norm_gap(self) -> float:
        return max(self.norm_gaps.values()) if self.norm_gaps else 0.0

    def to_dict(self) -> dict:
        return {
            "distribution_gap": self.distribution_gap,
            "norm_gaps": dict(self.norm_gaps),
            "absolute_norm_gaps": dict(self.absolute_norm_gaps),
            "worst_norm_gap": self.worst_norm_gap,
            "max_cell_weight": self.max_cell_weight,
            "levels": list(self.levels),
        }


def _exponent_label(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def equimeasurability_report(
    u: GridFunction,
    u_sharp: GridFunction,
    grid: Optional[WeightedGrid] = None,
    levels: int = 32,
    *,
    p_test: float = DEFAULT_TEST_EXPONENT,
) -> EquimeasurabilityReport:
    """Compare Phi_u with Phi_u# at ``levels`` interior levels and the L^p norms.

    Norm gaps are relative to ||u||_p, or absolute when u vanishes.
    """

    grid = u.grid if grid is None else grid
    check_same_grid(u.grid, grid)
    check_same_grid(u_sharp.grid, grid)
    if levels < 1:
        raise ValueError("levels must be >= 1")

    phi_u = distribution_function(u, grid)
    phi_sharp = distribution_function(u_sharp, grid)
    top = max(float(np.max(np.abs(u.values))), float(np.max(np.abs(u_sharp.values))))
    ts = np.linspace(0.0, top, levels + 2)[1:-1] if top > 0 else np.zeros(1)
    distribution_gap = float(np.max(np.abs(phi_u(ts) - phi_sharp(ts))))

    relative: dict[str, float] = {}
    absolute: dict[str, float] = {}
    for p in (1.0, 2.0, float(p_test), math.inf):
        label = _exponent_label(p)
        if label in relative:
            continue
        a = lp_norm(u, None, p)
        b = lp_norm(u_sharp, None, p)
        gap = abs(a - b)
        absolute[label] = gap
        relative[label] = gap / a if a > 0 else gap

    return EquimeasurabilityReport(
        levels=tuple(float(t) for t in ts),
        distribution_gap=distribution_gap,
        norm_gaps=relative,
        absolute_norm_gaps=absolute,
        max_cell_weight=grid.max_weight,
    )
