"""First Dirichlet (p, q)-eigenvalue, p-torsional rigidity and the weighted p-Laplacian residual.

The solvers discretize the Dirichlet energy with one-sided (staggered)
differences so that the p = 2 energy is a symmetric stiffness quadratic form
u^T K u. Unknowns are the values on the cells of omega; everything else is
zero. A neighbor in X but outside omega puts a Dirichlet condition on the
shared face, a neighbor outside X (zero weight) or a box face lying on the
boundary of X contributes nothing (natural boundary condition).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as sparse_linalg

from .measure_core import (
    DomainSpec,
    GridFunction,
    Potential,
    WeightedGrid,
    build_grid,
    check_same_grid,
    gradient as central_gradient,
)
from .sets import BorelSet

if TYPE_CHECKING:
    from .profiles import IsoperimetricProfile

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 100_000
DEFAULT_TOLERANCE = 1e-9
ARMIJO_CONSTANT = 1e-4
BACKTRACK_FACTOR = 0.5
MIN_STEP = 1e-14
REDUCED_NODES = 8192
# Ball problems are solved on (0, rho); half-space ones stop where the family mass
# has dropped by this factor.
HALF_SPACE_MASS_CUTOFF = 1e-12
RESIDUAL_EROSION = 2
METHODS = ("auto", "inverse_iteration", "descent")


class SolverError(ValueError):
    """Raised when a variational problem is ill-posed on the given set."""


@dataclass(frozen=True)
class EigenResult:
    """First (p, q)-eigenvalue with its q-normalized non-negative minimizer."""

    lambda_: float
    minimizer: GridFunction
    iterations: int
    residual: float
    converged: bool
    p: float = 2.0
    q: float = 2.0
    history: tuple[float, ...] = field(default=(), repr=False)
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "p": self.p,
            "q": self.q,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "grid": self.minimizer.grid.fingerprint,
        }


@dataclass(frozen=True)
class TorsionResult:
    T: float
    state: GridFunction
    iterations: int
    residual: float
    converged: bool
    p: float = 2.0

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "p": self.p,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "grid": self.state.grid.fingerprint,
        }


def _validate_exponent(name: str, value: float, lower: float, *, strict: bool) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise TypeError(f"{name} must be a number")
    value = float(value)
    if not math.isfinite(value) or (value <= lower if strict else value < lower):
        raise ValueError(f"{name} must be {'>' if strict else '>='} {lower:g} and finite")
    return value


def _validate_iterations(max_iter: int, tol: float) -> None:
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be > 0")


@dataclass(frozen=True, eq=False)
class StaggeredEnergy:
    """One-sided difference operators for the unknowns on omega.

    ``operators`` stacks, for every axis, the forward then the backward
    difference (2 * dim blocks of n rows); ``cell_weights`` are the weights of
    the cells of omega.
    """

    grid: WeightedGrid
    index: np.ndarray
    cell_weights: np.ndarray
    operators: sparse.csr_matrix
    n_dirichlet: int

    @property
    def size(self) -> int:
        return int(self.index.size)

    @property
    def blocks(self) -> int:
        return 2 * self.grid.dim

    def squared_slopes(self, v: np.ndarray) -> np.ndarray:
        diffs = (self.operators @ v).reshape(self.blocks, self.size)
        return 0.5 * np.sum(diffs * diffs, axis=0)

    def energy(self, v: np.ndarray, p: float) -> float:
        g2 = self.squared_slopes(v)
        return float(np.sum(self.cell_weights * g2 ** (0.5 * p)))

    def energy_gradient(self, v: np.ndarray, p: float) -> np.ndarray:
        diffs = self.operators @ v
        g2 = 0.5 * np.sum(diffs.reshape(self.blocks, self.size) ** 2, axis=0)
        if p == 2.0:
            a = self.cell_weights
        else:
            a = np.zeros_like(g2)
            nz = g2 > 0
            a[nz] = self.cell_weights[nz] * g2[nz] ** (0.5 * p - 1.0)
        return 0.5 * p * (self.operators.T @ (np.tile(a, self.blocks) * diffs))

    def stiffness(self) -> sparse.csc_matrix:
        """K with E_2(v) = v^T K v."""

        w = sparse.diags(np.tile(self.cell_weights, self.blocks))
        return (0.5 * (self.operators.T @ w @ self.operators)).tocsc()

    def lift(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n_cells)
        out[self.index] = v
        return out


def staggered_energy(omega: BorelSet, grid: Optional[WeightedGrid] = None) -> StaggeredEnergy:
    """Assemble the difference operators for zero-trace functions on omega."""

    grid = omega.grid if grid is None else grid
    check_same_grid(omega.grid, grid)
    index = np.flatnonzero(omega.mask)
    n = index.size
    position = np.full(grid.n_cells, -1)
    position[index] = np.arange(n)
    coords = np.unravel_index(index, grid.shape)
    strides = np.array([grid.resolution ** (grid.dim - 1 - k) for k in range(grid.dim)])
    rows_all = np.arange(n)

    blocks = []
    n_dirichlet = 0
    for k in range(grid.dim):
        h = float(grid.spacing[k])
        for side, step in ((1, 1), (0, -1)):
            nb_coord = coords[k] + step
            beyond = (nb_coord < 0) | (nb_coord >= grid.resolution)
            neighbor = np.where(beyond, 0, index + step * strides[k])
            in_omega = ~beyond & omega.mask[neighbor]
            in_x = ~beyond & grid.inside[neighbor]
            wall = beyond & (not grid.closed_faces[k, side])
            dirichlet = (in_x & ~in_omega) | wall

            rows = np.concatenate([rows_all[in_omega], rows_all[in_omega], rows_all[dirichlet]])
            cols = np.concatenate([rows_all[in_omega], position[neighbor[in_omega]], rows_all[dirichlet]])
            data = np.concatenate(
                [
                    np.full(int(in_omega.sum()), -1.0 / h),
                    np.full(int(in_omega.sum()), 1.0 / h),
                    np.full(int(dirichlet.sum()), -2.0 / h),
                ]
            )
            blocks.append(sparse.csr_matrix((data, (rows, cols)), shape=(n, n)))
            n_dirichlet += int(dirichlet.sum())

    return StaggeredEnergy(
        grid=grid,
        index=index,
        cell_weights=grid.weights[index],
        operators=sparse.vstack(blocks, format="csr"),
        n_dirichlet=n_dirichlet,
    )


def discrete_energy(u: GridFunction, omega: BorelSet, p: float = 2.0) -> float:
    """Solver energy sum_i w_i |grad u|_i^p of the zero-trace function u on omega."""

    p = _validate_exponent("p", p, 1.0, strict=True)
    check_same_grid(u.grid, omega.grid)
    energy = staggered_energy(omega)
    return energy.energy(u.values[energy.index], p)


def _q_norm(v: np.ndarray, w: np.ndarray, q: float) -> float:
    return float(np.sum(w * np.abs(v) ** q) ** (1.0 / q))


def _factorize(stiffness: sparse.csc_matrix):
    try:
        return sparse_linalg.splu(stiffness)
    except RuntimeError as exc:
        raise SolverError("stiffness matrix is singular on omega") from exc


def _require_mass(omega: BorelSet, grid: WeightedGrid) -> None:
    check_same_grid(omega.grid, grid)
    if omega.is_empty() or not omega.mass > 0:
        raise SolverError("omega must have positive mass")


@dataclass
class _DescentOutcome:
    x: np.ndarray
    value: float
    iterations: int
    change: float
    converged: bool
    history: list[float]


def _preconditioned_descent(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    precondition: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    normalize: Callable[[np.ndarray], np.ndarray] = lambda x: x,
    max_iter: int,
    tol: float,
) -> _DescentOutcome:
    """Backtracking (Armijo) descent along -P grad f.

    Stops when the relative change of f drops below ``tol``. A line search
    that cannot decrease f any further counts as convergence.
    """

    x = normalize(x0)
    value = objective(x)
    history = [value]
    step = 1.0
    change = math.inf
    for iteration in range(1, max_iter + 1):
        g = gradient(x)
        direction = -precondition(g)
        slope = float(g @ direction)
        if not slope < 0:
            return _DescentOutcome(x, value, iteration, 0.0, True, history)

        step = min(2.0 * step, 1.0)
        while True:
            candidate = x + step * direction
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                trial = objective(candidate)
            if math.isfinite(trial) and trial <= value + ARMIJO_CONSTANT * step * slope:
                break
            step *= BACKTRACK_FACTOR
            if step < MIN_STEP:
                logger.debug("line search stalled after %d iterations", iteration)
                return _DescentOutcome(x, value, iteration, 0.0, True, history)

        x = normalize(candidate)
        change = abs(trial - value) / max(abs(value), 1e-300)
        value = objective(x)
        history.append(value)
        if change < tol:
            return _DescentOutcome(x, value, iteration, change, True, history)
    return _DescentOutcome(x, value, max_iter, change, False, history)


def _inverse_iteration(
    energy: StaggeredEnergy,
    solver,
    stiffness: sparse.csc_matrix,
    *,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, float, int, float, bool, list[float]]:
    w = energy.cell_weights
    u = np.ones(energy.size)
    u /= math.sqrt(float(np.sum(w * u * u)))
    rayleigh = float(u @ (stiffness @ u))
    history = [rayleigh]
    change = math.inf
    for iteration in range(1, max_iter + 1):
        x = solver.solve(w * u)
        u = x / math.sqrt(float(np.sum(w * x * x)))
        updated = float(u @ (stiffness @ u))
        change = abs(updated - rayleigh) / max(abs(rayleigh), 1e-300)
        rayleigh = updated
        history.append(rayleigh)
        if change < tol:
            return u, rayleigh, iteration, change, True, history
    return u, rayleigh, max_iter, change, False, history


def first_eigenvalue(
    omega: BorelSet,
    grid: Optional[WeightedGrid] = None,
    p: float = 2.0,
    q: float = 2.0,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOLERANCE,
    method: str = "auto",
) -> EigenResult:
    """Minimize E_p(u) / ||u||_{q, omega}^p over grid functions vanishing off omega.

    ``auto`` uses inverse power iteration for p = q = 2 and, otherwise,
    Sobolev-preconditioned descent started from the p = 2 eigenfunction.
    ``descent`` forces the descent and starts it from the indicator of omega.
    The admissible q range depends on the measure and is not checked.
    """

    grid = omega.grid if grid is None else grid
    p = _validate_exponent("p", p, 1.0, strict=True)
    q = _validate_exponent("q", q, 1.0, strict=False)
    _validate_iterations(max_iter, tol)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "inverse_iteration" and (p != 2.0 or q != 2.0):
        raise ValueError("inverse_iteration needs p = q = 2")
    _require_mass(omega, grid)

    energy = staggered_energy(omega, grid)
    w = energy.cell_weights

    if energy.n_dirichlet == 0:
        # constants have zero energy when omega touches no Dirichlet face
        u = np.full(energy.size, 1.0 / _q_norm(np.ones(energy.size), w, q))
        logger.info("omega has no Dirichlet boundary; first eigenvalue is 0")
        return EigenResult(0.0, GridFunction(grid, energy.lift(u), support=omega), 0, 0.0, True, p, q, (0.0,), True)

    stiffness = energy.stiffness()
    solver = _factorize(stiffness)

    if method != "descent" and p == 2.0 and q == 2.0:
        u, lam, iterations, change, converged, history = _inverse_iteration(
            energy, solver, stiffness, max_iter=max_iter, tol=tol
        )
        u = np.abs(u)
        logger.debug("inverse iteration: lambda=%.10g after %d iterations", lam, iterations)
        return EigenResult(
            lam,
            GridFunction(grid, energy.lift(u), support=omega),
            iterations,
            change,
            converged,
            p,
            q,
            tuple(history),
        )
    if method == "descent":
        start = np.ones(energy.size)
    else:
        start, *_ = _inverse_iteration(energy, solver, stiffness, max_iter=max_iter, tol=tol)
        start = np.abs(start)

    def normalize(v: np.ndarray) -> np.ndarray:
        return v / _q_norm(v, w, q)

    def rayleigh(v: np.ndarray) -> float:
        return energy.energy(v, p) / _q_norm(v, w, q) ** p

    def rayleigh_gradient(v: np.ndarray) -> np.ndarray:
        norm = _q_norm(v, w, q)
        e = energy.energy(v, p)
        norm_grad = p * norm ** (p - q) * w * np.abs(v) ** (q - 1.0) * np.sign(v)
        return energy.energy_gradient(v, p) / norm**p - e * norm_grad / norm ** (2.0 * p)

    outcome = _preconditioned_descent(
        rayleigh, rayleigh_gradient, solver.solve, start, normalize=normalize, max_iter=max_iter, tol=tol
    )
    u = normalize(np.abs(outcome.x))
    lam = rayleigh(u)
    if not outcome.converged:
        logger.warning("(p, q) = (%g, %g) descent did not converge in %d iterations", p, q, max_iter)
    return EigenResult(
        lam,
        GridFunction(grid, energy.lift(u), support=omega),
        outcome.iterations,
        outcome.change,
        outcome.converged,
        p,
        q,
        tuple(outcome.history),
    )


def torsional_rigidity(
    omega: BorelSet,
    grid: Optional[WeightedGrid] = None,
    p: float = 2.0,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOLERANCE,
) -> TorsionResult:
    """T_p(omega) = (sum u w)^p / E_p(u) at the minimizer of E_p(u)/p - sum u w."""

    grid = omega.grid if grid is None else grid
    p = _validate_exponent("p", p, 1.0, strict=True)
    _validate_iterations(max_iter, tol)
    _require_mass(omega, grid)

    energy = staggered_energy(omega, grid)
    if energy.n_dirichlet == 0:
        raise SolverError("omega has no Dirichlet boundary: constants make the torsion unbounded")
    w = energy.cell_weights
    stiffness = energy.stiffness()
    solver = _factorize(stiffness)
    linear = solver.solve(w)

    if p == 2.0:
        u = np.maximum(linear, 0.0)
        e = energy.energy(u, p)
        load = float(np.sum(u * w))
        residual = float(np.linalg.norm(stiffness @ linear - w) / np.linalg.norm(w))
        return TorsionResult(load**2 / e, GridFunction(grid, energy.lift(u), support=omega), 1, residual, True, p)

    e2 = energy.energy(linear, p)
    scale = (float(np.sum(linear * w)) / e2) ** (1.0 / (p - 1.0))

    def functional(v: np.ndarray) -> float:
        return energy.energy(v, p) / p - float(np.sum(v * w))

    def functional_gradient(v: np.ndarray) -> np.ndarray:
        return energy.energy_gradient(v, p) / p - w

    outcome = _preconditioned_descent(
        functional, functional_gradient, solver.solve, scale * linear, max_iter=max_iter, tol=tol
    )
    u = np.abs(outcome.x)
    e = energy.energy(u, p)
    rigidity = float(np.sum(u * w)) ** p / e
    if not outcome.converged:
        logger.warning("p = %g torsion descent did not converge in %d iterations", p, max_iter)
    return TorsionResult(
        rigidity,
        GridFunction(grid, energy.lift(u), support=omega),
        outcome.iterations,
        outcome.change,
        outcome.converged,
        p,
    )


def _potential_gradient(grid: WeightedGrid, potential: Potential) -> np.ndarray:
    if potential.gradient is not None:
        out = np.zeros((grid.n_cells, grid.dim))
        inside = grid.inside
        out[inside] = np.asarray(potential.gradient(grid.centers[inside]), dtype=float)
        return out
    logs = np.zeros(grid.n_cells)
    logs[grid.inside] = potential(grid.centers[grid.inside])
    return central_gradient(GridFunction(grid, logs))


def p_laplacian_residual(
    u: GridFunction,
    omega: BorelSet,
    grid: Optional[WeightedGrid] = None,
    potential: Optional[Potential] = None,
    p: float = 2.0,
    lam: float = 0.0,
    q: Optional[float] = None,
) -> float:
    """Relative weighted L^2 residual of the Euler-Lagrange equation on interior cells.

    -div(|grad u|^(p-2) grad u) - |grad u|^(p-2) <grad W, grad u> = lam ||u||_q^(p-q) |u|^(q-2) u,
    with centered differences for both the gradient and the divergence.
    """

    grid = u.grid if grid is None else grid
    check_same_grid(u.grid, grid)
    check_same_grid(omega.grid, grid)
    potential = grid.potential if potential is None else potential
    q = p if q is None else q

    values = np.where(omega.mask, u.values, 0.0)
    shaped = grid.reshape(values)
    parts = np.gradient(shaped, *grid.spacing, edge_order=1)
    if grid.dim == 1:
        parts = [parts]
    grads = np.stack([np.asarray(part) for part in parts], axis=-1)
    slope = np.linalg.norm(grads, axis=-1)
    if p == 2.0:
        coefficient = np.ones_like(slope)
    else:
        coefficient = np.zeros_like(slope)
        nz = slope > 0
        coefficient[nz] = slope[nz] ** (p - 2.0)

    divergence = np.zeros_like(shaped)
    for k in range(grid.dim):
        divergence += np.gradient(coefficient * grads[..., k], grid.spacing[k], axis=k, edge_order=1)

    grad_w = _potential_gradient(grid, potential).reshape(grid.shape + (grid.dim,))
    drift = coefficient * np.sum(grad_w * grads, axis=-1)

    w = grid.reshape(grid.weights)
    sel_flat = omega.mask
    norm = float(np.sum(grid.weights[sel_flat] * np.abs(values[sel_flat]) ** q) ** (1.0 / q))
    scale = lam * norm ** (p - q) if norm > 0 else 0.0
    rhs = scale * np.sign(shaped) * np.abs(shaped) ** (q - 1.0)
    residual = -divergence - drift - rhs

    interior = ndimage.binary_erosion(grid.reshape(omega.mask), iterations=RESIDUAL_EROSION)
    if not np.any(interior):
        return math.inf
    num = math.sqrt(float(np.sum(w[interior] * residual[interior] ** 2)))
    den = math.sqrt(float(np.sum(w[interior] * rhs[interior] ** 2)))
    return num / den if den > 0 else num


# ---- one-dimensional reductions of symmetrized problems ----


def _reduced_problem(profile: "IsoperimetricProfile", mass: float, nodes: int) -> tuple[BorelSet, WeightedGrid]:
    """Grid in the family parameter carrying the measure |M'(t)| dt, and the reduced omega#."""

    if nodes < 64:
        raise ValueError("nodes must be >= 64")
    if not mass > 0:
        raise SolverError("mass must be > 0")
    if mass >= profile.total_mass:
        raise SolverError("symmetrized set covers the whole domain")

    if profile.family == "balls":
        rho = float(profile.inverse_cumulative(mass))
        h = rho / nodes
        lower, upper = 0.0, rho + 4 * h

        def in_omega(t: np.ndarray) -> np.ndarray:
            return t < rho

    else:
        r0 = float(profile.inverse_cumulative(mass))
        t_hi = profile.param_range[1]
        if not math.isfinite(t_hi):
            t_hi = float(profile.inverse_cumulative(mass * HALF_SPACE_MASS_CUTOFF))
        h = (t_hi - r0) / nodes
        lower, upper = r0 - 4 * h, t_hi

        def in_omega(t: np.ndarray) -> np.ndarray:
            return t > r0

    density = profile.density

    def log_density(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(density(x[:, 0]), dtype=float))

    potential = Potential(evaluate=log_density, description=f"reduced[{profile.name}]")
    domain = DomainSpec.box([(lower, upper)])
    grid = build_grid(domain, potential, nodes + 4)
    omega = BorelSet.from_mask(grid, in_omega(grid.centers[:, 0]))
    return omega, grid


def reduced_first_eigenvalue(
    profile: "IsoperimetricProfile",
    mass: float,
    p: float = 2.0,
    q: float = 2.0,
    *,
    nodes: int = REDUCED_NODES,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOLERANCE,
) -> EigenResult:
    """First eigenvalue of the family member of the given mass, solved along the family parameter.

    Functions constant on the level sets of f reduce the problem to one
    dimension with the measure |M'(t)| dt.
    """

    omega, grid = _reduced_problem(profile, mass, nodes)
    return first_eigenvalue(omega, grid, p, q, max_iter=max_iter, tol=tol)


def reduced_torsional_rigidity(
    profile: "IsoperimetricProfile",
    mass: float,
    p: float = 2.0,
    *,
    nodes: int = REDUCED_NODES,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOLERANCE,
) -> TorsionResult:
    omega, grid = _reduced_problem(profile, mass, nodes)
    return torsional_rigidity(omega, grid, p, max_iter=max_iter, tol=tol)
