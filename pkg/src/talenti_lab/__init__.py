from .measure_core import (
    DomainSpec,
    GridFunction,
    GridMismatchError,
    InfiniteMassError,
    Potential,
    WeightedGrid,
    build_grid,
    dirichlet_energy,
    lp_norm,
    measure_of,
)
from .profiles import (
    IsoperimetricProfile,
    ProfileError,
    anisotropic_gaussian_profile,
    cone_monomial_profile,
    euclidean_ball_profile,
    gaussian_halfspace_profile,
    perturbed_gaussian_profile,
    radial_logconvex_profile,
    validate_profile,
)
from .rearrangement import (
    MonotoneStep,
    decreasing_rearrangement,
    distribution_function,
    equimeasurability_report,
    symmetrize,
    symmetrize_set,
)
from .sets import BorelSet, random_borel_set, random_lipschitz_function, weighted_perimeter
from .variational import (
    SolverError,
    first_eigenvalue,
    p_laplacian_residual,
    reduced_first_eigenvalue,
    reduced_torsional_rigidity,
    torsional_rigidity,
)

__all__ = [
    "DomainSpec",
    "Potential",
    "WeightedGrid",
    "GridFunction",
    "GridMismatchError",
    "InfiniteMassError",
    "build_grid",
    "measure_of",
    "lp_norm",
    "dirichlet_energy",
    "BorelSet",
    "weighted_perimeter",
    "random_borel_set",
    "random_lipschitz_function",
    "MonotoneStep",
    "distribution_function",
    "decreasing_rearrangement",
    "symmetrize",
    "symmetrize_set",
    "equimeasurability_report",
    "IsoperimetricProfile",
    "ProfileError",
    "euclidean_ball_profile",
    "radial_logconvex_profile",
    "cone_monomial_profile",
    "gaussian_halfspace_profile",
    "anisotropic_gaussian_profile",
    "perturbed_gaussian_profile",
    "validate_profile",
    "SolverError",
    "first_eigenvalue",
    "torsional_rigidity",
    "p_laplacian_residual",
    "reduced_first_eigenvalue",
    "reduced_torsional_rigidity",
]
