"""Compositional function approximation on spheres with zonal networks."""

__version__ = "0.1.0"

from .sphere import (
    PointSet,
    lift_to_sphere,
    geodesic_distance,
    minimal_separation,
    mesh_norm,
    generate_quasi_uniform,
    surface_area,
)
from .ultraspherical import (
    UltrasphericalBasis,
    build_basis,
    eval_p,
    special_values,
    abs_series_coefficients,
    truncated_abs,
)
from .harmonics import (
    QuadratureRule,
    build_quadrature,
    HarmonicExpansion,
    expand,
    project_degree,
    filtered_approx,
    estimate_degree_of_approximation,
    abs_multipliers,
    abs_convolve,
    abs_deconvolve,
    harmonic_dimension,
)
from .networks import (
    AbsDot,
    ConvKernel,
    ZonalNetwork,
    conv_kernel_phi,
    eval_network,
    choose_centers,
    fit_shallow,
    from_biased_units,
)
from .gfunction import (
    DagGraph,
    GFunction,
    validate_dag,
    variables_seen,
    evaluate,
    estimate_lipschitz,
    propagation_bound,
    example_nine_variable_graph,
)
from .deep import (
    FitConfig,
    DeepApproximation,
    lift_to_deep,
    max_internal_in_degree,
    rate_study,
    fit_loglog_slope,
    binary_tree_target,
    RateTable,
)
from .errors import (
    ContractError,
    UniformityError,
    NodeBudgetError,
    SpectralDomainError,
    RankDeficiencyError,
    DegenerateStudyError,
)
