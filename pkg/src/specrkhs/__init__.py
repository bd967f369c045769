"""Residual-verified spectral analysis of Koopman and Perron-Frobenius operators on RKHSs.

Compute Gram matrices from snapshot data and a kernel, verify eigenpairs
through exactly evaluable RKHS residuals, sweep approximate-point
pseudospectra on both the Perron-Frobenius and Koopman sides, smooth
spectral measures of normal operators with high-order rational kernels, and
produce observable forecasts with a-priori error bounds.
"""

from .dynamics import (
    GridPoints,
    RandomBox,
    SnapshotSet,
    SystemSpec,
    Trajectory,
    chebyshev_nodes,
    concat_snapshots,
    generate_snapshots,
    load_snapshots,
    save_snapshots,
    step,
    transition_gram_row_exact,
)
from .forecast import (
    ForecastModel,
    error_bound,
    fit_model,
    predict,
    project_state_observables,
    rkhs_norm,
)
from .gram import (
    CompressedBasis,
    GramTriple,
    build_gram,
    build_gram_markov_exact,
    compress,
    load_gram,
    save_gram,
    stochastic_A,
    stochastic_R,
    to_u_basis,
)
from .kernels import (
    KernelSpec,
    WendlandPolynomial,
    eval_kernel,
    kernel_lipschitz_constant,
    kernel_matrix,
    parse_kernel_spec,
    poincare_distance,
    wendland_polynomial,
)
from .linalg import (
    GeneralizedEigResult,
    general_geig,
    hermitian_definite_geig,
    perturbed_geig_bound,
    smallest_geig_pair,
    solve_least_squares,
)
from .measures import (
    MeasureSamples,
    NormalityReport,
    RationalSmoothingKernel,
    check_normality,
    default_poles,
    observable_to_u,
    rational_kernel,
    spectral_measure_selfadjoint,
    spectral_measure_unitary,
)
from .spectra import (
    PseudospectrumResult,
    VerifiedEigenpair,
    default_grid,
    pseudospectrum_koop,
    pseudospectrum_pf,
    residual,
    residual_compressed,
    verify_eigenpairs,
)

__version__ = "0.1.0"
