"""Schroedinger dynamics on star-shaped metric graphs under general vertex couplings."""

from .coupling import (
    CouplingPair,
    CouplingError,
    DegenerateCouplingError,
    PoleError,
    ProjectorDecomposition,
    ScatteringModes,
    ScatteringSample,
    ValidityReport,
    delta,
    delta_prime,
    dirichlet,
    equivalent,
    kirchhoff,
    neumann,
    preset,
    projector_decomposition,
    random_coupling,
    scattering_matrix,
    scattering_modes,
    validate,
)
from .grids import (
    AdmissiblePair,
    GraphFunction,
    GridError,
    NormDomainError,
    StarGrid,
    admissible_pair_for,
    gaussian_data,
    lp_norm,
    mixed_norm,
    read_csv,
    sech_data,
    write_csv,
)
from .energy import EnergyForm, FormDomainError, check_form_domain, energy, make_energy_form, quadratic_energy
from .spectrum import (
    BoundState,
    Spectrum,
    SpectrumSearchError,
    count_negative_eigenvalues,
    find_bound_states,
    project_ac,
    project_point,
    strip_radius,
)
from .propagator import (
    PlanError,
    PropagatorPlan,
    StripViolationError,
    WindowEscapeError,
    boundary_residual,
    check_window,
    k_kernel_eval,
    kernel_eval,
    make_plan,
    propagate_ac,
    propagate_full,
    regularizer_apply,
    resolvent_apply,
)
from .cn import apply_hamiltonian, build_form_system, crank_nicolson_oracle
from .nls import (
    ConservationLog,
    MassDriftError,
    NlsParams,
    NlsResult,
    nls_solve,
    nonlinear_step,
    regularized_nonlinearity,
)

__version__ = "0.1.0"
