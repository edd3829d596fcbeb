"""sovlab: stochastic operator variance, dissipative OTOCs, and Lyapunov
exponents for systems driven by Gaussian white noise."""

from .classical import (
    LyapunovEstimate,
    PhaseDiagram,
    PhaseState,
    SDEConfig,
    classical_hamiltonian,
    hamilton_rhs,
    hamiltonian_flow,
    lyapunov_benettin,
    lyapunov_from_classical_sov,
    lyapunov_van_kampen,
    phase_diagram,
    phase_from_zeta,
    sde_step_order1,
    van_kampen_matrix,
)
from .errors import ConfigError, ConvergenceError, NumericalError, SovlabError
from .otoc import (
    PER_DIM,
    UNNORMALIZED,
    DissipationAnalysis,
    OTOCGrowthFit,
    OTOCSeries,
    commuting_otoc_closed_form,
    dissipation_time,
    dissipative_otoc,
    lyapunov_from_otoc,
    otoc_from_sov,
)
from .sov import (
    MinSOVResult,
    SOVProjection,
    SOVSeries,
    TransportFit,
    UncertaintyReport,
    covariance,
    exact_sov,
    min_sov_state,
    quantum_variance_gap,
    sov_eigensystem,
    sov_matrices,
    sov_projection,
    sov_rhs_residual,
    sov_series,
    swap_operator,
    swap_product_check,
    transport_exponent_fit,
    uncertainty_check,
)
from .spin import (
    CoherentState,
    HermitianOperator,
    SpinSpec,
    hs_inner,
    lmg_hamiltonian,
    spin_operators,
    su2_coherent_state,
)
from .superop import (
    LindbladSpec,
    PropagationConfig,
    apply_adjoint,
    build_adjoint_lindbladian,
    devectorize,
    propagate,
    propagate_matrix,
    propagate_series,
    vectorize,
)
from .trajectories import (
    EnsembleSpec,
    MomentSeries,
    NoisePath,
    empirical_sov,
    empirical_sov_stderr,
    ensemble_moments,
    heisenberg_trajectory,
    sample_noise_path,
    step_propagator,
    trajectory_seed,
)

__version__ = "0.1.0"
