"""Phase sensitivity of a two-mode interferometer fed by two independently
prepared bosonic sources with fluctuating atom number."""

__version__ = "0.1.0"

from .state_model import (
    NumberDistribution,
    DisorderRealization,
    BlockSpectrum,
    build_distribution,
    draw_disorder,
    disorder_pair,
    apply_disorder,
    block_spectra,
)
from .metrology import (
    QfiReport,
    qfi_exact,
    qfi_oracle_general,
    qfi_continuum,
    qfi_perturbative,
    plateau_prediction,
    crlb_bound,
)
from .estimation import (
    OutcomeDistribution,
    FisherReport,
    outcome_probabilities,
    fisher_information,
    optimize_fisher,
    hellinger_fisher,
)
from .spin_algebra import (
    AngularMomentumMatrices,
    RotationKernel,
    angular_momentum_matrices,
    rotation_kernel,
)
from .ensemble import (
    SweepConfig,
    SweepCell,
    SweepResult,
    ProbabilityMap,
    run_disorder_ensemble,
    sweep_sigma,
    probability_map,
    total_variation,
)
