"""Entropy analysis for finite Markov kernels and noisy binary shifts."""

from .errors import (
    ConfigError,
    IncompatibleFactors,
    InputError,
    InsufficientDataWarning,
    KelError,
    NonUniqueStationary,
    NotCommuting,
    NotInvariant,
    NotMeasurePreserving,
    NotStabilized,
    NotStochastic,
    UnknownBoundary,
    UnsupportedProfile,
    WindowTooLarge,
)
from .kernels import (
    FiniteSystem,
    Measure,
    Partition,
    StochasticKernel,
    SymbolicBernoulli,
    adjoint,
    canonical_partition,
    class_period,
    closed_classes,
    deterministic_sigma_algebra,
    format_kernel_text,
    invariance_gap,
    koopman,
    maximal_nonrandom_factor,
    new_kernel,
    new_measure,
    read_kernel_file,
    read_kernel_text,
    require_invariant,
    restrict_to_support,
    stationary_measure,
    strongly_connected_components,
    tensor,
)
from .paths import (
    PathMarginal,
    Trajectory,
    block_entropy_estimate,
    markov_entropy_rate,
    marginalize,
    path_marginal,
    sample_path,
    write_marginal_csv,
    write_trajectory,
)
from .rng import SplitMix64
from .shiftnoise import (
    CommutingMixture,
    ConstantTail,
    CorrelationEvidence,
    GeometricTail,
    HarmonicTail,
    JoiningReport,
    NoiseProfile,
    ShiftNoiseKernel,
    TrichotomyCase,
    ZeroTail,
    bit_correlation,
    bit_correlation_exact,
    classify_trichotomy,
    commuting_mixture,
    correlation_curve,
    flip_probability,
    format_profile_text,
    forward_tail_classify,
    joining_report,
    noise_profile,
    parse_profile_text,
    read_profile_file,
    rotation_images,
    shift_noise_boundary,
    shift_noise_kernel,
    simulate_flip_frequency,
    window_evolve,
)
from .tail import (
    BERNOULLI_FULL_SHIFT,
    FINITE_ROTATION,
    TRIVIAL,
    UNKNOWN,
    CompatibilityReport,
    TailBoundary,
    WindowFunction,
    bernoulli_boundary,
    boundary_conditional_limit,
    boundary_report_lines,
    nonrandom_factor_compatibility,
    operator_entropy,
    rota_diagnostics,
    rota_product,
    rotation_boundary,
    tail_boundary_finite,
    unknown_boundary,
    window_collapse,
    window_function,
)

__version__ = "0.1.0"
