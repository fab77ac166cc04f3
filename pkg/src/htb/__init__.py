"""Asymptotic VaR/CoTE bounds for Pareto-tailed risks shared among agents."""

from .spectral import (
    DegenerateMarginError,
    DiscreteSpectralMeasure,
    NormMismatchError,
    RNorm,
    TailModel,
    canonicalize,
    g_functional,
    make_dependent,
    make_independent,
    margins,
    measure_from_atoms,
    pushforward,
)
from .sharing import (
    EXACT,
    BipartiteGraph,
    Deterministic,
    EnumerationTooLargeError,
    ExpectationEstimate,
    MonteCarlo,
    SamplerHook,
    Scenarios,
    expect,
    moment_diagnostic,
    operator_norm,
    sample,
)
from .risk import (
    BoundReport,
    InfiniteMeanError,
    RegimeClassification,
    RiskConstants,
    classify_regime,
    constants_custom,
    constants_dependent,
    constants_independent,
    cote_asymptotic,
    counterexample_measure,
    counterexample_suite,
    var_asymptotic,
    verify_bounds,
)
from .simulator import (
    DependenceSpec,
    EmptyTailError,
    SampleBatch,
    TailUndersampledWarning,
    convergence_study,
    empirical_cote,
    empirical_var,
    sample_F,
    sample_V,
)

__version__ = "0.1.0"
