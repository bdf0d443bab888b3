"""Coined quantum walks on Z^d: return probabilities, Pólya numbers and
stationary-phase diagnostics.

Typical use::

    from qwalk import ShiftSet, WalkSpec, coins, return_amplitude_series, polya_number

    spec = WalkSpec(ShiftSet.diagonal(2), coins.coin_tensor([coins.hadamard()] * 2),
                    [1, 0, 0, 0])
    series = return_amplitude_series(spec, 500)
    print(polya_number(series).P)
"""

from . import coins
from .errors import (
    AnalysisError,
    BandDiscontinuity,
    ConfigError,
    DimensionMismatch,
    EigensolverFailure,
    FileIOError,
    GridTooSmall,
    InsufficientPositivePoints,
    InvalidShiftSet,
    NoFeatureSurvives,
    NonUnitaryCoin,
    NumericalError,
    QWalkError,
    UnnormalizedFamilyParameters,
    UnnormalizedInitialState,
    VerificationFailed,
    WalkDefinitionError,
)
from .fourier import (
    MomentumGrid,
    build_u_tilde,
    eigendecompose_grid,
    nyquist_size,
    return_amplitude_series,
    summand_decomposition,
)
from .recurrence import (
    Classification,
    DecayFit,
    MonteCarloEstimate,
    PolyaEstimate,
    classify,
    fit_decay_exponent,
    log_truncated_product,
    monte_carlo_polya,
    polya_number,
)
from .series import ReturnSeries
from .spectral import (
    BandStructure,
    ExponentPrediction,
    SpectralReport,
    StationaryFeature,
    analyse,
    continue_bands,
    detect_flat_bands,
    find_stationary_points,
    predict_exponent,
)
from .walk import (
    CoinOperator,
    ShiftSet,
    WalkSpec,
    WalkState,
    evolve,
    init_walk,
    iter_evolve,
    return_probability,
    return_series_direct,
    step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
