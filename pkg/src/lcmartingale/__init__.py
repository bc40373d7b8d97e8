"""Log-concave NPMLE and its martingale posterior via predictive resampling."""

__version__ = "0.1.0"

from .pwl import (  # noqa: E402
    NEG_INF,
    EmpiricalMeasure,
    LogConcaveDensity,
    PiecewiseLinear,
    PWLConcave,
    cdf,
    eval_log,
    integrate_pwl_against,
    integrate_pwl_against_empirical,
    loss,
    normalize,
    quantile,
    segment_exp_integral,
    sup_diff,
)
from .npmle import (  # noqa: E402
    ConvergenceError,
    DegenerateSampleError,
    FitOptions,
    KktReport,
    fit,
    verify_kkt,
)
from .sampler import RngStream, derive_stream, draw  # noqa: E402
from .martingale import (  # noqa: E402
    ChainDiagnostics,
    ChainState,
    PosteriorEnsemble,
    StopRule,
    initial_state,
    predictive_identity_check,
    run_chain,
    run_ensemble,
    step,
    submartingale_gap,
)
from .summary import BandTable, ensemble_spread, knot_report, pointwise_band  # noqa: E402
from .datagen import simulate  # noqa: E402
