"""Critical values and size of tests after conservative model selection.

The null distribution of the post-selection statistic depends on a nuisance
parameter ``gamma``; this package computes worst-case, plug-in (bootstrap),
confidence-set (Loh) and "min" critical values and the exact size of the
resulting tests.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketError, ConvergenceError, DesignError, DomainError, PMSError,
    PreconditionError, RangeError,
)
from .distribution import (  # noqa: E402
    ModelParams, RegressionDesign, TPrimeSample, cdf, density, gamma_from_beta,
    make_stream, quantile, quantiles, sample_tprime, simulate_regression_tstat,
)
from .grid import GridCache, QuantileGrid, build_quantile_grid, interval_sup  # noqa: E402
from .rules import (  # noqa: E402
    CriticalValueRule, RuleContext, RuleKind, SupResult, compute_sup, evaluate_rule,
)
from .size import (  # noqa: E402
    SizeCurve, SizeReport, max_size, n_invariance_check, prop1_decomposition,
    parse_size_csv, read_size_csv, rejection_prob_mc, rejection_prob_semianalytic,
    size_curve, write_size_csv,
)
