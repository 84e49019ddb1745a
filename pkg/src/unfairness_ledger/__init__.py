"""Audit risk scores and classifiers with the calibration/imbalance accounting identity.

For a globally calibrated score ``z`` of a binary outcome ``y`` and a binary
group ``g``::

    delta_c + delta_b == mse(z) * (P(g=1 | y=1) - P(g=1 | y=0))

where ``delta_c`` is the overlap-weighted within-group miscalibration and
``delta_b`` the overlap-weighted imbalance of scores across groups.
"""

from .calibration import IsotonicFit, calibration_residual, pava_isotonic, recalibrate_empirical
from .classifier import ClassifierStats, GroupRates, classifier_decompose, classifier_stats, derived_score_table
from .core import AuditTable, Binning, BinningSpec, bin_assign, fixture_c10, fixture_t4, table_from_rows, validate_table
from .errors import DegenerateInputError, ValidationError
from .estimators import (
    BudgetTerms,
    UnfairnessCurve,
    aggregate,
    base_rate_gap,
    budget_general,
    budget_terms,
    mse,
    mse_decomposition,
    pointwise_imbalance,
    pointwise_miscalibration,
)
from .identity import (
    BudgetBound,
    CalibrationWarning,
    DecompositionReport,
    DiagnosticTolerances,
    DiagnosticVerdict,
    SignCertificate,
    budget_bound,
    decompose_binary,
    decompose_general,
    impossibility_diagnostic,
    signed_covariance_oracle,
)
from .kernels import BACKEND
from .models import (
    ConvergenceWarning,
    SweepResult,
    TrainConfig,
    ablation_sweep,
    fit_logistic,
    fit_penalized,
    lambda_sweep,
    predict_proba,
)
from .synth import (
    BinaryPopSpec,
    CounterexampleSpec,
    ExperimentSpec,
    brute_force_report,
    check_sufficient_conditions,
    gen_binary_population,
    gen_counterexample,
    gen_experiment_data,
    random_discrete_table,
)

__version__ = "0.1.0"
