"""Survival analysis under a partially observed categorical covariate.

Weighted Cox regression, MAR amputation, parametric and tree-based multiple
imputation, inverse-probability and kappa-compromise weighting, and a
Monte-Carlo harness that scores every strategy by bias, CI width, and
coverage.
"""

__version__ = "0.1.0"

from .coxfit import (
    CoxFit,
    ResidualSet,
    fit_cox,
    information,
    log_partial_likelihood,
    ph_test,
    residuals,
    robust_variance,
    score,
)
from .dataio import (
    ColumnSchema,
    Dataset,
    DesignMatrix,
    encode,
    load_dataset,
    load_schema,
    write_dataset,
)
from .errors import (
    ConvergenceError,
    DataError,
    RankDeficiencyError,
    SeparationError,
    SurvmissError,
)
from .methods import (
    DEFAULT_KAPPAS,
    DEFAULT_M,
    KINDS,
    MethodResult,
    MethodSpec,
    hazard_ratios,
    run_kappa_grid,
    run_method,
)
from .mi_engine import (
    ImputationSet,
    PooledResult,
    build_predictors,
    find_target,
    impute_nonparametric,
    impute_parametric,
    rubin_pool,
)
from .missingness import (
    AmputationPlan,
    WeightVector,
    ampute_mar,
    estimate_propensity,
    hybrid_weights,
)
from .regressors import (
    GlmFit,
    TreeEnsemble,
    draw_class,
    draw_coefficients,
    fit_logistic,
    fit_multinomial,
    fit_trees,
    predict_proba,
)
from .simharness import (
    MetricsRow,
    SimConfig,
    generate_synthetic,
    run_simulation,
    subsample_replicates,
)
from .survcore import (
    StepFunction,
    kaplan_meier,
    loglog_curve,
    logrank_test,
    nelson_aalen,
)

__all__ = [name for name in dir() if not name.startswith("_")]
