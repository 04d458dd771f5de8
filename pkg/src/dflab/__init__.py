"""dflab: a laboratory for measuring degrees of freedom of fitting procedures.

The central quantity is the covariance form of model degrees of freedom,
df = sum_i Cov(muhat_i, y_i) at unit noise variance, estimated by Monte
Carlo for anything that can fit a dataset: fixed linear smoothers, spline
families, subset selection, the lasso, regression trees, and adaptive
regression splines. Procedures that search over structure spend degrees
of freedom beyond the trace of their conditional smoother; the package
measures that search cost and the penalty corrections it implies.
"""
from .core import (
    ConvergenceError,
    DataSet,
    DegenerateCriterionError,
    DfEstimate,
    DflabError,
    FitOutput,
    InsufficientDataError,
    InvalidInputError,
    SingularDesignError,
    SmootherMatrix,
    read_dataset_csv,
    sample_covariance,
    simulate_gaussian_response,
)
from .adaptive import (
    BestSubsetProcedure,
    LassoMmProcedure,
    RelaxedLassoProcedure,
    fit_best_subset,
    fit_lasso_mm,
    fit_relaxed_lasso,
    gcv_path_lasso,
    lasso_df_theorem,
    sdf_best_subset,
    simulate_sparse_gaussian,
)
from .criteria import CriterionValue, aic, bic, gcv, r_squared_decrease
from .empirical import (
    DfExperiment,
    Procedure,
    empirical_msdf,
    estimate_df,
    experiment_record,
    run_experiment,
)
from .mars import (
    MarsModel,
    MarsProcedure,
    backward_pass,
    correct_penalty,
    cv_penalty,
    forward_pass,
    nominal_df,
    penalty_from_df,
    r2_study,
    self_consistency_check,
)
from .smoothers import (
    ConstantProcedure,
    KnnProcedure,
    OlsProcedure,
    RidgeProcedure,
    fit_knn,
    fit_ols,
    fit_ridge,
)
from .splines import (
    MonotoneSplineProcedure,
    SplineProcedure,
    fit_monotone_spline,
    fit_spline,
    monotone_df_theoretical,
    spline_df_table,
)
from .tree import TreeProcedure, fit_tree, tree_df_table

__version__ = "0.1.0"
