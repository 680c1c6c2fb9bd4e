"""Best-subset variable selection and many-predictor forecasting toolkit."""

__version__ = "0.1.0"

from .errors import (
    CollinearColumnError,
    ConfigError,
    DivergedError,
    InputMissingError,
    InsufficientHistoryError,
    InvalidKError,
    MissingTransformRowError,
    NonMonotoneDatesError,
    NonPositiveForLogError,
    NotApplicableError,
    RankDeficientError,
    TargetMissingError,
    TooSparseColumnError,
    UnparseableCellError,
    VsForecastError,
)
from .factors import (
    FactorExtraction,
    FactorForecast,
    extract_factors,
    fit_factor_forecast,
    project_factors,
)
from .fredmd import (
    ForecastDataset,
    FredmdTable,
    apply_transform,
    build_dataset,
    build_target,
    detect_outliers,
    impute_outliers,
    lag_stack,
    local_level_smooth,
    parse_fredmd,
    serialize_fredmd,
    transform_panel,
)
from .gds import (
    GdsConfig,
    GdsTrace,
    cosamp,
    estimate_step_size,
    hard_threshold,
    htp,
    iht,
    subspace_pursuit,
)
from .greedy import (
    GreedyPath,
    SubsetModel,
    backward_eliminate,
    forward_select,
    refit_model,
)
from .lasso import L1Path, default_lambda_grid, lasso_path, ridge_weights
from .linalg import (
    ColumnMeta,
    OlsState,
    RegressionProblem,
    add_column_delta,
    drop_column_delta,
    principal_components,
    solve_ols,
    standardize_columns,
    subset_rows,
)
from .methods import (
    ALL_SOLVERS,
    SUBSET_SOLVERS,
    MethodPlan,
    fit_fixed_size,
    make_plan,
    select_model,
)
from .rolling import (
    RollingConfig,
    RollingReport,
    ar_benchmark,
    frequency_table,
    ratio_table,
    report_csv,
    roll_forecast,
)
from .selection import (
    SelectionPlan,
    SelectionReport,
    forward_cv_select,
    information_select,
    k_fold_select,
)
from .simulation import (
    DgpSpec,
    EvalReport,
    GeneratedData,
    StudyResult,
    evaluate,
    fa_vs_vs,
    generate,
    run_study,
    setting1,
    setting2,
    setting3,
    toy,
    true_model_mspe,
)
from .smc import SmcConfig, SmcDiagnostics, add_trim, smc_best_subset

__all__ = [
    "ALL_SOLVERS",
    "CollinearColumnError",
    "ColumnMeta",
    "ConfigError",
    "DgpSpec",
    "DivergedError",
    "EvalReport",
    "FactorExtraction",
    "FactorForecast",
    "ForecastDataset",
    "FredmdTable",
    "GdsConfig",
    "GdsTrace",
    "GeneratedData",
    "GreedyPath",
    "InputMissingError",
    "InsufficientHistoryError",
    "InvalidKError",
    "L1Path",
    "MethodPlan",
    "MissingTransformRowError",
    "NonMonotoneDatesError",
    "NonPositiveForLogError",
    "NotApplicableError",
    "OlsState",
    "RankDeficientError",
    "RegressionProblem",
    "RollingConfig",
    "RollingReport",
    "SUBSET_SOLVERS",
    "SelectionPlan",
    "SelectionReport",
    "SmcConfig",
    "SmcDiagnostics",
    "StudyResult",
    "SubsetModel",
    "TargetMissingError",
    "TooSparseColumnError",
    "UnparseableCellError",
    "VsForecastError",
    "add_column_delta",
    "add_trim",
    "apply_transform",
    "ar_benchmark",
    "backward_eliminate",
    "build_dataset",
    "build_target",
    "cosamp",
    "default_lambda_grid",
    "detect_outliers",
    "drop_column_delta",
    "estimate_step_size",
    "evaluate",
    "extract_factors",
    "fa_vs_vs",
    "fit_factor_forecast",
    "fit_fixed_size",
    "forward_cv_select",
    "forward_select",
    "frequency_table",
    "generate",
    "hard_threshold",
    "htp",
    "iht",
    "impute_outliers",
    "information_select",
    "k_fold_select",
    "lag_stack",
    "lasso_path",
    "local_level_smooth",
    "make_plan",
    "parse_fredmd",
    "principal_components",
    "project_factors",
    "ratio_table",
    "refit_model",
    "report_csv",
    "ridge_weights",
    "roll_forecast",
    "run_study",
    "select_model",
    "serialize_fredmd",
    "setting1",
    "setting2",
    "setting3",
    "solve_ols",
    "standardize_columns",
    "subset_rows",
    "subspace_pursuit",
    "toy",
    "transform_panel",
    "true_model_mspe",
]
