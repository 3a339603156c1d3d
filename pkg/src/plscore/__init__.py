"""plscore: partial least squares regression and its generalized linear
extension for complete and incomplete datasets, with cross-validated
component selection, bootstrap inference and deterministic reporting."""

__version__ = "0.1.0"

from .boot_infer import (
    BootReport,
    CiResult,
    StabilityTable,
    boot_yt,
    boot_yx,
    bootstrap_report,
    ci,
    pie_index,
    refit_yt,
    refit_yx,
    stability_and_pie,
    yt_jackknife,
    yx_jackknife,
)
from .data_model import (
    BINOMIAL,
    DEFAULT_NA_TOKENS,
    FAMILIES,
    GAUSSIAN,
    POISSON,
    Family,
    MaskedMatrix,
    Response,
    ScalingRecord,
    apply_scaling,
    family,
    load_csv,
    save_csv,
    simulate,
    standardize,
    validate_columns,
)
from .errors import (
    BootstrapInstabilityError,
    ConfigError,
    DataError,
    DeflationCollapseError,
    DegenerateComponentError,
    NumericalError,
    PlscoreError,
    SingularSystemError,
)
from .glm_core import GlmFit, WaldResult, deviance_and_chi2, fit_glm, fit_glm_arrays, wald_test
from .pls_gaussian import (
    PlsFit,
    compute_scores,
    deflate,
    fit_pls,
    fitted_values,
    nipals_weights,
    predict,
    scores_for,
)
from .pls_glr import (
    BiplotData,
    PlsGlrFit,
    biplot_data,
    fit_plsglr,
    plsglr_component_step,
    predict_response,
)
from .selection import (
    CriteriaTable,
    CvPlan,
    CvRecords,
    VoteDistribution,
    build_criteria_table,
    cv_criteria,
    fold_predictions,
    make_folds,
    select_components,
)
from .svg_report import SVG_KINDS, SvgSchemaError, emit_svg

__all__ = [
    "__version__",
    "BINOMIAL",
    "GAUSSIAN",
    "POISSON",
    "FAMILIES",
    "DEFAULT_NA_TOKENS",
    "Family",
    "MaskedMatrix",
    "Response",
    "ScalingRecord",
    "family",
    "load_csv",
    "save_csv",
    "simulate",
    "standardize",
    "apply_scaling",
    "validate_columns",
    "GlmFit",
    "WaldResult",
    "fit_glm",
    "fit_glm_arrays",
    "wald_test",
    "deviance_and_chi2",
    "PlsFit",
    "fit_pls",
    "predict",
    "fitted_values",
    "nipals_weights",
    "compute_scores",
    "deflate",
    "scores_for",
    "PlsGlrFit",
    "BiplotData",
    "fit_plsglr",
    "plsglr_component_step",
    "predict_response",
    "biplot_data",
    "CvPlan",
    "CvRecords",
    "CriteriaTable",
    "VoteDistribution",
    "make_folds",
    "cv_criteria",
    "build_criteria_table",
    "fold_predictions",
    "select_components",
    "BootReport",
    "CiResult",
    "StabilityTable",
    "boot_yt",
    "boot_yx",
    "refit_yt",
    "refit_yx",
    "yt_jackknife",
    "yx_jackknife",
    "ci",
    "bootstrap_report",
    "pie_index",
    "stability_and_pie",
    "emit_svg",
    "SVG_KINDS",
    "SvgSchemaError",
    "PlscoreError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "SingularSystemError",
    "DegenerateComponentError",
    "DeflationCollapseError",
    "BootstrapInstabilityError",
]
