"""Hierarchical log-linear models for multiway contingency tables."""

from .contingency import (
    ContingencyTable,
    Factor,
    build_table,
    collapse,
    conditional_odds_ratios,
    margin,
)
from .design import (
    Baselines,
    DesignMatrix,
    ModelSpec,
    build_design,
    enumerate_lattice,
    rebase,
)
from .inference import (
    Contrast,
    SelectionReport,
    WaldTest,
    bic,
    contrast,
    level_contrast,
    select,
    wald_tests,
)
from .irls import (
    ConvergenceError,
    FitOptions,
    FitResult,
    RankDeficientError,
    closed_form_fit,
    fit,
    full_log_likelihood,
)

__version__ = "0.1.0"
