"""Tests for a structural break at an unknown time in polynomial regression."""

from polybreak.asymptotics import (
    CriticalValueSpec,
    correction_g,
    critical_value,
    default_gamma,
    gamma_function,
    p_value,
)
from polybreak.regression import (
    FitResult,
    GramTriple,
    RankDeficientError,
    Sample,
    design_matrix,
    design_row,
    fit_segment,
    gram_triple,
    quadratic_form,
    score_vector,
)
from polybreak.scan import (
    DegenerateFit,
    ScanRange,
    ScanResult,
    t_hat,
    t_known_sigma,
    t_trimmed,
    t_variants,
)

__all__ = [
    "CriticalValueSpec",
    "DegenerateFit",
    "FitResult",
    "GramTriple",
    "RankDeficientError",
    "Sample",
    "ScanRange",
    "ScanResult",
    "correction_g",
    "critical_value",
    "default_gamma",
    "design_matrix",
    "design_row",
    "fit_segment",
    "gamma_function",
    "gram_triple",
    "p_value",
    "quadratic_form",
    "score_vector",
    "t_hat",
    "t_known_sigma",
    "t_trimmed",
    "t_variants",
]
