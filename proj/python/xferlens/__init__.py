"""Cross-lingual transfer performance prediction."""

from ._core import (
    InputError,
    NumericalError,
    UsageError,
    fit_group_lasso,
    fit_lasso,
    linear_shap,
    pretrain_size,
    run_cli,
    soft_threshold,
    subword_overlap,
    tokenizer_metrics,
)

__all__ = [
    "InputError",
    "NumericalError",
    "UsageError",
    "fit_group_lasso",
    "fit_lasso",
    "linear_shap",
    "pretrain_size",
    "run_cli",
    "soft_threshold",
    "subword_overlap",
    "tokenizer_metrics",
]
