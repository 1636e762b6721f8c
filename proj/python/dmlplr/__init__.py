"""Double machine learning for partially linear models with binary treatments."""

from ._core import (
    AdjustedInference,
    Dataset,
    DmlFit,
    adjust,
    bonferroni,
    estimate,
    fwl_check,
    generate,
    holm,
    __version__,
)

__all__ = [
    "AdjustedInference",
    "Dataset",
    "DmlFit",
    "adjust",
    "bonferroni",
    "estimate",
    "fwl_check",
    "generate",
    "holm",
    "__version__",
]
