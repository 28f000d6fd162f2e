"""Learning classifiers from a small trusted dataset and a large untrusted one."""

from .adapt import easy_adapt_transform, fit_easy_adapt, fit_tradaboost, source_beta
from .core import (
    BiqualityDataset,
    KernelSpec,
    ProbabilisticClassifier,
    Standardizer,
    WeightedLogisticRegression,
    gram,
    validate_dataset,
)
from .modelsel import evaluate, kfold_splits, make_biquality_cv
from .reweight import KmmProblem, fit_irbl, fit_kkmm, fit_kpdr, solve_kmm
from .transition import (
    estimate_transition_glc,
    fit_backward,
    fit_irlnl,
    fit_plugin,
    fit_unhinged,
)

__version__ = "0.1.0"
