"""Name-based registry of every biquality algorithm and the two baselines.

Each entry maps a name to ``fit(ds, **params) -> fitted classifier``. The
matrix corrections estimate their transition matrix with GLC on the data
they are given, so cross-validation refits it per fold.
"""

import numpy as np

from .adapt import fit_easy_adapt, fit_tradaboost
from .core import KernelSpec, WeightedLogisticRegression, validate_dataset
from .reweight import fit_irbl, fit_kkmm, fit_kpdr
from .transition import (
    estimate_transition_glc,
    fit_backward,
    fit_irlnl,
    fit_plugin,
    fit_unhinged,
)


def _base(l2_penalty=1.0, max_iter=1000):
    return WeightedLogisticRegression(l2_penalty=l2_penalty, max_iter=max_iter)


def _kernel(kernel="rbf", gamma=None, degree=3, coef0=1.0):
    return KernelSpec(kernel, gamma, degree, coef0)


def trusted_only(ds, l2_penalty=1.0):
    ds = validate_dataset(ds, require_trusted=True)
    t = ds.trusted
    return _base(l2_penalty).fit(ds.features[t], ds.labels[t], n_classes=ds.n_classes)


def naive_all(ds, l2_penalty=1.0):
    ds = validate_dataset(ds)
    return _base(l2_penalty).fit(ds.features, ds.labels, n_classes=ds.n_classes)


def easy_adapt(ds, l2_penalty=1.0):
    return fit_easy_adapt(ds, _base(l2_penalty))


def tradaboost(ds, n_iter=10, l2_penalty=1.0):
    return fit_tradaboost(ds, _base(l2_penalty), n_iter=n_iter)


def unhinged(ds, kernel="linear", reg=1.0, gamma=None, degree=3, coef0=1.0):
    spec = None if kernel == "linear" else _kernel(kernel, gamma, degree, coef0)
    return fit_unhinged(ds, spec, reg)


def backward(ds, clip_negative=False, l2_penalty=1.0):
    T = estimate_transition_glc(ds, _glc_model(ds, l2_penalty))
    return fit_backward(ds, T, _base(l2_penalty), clip_negative=clip_negative)


def irlnl(ds, w_max=1000.0, l2_penalty=1.0):
    T = estimate_transition_glc(ds, _glc_model(ds, l2_penalty))
    return fit_irlnl(ds, T, _base(l2_penalty), _base(l2_penalty), w_max=w_max)


def plugin(ds, l2_penalty=1.0):
    T = estimate_transition_glc(ds, _glc_model(ds, l2_penalty))
    return fit_plugin(ds, T, _base(l2_penalty))


def kkmm(ds, kernel="rbf", gamma=None, B=1000.0, eps=None, policy="strict", l2_penalty=1.0):
    return fit_kkmm(ds, _kernel(kernel, gamma), B, eps, _base(l2_penalty), policy)


def irbl(ds, w_max=1000.0, l2_penalty=1.0):
    return fit_irbl(ds, _base(l2_penalty), _base(l2_penalty), w_max)


def kpdr(ds, w_max=1000.0, l2_penalty=1.0):
    return fit_kpdr(ds, _base(l2_penalty), _base(l2_penalty), w_max)


def _glc_model(ds, l2_penalty):
    ds = validate_dataset(ds, require_trusted=True)
    u = ds.untrusted
    if not np.any(u):
        raise ValueError("GLC needs untrusted samples")
    return _base(l2_penalty).fit(ds.features[u], ds.labels[u], n_classes=ds.n_classes)


ALGORITHMS = {
    "easy_adapt": easy_adapt,
    "tradaboost": tradaboost,
    "unhinged": unhinged,
    "backward": backward,
    "irlnl": irlnl,
    "plugin": plugin,
    "kkmm": kkmm,
    "irbl": irbl,
    "kpdr": kpdr,
    "trusted_only": trusted_only,
    "naive_all": naive_all,
}

BASELINES = ("trusted_only", "naive_all")


def get_algorithm(name):
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise ValueError(
            "unknown algorithm %r; choose from %s" % (name, ", ".join(sorted(ALGORITHMS)))
        ) from None
