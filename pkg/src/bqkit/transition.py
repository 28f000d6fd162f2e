"""Transition-matrix estimation (GLC), matrix-based corrections and Unhinged."""

import numpy as np

from .core import (
    KernelSpec,
    ProbabilisticClassifier,
    WeightedLogisticRegression,
    _softmax,
    clone,
    floor_proba,
    gram,
    validate_dataset,
)

MAX_CONDITION = 1e6


def check_transition(T, n_classes=None):
    """Validate a row-stochastic transition matrix and its conditioning.

    Raises
    ------
    ValueError
        If ``T`` is not square, not row-stochastic, or its 1-norm condition
        number is not below ``MAX_CONDITION`` (singular included).
    """
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError("transition matrix must be square")
    if n_classes is not None and T.shape[0] != n_classes:
        raise ValueError("transition matrix is %dx%d, expected %d classes" % (*T.shape, n_classes))
    if np.any(T < 0) or np.any(T > 1) or not np.allclose(T.sum(axis=1), 1.0, atol=1e-9, rtol=0):
        raise ValueError("transition matrix must be row-stochastic")
    with np.errstate(divide="ignore"):
        cond = np.linalg.cond(T, 1)
    if not np.isfinite(cond) or cond >= MAX_CONDITION:
        raise ValueError("transition matrix is singular or ill-conditioned (cond=%g)" % cond)
    return T


def estimate_transition_glc(ds, untrusted_model=None):
    """Gold Loss Correction estimate of the transition matrix.

    Row ``i`` is the mean predicted noisy-label distribution, under a model
    fitted on untrusted data, of the trusted samples whose label is ``i``.

    Parameters
    ----------
    ds : BiqualityDataset
    untrusted_model : ProbabilisticClassifier, optional
        An already fitted model of the untrusted labels. When omitted, a
        :class:`WeightedLogisticRegression` is fitted on the untrusted subset.

    Returns
    -------
    T : ndarray of shape (n_classes, n_classes)
    """
    ds = validate_dataset(ds, require_trusted=True)
    K = ds.n_classes
    if untrusted_model is None:
        untrusted_model = WeightedLogisticRegression().fit(
            ds.features[ds.untrusted], ds.labels[ds.untrusted], n_classes=K
        )
    elif not getattr(untrusted_model, "is_fitted", False):
        raise ValueError("untrusted_model must be fitted")

    X_t = ds.features[ds.trusted]
    y_t = ds.labels[ds.trusted]
    missing = sorted(set(range(K)) - set(np.unique(y_t).tolist()))
    if missing:
        raise ValueError("classes %s are absent from the trusted subset" % missing)
    proba = untrusted_model.predict_proba(X_t)
    T = np.zeros((K, K))
    for i in range(K):
        T[i] = proba[y_t == i].mean(axis=0)
    return T / T.sum(axis=1, keepdims=True)


def correct_posterior(noisy_proba, T):
    """Map noisy posteriors to clean ones: ``clip((T^T)^-1 p, 0, inf)`` renormalized."""
    clean = np.asarray(noisy_proba, dtype=float) @ np.linalg.inv(T)
    np.maximum(clean, 0.0, out=clean)
    s = clean.sum(axis=1, keepdims=True)
    # rows of (T^T)^-1 p sum to one before clipping, so s >= 1 in exact arithmetic
    return clean / np.where(s > 0, s, 1.0)


class CorrectedClassifier(ProbabilisticClassifier):
    """A fitted base learner together with the transition matrix it was corrected with.

    Only ``mode="plugin"`` alters predictions; ``backward`` and ``irlnl``
    act at training time and delegate prediction to ``base``.
    """

    def __init__(self, base, transition, mode):
        if mode not in ("backward", "irlnl", "plugin"):
            raise ValueError("unknown correction mode %r" % mode)
        self.base = base
        self.transition = np.asarray(transition, dtype=float)
        self.mode = mode
        self.n_classes_ = base.n_classes_

    def _raw_proba(self, X):
        proba = self.base.predict_proba(X)
        if self.mode == "plugin":
            return correct_posterior(proba, self.transition)
        return proba


def backward_expand(X, y, T, clip_negative=False):
    """Expand noisy samples into ``K`` virtual samples with signed weights.

    Sample ``(x, y~)`` becomes ``(x, j)`` weighted by ``inv(T)[y~, j]`` for
    every class ``j``, which makes the expected weighted loss over the noise
    process equal to the clean loss. Zero-weight rows are dropped.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    K = T.shape[0]
    W = np.linalg.inv(T)[y]
    if clip_negative:
        W = np.maximum(W, 0.0)
    rows = np.repeat(np.arange(len(y)), K)
    labels = np.tile(np.arange(K), len(y))
    weights = W.ravel()
    keep = weights != 0
    return X[rows[keep]], labels[keep], weights[keep]


def fit_backward(ds, T, base=None, clip_negative=False):
    """Backward loss correction through signed virtual samples.

    Trusted samples keep their label with weight 1; untrusted samples are
    expanded by :func:`backward_expand`.
    """
    ds = validate_dataset(ds)
    T = check_transition(T, ds.n_classes)
    base = WeightedLogisticRegression() if base is None else clone(base)
    if not clip_negative and not base.supports_signed_weights:
        raise ValueError(
            "%s does not accept signed weights; pass clip_negative=True" % type(base).__name__
        )
    X_u, y_u, w_u = backward_expand(
        ds.features[ds.untrusted], ds.labels[ds.untrusted], T, clip_negative
    )
    X = np.vstack([ds.features[ds.trusted], X_u])
    y = np.concatenate([ds.labels[ds.trusted], y_u])
    w = np.concatenate([np.ones(ds.n_trusted), w_u])
    base.fit(X, y, sample_weight=w, n_classes=ds.n_classes)
    model = CorrectedClassifier(base, T, "backward")
    model.sample_weight_ = w
    return model


def irlnl_weights(noisy_proba, y_noisy, T, w_max=1000.0):
    """Importance weights ``clean_posterior[y~] / noisy_posterior[y~]``."""
    noisy_proba = floor_proba(noisy_proba)
    clean = correct_posterior(noisy_proba, T)
    idx = np.arange(len(y_noisy))
    beta = clean[idx, y_noisy] / noisy_proba[idx, y_noisy]
    return np.clip(beta, 0.0, w_max)


def fit_irlnl(ds, T, base=None, noisy_model=None, w_max=1000.0):
    """Importance reweighting for label noise with a given transition matrix.

    A noisy-posterior model (a clone of ``noisy_model``, logistic regression
    by default) is fitted on the untrusted subset, then untrusted samples are
    weighted by :func:`irlnl_weights`. Trusted samples keep weight 1.
    """
    ds = validate_dataset(ds)
    T = check_transition(T, ds.n_classes)
    K = ds.n_classes
    X_u, y_u = ds.features[ds.untrusted], ds.labels[ds.untrusted]
    w = np.ones(ds.n_samples)
    if ds.n_untrusted:
        noisy = WeightedLogisticRegression() if noisy_model is None else clone(noisy_model)
        noisy.fit(X_u, y_u, n_classes=K)
        w[ds.untrusted] = irlnl_weights(noisy.predict_proba(X_u), y_u, T, w_max)
    base = WeightedLogisticRegression() if base is None else clone(base)
    base.fit(ds.features, ds.labels, sample_weight=w, n_classes=K)
    model = CorrectedClassifier(base, T, "irlnl")
    model.sample_weight_ = w
    return model


def fit_plugin(ds, T, base=None):
    """Fit on the data as-is and invert ``T`` on predicted probabilities."""
    ds = validate_dataset(ds)
    T = check_transition(T, ds.n_classes)
    base = WeightedLogisticRegression() if base is None else clone(base)
    base.fit(ds.features, ds.labels, n_classes=ds.n_classes)
    model = CorrectedClassifier(base, T, "plugin")
    model.sample_weight_ = np.ones(ds.n_samples)
    return model


class UnhingedClassifier(ProbabilisticClassifier):
    """Regularized unhinged-loss classifier in closed form, one-vs-rest.

    For each class with ``s_i = +1`` on that class and ``-1`` elsewhere the
    minimizer is ``f(x) = sum_i w_i s_i k(x_i, x) / (reg * sum_i w_i)``. With
    ``kernel=None`` the kernel is the plain dot product and the discriminant
    is stored as a weight vector. Probabilities are the softmax of the
    per-class scores.
    """

    def __init__(self, kernel=None, reg=1.0):
        self.kernel = kernel
        self.reg = reg

    def get_params(self):
        return {"kernel": self.kernel, "reg": self.reg}

    def fit(self, X, y, sample_weight=None, n_classes=None):
        if self.reg <= 0:
            raise ValueError("reg must be positive")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        if len(np.unique(y[w != 0])) < 2:
            raise ValueError("unhinged needs at least two classes")
        K = int(n_classes) if n_classes is not None else int(y.max()) + 1
        S = np.where(np.eye(K, dtype=bool)[y], 1.0, -1.0)
        alpha = (w[:, None] * S) / (self.reg * np.sum(w))
        if self.kernel is None:
            self.coef_ = X.T @ alpha
            self.kernel_ = None
        else:
            self.kernel_ = self.kernel.resolve(X)
            self.support_ = X
            self.dual_coef_ = alpha
        self.n_classes_ = K
        return self

    def decision_function(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        if self.kernel_ is None:
            return X @ self.coef_
        return gram(self.kernel_, X, self.support_) @ self.dual_coef_

    def _raw_proba(self, X):
        return _softmax(self.decision_function(X))


def fit_unhinged(ds, kernel=None, reg=1.0):
    """Fit :class:`UnhingedClassifier` on trusted and untrusted samples alike."""
    ds = validate_dataset(ds)
    if isinstance(kernel, str):
        kernel = None if kernel == "linear" else KernelSpec(kernel)
    return UnhingedClassifier(kernel, reg).fit(ds.features, ds.labels, n_classes=ds.n_classes)
