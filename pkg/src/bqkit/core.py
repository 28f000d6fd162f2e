"""Biquality data model, learner contract, kernels and the built-in learner."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

PROBA_FLOOR = 1e-12


@dataclass
class BiqualityDataset:
    """Features, labels and a per-sample trust indicator.

    ``sample_quality`` is 1 for trusted samples and 0 for untrusted ones.
    """

    features: np.ndarray
    labels: np.ndarray
    sample_quality: np.ndarray
    n_classes: int | None = None
    class_names: list = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        self.labels = np.asarray(self.labels)
        self.sample_quality = np.asarray(self.sample_quality)
        if self.n_classes is None and self.labels.size:
            self.n_classes = int(np.max(self.labels)) + 1

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def trusted(self):
        return self.sample_quality == 1

    @property
    def untrusted(self):
        return self.sample_quality == 0

    @property
    def n_trusted(self):
        return int(np.sum(self.trusted))

    @property
    def n_untrusted(self):
        return int(np.sum(self.untrusted))

    def subset(self, indices):
        indices = np.asarray(indices)
        return BiqualityDataset(
            self.features[indices],
            self.labels[indices],
            self.sample_quality[indices],
            n_classes=self.n_classes,
            class_names=self.class_names,
        )


def validate_dataset(ds, require_trusted=False):
    """Check the dataset invariants and return it with normalized dtypes.

    Parameters
    ----------
    ds : BiqualityDataset
    require_trusted : bool, default=False
        Raise when the trusted subset is empty.

    Returns
    -------
    ds : BiqualityDataset
        The same dataset with integer labels and quality. Counts are exposed
        through ``n_trusted``, ``n_untrusted`` and ``n_classes``.
    """
    n = ds.features.shape[0]
    if ds.labels.shape != (n,) or ds.sample_quality.shape != (n,):
        raise ValueError(
            "dimension mismatch: features have %d rows, labels %s, sample_quality %s"
            % (n, ds.labels.shape, ds.sample_quality.shape)
        )
    if not np.all(np.isin(ds.sample_quality, (0, 1))):
        raise ValueError("sample_quality must be 0 or 1")
    labels = ds.labels
    if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
        raise ValueError("labels must be integer class indices")
    labels = labels.astype(int)
    if ds.n_classes is None:
        raise ValueError("n_classes is undefined for an empty dataset")
    if labels.size and (labels.min() < 0 or labels.max() >= ds.n_classes):
        raise ValueError("label out of range for n_classes=%d" % ds.n_classes)
    if not np.all(np.isfinite(ds.features)):
        raise ValueError("features contain non-finite values")
    ds.labels = labels
    ds.sample_quality = ds.sample_quality.astype(int)
    if require_trusted and ds.n_trusted == 0:
        raise ValueError("the trusted subset is empty")
    return ds


def clone(estimator):
    """Return an unfitted copy of ``estimator`` with the same parameters."""
    if hasattr(estimator, "get_params"):
        return type(estimator)(**copy.deepcopy(estimator.get_params()))
    return copy.deepcopy(estimator)


def floor_proba(proba):
    proba = np.clip(proba, PROBA_FLOOR, 1.0)
    return proba / proba.sum(axis=1, keepdims=True)


def argmax_lowest(scores):
    # np.argmax already returns the first maximal index
    return np.argmax(scores, axis=1)


class ProbabilisticClassifier:
    """Contract shared by every learner in the toolkit.

    Subclasses implement ``fit(X, y, sample_weight=None, n_classes=None)`` and
    ``_raw_proba(X)``. ``predict_proba`` floors and renormalizes the raw
    probabilities; ``predict`` is their row argmax.
    """

    supports_signed_weights = False

    @property
    def is_fitted(self):
        return getattr(self, "n_classes_", None) is not None

    def _check_fitted(self):
        if not self.is_fitted:
            raise RuntimeError("%s is not fitted" % type(self).__name__)

    def predict_proba(self, X):
        self._check_fitted()
        return floor_proba(self._raw_proba(np.asarray(X, dtype=float)))

    def predict(self, X):
        return argmax_lowest(self.predict_proba(X))


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and hyperparameters.

    ``gamma=None`` resolves to ``1 / (n_features * X.var())`` on the first
    matrix passed to :func:`gram`.
    """

    family: str = "rbf"
    gamma: float | None = None
    degree: int = 3
    coef0: float = 1.0

    def __post_init__(self):
        if self.family not in ("rbf", "linear", "polynomial"):
            raise ValueError("unknown kernel family %r" % self.family)
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.degree < 1:
            raise ValueError("degree must be a positive integer")

    def resolve(self, X):
        """Return a spec with ``gamma`` fixed from the data ``X`` if unset."""
        if self.gamma is not None or self.family == "linear":
            return self
        X = np.asarray(X, dtype=float)
        var = X.var()
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return KernelSpec(self.family, gamma, self.degree, self.coef0)


def gram(spec, A, B=None):
    """Kernel matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            "column-count mismatch: %d vs %d" % (A.shape[1], B.shape[1])
        )
    spec = spec.resolve(A)
    if spec.family == "linear":
        return A @ B.T
    if spec.family == "polynomial":
        return (spec.gamma * (A @ B.T) + spec.coef0) ** spec.degree
    return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))


class Standardizer:
    """Optional zero-mean, unit-variance feature scaling."""

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_

    def fit_transform(self, X):
        return self.fit(X).transform(X)


# ---------------------------------------------------- logistic regression


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def logreg_objective(theta, Xa, Y, w, l2_penalty):
    """Weighted cross-entropy plus ridge penalty, and its gradient.

    ``theta`` has shape (n_features + 1, K) with the intercept in the last
    row, which is not penalized. ``Y`` is the one-hot label matrix.
    """
    Z = Xa @ theta
    Z = Z - Z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Z).sum(axis=1))
    log_p = Z - logsum[:, None]
    loss = -np.sum(w * np.sum(Y * log_p, axis=1))
    coef = theta[:-1]
    loss += 0.5 * l2_penalty * np.sum(coef**2)
    P = np.exp(log_p)
    # d/dZ of -w*sum(Y log p) is w*(sum(Y) p - Y); sum(Y) is 1 per row
    grad = Xa.T @ (w[:, None] * (P - Y))
    grad[:-1] += l2_penalty * coef
    return loss, grad


class WeightedLogisticRegression(ProbabilisticClassifier):
    """Multinomial logistic regression fitted with signed sample weights.

    Full-batch gradient descent with a Barzilai-Borwein trial step and
    Armijo backtracking. The objective is

        sum_i w_i * CE(y_i, softmax(theta^T [x_i, 1])) + l2_penalty/2 * ||coef||^2

    Parameters
    ----------
    l2_penalty : float, default=1.0
    max_iter : int, default=1000
    tol : float, default=1e-6
        Convergence threshold on the infinity norm of the gradient.
    """

    supports_signed_weights = True

    def __init__(self, l2_penalty=1.0, max_iter=1000, tol=1e-6):
        self.l2_penalty = l2_penalty
        self.max_iter = max_iter
        self.tol = tol

    def get_params(self):
        return {"l2_penalty": self.l2_penalty, "max_iter": self.max_iter, "tol": self.tol}

    def fit(self, X, y, sample_weight=None, n_classes=None):
        if not self.l2_penalty >= 0:
            raise ValueError("l2_penalty must be non-negative, got %r" % self.l2_penalty)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        if not np.all(np.isfinite(w)):
            raise ValueError("sample weights must be finite")
        if not np.any(w != 0):
            raise ValueError("all sample weights are zero")
        if len(np.unique(y[w != 0])) < 2:
            raise ValueError("need at least two distinct labels with non-zero weight")
        K = int(n_classes) if n_classes is not None else int(y.max()) + 1
        # centering is an exact reparametrization since the intercept is free
        center = np.abs(w) @ X / np.sum(np.abs(w))
        Xa = _augment(X - center)
        Y = np.eye(K)[y]

        theta = np.zeros((Xa.shape[1], K))
        f, g = logreg_objective(theta, Xa, Y, w, self.l2_penalty)
        step = 1.0 / max(np.sum(np.abs(w)) * np.max(np.sum(Xa**2, axis=1)), 1e-12)
        prev_theta = prev_g = None
        self.n_iter_ = 0
        for it in range(self.max_iter):
            if np.max(np.abs(g)) < self.tol:
                break
            if prev_g is not None:
                s = theta - prev_theta
                d = g - prev_g
                sd = np.sum(s * d)
                if sd > 0:
                    step = np.sum(s * s) / sd
            gg = np.sum(g * g)
            while True:
                cand = theta - step * g
                f_new, g_new = logreg_objective(cand, Xa, Y, w, self.l2_penalty)
                if f_new <= f - 1e-4 * step * gg or step < 1e-20:
                    break
                step *= 0.5
            if f_new > f:
                break
            prev_theta, prev_g = theta, g
            theta, f, g = cand, f_new, g_new
            self.n_iter_ = it + 1

        theta[-1] -= center @ theta[:-1]
        self.coef_ = theta
        self.n_classes_ = K
        self.loss_ = f
        return self

    def decision_function(self, X):
        self._check_fitted()
        return _augment(np.asarray(X, dtype=float)) @ self.coef_

    def _raw_proba(self, X):
        return _softmax(_augment(X) @ self.coef_)
