"""Domain-adaptation baselines: EasyAdapt augmentation and TrAdaBoost."""

import math

import numpy as np

from .core import (
    ProbabilisticClassifier,
    WeightedLogisticRegression,
    argmax_lowest,
    clone,
    validate_dataset,
)


def easy_adapt_transform(X, sample_quality):
    """Augment features as ``[shared | trusted-only | untrusted-only]``.

    Trusted rows map to ``(x, x, 0)`` and untrusted rows to ``(x, 0, x)``.
    """
    X = np.asarray(X, dtype=float)
    q = np.asarray(sample_quality).astype(bool)[:, None]
    return np.hstack([X, np.where(q, X, 0.0), np.where(q, 0.0, X)])


class EasyAdaptClassifier(ProbabilisticClassifier):
    """A classifier fitted on the augmented space that predicts as trusted."""

    def __init__(self, base):
        self.base = base
        self.n_classes_ = base.n_classes_

    def _raw_proba(self, X):
        return self.base.predict_proba(easy_adapt_transform(X, np.ones(len(X))))


def fit_easy_adapt(ds, base=None):
    ds = validate_dataset(ds)
    base = WeightedLogisticRegression() if base is None else clone(base)
    base.fit(
        easy_adapt_transform(ds.features, ds.sample_quality),
        ds.labels,
        n_classes=ds.n_classes,
    )
    return EasyAdaptClassifier(base)


def source_beta(n_untrusted, n_iter):
    """Fixed down-weighting factor ``1 / (1 + sqrt(2 ln(n_u) / N))``."""
    if n_untrusted <= 1:
        return 1.0
    return 1.0 / (1.0 + math.sqrt(2.0 * math.log(n_untrusted) / n_iter))


class TrAdaBoostEnsemble(ProbabilisticClassifier):
    """Weighted vote of the weak learners kept after boosting.

    Attributes
    ----------
    weak_learners : list
        Every learner gathered during boosting.
    learner_betas : list of float
        ``e_t / (1 - e_t)`` per gathered learner.
    source_beta : float
    voters : list of int
        Indices of the learners that vote: the last ``ceil(m / 2)`` of the
        ``m`` gathered ones.
    weight_history : list of ndarray
        Normalized sample weights after every iteration.
    """

    MIN_BETA = 1e-10

    def __init__(self, weak_learners, learner_betas, source_beta, n_iter, n_classes):
        self.weak_learners = weak_learners
        self.learner_betas = learner_betas
        self.source_beta = source_beta
        self.n_iter = n_iter
        self.n_classes_ = n_classes
        m = len(weak_learners)
        self.voters = list(range(m - math.ceil(m / 2), m))

    def vote_scores(self, X):
        scores = np.zeros((len(X), self.n_classes_))
        for t in self.voters:
            beta = max(self.learner_betas[t], self.MIN_BETA)
            pred = self.weak_learners[t].predict(X)
            scores[np.arange(len(X)), pred] += math.log(1.0 / beta)
        return scores

    def predict(self, X):
        return argmax_lowest(self.vote_scores(np.asarray(X, dtype=float)))

    def _raw_proba(self, X):
        scores = self.vote_scores(X)
        total = scores.sum(axis=1, keepdims=True)
        return np.where(total > 0, scores / np.where(total > 0, total, 1), 1.0 / self.n_classes_)


def fit_tradaboost(ds, weak_learner=None, n_iter=10):
    """TrAdaBoost with the trusted subset as target domain.

    Weights start uniform over all samples. At each iteration a clone of
    ``weak_learner`` is fitted with the current weights (rescaled to sum to
    ``n``), its weighted 0/1 error ``e_t`` is measured on trusted samples
    only, misclassified trusted samples are multiplied by
    ``(1 - e_t) / e_t`` and misclassified untrusted ones by
    :func:`source_beta`. Boosting stops early when ``e_t == 0`` or
    ``e_t >= 0.5``.

    Raises
    ------
    ValueError
        If ``n_iter < 2``, the trusted subset is empty, or the first weak
        learner already has trusted error ``>= 0.5``.
    """
    if n_iter < 2:
        raise ValueError("n_iter must be at least 2")
    ds = validate_dataset(ds, require_trusted=True)
    weak_learner = WeightedLogisticRegression() if weak_learner is None else weak_learner
    X, y = ds.features, ds.labels
    trusted = ds.trusted
    n = ds.n_samples
    sbeta = source_beta(ds.n_untrusted, n_iter)

    w = np.full(n, 1.0 / n)
    learners, betas, history = [], [], []
    for t in range(n_iter):
        learner = clone(weak_learner).fit(X, y, sample_weight=w * n, n_classes=ds.n_classes)
        miss = learner.predict(X) != y
        error = np.sum(w[trusted & miss]) / np.sum(w[trusted])
        if error >= 0.5:
            if t == 0:
                raise ValueError(
                    "weak learner error on trusted data is %.3f >= 0.5 at the first iteration"
                    % error
                )
            break
        learners.append(learner)
        betas.append(error / (1.0 - error))
        if error == 0:
            break
        w = w.copy()
        w[trusted & miss] /= betas[-1]
        w[~trusted & miss] *= sbeta
        w /= w.sum()
        history.append(w)

    ens = TrAdaBoostEnsemble(learners, betas, sbeta, n_iter, ds.n_classes)
    ens.weight_history = history
    return ens
