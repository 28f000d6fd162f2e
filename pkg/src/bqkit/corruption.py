"""Synthetic corruptions that turn clean data into biquality benchmarks.

Every generator takes a ``seed`` and owns its random generator, so equal
inputs and seeds give bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import truncnorm

from .core import PROBA_FLOOR, BiqualityDataset, WeightedLogisticRegression, clone


@dataclass
class CorruptionReport:
    n_corrupted: int
    realized_noise_ratio: float
    per_class_flip_counts: np.ndarray
    seed: object = None

    @classmethod
    def from_labels(cls, y, y_noisy, n_classes, seed=None):
        counts = np.zeros((n_classes, n_classes), dtype=int)
        np.add.at(counts, (y, y_noisy), 1)
        n_corrupted = int(counts.sum() - np.trace(counts))
        ratio = n_corrupted / len(y) if len(y) else 0.0
        return cls(n_corrupted, ratio, counts, seed)


def check_noise_matrix(M, n_classes=None):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("noise matrix must be square")
    if n_classes is not None and M.shape[0] != n_classes:
        raise ValueError("noise matrix does not match %d classes" % n_classes)
    if np.any(M < 0) or np.any(M > 1) or not np.allclose(M.sum(axis=1), 1, atol=1e-9, rtol=0):
        raise ValueError("noise matrix must be row-stochastic")
    return M


def uniform_noise_matrix(n_classes, noise_ratio):
    """Keep a label with probability ``1 - noise_ratio``, else pick another uniformly."""
    M = np.full((n_classes, n_classes), noise_ratio / (n_classes - 1))
    np.fill_diagonal(M, 1 - noise_ratio)
    return M


def _check_labels(y, n_classes):
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("label out of range for n_classes=%d" % n_classes)
    return y.astype(int)


def _sample_rows(P, rng):
    """Draw one category per row of the row-stochastic matrix ``P``."""
    cdf = np.cumsum(P, axis=1)
    u = rng.random(len(P)) * cdf[:, -1]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), P.shape[1] - 1)


def make_label_noise(y, noise_matrix, seed=None):
    """Resample each label ``i`` independently from row ``i`` of the noise matrix.

    Returns
    -------
    y_noisy : ndarray
    report : CorruptionReport
    """
    M = check_noise_matrix(noise_matrix)
    K = M.shape[0]
    y = _check_labels(y, K)
    rng = np.random.default_rng(seed)
    y_noisy = _sample_rows(M[y], rng)
    return y_noisy, CorruptionReport.from_labels(y, y_noisy, K, seed)


def make_instance_dependent_label_noise(y, flip_probability, noise_matrix=None, seed=None, n_classes=None):
    """Flip sample ``i`` with probability ``flip_probability[i]``.

    A flipped label is drawn from the off-diagonal part of its noise-matrix
    row, renormalized. The default matrix spreads flips uniformly.
    """
    p = np.asarray(flip_probability, dtype=float)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("flip probabilities must lie in [0, 1]")
    if noise_matrix is None:
        K = n_classes if n_classes is not None else int(np.max(y)) + 1
        noise_matrix = uniform_noise_matrix(K, 0.5)
    M = check_noise_matrix(noise_matrix, n_classes)
    K = M.shape[0]
    y = _check_labels(y, K)
    if p.shape != y.shape:
        raise ValueError("one flip probability per label is required")

    off = M.copy()
    np.fill_diagonal(off, 0.0)
    mass = off.sum(axis=1)
    needs = np.unique(y[p > 0])
    empty = [int(k) for k in needs if mass[k] == 0]
    if empty:
        raise ValueError("noise matrix rows %s have no off-diagonal mass" % empty)
    off = off / np.where(mass > 0, mass, 1.0)[:, None]

    rng = np.random.default_rng(seed)
    flip = rng.random(len(y)) < p
    replacement = _sample_rows(off[y], rng)
    y_noisy = np.where(flip, replacement, y)
    return y_noisy, CorruptionReport.from_labels(y, y_noisy, K, seed)


def uncertainty_noise_probability(X, y, model, target_ratio, max_iter=100):
    """Per-sample flip probabilities proportional to a model's uncertainty.

    The raw score is ``1 - model.predict_proba(x)[y]``; probabilities are
    ``clip(c * score, 0, 1)`` with ``c`` found by bisection so their mean
    equals ``target_ratio``.
    """
    if not 0 <= target_ratio < 1:
        raise ValueError("target_ratio must lie in [0, 1)")
    y = np.asarray(y, dtype=int)
    proba = model.predict_proba(X)
    u = 1.0 - proba[np.arange(len(y)), y]
    # what the probability floor leaves behind is not uncertainty
    u[u <= proba.shape[1] * PROBA_FLOOR] = 0.0
    if target_ratio == 0:
        return np.zeros_like(u)
    if np.mean(u > 0) <= target_ratio:
        raise ValueError("target_ratio %g is unreachable from these uncertainties" % target_ratio)

    def mean_p(c):
        return np.mean(np.clip(c * u, 0.0, 1.0))

    lo, hi = 0.0, 1.0 / u.max()
    while mean_p(hi) < target_ratio:
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mean_p(mid) < target_ratio:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return np.clip(hi * u, 0.0, 1.0)


def feature_dependent_flip_distribution(X, y, W, budget):
    """Row ``i`` keeps ``1 - budget[i]`` on ``y[i]`` and spreads ``budget[i]``
    over the other classes by ``softmax(x_i @ W)`` with ``y[i]`` masked."""
    S = np.asarray(X, dtype=float) @ W
    idx = np.arange(len(y))
    S[idx, y] = -np.inf
    S -= S.max(axis=1, keepdims=True)
    E = np.exp(S)
    P = budget[:, None] * E / E.sum(axis=1, keepdims=True)
    P[idx, y] = 1.0 - budget
    return P


def make_feature_dependent_label_noise(X, y, noise_ratio, seed=None, n_classes=None, budget_sd=0.1):
    """Instance-dependent noise driven by a random linear map of the features.

    Flip budgets follow a normal law of mean ``noise_ratio`` and standard
    deviation ``budget_sd`` truncated to ``[0, 1]``; ``noise_ratio == 0``
    yields a zero budget. The map ``W`` has standard normal entries.
    """
    if not 0 <= noise_ratio < 1:
        raise ValueError("noise_ratio must lie in [0, 1)")
    X = np.asarray(X, dtype=float)
    K = n_classes if n_classes is not None else int(np.max(y)) + 1
    y = _check_labels(y, K)
    rng = np.random.default_rng(seed)
    n, d = X.shape
    if noise_ratio == 0:
        budget = np.zeros(n)
    else:
        a, b = (0 - noise_ratio) / budget_sd, (1 - noise_ratio) / budget_sd
        budget = truncnorm.rvs(a, b, loc=noise_ratio, scale=budget_sd, size=n, random_state=rng)
    W = rng.standard_normal((d, K))
    P = feature_dependent_flip_distribution(X, y, W, budget)
    y_noisy = _sample_rows(P, rng)
    return y_noisy, CorruptionReport.from_labels(y, y_noisy, K, seed)


def largest_remainder(proportions, total):
    """Integer counts proportional to ``proportions`` summing exactly to ``total``.

    Ties in the remainders go to the lowest index.
    """
    proportions = np.asarray(proportions, dtype=float)
    raw = proportions / proportions.sum() * total
    counts = np.floor(raw).astype(int)
    short = int(total - counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _stratified_counts(y, n_classes, total):
    class_counts = np.bincount(y, minlength=n_classes)
    counts = largest_remainder(class_counts, total)
    # forced inclusion: one member per present class, taken from the largest allocation
    for k in np.flatnonzero((class_counts > 0) & (counts == 0)):
        donor = int(np.argmax(counts))
        if counts[donor] > 1:
            counts[donor] -= 1
        counts[k] = 1
    return counts


def make_weak_labels(X, y, trusted_fraction, learner=None, seed=None, n_classes=None):
    """Relabel all but a stratified trusted subset with a learner's predictions.

    Returns
    -------
    BiqualityDataset
        Trusted samples keep their labels; the others carry the hard
        predictions of ``learner`` fitted on the trusted subset.
    """
    if not 0 < trusted_fraction < 1:
        raise ValueError("trusted_fraction must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    K = n_classes if n_classes is not None else int(np.max(y)) + 1
    y = _check_labels(y, K)
    n = len(y)
    rng = np.random.default_rng(seed)
    counts = _stratified_counts(y, K, int(round(trusted_fraction * n)))
    quality = np.zeros(n, dtype=int)
    for k in range(K):
        members = np.flatnonzero(y == k)
        if counts[k]:
            quality[rng.choice(members, counts[k], replace=False)] = 1
    trusted = quality == 1
    learner = WeightedLogisticRegression() if learner is None else clone(learner)
    learner.fit(X[trusted], y[trusted], n_classes=K)
    labels = y.copy()
    if np.any(~trusted):
        labels[~trusted] = learner.predict(X[~trusted])
    return BiqualityDataset(X, labels, quality, n_classes=K)


def make_imbalance(y, target_distribution, mode="undersample", seed=None):
    """Indices of a resampled dataset whose class distribution hits a target.

    ``undersample`` draws without replacement and keeps the largest total
    size whose largest-remainder counts are available; ``oversample`` keeps
    every original sample and adds duplicates until the smallest total size
    whose counts cover every class. Indices are returned sorted.
    """
    if mode not in ("undersample", "oversample"):
        raise ValueError("mode must be 'undersample' or 'oversample'")
    pi = np.asarray(target_distribution, dtype=float)
    if np.any(pi < 0) or not np.isclose(pi.sum(), 1.0, atol=1e-9):
        raise ValueError("target distribution must be a simplex")
    y = _check_labels(y, len(pi))
    avail = np.bincount(y, minlength=len(pi))
    n = len(y)
    rng = np.random.default_rng(seed)

    if mode == "undersample":
        for total in range(n, 0, -1):
            counts = largest_remainder(pi, total)
            if np.all(counts <= avail):
                break
        else:
            raise ValueError("target distribution demands classes that are absent")
        if counts.sum() == 0:
            raise ValueError("target distribution demands classes that are absent")
        parts = [
            rng.choice(np.flatnonzero(y == k), counts[k], replace=False)
            for k in range(len(pi))
            if counts[k]
        ]
    else:
        if np.any((pi == 0) & (avail > 0)) or np.any((pi > 0) & (avail == 0)):
            raise ValueError("oversampling cannot drop or create a class")
        total = n
        while True:
            counts = largest_remainder(pi, total)
            if np.all(counts >= avail):
                break
            total += 1
        parts = []
        for k in range(len(pi)):
            members = np.flatnonzero(y == k)
            extra = rng.choice(members, counts[k] - avail[k], replace=True)
            parts.append(np.concatenate([members, extra]))
    return np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=int)


def first_principal_component(X):
    """Leading covariance eigenvector, signed so its largest-magnitude loading is positive."""
    X = np.asarray(X, dtype=float)
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    _, vecs = np.linalg.eigh(cov)
    pc = vecs[:, -1]
    if pc[np.argmax(np.abs(pc))] < 0:
        pc = -pc
    return pc


def make_sampling_bias(X, shift=0.0, scale=1.0, target_size=None, seed=None):
    """Select rows with probability driven by a Gaussian on the first PC.

    Samples are projected on the first principal component; with ``mu`` and
    ``sigma`` the mean and standard deviation of the projections, each row
    is weighted by the normal density of mean ``mu + shift * sigma`` and
    standard deviation ``scale * sigma``. ``target_size`` rows are drawn
    without replacement proportionally to those weights.

    Returns
    -------
    indices : ndarray of int
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n < 2:
        raise ValueError("at least two samples are required")
    if scale <= 0:
        raise ValueError("scale must be positive")
    target_size = n if target_size is None else int(target_size)
    if target_size > n:
        raise ValueError("target_size %d exceeds %d samples" % (target_size, n))
    rng = np.random.default_rng(seed)
    proj = (X - X.mean(axis=0)) @ first_principal_component(X)
    mu, sigma = proj.mean(), proj.std()
    if sigma == 0:
        sigma = 1.0
    z = (proj - (mu + shift * sigma)) / (scale * sigma)
    logd = -0.5 * z**2
    p = np.exp(logd - logd.max())
    if np.count_nonzero(p) < target_size:
        p = np.maximum(p, np.finfo(float).tiny)
    p /= p.sum()
    return rng.choice(n, size=target_size, replace=False, p=p)


make_sampling_biais = make_sampling_bias
