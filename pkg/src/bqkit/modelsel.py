"""Biquality cross-validation and trusted-only evaluation."""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import PROBA_FLOOR


@dataclass
class BiqualitySplit:
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __iter__(self):
        # unpacks like a (train, test) pair
        return iter((self.train_indices, self.test_indices))


@dataclass
class MetricReport:
    accuracy: float
    balanced_accuracy: float
    log_loss: float
    n_test: int

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "log_loss": self.log_loss,
            "n_test": self.n_test,
        }


def kfold_splits(n_samples, n_folds, seed=None, labels=None):
    """Shuffled (optionally stratified) k-fold ``(train, test)`` index pairs."""
    if n_folds < 2:
        raise ValueError("n_folds must be at least 2")
    if n_folds > n_samples:
        raise ValueError("n_folds=%d exceeds %d samples" % (n_folds, n_samples))
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n_samples, dtype=int)
    if labels is None:
        perm = rng.permutation(n_samples)
        fold_of[perm] = np.arange(n_samples) % n_folds
    else:
        labels = np.asarray(labels)
        offset = 0
        for k in np.unique(labels):
            members = rng.permutation(np.flatnonzero(labels == k))
            fold_of[members] = (np.arange(len(members)) + offset) % n_folds
            offset += len(members)
    everything = np.arange(n_samples)
    return [(everything[fold_of != f], everything[fold_of == f]) for f in range(n_folds)]


def make_biquality_cv(base_splits, sample_quality):
    """Move untrusted test indices of every base split into its train set.

    Splits whose test set ends up empty are dropped with a warning.

    Parameters
    ----------
    base_splits : iterable of (train_indices, test_indices)
        Output of any cross-validator.
    sample_quality : array-like of shape (n_samples,)

    Returns
    -------
    list of BiqualitySplit
    """
    quality = np.asarray(sample_quality)
    out, dropped = [], 0
    for train, test in base_splits:
        train = np.asarray(train, dtype=int)
        test = np.asarray(test, dtype=int)
        keep = quality[test] == 1
        new_test = test[keep]
        if len(new_test) == 0:
            dropped += 1
            continue
        out.append(BiqualitySplit(np.concatenate([train, test[~keep]]), new_test))
    if dropped:
        warnings.warn("%d split(s) without trusted test samples were dropped" % dropped)
    return out


def evaluate(model, ds, test_indices):
    """Accuracy, balanced accuracy and log loss over trusted test samples.

    Raises
    ------
    ValueError
        If any test index points at an untrusted sample.
    """
    idx = np.asarray(test_indices, dtype=int)
    if len(idx) == 0:
        raise ValueError("empty test set")
    if np.any(ds.sample_quality[idx] != 1):
        raise ValueError("test indices contain untrusted samples")
    y = ds.labels[idx]
    proba = model.predict_proba(ds.features[idx])
    pred = model.predict(ds.features[idx])
    correct = pred == y
    recalls = [np.mean(correct[y == k]) for k in np.unique(y)]
    p_true = np.clip(proba[np.arange(len(y)), y], PROBA_FLOOR, 1.0)
    return MetricReport(
        accuracy=float(np.mean(correct)),
        balanced_accuracy=float(np.mean(recalls)),
        log_loss=float(-np.mean(np.log(p_true))),
        n_test=len(idx),
    )
