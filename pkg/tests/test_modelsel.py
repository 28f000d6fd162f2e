import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqkit.core import BiqualityDataset, ProbabilisticClassifier
from bqkit.modelsel import evaluate, kfold_splits, make_biquality_cv


class Constant(ProbabilisticClassifier):
    def __init__(self, row):
        self.row = np.asarray(row, float)
        self.n_classes_ = len(row)

    def _raw_proba(self, X):
        return np.tile(self.row, (len(X), 1))


class Oracle(ProbabilisticClassifier):
    """Reads the label from the first feature."""

    n_classes_ = 3

    def _raw_proba(self, X):
        return np.eye(3)[np.asarray(X)[:, 0].astype(int)]


class TestBiqualityCV:
    def test_all_trusted_is_noop(self):
        base = kfold_splits(30, 3, seed=0)
        out = make_biquality_cv(base, np.ones(30, int))
        assert len(out) == 3
        for (tr, te), split in zip(base, out):
            np.testing.assert_array_equal(split.train_indices, tr)
            np.testing.assert_array_equal(split.test_indices, te)

    def test_untrusted_index_moved(self):
        quality = np.array([1, 0, 1, 1, 0, 1])
        (split,) = make_biquality_cv([([3, 4, 5], [0, 1, 2])], quality)
        assert split.test_indices.tolist() == [0, 2]
        assert sorted(split.train_indices.tolist()) == [1, 3, 4, 5]

    def test_three_fold_audit(self):
        quality = np.r_[np.ones(150, int), np.zeros(150, int)]
        quality = np.random.default_rng(0).permutation(quality)
        out = make_biquality_cv(kfold_splits(300, 3, seed=1), quality)
        assert len(out) == 3
        for train, test in out:
            assert np.all(quality[test] == 1)
            assert sorted(np.r_[train, test].tolist()) == list(range(300))

    def test_empty_test_split_dropped_with_warning(self):
        quality = np.array([1, 1, 0, 0])
        with pytest.warns(UserWarning, match="1 split"):
            out = make_biquality_cv([([2, 3], [0, 1]), ([0, 1], [2, 3])], quality)
        assert len(out) == 1

    def test_deterministic(self):
        quality = np.random.default_rng(2).integers(0, 2, 50)
        base = kfold_splits(50, 5, seed=3)
        a = make_biquality_cv(base, quality)
        b = make_biquality_cv(base, quality)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.train_indices, sb.train_indices)
            np.testing.assert_array_equal(sa.test_indices, sb.test_indices)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_fuzz_preserves_indices(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 60))
        quality = rng.integers(0, 2, n)
        # arbitrary sub-sampling base splits, not necessarily partitions
        base = []
        for _ in range(int(rng.integers(1, 5))):
            perm = rng.permutation(n)
            cut = int(rng.integers(1, n))
            base.append((perm[:cut][: int(rng.integers(0, cut + 1))], perm[cut:]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = make_biquality_cv(base, quality)
        kept = [b for b in base if np.any(quality[b[1]] == 1)]
        assert len(out) == len(kept)
        for (tr, te), split in zip(kept, out):
            assert np.all(quality[split.test_indices] == 1)
            assert sorted(np.r_[split.train_indices, split.test_indices].tolist()) == sorted(np.r_[tr, te].tolist())


class TestKfold:
    def test_partition(self):
        folds = kfold_splits(23, 4, seed=0)
        tests = np.concatenate([te for _, te in folds])
        assert sorted(tests.tolist()) == list(range(23))
        for tr, te in folds:
            assert not set(tr) & set(te)

    def test_stratified(self):
        y = np.repeat([0, 1], [30, 60])
        for _, te in kfold_splits(90, 3, seed=1, labels=y):
            assert np.bincount(y[te]).tolist() == [10, 20]

    def test_bad_fold_count(self):
        with pytest.raises(ValueError):
            kfold_splits(10, 1)


class TestEvaluate:
    def test_perfect_model(self):
        y = np.array([0, 1, 2, 1])
        ds = BiqualityDataset(y[:, None].astype(float), y, np.ones(4, int), n_classes=3)
        report = evaluate(Oracle(), ds, np.arange(4))
        assert report.accuracy == 1.0 and report.balanced_accuracy == 1.0
        assert report.log_loss == pytest.approx(0.0, abs=1e-11)

    def test_uniform_predictor_log_loss(self):
        y = np.arange(8) % 4
        ds = BiqualityDataset(np.zeros((8, 1)), y, np.ones(8, int), n_classes=4)
        report = evaluate(Constant([0.25] * 4), ds, np.arange(8))
        assert report.log_loss == pytest.approx(math.log(4), abs=1e-12)

    def test_majority_predictor(self):
        y = np.r_[np.zeros(9, int), 1]
        ds = BiqualityDataset(np.zeros((10, 1)), y, np.ones(10, int))
        report = evaluate(Constant([0.9, 0.1]), ds, np.arange(10))
        assert report.accuracy == pytest.approx(0.9)
        assert report.balanced_accuracy == pytest.approx(0.5)
        assert report.n_test == 10

    def test_rejects_untrusted(self):
        ds = BiqualityDataset(np.zeros((4, 1)), [0, 1, 0, 1], [1, 1, 0, 1])
        with pytest.raises(ValueError, match="untrusted"):
            evaluate(Constant([0.5, 0.5]), ds, [0, 2])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_fuzz_rejects_any_untrusted_index(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        quality = rng.integers(0, 2, n)
        quality[rng.integers(n)] = 0
        ds = BiqualityDataset(np.zeros((n, 1)), rng.integers(0, 2, n), quality, n_classes=2)
        idx = rng.choice(n, int(rng.integers(1, n + 1)), replace=False)
        if np.any(quality[idx] == 0):
            with pytest.raises(ValueError, match="untrusted"):
                evaluate(Constant([0.5, 0.5]), ds, idx)
        else:
            assert evaluate(Constant([0.5, 0.5]), ds, idx).n_test == len(idx)
