"""Importance reweighting of untrusted samples: K-KMM, IRBL and K-PDR."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    PROBA_FLOOR,
    KernelSpec,
    ProbabilisticClassifier,
    WeightedLogisticRegression,
    clone,
    gram,
    validate_dataset,
)

DEFAULT_W_MAX = 1000.0


class ReweightedClassifier(ProbabilisticClassifier):
    """A base learner fitted with per-sample weights, kept for inspection."""

    def __init__(self, base, sample_weight):
        self.base = base
        self.sample_weight_ = sample_weight
        self.n_classes_ = base.n_classes_

    def _raw_proba(self, X):
        return self.base.predict_proba(X)


def _fit_weighted(ds, w, base):
    base = WeightedLogisticRegression() if base is None else clone(base)
    base.fit(ds.features, ds.labels, sample_weight=w, n_classes=ds.n_classes)
    return ReweightedClassifier(base, w)


# ------------------------------------------------------------------- KMM


@dataclass
class KmmProblem:
    """``min 1/2 b'Kb - kappa'b`` s.t. ``0 <= b <= B`` and ``|mean(b) - 1| <= eps``."""

    gram: np.ndarray
    kappa: np.ndarray
    B: float = 1000.0
    eps: float = 0.0

    @classmethod
    def from_samples(cls, X_source, X_target, kernel, B=1000.0, eps=None):
        """Build the problem matching ``X_source`` onto ``X_target``.

        ``kernel`` must already carry a resolved ``gamma`` if both grams are
        to share it. ``eps=None`` applies ``(sqrt(n) - 1) / sqrt(n)``.
        """
        n_s, n_t = len(X_source), len(X_target)
        if eps is None:
            eps = (np.sqrt(n_s) - 1) / np.sqrt(n_s)
        K = gram(kernel, X_source)
        kappa = (n_s / n_t) * gram(kernel, X_source, X_target).sum(axis=1)
        return cls(K, kappa, B, eps)

    def objective(self, beta):
        return 0.5 * beta @ self.gram @ beta - self.kappa @ beta


def _excess(a_sorted, suffix, tau):
    """``sum(max(a - tau, 0))`` for every entry of ``tau``."""
    idx = np.searchsorted(a_sorted, tau, side="right")
    return suffix[idx] - (len(a_sorted) - idx) * tau


def project_box_slab(v, B, lo, hi):
    """Euclidean projection of ``v`` onto ``[0, B]^n ∩ {lo <= sum <= hi}``.

    The projection is ``clip(v - tau, 0, B)`` for the scalar ``tau`` that
    brings the sum into range. That sum is piecewise linear and
    non-increasing in ``tau`` with breakpoints at ``v`` and ``v - B``, so
    ``tau`` is solved exactly on the bracketing segment.
    """
    v = np.asarray(v, dtype=float)
    n = len(v)
    clipped = np.clip(v, 0.0, B)
    s = clipped.sum()
    if lo <= s <= hi:
        return clipped
    target = hi if s > hi else lo
    if np.isfinite(B) and target > n * B:
        raise ValueError("slab is unreachable within the box")

    a = np.sort(v)
    suf_a = np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])
    finite_box = np.isfinite(B)
    if finite_box:
        suf_b = suf_a - B * np.arange(n, -1, -1)

    def total(tau):
        out = _excess(a, suf_a, tau)
        if finite_box:
            out = out - _excess(a - B, suf_b, tau)
        return out

    knots = np.unique(np.concatenate([a, a - B]) if finite_box else a)
    sums = total(knots)
    if target >= sums[0]:
        if finite_box:
            return np.full(n, B)
        # left of every knot all coordinates are free
        tau = knots[0] - (target - sums[0]) / n
    else:
        j = np.searchsorted(-sums, -target, side="left")
        t0, t1, s0, s1 = knots[j - 1], knots[j], sums[j - 1], sums[j]
        tau = t0 + (s0 - target) * (t1 - t0) / (s0 - s1)
    out = np.clip(v - tau, 0.0, B)
    free = (out > 0) & (out < B)
    if np.any(free):
        out[free] += (target - out.sum()) / np.sum(free)
        np.clip(out, 0.0, B, out=out)
    return out


def _power_iteration(K, n_iter=50):
    v = np.ones(K.shape[0]) / np.sqrt(K.shape[0])
    lam = 0.0
    for _ in range(n_iter):
        Kv = K @ v
        norm = np.linalg.norm(Kv)
        if norm == 0:
            return 0.0
        lam = v @ Kv
        v = Kv / norm
    return max(lam, v @ K @ v)


def solve_kmm(problem, max_iter=1000, tol=1e-10):
    """Projected gradient descent for :class:`KmmProblem`.

    The step is ``1/L`` with ``L`` the largest gram eigenvalue from 50 power
    iterations, halved whenever a step fails to decrease the objective so
    accepted iterates are monotone. Returns the best iterate.
    """
    K = np.asarray(problem.gram, dtype=float)
    kappa = np.asarray(problem.kappa, dtype=float)
    n = len(kappa)
    B, eps = float(problem.B), float(problem.eps)
    if K.shape != (n, n):
        raise ValueError("gram and kappa shapes disagree")
    if n == 0:
        return np.zeros(0)
    if not np.allclose(K, K.T, atol=1e-8):
        raise ValueError("gram matrix is not symmetric")
    if np.linalg.eigvalsh(K).min() < -1e-8 * max(1.0, np.abs(K).max()):
        raise ValueError("gram matrix is not positive semidefinite")
    if B < 0 or eps < 0 or B < 1 - eps:
        raise ValueError("infeasible bounds: B=%g, eps=%g" % (B, eps))
    lo = n * max(0.0, 1.0 - eps)
    hi = n * (1.0 + eps) if np.isfinite(eps) else np.inf

    L = _power_iteration(K)
    step = 1.0 / L if L > 0 else 1.0
    beta = project_box_slab(np.ones(n), B, lo, hi)
    f = problem.objective(beta)
    for _ in range(max_iter):
        g = K @ beta - kappa
        while True:
            cand = project_box_slab(beta - step * g, B, lo, hi)
            f_cand = problem.objective(cand)
            if f_cand <= f + 1e-15 * max(1.0, abs(f)) or step < 1e-12 / max(L, 1.0):
                break
            step *= 0.5
        if f_cand > f:
            break
        moved = np.max(np.abs(cand - beta))
        beta, f = cand, f_cand
        if moved < tol:
            break
    return beta


def _kmm_class_weights(X_u, X_t, kernel, B, eps):
    return solve_kmm(KmmProblem.from_samples(X_u, X_t, kernel, B, eps))


def kkmm_weights(ds, kernel=None, B=1000.0, eps=None, policy="strict", n_jobs=None):
    """Per-class KMM weights for the whole dataset (trusted entries are 1).

    Untrusted samples of class ``k`` are matched onto trusted samples of
    class ``k``. Classes with no trusted member get weight 0 under
    ``policy="strict"`` and a classless KMM against all trusted samples
    under ``policy="permissive"``.
    """
    if policy not in ("strict", "permissive"):
        raise ValueError("policy must be 'strict' or 'permissive'")
    ds = validate_dataset(ds, require_trusted=True)
    kernel = (kernel or KernelSpec("rbf")).resolve(ds.features)
    w = np.ones(ds.n_samples)
    jobs, orphans = [], []
    for k in range(ds.n_classes):
        u_idx = np.flatnonzero(ds.untrusted & (ds.labels == k))
        t_idx = np.flatnonzero(ds.trusted & (ds.labels == k))
        if len(u_idx) == 0:
            continue
        if len(t_idx) == 0:
            orphans.append(u_idx)
            w[u_idx] = 0.0
            continue
        jobs.append((u_idx, t_idx))

    def run(job):
        u_idx, t_idx = job
        return _kmm_class_weights(ds.features[u_idx], ds.features[t_idx], kernel, B, eps)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    for (u_idx, _), beta in zip(jobs, results):
        w[u_idx] = beta
    if policy == "permissive" and orphans:
        u_idx = np.concatenate(orphans)
        w[u_idx] = _kmm_class_weights(
            ds.features[u_idx], ds.features[ds.trusted], kernel, B, eps
        )
    return w


def fit_kkmm(ds, kernel=None, B=1000.0, eps=None, base=None, policy="strict", n_jobs=None):
    """K-KMM: per-class kernel mean matching, then a weighted fit of ``base``."""
    ds = validate_dataset(ds, require_trusted=True)
    return _fit_weighted(ds, kkmm_weights(ds, kernel, B, eps, policy, n_jobs), base)


# ------------------------------------------------------------------ IRBL


def irbl_weights(ds, estimator=None, w_max=DEFAULT_W_MAX):
    """Ratio of trusted to untrusted posteriors of the observed label.

    Two independent clones of ``estimator`` are fitted, one per subset.
    """
    ds = validate_dataset(ds, require_trusted=True)
    estimator = WeightedLogisticRegression() if estimator is None else estimator
    K = ds.n_classes
    X_t, y_t = ds.features[ds.trusted], ds.labels[ds.trusted]
    X_u, y_u = ds.features[ds.untrusted], ds.labels[ds.untrusted]
    if len(np.unique(y_t)) < 2:
        raise ValueError("the trusted subset must contain at least two classes")
    w = np.ones(ds.n_samples)
    if len(y_u) == 0:
        return w
    f_t = clone(estimator).fit(X_t, y_t, n_classes=K)
    f_u = clone(estimator).fit(X_u, y_u, n_classes=K)
    idx = np.arange(len(y_u))
    num = f_t.predict_proba(X_u)[idx, y_u]
    den = f_u.predict_proba(X_u)[idx, y_u]
    w[ds.untrusted] = np.clip(num / den, 0.0, w_max)
    return w


def fit_irbl(ds, base=None, estimator=None, w_max=DEFAULT_W_MAX):
    """Importance Reweighting for Biquality Learning."""
    ds = validate_dataset(ds, require_trusted=True)
    return _fit_weighted(ds, irbl_weights(ds, estimator, w_max), base)


# ----------------------------------------------------------------- K-PDR


def pdr_weights(X_untrusted, X_trusted, discriminator, w_max=DEFAULT_W_MAX):
    """Density ratio ``p_trusted(x) / p_untrusted(x)`` from discriminator odds.

    The discriminator separates trusted (1) from untrusted (0) samples; the
    odds are rescaled by ``n_untrusted / n_trusted`` to undo the sample
    priors.
    """
    if not hasattr(discriminator, "predict_proba"):
        raise ValueError("%s has no predict_proba" % type(discriminator).__name__)
    n_u, n_t = len(X_untrusted), len(X_trusted)
    X = np.vstack([X_untrusted, X_trusted])
    target = np.concatenate([np.zeros(n_u, dtype=int), np.ones(n_t, dtype=int)])
    disc = clone(discriminator).fit(X, target, n_classes=2)
    p = np.clip(disc.predict_proba(X_untrusted)[:, 1], PROBA_FLOOR, 1 - PROBA_FLOOR)
    return np.clip((n_u / n_t) * p / (1 - p), 0.0, w_max)


def kpdr_weights(ds, discriminator=None, w_max=DEFAULT_W_MAX):
    """Per-class probabilistic density ratio weights (trusted entries are 1).

    A class without trusted members falls back to the ratio given by a
    single discriminator trained on all trusted against all untrusted data.
    """
    ds = validate_dataset(ds, require_trusted=True)
    discriminator = WeightedLogisticRegression() if discriminator is None else discriminator
    w = np.ones(ds.n_samples)
    fallback = []
    for k in range(ds.n_classes):
        u_idx = np.flatnonzero(ds.untrusted & (ds.labels == k))
        t_idx = np.flatnonzero(ds.trusted & (ds.labels == k))
        if len(u_idx) == 0:
            continue
        if len(t_idx) == 0:
            fallback.append(u_idx)
            continue
        w[u_idx] = pdr_weights(ds.features[u_idx], ds.features[t_idx], discriminator, w_max)
    if fallback:
        u_all = ds.features[ds.untrusted]
        global_w = np.zeros(ds.n_samples)
        global_w[ds.untrusted] = pdr_weights(
            u_all, ds.features[ds.trusted], discriminator, w_max
        )
        u_idx = np.concatenate(fallback)
        w[u_idx] = global_w[u_idx]
    return w


def fit_kpdr(ds, base=None, discriminator=None, w_max=DEFAULT_W_MAX):
    """K-PDR: per-class discriminator density ratios, then a weighted fit."""
    ds = validate_dataset(ds, require_trusted=True)
    return _fit_weighted(ds, kpdr_weights(ds, discriminator, w_max), base)
