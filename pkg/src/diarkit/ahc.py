"""Agglomerative clustering over PLDA scores with a GMM-derived threshold.

The stopping threshold comes from a two-component, shared-variance 1-D
Gaussian mixture fitted to the off-diagonal scores of one utterance: the
low-mean component captures different-speaker pairs, the high-mean one
same-speaker pairs, and clustering stops where their posteriors cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDataError, DegenerateModelError
from .embedding import ScoreMatrix


@dataclass(frozen=True)
class TiedGmm1d:
    mean_low: float
    mean_high: float
    weight_high: float
    sigma2: float

    def __post_init__(self) -> None:
        if self.mean_low > self.mean_high:
            raise ValueError("mean_low must not exceed mean_high")
        if not (0 < self.weight_high < 1):
            raise ValueError(f"weight_high must lie strictly in (0, 1): {self.weight_high}")
        if self.sigma2 <= 0:
            raise ValueError(f"shared variance must be positive: {self.sigma2}")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    n_clusters: int

    def __post_init__(self) -> None:
        used = set(self.labels)
        if used != set(range(self.n_clusters)):
            raise ValueError("labels must use every index in [0, n_clusters)")


def fit_tied_gmm(scores, iters: int = 50, seed: int = 0) -> TiedGmm1d:
    """EM fit of the two-component tied-variance mixture.

    Means initialize at the 10th/90th score percentiles (min/max when those
    coincide), weights at one half; fully deterministic.  ``seed`` is
    reserved for randomized restarts.
    """
    x = np.asarray(scores, dtype=np.float64).ravel()
    if x.size < 2 or np.unique(x).size < 2:
        raise DegenerateDataError("need at least two distinct score values")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    m = np.array([np.percentile(x, 10), np.percentile(x, 90)])
    if m[0] == m[1]:
        m = np.array([x.min(), x.max()])
    w = np.array([0.5, 0.5])
    var = max(x.var(), 1e-12 * (x.max() - x.min()) ** 2, 1e-300)
    for _ in range(iters):
        log_joint = np.log(w)[None, :] - 0.5 * np.log(2 * np.pi * var) - (
            (x[:, None] - m[None, :]) ** 2
        ) / (2 * var)
        norm = logsumexp(log_joint, axis=1)
        resp = np.exp(log_joint - norm[:, None])
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        m = (resp * x[:, None]).sum(axis=0) / nk
        w = nk / x.size
        var = float((resp * (x[:, None] - m[None, :]) ** 2).sum() / x.size)
        var = max(var, 1e-12 * max((x.max() - x.min()) ** 2, 1e-12))
    lo, hi = (0, 1) if m[0] <= m[1] else (1, 0)
    w_high = min(max(float(w[hi]), 1e-12), 1 - 1e-12)
    return TiedGmm1d(float(m[lo]), float(m[hi]), w_high, var)


def gmm_log_likelihood(gmm: TiedGmm1d, scores) -> float:
    """Independent mixture log-likelihood; used to audit EM monotonicity."""
    x = np.asarray(scores, dtype=np.float64).ravel()
    means = np.array([gmm.mean_low, gmm.mean_high])
    weights = np.array([1 - gmm.weight_high, gmm.weight_high])
    log_joint = np.log(weights)[None, :] - 0.5 * np.log(2 * np.pi * gmm.sigma2) - (
        (x[:, None] - means[None, :]) ** 2
    ) / (2 * gmm.sigma2)
    return float(logsumexp(log_joint, axis=1).sum())


def derive_threshold(gmm: TiedGmm1d) -> float:
    """Score where the two components' posteriors are equal (closed form)."""
    if gmm.mean_high == gmm.mean_low:
        raise DegenerateModelError("component means coincide; no threshold exists")
    w_low = 1 - gmm.weight_high
    return 0.5 * (gmm.mean_low + gmm.mean_high) + gmm.sigma2 * math.log(
        w_low / gmm.weight_high
    ) / (gmm.mean_high - gmm.mean_low)


def ahc_cluster(scores: ScoreMatrix, threshold: float) -> ClusterAssignment:
    """Average-linkage agglomeration until the best merge drops below threshold.

    Cluster-pair similarity is the mean of the original score entries
    between the two member sets.  Merge ties go to the smallest (i, j)
    slot pair, where a cluster's slot is the smallest item index it
    contains.  Output labels are renumbered by first occurrence.
    """
    n = scores.n
    if n < 1:
        raise ValueError("need at least one item")
    member = np.arange(n)
    if n > 1:
        sums = scores.values.astype(np.float64).copy()
        sizes = np.ones(n)
        active = np.ones(n, dtype=bool)
        while active.sum() > 1:
            avg = sums / np.outer(sizes, sizes)
            avg[~active, :] = -np.inf
            avg[:, ~active] = -np.inf
            avg[np.tril_indices(n)] = -np.inf
            flat = int(np.argmax(avg))
            i, j = divmod(flat, n)
            if avg[i, j] < threshold:
                break
            sums[i, :] += sums[j, :]
            sums[:, i] += sums[:, j]
            sizes[i] += sizes[j]
            active[j] = False
            member[member == j] = i
    remap: dict[int, int] = {}
    labels = []
    for slot in member:
        if slot not in remap:
            remap[slot] = len(remap)
        labels.append(remap[slot])
    return ClusterAssignment(tuple(labels), len(remap))
