"""Variational-Bayes HMM refinement of an initial clustering.

States are speakers; emissions come from a per-speaker latent vector with
a standard-normal prior in the PLDA latent basis (within-class covariance
whitened to identity, between-class diagonalized to ``phi``).  Each
iteration alternates a forward-backward pass over frames, an update of
the Gaussian variational posterior of every speaker's latent vector, and
a re-estimate of the speaker priors.  The evidence lower bound must not
decrease; speakers whose total occupancy falls below ``min_occupancy``
are dropped after convergence, which is how the state count shrinks to
the number of speakers the data supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .ahc import ClusterAssignment
from .embedding import EmbeddingSequence, PldaModel
from .errors import NumericError
from .timeline import Hypothesis, LabeledSegment, TimeInterval

_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class VbhmmConfig:
    loop_p: float = 0.99
    fa: float = 0.3
    fb: float = 17.0
    max_iters: int = 40
    elbo_tol: float = 1e-6
    min_occupancy: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.loop_p < 1):
            raise ValueError(f"loop_p must lie strictly in (0, 1): {self.loop_p}")
        if self.fa < 0 or self.fb <= 0:
            raise ValueError("fa must be >= 0 and fb > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.elbo_tol <= 0:
            raise ValueError("elbo_tol must be positive")
        if self.min_occupancy < 0:
            raise ValueError("min_occupancy must be non-negative")


@dataclass(eq=False)
class Responsibilities:
    gamma: np.ndarray  # [T, S]

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if self.gamma.ndim != 2:
            raise ValueError("gamma must be [T, S]")
        if self.gamma.size and np.abs(self.gamma.sum(axis=1) - 1).max() > 1e-9:
            raise ValueError("gamma rows must sum to one")
        if self.gamma.size and self.gamma.min() < -1e-12:
            raise ValueError("gamma must be non-negative")


@dataclass(frozen=True)
class ElboTrace:
    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(eq=False)
class ResegmentResult:
    assignment: ClusterAssignment
    responsibilities: Responsibilities
    elbo: ElboTrace
    # Diagnostics for auditing the converged model: per-frame emission
    # log-likelihoods, speaker priors, and the surviving initial-cluster ids,
    # all over the kept (post-pruning) states.
    log_emissions: np.ndarray
    speaker_priors: np.ndarray
    kept_clusters: tuple[int, ...]


def plda_latent_basis(plda: PldaModel, floor: float = 1e-6):
    """Simultaneous diagonalization of (within, between).

    Returns ``(transform, phi)`` with ``A W A' = I`` and ``A B A' = diag(phi)``,
    keeping only directions with ``phi > floor``.
    """
    eigvals, eigvecs = scipy.linalg.eigh(plda.between, plda.within)
    order = np.argsort(-eigvals, kind="stable")
    keep = order[eigvals[order] > floor]
    if keep.size == 0:
        raise NumericError("between-class covariance vanishes in every direction")
    transform = eigvecs[:, keep].T
    return transform, eigvals[keep]


def forward_backward(log_emis: np.ndarray, log_tr: np.ndarray, log_init: np.ndarray):
    """Log-space forward-backward; returns (gamma, total loglik, log alpha, log beta)."""
    t_len, n_states = log_emis.shape
    log_a = np.full((t_len, n_states), -np.inf)
    log_b = np.zeros((t_len, n_states))
    log_a[0] = log_emis[0] + log_init
    for t in range(1, t_len):
        log_a[t] = log_emis[t] + logsumexp(log_a[t - 1][:, None] + log_tr, axis=0)
    for t in range(t_len - 2, -1, -1):
        log_b[t] = logsumexp(log_tr + (log_emis[t + 1] + log_b[t + 1])[None, :], axis=1)
    total = float(logsumexp(log_a[-1]))
    gamma = np.exp(log_a + log_b - total)
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma, total, log_a, log_b


def resegment(
    embeddings: EmbeddingSequence,
    init: ClusterAssignment,
    plda: PldaModel,
    cfg: VbhmmConfig = VbhmmConfig(),
) -> ResegmentResult:
    """Refine an initial frame labeling by VB inference over the speaker HMM."""
    t_len = len(embeddings)
    if t_len == 0:
        raise ValueError("embeddings must be non-empty")
    if len(init.labels) != t_len:
        raise ValueError(f"{len(init.labels)} labels vs {t_len} embeddings")

    transform, phi = plda_latent_basis(plda)
    x = (embeddings.vectors - plda.mu) @ transform.T
    dim = x.shape[1]

    n_states = init.n_clusters
    gamma = np.zeros((t_len, n_states))
    gamma[np.arange(t_len), np.array(init.labels)] = 1.0
    pi = gamma.sum(axis=0) / t_len

    rho = x * np.sqrt(phi)[None, :]
    g_const = -0.5 * (np.sum(x**2, axis=1) + dim * _LOG2PI)

    elbo_values: list[float] = []
    log_emis = np.zeros((t_len, n_states))
    for it in range(cfg.max_iters):
        # q(y_s) from current responsibilities: diagonal precision per state.
        occ = gamma.sum(axis=0)
        inv_l = 1.0 / (1.0 + (cfg.fa / cfg.fb) * occ[:, None] * phi[None, :])
        alpha = (cfg.fa / cfg.fb) * inv_l * (gamma.T @ rho)

        log_emis = cfg.fa * (
            rho @ alpha.T - 0.5 * (inv_l + alpha**2) @ phi + g_const[:, None]
        )
        tr = cfg.loop_p * np.eye(n_states) + (1 - cfg.loop_p) * pi[None, :]
        with np.errstate(divide="ignore"):
            log_tr = np.log(tr)
            log_init = np.log(pi)
        gamma, log_px, log_a, log_b = forward_backward(log_emis, log_tr, log_init)

        elbo = log_px + cfg.fb * 0.5 * np.sum(np.log(inv_l) - inv_l - alpha**2 + 1)
        if not np.isfinite(elbo):
            raise NumericError(f"non-finite ELBO at iteration {it + 1}")
        elbo_values.append(float(elbo))

        # Speaker-prior re-estimate: initial draw plus expected "move" arrivals.
        if t_len > 1:
            arrivals = np.sum(
                np.exp(
                    logsumexp(log_a[:-1], axis=1, keepdims=True)
                    + log_emis[1:]
                    + log_b[1:]
                    - log_px
                ),
                axis=0,
            )
            pi = gamma[0] + (1 - cfg.loop_p) * pi * arrivals
        else:
            pi = gamma[0].copy()
        pi = np.maximum(pi, 1e-300)
        pi = pi / pi.sum()

        if it > 0 and elbo_values[-1] - elbo_values[-2] < cfg.elbo_tol:
            break

    # Prune states with too little total occupancy, keeping at least one.
    occ = gamma.sum(axis=0)
    keep = occ >= cfg.min_occupancy
    if not keep.any():
        keep[int(np.argmax(occ))] = True
    kept_idx = np.flatnonzero(keep)
    gamma_kept = gamma[:, kept_idx]
    row_sums = gamma_kept.sum(axis=1, keepdims=True)
    dead = row_sums[:, 0] < 1e-12
    if dead.any():
        gamma_kept[dead] = 1.0 / kept_idx.size
        row_sums = gamma_kept.sum(axis=1, keepdims=True)
    gamma_kept = gamma_kept / row_sums

    hard = np.argmax(gamma_kept, axis=1)
    # Restrict to states actually used by the hard labels so every output
    # index is populated, renumbering by first occurrence.
    used: dict[int, int] = {}
    labels = []
    for s in hard:
        if int(s) not in used:
            used[int(s)] = len(used)
        labels.append(used[int(s)])
    cols = np.array(list(used.keys()))
    gamma_out = gamma_kept[:, cols]
    gamma_out = gamma_out / gamma_out.sum(axis=1, keepdims=True)
    pi_out = pi[kept_idx][cols]
    pi_out = pi_out / pi_out.sum()

    return ResegmentResult(
        assignment=ClusterAssignment(tuple(labels), len(used)),
        responsibilities=Responsibilities(gamma_out),
        elbo=ElboTrace(tuple(elbo_values)),
        log_emissions=log_emis[:, kept_idx][:, cols],
        speaker_priors=pi_out,
        kept_clusters=tuple(int(kept_idx[c]) for c in cols),
    )


def to_hypothesis(
    assignment: ClusterAssignment,
    windows: list[TimeInterval],
    recording_id: str,
    label_prefix: str = "spk",
) -> Hypothesis:
    """Materialize window labels into speaker segments.

    Consecutive windows sharing a label merge when they overlap or touch;
    differing labels split at the midpoint of their overlap.
    """
    if len(assignment.labels) != len(windows):
        raise ValueError(f"{len(assignment.labels)} labels vs {len(windows)} windows")
    for a, b in zip(windows, windows[1:]):
        if (b.start, b.end) < (a.start, a.end):
            raise ValueError("windows must be sorted")
    segments: list[LabeledSegment] = []
    cur_start = cur_end = 0.0
    cur_label = -1
    for win, label in zip(windows, assignment.labels):
        start, end = win.start, win.end
        if cur_label == -1:
            cur_start, cur_end, cur_label = start, end, label
            continue
        if label == cur_label and start <= cur_end + 1e-9:
            cur_end = max(cur_end, end)
            continue
        if start < cur_end:  # different labels, overlapping windows
            boundary = 0.5 * (start + cur_end)
            segments.append(
                LabeledSegment(TimeInterval(cur_start, boundary), f"{label_prefix}{cur_label}")
            )
            cur_start, cur_end, cur_label = boundary, max(end, boundary + 1e-6), label
        else:
            segments.append(
                LabeledSegment(TimeInterval(cur_start, cur_end), f"{label_prefix}{cur_label}")
            )
            cur_start, cur_end, cur_label = start, end, label
    if cur_label != -1:
        segments.append(
            LabeledSegment(TimeInterval(cur_start, cur_end), f"{label_prefix}{cur_label}")
        )
    return Hypothesis(recording_id, segments)
