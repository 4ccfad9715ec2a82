"""Embedding sequences, LDA reduction, and two-covariance PLDA.

The PLDA here is the two-covariance flavor: a speaker draws a latent
mean ``y ~ N(mu, B)`` and each of their embeddings is ``x ~ N(y, W)``.
Training is EM over speaker-labeled vectors; scoring is the closed-form
same/different log-likelihood ratio.  All the linear algebra is phrased
to avoid inverting ``B`` so the between-class covariance may collapse to
zero without blowing up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import FormatError, NumericError, TrainingError
from .ioutil import fmt, fmt_row, parse_floats, parse_header
from .timeline import TimeInterval

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class EmbeddingSequence:
    """Time-stamped fixed-dimension embeddings for one recording."""

    recording_id: str
    intervals: tuple[TimeInterval, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        self.intervals = tuple(self.intervals)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array [n, dim]")
        if len(self.intervals) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.intervals)} intervals vs {self.vectors.shape[0]} vectors"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("vectors must be finite")
        starts = [iv.start for iv in self.intervals]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("intervals must be sorted by start")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def select(self, keep: Sequence[int] | np.ndarray) -> "EmbeddingSequence":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        return EmbeddingSequence(
            self.recording_id,
            tuple(self.intervals[int(i)] for i in keep),
            self.vectors[keep],
        )


@dataclass(eq=False)
class LdaModel:
    input_dim: int
    output_dim: int
    mean: np.ndarray
    projection: np.ndarray  # [output_dim, input_dim]

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.projection = np.asarray(self.projection, dtype=np.float64)
        if self.projection.shape != (self.output_dim, self.input_dim):
            raise ValueError("projection shape must be [output_dim, input_dim]")
        if self.mean.shape != (self.input_dim,):
            raise ValueError("mean shape must match input_dim")
        if self.output_dim > self.input_dim:
            raise ValueError("output_dim must not exceed input_dim")
        if not (np.all(np.isfinite(self.projection)) and np.all(np.isfinite(self.mean))):
            raise ValueError("model parameters must be finite")


@dataclass(eq=False)
class PldaModel:
    """Two-covariance model: global mean, between (B) and within (W) covariances."""

    dim: int
    mu: np.ndarray
    between: np.ndarray
    within: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.between = np.asarray(self.between, dtype=np.float64)
        self.within = np.asarray(self.within, dtype=np.float64)
        d = self.dim
        if self.mu.shape != (d,) or self.between.shape != (d, d) or self.within.shape != (d, d):
            raise ValueError("inconsistent PLDA parameter shapes")
        for name, mat in (("between", self.between), ("within", self.within)):
            if not np.allclose(mat, mat.T, atol=1e-8):
                raise ValueError(f"{name} covariance must be symmetric")
        scale = max(np.trace(self.between), np.trace(self.within), 1.0)
        if np.linalg.eigvalsh(self.between).min() < -1e-9 * scale:
            raise ValueError("between covariance must be PSD")
        try:
            np.linalg.cholesky(self.within)
        except np.linalg.LinAlgError:
            raise ValueError("within covariance must be positive definite") from None


@dataclass(eq=False)
class ScoreMatrix:
    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.n, self.n):
            raise ValueError("score matrix shape must be [n, n]")
        if self.n and np.abs(self.values - self.values.T).max() > 1e-9:
            raise ValueError("score matrix must be symmetric")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scores must be finite")

    def upper_triangle(self) -> np.ndarray:
        """Off-diagonal scores (i < j), the AHC threshold-fitting input."""
        iu = np.triu_indices(self.n, k=1)
        return self.values[iu]


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    """Flip each row so its first coordinate above noise level is positive."""
    out = rows.copy()
    for r in range(out.shape[0]):
        row = out[r]
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            out[r] = -row
    return out


def train_lda(vectors: np.ndarray, labels: Sequence[str], output_dim: int) -> LdaModel:
    """Fit LDA by the generalized eigenproblem on (between, within) scatter.

    Rows of the projection are the top generalized eigenvectors, unit-norm
    in the regularized within-scatter metric.  ``output_dim`` is clamped
    to ``min(input_dim, n_classes - 1)`` when it exceeds that bound.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("vectors must be [n, dim]")
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValueError("one label per vector required")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("LDA needs at least two classes")
    d = X.shape[1]
    gm = X.mean(axis=0)
    s_within = np.zeros((d, d))
    s_between = np.zeros((d, d))
    for c in classes:
        xc = X[[l == c for l in labels]]
        if xc.shape[0] < 2:
            raise ValueError(f"class {c!r} has fewer than two samples")
        mc = xc.mean(axis=0)
        dev = xc - mc
        s_within += dev.T @ dev
        dm = (mc - gm)[:, None]
        s_between += xc.shape[0] * (dm @ dm.T)
    lam = 1e-6 * np.trace(s_within) / d
    s_within_reg = s_within + lam * np.eye(d)
    try:
        eigvals, eigvecs = scipy.linalg.eigh(s_between, s_within_reg)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise TrainingError(f"within-class scatter is singular: {exc}") from None
    order = np.argsort(-eigvals, kind="stable")
    max_dim = min(d, len(classes) - 1)
    k = output_dim
    if k > max_dim:
        logger.warning("clamping LDA output_dim from %d to %d", output_dim, max_dim)
        k = max_dim
    if k < 1:
        raise ValueError(f"output_dim must be positive, got {output_dim}")
    rows = eigvecs[:, order[:k]].T
    return LdaModel(d, k, gm, _fix_signs(rows))


def project(model: LdaModel, seq: EmbeddingSequence, normalize: bool = True) -> EmbeddingSequence:
    """Apply ``P (v - mean)`` to every vector, then length-normalize."""
    if seq.dim != model.input_dim:
        raise ValueError(f"embedding dim {seq.dim} != model input dim {model.input_dim}")
    Y = (seq.vectors - model.mean) @ model.projection.T
    if normalize:
        norms = np.linalg.norm(Y, axis=1)
        bad = np.flatnonzero(norms < 1e-300)
        if bad.size:
            raise NumericError(f"cannot length-normalize zero vector at index {bad[0]}")
        Y = Y / norms[:, None]
    return EmbeddingSequence(seq.recording_id, seq.intervals, Y)


def _speaker_stats(X: np.ndarray, labels: Sequence[str]):
    speakers = sorted(set(labels))
    idx = {s: i for i, s in enumerate(speakers)}
    counts = np.zeros(len(speakers))
    sums = np.zeros((len(speakers), X.shape[1]))
    for x, l in zip(X, labels):
        counts[idx[l]] += 1
        sums[idx[l]] += x
    return speakers, counts, sums


def _chol_solve(chol, rhs):
    return scipy.linalg.cho_solve((chol, True), rhs)


def plda_log_likelihood(model: PldaModel, vectors: np.ndarray, labels: Sequence[str]) -> float:
    """Total marginal log-likelihood of speaker-labeled vectors.

    Uses the factorization into the per-speaker sample mean (Gaussian with
    covariance ``B + W/n``) and within-speaker deviations, which stays
    finite as ``B`` approaches zero.
    """
    X = np.asarray(vectors, dtype=np.float64)
    d = model.dim
    _, counts, sums = _speaker_stats(X, labels)
    chol_w = np.linalg.cholesky(model.within)
    logdet_w = 2.0 * np.sum(np.log(np.diag(chol_w)))
    sol = _chol_solve(chol_w, X.T)
    quad_all = np.einsum("ij,ji->i", X, sol)
    quad_per_speaker = np.zeros(len(counts))
    speakers = sorted(set(labels))
    idx = {s: i for i, s in enumerate(speakers)}
    for q, l in zip(quad_all, labels):
        quad_per_speaker[idx[l]] += q

    total = 0.0
    for n in np.unique(counts):
        sel = counts == n
        xbar = sums[sel] / n
        cov_mean = model.between + model.within / n
        chol_m = np.linalg.cholesky(cov_mean)
        logdet_m = 2.0 * np.sum(np.log(np.diag(chol_m)))
        dev = xbar - model.mu
        quad_mean = np.einsum("ij,ji->i", dev, _chol_solve(chol_m, dev.T))
        quad_xbar = n * np.einsum("ij,ji->i", xbar, _chol_solve(chol_w, xbar.T))
        quad_dev = quad_per_speaker[sel] - quad_xbar
        total += np.sum(
            -0.5 * d * np.log(2 * np.pi)
            - 0.5 * logdet_m
            - 0.5 * quad_mean
            - 0.5 * (n - 1) * d * np.log(2 * np.pi)
            - 0.5 * (n - 1) * logdet_w
            - 0.5 * d * np.log(n)
            - 0.5 * quad_dev
        )
    return float(total)


def train_plda(
    vectors: np.ndarray,
    labels: Sequence[str],
    iters: int = 10,
    return_loglik: bool = False,
):
    """EM for the two-covariance model over speaker-labeled vectors.

    Returns the fitted :class:`PldaModel`; with ``return_loglik`` also the
    per-iteration total log-likelihood trace (evaluated before each update,
    plus once after the final M-step).
    """
    X = np.asarray(vectors, dtype=np.float64)
    labels = list(labels)
    if X.ndim != 2 or len(labels) != X.shape[0]:
        raise ValueError("vectors must be [n, dim] with one label each")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    speakers, counts, sums = _speaker_stats(X, labels)
    if len(speakers) < 2:
        raise ValueError("PLDA needs at least two speakers")
    if counts.min() < 2:
        raise ValueError("every speaker needs at least two vectors")
    d = X.shape[1]
    n_total = X.shape[0]
    xbar = sums / counts[:, None]

    mu = X.mean(axis=0)
    dev_means = xbar - mu
    between = (dev_means * counts[:, None]).T @ dev_means / len(speakers)
    within = np.zeros((d, d))
    label_idx = {s: i for i, s in enumerate(speakers)}
    for x, l in zip(X, labels):
        r = x - xbar[label_idx[l]]
        within += np.outer(r, r)
    within /= n_total
    between = _ensure_psd(between, "between")
    within = _ensure_pd(within, "within")

    loglik_trace: list[float] = []
    for _ in range(iters):
        model = PldaModel(d, mu, between, within)
        loglik_trace.append(plda_log_likelihood(model, X, labels))

        # E-step: posterior N(yhat_s, sigma_s) per speaker, phrased without B^-1:
        #   sigma_s = (I + n B W^-1)^-1 B
        #   yhat_s  = (I + n B W^-1)^-1 (mu + B W^-1 sum_x)
        chol_w = np.linalg.cholesky(within)
        b_pw = _chol_solve(chol_w, between.T).T  # B W^-1
        yhat = np.zeros_like(xbar)
        sigma_by_count = {}
        for n in np.unique(counts):
            m = np.eye(d) + n * b_pw
            sigma = np.linalg.solve(m, between)
            sigma_by_count[n] = 0.5 * (sigma + sigma.T)
            sel = counts == n
            rhs = mu[None, :] + sums[sel] @ b_pw.T
            yhat[sel] = np.linalg.solve(m, rhs.T).T

        # M-step.
        mu = yhat.mean(axis=0)
        dev_y = yhat - mu
        between = dev_y.T @ dev_y
        for n, sigma in sigma_by_count.items():
            between += np.sum(counts == n) * sigma
        between /= len(speakers)

        within = np.zeros((d, d))
        for x, l in zip(X, labels):
            r = x - yhat[label_idx[l]]
            within += np.outer(r, r)
        for n, sigma in sigma_by_count.items():
            within += np.sum(counts == n) * n * sigma
        within /= n_total

        between = _ensure_psd(between, "between")
        within = _ensure_pd(within, "within")

    model = PldaModel(d, mu, between, within)
    loglik_trace.append(plda_log_likelihood(model, X, labels))
    if return_loglik:
        return model, loglik_trace
    return model


def _ensure_psd(mat: np.ndarray, name: str) -> np.ndarray:
    mat = 0.5 * (mat + mat.T)
    scale = max(np.trace(mat), 1e-12)
    if np.linalg.eigvalsh(mat).min() < -1e-10 * scale:
        eps = 1e-6 * np.trace(mat) / mat.shape[0]
        mat = mat + eps * np.eye(mat.shape[0])
        if np.linalg.eigvalsh(mat).min() < -1e-10 * scale:
            raise TrainingError(f"{name} covariance is not PSD after regularization")
    return mat


def _ensure_pd(mat: np.ndarray, name: str) -> np.ndarray:
    mat = 0.5 * (mat + mat.T)
    try:
        np.linalg.cholesky(mat)
        return mat
    except np.linalg.LinAlgError:
        pass
    eps = 1e-6 * max(np.trace(mat), 1e-12) / mat.shape[0]
    mat = mat + eps * np.eye(mat.shape[0])
    try:
        np.linalg.cholesky(mat)
        return mat
    except np.linalg.LinAlgError:
        raise TrainingError(f"{name} covariance is not PD after regularization") from None


def interpolate_plda(a: PldaModel, b: PldaModel, alpha: float) -> PldaModel:
    """Element-wise convex combination; ``alpha`` weights model ``a``."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not (0 <= alpha <= 1):
        raise ValueError(f"alpha must lie in [0, 1]: {alpha}")
    return PldaModel(
        a.dim,
        alpha * a.mu + (1 - alpha) * b.mu,
        alpha * a.between + (1 - alpha) * b.between,
        alpha * a.within + (1 - alpha) * b.within,
    )


def plda_score_matrix(model: PldaModel, vectors: np.ndarray) -> ScoreMatrix:
    """Pairwise same-vs-different speaker log-likelihood ratios.

    Closed form for the two-covariance model: with ``T = B + W`` and the
    Schur complement ``S = T - B T^-1 B``,

        score(i, j) = u_i' P u_j + (u_i' Q u_i + u_j' Q u_j) / 2 + k

    where ``u = x - mu``, ``P = T^-1 B S^-1``, ``Q = T^-1 - S^-1`` and
    ``k = (logdet T - logdet S) / 2``.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"vectors must be [n, {model.dim}]")
    t = model.between + model.within
    inv_t = np.linalg.inv(t)
    s = t - model.between @ inv_t @ model.between
    inv_s = np.linalg.inv(s)
    p = inv_t @ model.between @ inv_s
    p = 0.5 * (p + p.T)
    q = inv_t - inv_s
    q = 0.5 * (q + q.T)
    k = 0.5 * (np.linalg.slogdet(t)[1] - np.linalg.slogdet(s)[1])
    u = X - model.mu
    cross = u @ p @ u.T
    quad = 0.5 * np.einsum("ij,ij->i", u @ q, u)
    scores = cross + quad[:, None] + quad[None, :] + k
    scores = 0.5 * (scores + scores.T)
    return ScoreMatrix(X.shape[0], scores)


# -- text formats -----------------------------------------------------------


def write_embeddings(seq: EmbeddingSequence) -> str:
    lines = [f"EMB v1 {seq.recording_id} {seq.dim} {len(seq)}"]
    for iv, vec in zip(seq.intervals, seq.vectors):
        lines.append(f"{fmt(iv.start)} {fmt(iv.end)} {fmt_row(vec)}")
    return "".join(line + "\n" for line in lines)


def read_embeddings(text: str) -> EmbeddingSequence:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty embedding file")
    rec, dim_s, count_s = parse_header(lines[0], "EMB", 3)
    try:
        dim = int(dim_s)
        count = int(count_s)
    except ValueError:
        raise FormatError(f"bad EMB header numbers: {lines[0]!r}") from None
    body = [l for l in lines[1:] if l.strip()]
    if len(body) != count:
        raise FormatError(f"EMB: expected {count} entries, found {len(body)}")
    intervals = []
    vectors = np.zeros((count, dim))
    for i, line in enumerate(body):
        nums = parse_floats(line, dim + 2, f"EMB entry {i + 1}")
        try:
            intervals.append(TimeInterval(nums[0], nums[1]))
        except ValueError as exc:
            raise FormatError(f"EMB entry {i + 1}: {exc}") from None
        vectors[i] = nums[2:]
    try:
        return EmbeddingSequence(rec, tuple(intervals), vectors)
    except ValueError as exc:
        raise FormatError(f"EMB: {exc}") from None


def write_labels(labels: Sequence[str]) -> str:
    lines = [f"LBL v1 {len(labels)}"]
    lines.extend(labels)
    return "".join(line + "\n" for line in lines)


def read_labels(text: str) -> list[str]:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty label file")
    (count_s,) = parse_header(lines[0], "LBL", 1)
    try:
        count = int(count_s)
    except ValueError:
        raise FormatError(f"bad LBL header: {lines[0]!r}") from None
    body = [l.strip() for l in lines[1:] if l.strip()]
    if len(body) != count:
        raise FormatError(f"LBL: expected {count} labels, found {len(body)}")
    return body


def write_lda(model: LdaModel) -> str:
    lines = [f"LDA v1 {model.input_dim} {model.output_dim}", fmt_row(model.mean)]
    lines.extend(fmt_row(row) for row in model.projection)
    return "".join(line + "\n" for line in lines)


def read_lda(text: str) -> LdaModel:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise FormatError("empty LDA file")
    din_s, dout_s = parse_header(lines[0], "LDA", 2)
    try:
        din, dout = int(din_s), int(dout_s)
    except ValueError:
        raise FormatError(f"bad LDA header numbers: {lines[0]!r}") from None
    if len(lines) != 2 + dout:
        raise FormatError(f"LDA: expected {1 + dout} matrix rows, found {len(lines) - 1}")
    mean = np.array(parse_floats(lines[1], din, "LDA mean"))
    proj = np.array([parse_floats(lines[2 + r], din, f"LDA row {r}") for r in range(dout)])
    try:
        return LdaModel(din, dout, mean, proj)
    except ValueError as exc:
        raise FormatError(f"LDA: {exc}") from None


def write_plda(model: PldaModel) -> str:
    lines = [f"PLDA v1 {model.dim}", fmt_row(model.mu)]
    lines.extend(fmt_row(row) for row in model.between)
    lines.extend(fmt_row(row) for row in model.within)
    return "".join(line + "\n" for line in lines)


def read_plda(text: str) -> PldaModel:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise FormatError("empty PLDA file")
    (dim_s,) = parse_header(lines[0], "PLDA", 1)
    try:
        dim = int(dim_s)
    except ValueError:
        raise FormatError(f"bad PLDA header: {lines[0]!r}") from None
    if len(lines) != 2 + 2 * dim:
        raise FormatError(f"PLDA: expected {1 + 2 * dim} matrix rows, found {len(lines) - 1}")
    mu = np.array(parse_floats(lines[1], dim, "PLDA mean"))
    between = np.array([parse_floats(lines[2 + r], dim, f"PLDA B row {r}") for r in range(dim)])
    within = np.array(
        [parse_floats(lines[2 + dim + r], dim, f"PLDA W row {r}") for r in range(dim)]
    )
    try:
        return PldaModel(dim, mu, between, within)
    except ValueError as exc:
        raise FormatError(f"PLDA: {exc}") from None
