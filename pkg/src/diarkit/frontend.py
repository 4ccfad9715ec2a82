"""Detector-posterior fusion and binarization into speech/overlap regions.

Posteriors arrive as uniform-rate probability tracks (one per detector
model).  Fusion is the element-wise mean.  Binarization is hysteresis
decoding with duration smoothing, in this fixed order: drop regions
shorter than ``min_on``, fill gaps shorter than ``min_off``, then pad.
Padding last keeps pad-induced merges from bypassing the gap rule.

Frame ``k`` of a track covers ``[k/rate, (k+1)/rate)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, FusionError
from .ioutil import fmt, parse_header
from .timeline import TimeInterval, merge_intervals


@dataclass(eq=False)
class PosteriorTrack:
    recording_id: str
    frame_rate: float
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("posterior values must be a 1-D sequence")
        if self.frame_rate <= 0:
            raise ValueError(f"frame rate must be positive: {self.frame_rate}")
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("posterior values must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def duration(self) -> float:
        return self.values.size / self.frame_rate


@dataclass(frozen=True)
class BinarizerConfig:
    onset: float = 0.5
    offset: float = 0.5
    min_on: float = 0.0
    min_off: float = 0.0
    pad: float = 0.0

    def __post_init__(self) -> None:
        if not (0 <= self.offset <= self.onset <= 1):
            raise ValueError(f"need 0 <= offset <= onset <= 1, got {self.offset}/{self.onset}")
        if min(self.min_on, self.min_off, self.pad) < 0:
            raise ValueError("min_on, min_off and pad must be non-negative")


@dataclass(frozen=True)
class FBetaConfig:
    beta: float = 0.1

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative: {self.beta}")


def fuse_posteriors(tracks: list[PosteriorTrack]) -> PosteriorTrack:
    """Element-wise mean of same-length tracks for one recording."""
    if not tracks:
        raise ValueError("need at least one posterior track")
    first = tracks[0]
    for t in tracks[1:]:
        if t.recording_id != first.recording_id:
            raise FusionError(f"recording id mismatch: {t.recording_id!r} vs {first.recording_id!r}")
        if t.frame_rate != first.frame_rate:
            raise FusionError(f"frame rate mismatch: {t.frame_rate} vs {first.frame_rate}")
        if len(t) != len(first):
            raise FusionError(f"length mismatch: {len(t)} vs {len(first)}")
    mean = np.mean([t.values for t in tracks], axis=0)
    return PosteriorTrack(first.recording_id, first.frame_rate, mean)


def binarize(track: PosteriorTrack, cfg: BinarizerConfig) -> list[TimeInterval]:
    """Hysteresis decoding of a posterior track into disjoint regions."""
    rate = track.frame_rate
    raw: list[tuple[int, int]] = []
    active = False
    start = 0
    for k, v in enumerate(track.values):
        if not active and v >= cfg.onset:
            active = True
            start = k
        elif active and v < cfg.offset:
            raw.append((start, k))
            active = False
    if active:
        raw.append((start, len(track)))

    regions = [(s / rate, e / rate) for s, e in raw]
    regions = [(s, e) for s, e in regions if e - s >= cfg.min_on]
    filled: list[tuple[float, float]] = []
    for s, e in regions:
        if filled and s - filled[-1][1] < cfg.min_off:
            filled[-1] = (filled[-1][0], e)
        else:
            filled.append((s, e))
    duration = track.duration
    padded = [
        TimeInterval(max(0.0, s - cfg.pad), min(duration, e + cfg.pad)) for s, e in filled
    ]
    return merge_intervals(padded)


def f_beta(precision: float, recall: float, cfg: FBetaConfig) -> float:
    """Precision/recall blend; beta below 1 weights precision more."""
    if not (0 <= precision <= 1 and 0 <= recall <= 1):
        raise ValueError("precision and recall must lie in [0, 1]")
    b2 = cfg.beta * cfg.beta
    den = b2 * precision + recall
    if den == 0:
        return 0.0
    return (1 + b2) * precision * recall / den


def frame_mask(intervals: list[TimeInterval], n_frames: int, rate: float) -> np.ndarray:
    """Frame-midpoint rasterization of an interval set."""
    mask = np.zeros(n_frames, dtype=bool)
    if not intervals or n_frames == 0:
        return mask
    merged = merge_intervals(intervals)
    mids = (np.arange(n_frames) + 0.5) / rate
    starts = np.array([iv.start for iv in merged])
    ends = np.array([iv.end for iv in merged])
    idx = np.searchsorted(starts, mids, side="right") - 1
    ok = idx >= 0
    mask[ok] = mids[ok] < ends[idx[ok]]
    return mask


def tune_binarizer(
    track: PosteriorTrack,
    reference: list[TimeInterval],
    grid: list[BinarizerConfig],
    beta: FBetaConfig,
) -> BinarizerConfig:
    """Grid search maximizing frame-level F-beta against reference regions.

    Ties go to the earlier grid entry.
    """
    if not grid:
        raise ValueError("binarizer grid must be non-empty")
    ref = frame_mask(reference, len(track), track.frame_rate)
    best_cfg = grid[0]
    best_score = -1.0
    for cfg in grid:
        pred = frame_mask(binarize(track, cfg), len(track), track.frame_rate)
        tp = float(np.sum(pred & ref))
        fp = float(np.sum(pred & ~ref))
        fn = float(np.sum(~pred & ref))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        score = f_beta(precision, recall, beta)
        if score > best_score:
            best_score = score
            best_cfg = cfg
    return best_cfg


def default_binarizer_grid(min_on: float = 0.0, min_off: float = 0.0, pad: float = 0.0) -> list[BinarizerConfig]:
    """Onset/offset grid over {0.3 .. 0.7 step 0.1} with offset <= onset."""
    levels = [round(0.3 + 0.1 * k, 1) for k in range(5)]
    return [
        BinarizerConfig(onset, offset, min_on, min_off, pad)
        for onset in levels
        for offset in levels
        if offset <= onset
    ]


def write_posterior(track: PosteriorTrack) -> str:
    lines = [f"POST v1 {track.recording_id} {fmt(track.frame_rate)} {len(track)}"]
    lines.extend(fmt(v) for v in track.values)
    return "".join(line + "\n" for line in lines)


def read_posterior(text: str) -> PosteriorTrack:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty posterior file")
    rec, rate_s, count_s = parse_header(lines[0], "POST", 3)
    try:
        rate = float(rate_s)
        count = int(count_s)
    except ValueError:
        raise FormatError(f"bad POST header numbers: {lines[0]!r}") from None
    body = [l for l in lines[1:] if l.strip()]
    if len(body) != count:
        raise FormatError(f"POST: expected {count} frames, found {len(body)}")
    try:
        values = np.array([float(l) for l in body])
    except ValueError:
        raise FormatError("POST: non-numeric frame value") from None
    try:
        return PosteriorTrack(rec, rate, values)
    except ValueError as exc:
        raise FormatError(f"POST: {exc}") from None
