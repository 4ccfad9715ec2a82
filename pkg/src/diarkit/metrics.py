"""Diarization error rate and Jaccard error rate.

DER follows the standard evaluation recipe: a no-score collar around
every reference boundary, overlapping speech fully scored (each
simultaneous speaker counts), and an optimal one-to-one speaker mapping
chosen to maximize total attributed overlap.  ``compute_der`` does exact
interval arithmetic; ``frame_der_oracle`` re-evaluates the identical
definition by counting frames on a grid and exists to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

from .timeline import Hypothesis, TimeInterval, merge_intervals

_EPS = 1e-12


@dataclass(frozen=True)
class DerBreakdown:
    missed: float
    false_alarm: float
    confusion: float
    total_reference: float
    der: float
    degenerate: bool = False  # reference empty; der reported against false-alarm time

    @property
    def error_total(self) -> float:
        return self.missed + self.false_alarm + self.confusion


@dataclass(frozen=True)
class JerResult:
    per_speaker: Mapping[str, float]
    jer: float


def _speaker_footprints(hyp: Hypothesis) -> dict[str, list[TimeInterval]]:
    return {s: merge_intervals(hyp.speaker_intervals(s)) for s in hyp.speakers()}


def _collar_zones(reference: Hypothesis, collar: float) -> list[TimeInterval]:
    if collar <= 0:
        return []
    zones = []
    for seg in reference.segments:
        for b in (seg.start, seg.end):
            lo = max(0.0, b - collar)
            hi = b + collar
            if hi > lo:
                zones.append(TimeInterval(lo, hi))
    return merge_intervals(zones)


class _ScoredTimeline:
    """Elementary regions with constant speaker activity and scoring status."""

    def __init__(self, reference: Hypothesis, hypothesis: Hypothesis, collar: float):
        self.ref_speakers = reference.speakers()
        self.hyp_speakers = hypothesis.speakers()
        zones = _collar_zones(reference, collar)
        points: set[float] = set()
        for hyp in (reference, hypothesis):
            for seg in hyp.segments:
                points.update((seg.start, seg.end))
        for z in zones:
            points.update((z.start, z.end))
        self.points = np.array(sorted(points))
        n_regions = max(len(self.points) - 1, 0)
        self.durations = np.diff(self.points) if n_regions else np.zeros(0)

        def coverage(footprints: dict[str, list[TimeInterval]], speakers: list[str]) -> np.ndarray:
            mask = np.zeros((len(speakers), n_regions), dtype=bool)
            for k, spk in enumerate(speakers):
                for iv in footprints[spk]:
                    a = int(np.searchsorted(self.points, iv.start))
                    b = int(np.searchsorted(self.points, iv.end))
                    mask[k, a:b] = True
            return mask

        self.ref_active = coverage(_speaker_footprints(reference), self.ref_speakers)
        self.hyp_active = coverage(_speaker_footprints(hypothesis), self.hyp_speakers)
        scored = np.ones(n_regions, dtype=bool)
        if zones:
            mids = 0.5 * (self.points[:-1] + self.points[1:])
            starts = np.array([z.start for z in zones])
            ends = np.array([z.end for z in zones])
            idx = np.searchsorted(starts, mids, side="right") - 1
            inside = (idx >= 0) & (mids < ends[np.clip(idx, 0, None)])
            scored = ~inside
        self.scored = scored

    def overlap_matrix(self) -> np.ndarray:
        """Scored ref-speaker x hyp-speaker joint activity durations."""
        w = self.durations * self.scored
        return np.einsum(
            "rt,ht,t->rh", self.ref_active, self.hyp_active, w, optimize=True
        )

    def optimal_mapping(self) -> dict[int, int]:
        """Max-overlap one-to-one assignment (speakers pre-sorted, so ties
        resolve deterministically)."""
        ov = self.overlap_matrix()
        if ov.size == 0:
            return {}
        rows, cols = linear_sum_assignment(-ov)
        return {int(r): int(c) for r, c in zip(rows, cols)}


def _breakdown(tl: _ScoredTimeline, mapping: dict[int, int]) -> tuple[float, float, float, float]:
    w = tl.durations * tl.scored
    n_ref = tl.ref_active.sum(axis=0)
    n_hyp = tl.hyp_active.sum(axis=0)
    matched = np.zeros(len(w))
    for r, h in mapping.items():
        matched += tl.ref_active[r] & tl.hyp_active[h]
    missed = float(np.sum(np.maximum(n_ref - n_hyp, 0) * w))
    false_alarm = float(np.sum(np.maximum(n_hyp - n_ref, 0) * w))
    confusion = float(np.sum((np.minimum(n_ref, n_hyp) - matched) * w))
    total_ref = float(np.sum(n_ref * w))
    return missed, false_alarm, confusion, total_ref


def _finalize(missed: float, false_alarm: float, confusion: float, total_ref: float) -> DerBreakdown:
    if total_ref > _EPS:
        der = 100.0 * (missed + false_alarm + confusion) / total_ref
        return DerBreakdown(missed, false_alarm, confusion, total_ref, der)
    if false_alarm > _EPS:
        return DerBreakdown(missed, false_alarm, confusion, 0.0, 100.0, degenerate=True)
    return DerBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, degenerate=True)


def compute_der(reference: Hypothesis, hypothesis: Hypothesis, collar: float = 0.25) -> DerBreakdown:
    """Exact interval-arithmetic DER with collar and overlap scoring."""
    if reference.recording_id != hypothesis.recording_id:
        raise ValueError(
            f"recording mismatch: {reference.recording_id!r} vs {hypothesis.recording_id!r}"
        )
    if collar < 0:
        raise ValueError(f"collar must be non-negative: {collar}")
    tl = _ScoredTimeline(reference, hypothesis, collar)
    mapping = tl.optimal_mapping()
    return _finalize(*_breakdown(tl, mapping))


def compute_jer(reference: Hypothesis, hypothesis: Hypothesis) -> JerResult:
    """Per-reference-speaker Jaccard errors under the collar-0 DER mapping."""
    if reference.recording_id != hypothesis.recording_id:
        raise ValueError(
            f"recording mismatch: {reference.recording_id!r} vs {hypothesis.recording_id!r}"
        )
    if not reference.segments:
        return JerResult({}, 0.0)
    tl = _ScoredTimeline(reference, hypothesis, collar=0.0)
    ov = tl.overlap_matrix()
    mapping = tl.optimal_mapping()
    ref_dur = {
        s: sum(iv.duration for iv in merge_intervals(reference.speaker_intervals(s)))
        for s in tl.ref_speakers
    }
    hyp_dur = {
        s: sum(iv.duration for iv in merge_intervals(hypothesis.speaker_intervals(s)))
        for s in tl.hyp_speakers
    }
    per_speaker: dict[str, float] = {}
    for r, spk in enumerate(tl.ref_speakers):
        if r in mapping:
            h = mapping[r]
            inter = float(ov[r, h])
            union = ref_dur[spk] + hyp_dur[tl.hyp_speakers[h]] - inter
            per_speaker[spk] = 100.0 * (1.0 - inter / union) if union > _EPS else 0.0
        else:
            per_speaker[spk] = 100.0
    return JerResult(per_speaker, float(np.mean(list(per_speaker.values()))))


def frame_der_oracle(
    reference: Hypothesis, hypothesis: Hypothesis, collar: float = 0.25, grid: float = 0.01
) -> DerBreakdown:
    """Frame-counting re-evaluation of the DER definition on a fixed grid.

    Exists solely to validate the interval-arithmetic scorer; shares no
    interval code with it.
    """
    if grid <= 0:
        raise ValueError(f"grid must be positive: {grid}")
    if reference.recording_id != hypothesis.recording_id:
        raise ValueError("recording mismatch")
    extent = max(reference.extent(), hypothesis.extent()) + collar + grid
    n = int(np.ceil(extent / grid))
    centers = (np.arange(n) + 0.5) * grid

    def masks(hyp: Hypothesis) -> tuple[list[str], np.ndarray]:
        speakers = hyp.speakers()
        out = np.zeros((len(speakers), n), dtype=bool)
        for k, spk in enumerate(speakers):
            for iv in hyp.speaker_intervals(spk):
                out[k] |= (centers >= iv.start) & (centers < iv.end)
        return speakers, out

    _, ref_m = masks(reference)
    _, hyp_m = masks(hypothesis)
    scored = np.ones(n, dtype=bool)
    for seg in reference.segments:
        for b in (seg.start, seg.end):
            scored &= ~((centers >= b - collar) & (centers < b + collar))
    ref_s = ref_m[:, scored]
    hyp_s = hyp_m[:, scored]
    overlap_counts = ref_s.astype(np.float64) @ hyp_s.T.astype(np.float64)
    matched = np.zeros(ref_s.shape[1])
    rows, cols = linear_sum_assignment(-overlap_counts)
    for r, h in zip(rows, cols):
        matched += ref_s[r] & hyp_s[h]
    n_ref = ref_s.sum(axis=0)
    n_hyp = hyp_s.sum(axis=0)
    missed = float(np.sum(np.maximum(n_ref - n_hyp, 0))) * grid
    false_alarm = float(np.sum(np.maximum(n_hyp - n_ref, 0))) * grid
    confusion = float(np.sum(np.minimum(n_ref, n_hyp) - matched)) * grid
    total_ref = float(np.sum(n_ref)) * grid
    return _finalize(missed, false_alarm, confusion, total_ref)


def aggregate_der(parts: list[DerBreakdown]) -> DerBreakdown:
    """Duration-weighted corpus DER: component sums over recordings."""
    missed = sum(p.missed for p in parts)
    fa = sum(p.false_alarm for p in parts)
    conf = sum(p.confusion for p in parts)
    total = sum(p.total_reference for p in parts)
    return _finalize(missed, fa, conf, total)
