"""Overlap-aware combination of diarization hypotheses.

Three stages: rank-derived weights (each hypothesis scored by its average
DER against the others), a greedy global label mapping driven by pairwise
temporal overlap, and weighted voting on the segmentation lattice with a
fractional speaker-count estimate, so regions keep as many simultaneous
speakers as the weighted inputs assert.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from scipy.stats import rankdata

from .errors import DataError
from .metrics import compute_der
from .timeline import Hypothesis, LabeledSegment, TimeInterval, merge_intervals

_EPS = 1e-9


@dataclass(frozen=True)
class RankedHypothesis:
    hypothesis: Hypothesis
    weight: float

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError(f"weight must be positive: {self.weight}")


def _check_same_recording(hyps: list[Hypothesis]) -> str:
    ids = {h.recording_id for h in hyps}
    if len(ids) != 1:
        raise DataError(f"hypotheses span multiple recordings: {sorted(ids)}")
    return hyps[0].recording_id


def rank_weights(hyps: list[Hypothesis], exponent: float = 0.1) -> list[RankedHypothesis]:
    """Weights proportional to rank^(-exponent), ranks by average DER.

    Each hypothesis is scored (collar 0) against every other taken as
    reference; lower average DER ranks better.  Tied averages share the
    mean of their tied ranks.
    """
    if len(hyps) < 2:
        raise ValueError("need at least two hypotheses")
    if exponent <= 0:
        raise ValueError(f"exponent must be positive: {exponent}")
    _check_same_recording(hyps)
    avg_der = []
    for k, hyp in enumerate(hyps):
        ders = [
            compute_der(ref, hyp, collar=0.0).der for j, ref in enumerate(hyps) if j != k
        ]
        avg_der.append(sum(ders) / len(ders))
    ranks = rankdata(avg_der, method="average")
    raw = [float(r) ** (-exponent) for r in ranks]
    total = sum(raw)
    return [RankedHypothesis(h, w / total) for h, w in zip(hyps, raw)]


def _footprints(hyp: Hypothesis) -> dict[str, list[TimeInterval]]:
    return {s: merge_intervals(hyp.speaker_intervals(s)) for s in hyp.speakers()}


def _pair_overlap(a: list[TimeInterval], b: list[TimeInterval]) -> float:
    total = 0.0
    for x in a:
        for y in b:
            total += x.overlap(y)
    return total


def map_labels(ranked: list[RankedHypothesis]) -> list[Hypothesis]:
    """Relabel all hypotheses into one global label space.

    Greedy: repeatedly attach the unmapped (hypothesis, label) with the
    largest summed overlap to an existing global label's members, skipping
    globals that hypothesis already uses; when nothing overlaps anything,
    the first unmapped item (hypothesis order, then label order) founds a
    new global label named after itself.
    """
    if len(ranked) < 2:
        raise ValueError("need at least two hypotheses")
    hyps = [r.hypothesis for r in ranked]
    _check_same_recording(hyps)
    foot = [_footprints(h) for h in hyps]
    items = [(hi, lab) for hi, h in enumerate(hyps) for lab in h.speakers()]
    overlap: dict[tuple[int, str, int, str], float] = {}
    for i, (hi, li) in enumerate(items):
        for hj, lj in items[i + 1 :]:
            if hi == hj:
                continue
            ov = _pair_overlap(foot[hi][li], foot[hj][lj])
            overlap[(hi, li, hj, lj)] = ov
            overlap[(hj, lj, hi, li)] = ov

    groups: list[dict] = []  # each: {"name", "members": [(hyp, label)], "hyps": set}
    taken_names: set[str] = set()
    unmapped = sorted(items)
    mapping: dict[tuple[int, str], str] = {}

    def attach(item: tuple[int, str], group: dict) -> None:
        group["members"].append(item)
        group["hyps"].add(item[0])
        mapping[item] = group["name"]
        unmapped.remove(item)

    while unmapped:
        best: tuple[float, int, str, int] | None = None  # (-ov, hyp, label, group)
        for hi, lab in unmapped:
            for gi, group in enumerate(groups):
                if hi in group["hyps"]:
                    continue
                ov = sum(overlap[(hi, lab, mh, ml)] for mh, ml in group["members"])
                if ov <= 0:
                    continue
                cand = (-ov, hi, lab, gi)
                if best is None or cand < best:
                    best = cand
        if best is not None:
            _, hi, lab, gi = best
            attach((hi, lab), groups[gi])
        else:
            hi, lab = unmapped[0]
            name = lab
            k = 2
            while name in taken_names:
                name = f"{lab}#{k}"
                k += 1
            taken_names.add(name)
            group = {"name": name, "members": [], "hyps": set()}
            groups.append(group)
            attach((hi, lab), group)

    out = []
    for hi, h in enumerate(hyps):
        out.append(h.relabel({lab: mapping[(hi, lab)] for lab in h.speakers()}))
    return out


def doverlap_combine(ranked: list[RankedHypothesis]) -> Hypothesis:
    """Weighted overlap-aware voting over globally-labeled hypotheses.

    The timeline splits at every input boundary; per region each label
    accumulates the weight of the hypotheses asserting it, the speaker
    count is the weighted mean count rounded half away from zero, and the
    top-count labels by weight (ties lexicographic) win.
    """
    if not ranked:
        raise ValueError("need at least one ranked hypothesis")
    rec = _check_same_recording([r.hypothesis for r in ranked])
    total_w = sum(r.weight for r in ranked)
    weights = [r.weight / total_w for r in ranked]

    points: set[float] = set()
    for r in ranked:
        for seg in r.hypothesis.segments:
            points.update((seg.start, seg.end))
    bounds = sorted(points)
    n_regions = len(bounds) - 1 if len(bounds) > 1 else 0
    region_labels: list[dict[str, float]] = [dict() for _ in range(n_regions)]
    region_counts: list[float] = [0.0] * n_regions

    for w, r in zip(weights, ranked):
        by_region: list[set[str]] = [set() for _ in range(n_regions)]
        for seg in r.hypothesis.segments:
            a = bisect.bisect_left(bounds, seg.start)
            b = bisect.bisect_left(bounds, seg.end)
            for t in range(a, b):
                by_region[t].add(seg.speaker)
        for t in range(n_regions):
            region_counts[t] += w * len(by_region[t])
            for lab in by_region[t]:
                region_labels[t][lab] = region_labels[t].get(lab, 0.0) + w

    segments: list[LabeledSegment] = []
    for t in range(n_regions):
        if bounds[t + 1] - bounds[t] <= _EPS or not region_labels[t]:
            continue
        count = int(math.floor(region_counts[t] + 0.5))  # half away from zero
        count = min(count, len(region_labels[t]))
        if count <= 0:
            continue
        winners = sorted(region_labels[t].items(), key=lambda kv: (-kv[1], kv[0]))[:count]
        for lab, _ in winners:
            segments.append(LabeledSegment(TimeInterval(bounds[t], bounds[t + 1]), lab))
    return Hypothesis(rec, segments)


def combine(hyps: list[Hypothesis], exponent: float = 0.1) -> Hypothesis:
    """Full pipeline: rank weighting, label mapping, weighted voting."""
    ranked = rank_weights(hyps, exponent)
    mapped = map_labels(ranked)
    remapped = [RankedHypothesis(h, r.weight) for h, r in zip(mapped, ranked)]
    return doverlap_combine(remapped)
