"""Time-interval algebra, speaker-labeled timelines, and RTTM serialization.

A :class:`Hypothesis` is the canonical "who spoke when" answer for one
recording.  Canonical means: segments sorted by (start, end, speaker),
and same-speaker segments that overlap or touch are merged.  Distinct
speakers may overlap freely (overlapping speech is a first-class part of
the task).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FormatError

_EPS = 1e-9


@dataclass(frozen=True, order=True)
class TimeInterval:
    """Half-open-ish interval in seconds; end must exceed start."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError(f"interval bounds must be finite: ({self.start}, {self.end})")
        if self.start < 0:
            raise ValueError(f"interval start must be non-negative: {self.start}")
        if self.end <= self.start:
            raise ValueError(f"interval end must exceed start: ({self.start}, {self.end})")

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def mid(self) -> float:
        return 0.5 * (self.start + self.end)

    def intersects(self, other: "TimeInterval") -> bool:
        return self.start < other.end and other.start < self.end

    def overlap(self, other: "TimeInterval") -> float:
        """Length of the intersection (0 when disjoint)."""
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))


@dataclass(frozen=True, order=True)
class LabeledSegment:
    interval: TimeInterval
    speaker: str

    def __post_init__(self) -> None:
        if not self.speaker or any(c.isspace() for c in self.speaker):
            raise ValueError(f"speaker label must be non-empty without whitespace: {self.speaker!r}")

    @property
    def start(self) -> float:
        return self.interval.start

    @property
    def end(self) -> float:
        return self.interval.end


def merge_intervals(intervals: Iterable[TimeInterval], gap: float = 0.0) -> list[TimeInterval]:
    """Union of intervals; pieces closer than ``gap`` (or touching) merge."""
    items = sorted(intervals, key=lambda i: (i.start, i.end))
    out: list[TimeInterval] = []
    for iv in items:
        if out and iv.start <= out[-1].end + gap + _EPS:
            if iv.end > out[-1].end:
                out[-1] = TimeInterval(out[-1].start, iv.end)
        else:
            out.append(iv)
    return out


def total_duration(intervals: Iterable[TimeInterval]) -> float:
    return sum(iv.duration for iv in merge_intervals(intervals))


def intersect_interval_sets(a: Sequence[TimeInterval], b: Sequence[TimeInterval]) -> list[TimeInterval]:
    """Intersection of two disjoint sorted interval sets."""
    out: list[TimeInterval] = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i].start, b[j].start)
        hi = min(a[i].end, b[j].end)
        if hi > lo + _EPS:
            out.append(TimeInterval(lo, hi))
        if a[i].end < b[j].end:
            i += 1
        else:
            j += 1
    return out


class Hypothesis:
    """Speaker-labeled segments of one recording, canonical by construction."""

    __slots__ = ("recording_id", "segments")

    def __init__(self, recording_id: str, segments: Iterable[LabeledSegment] = ()):
        if not recording_id or any(c.isspace() for c in recording_id):
            raise ValueError(f"recording id must be non-empty without whitespace: {recording_id!r}")
        object.__setattr__(self, "recording_id", recording_id)
        object.__setattr__(self, "segments", _canonicalize(segments))

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Hypothesis is immutable")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Hypothesis)
            and self.recording_id == other.recording_id
            and self.segments == other.segments
        )

    def __hash__(self) -> int:
        return hash((self.recording_id, self.segments))

    def __repr__(self) -> str:
        return f"Hypothesis({self.recording_id!r}, {len(self.segments)} segments)"

    def speakers(self) -> list[str]:
        return sorted({s.speaker for s in self.segments})

    def speaker_intervals(self, speaker: str) -> list[TimeInterval]:
        return [s.interval for s in self.segments if s.speaker == speaker]

    def speech_regions(self) -> list[TimeInterval]:
        """Union of all segments regardless of speaker."""
        return merge_intervals(s.interval for s in self.segments)

    def total_speaker_time(self) -> float:
        """Sum of segment durations (overlap counted once per speaker)."""
        return sum(s.interval.duration for s in self.segments)

    def relabel(self, mapping: dict[str, str]) -> "Hypothesis":
        return Hypothesis(
            self.recording_id,
            [LabeledSegment(s.interval, mapping.get(s.speaker, s.speaker)) for s in self.segments],
        )

    def extent(self) -> float:
        return self.segments[-1].end if self.segments else 0.0


def _canonicalize(segments: Iterable[LabeledSegment]) -> tuple[LabeledSegment, ...]:
    by_speaker: dict[str, list[TimeInterval]] = {}
    for seg in segments:
        by_speaker.setdefault(seg.speaker, []).append(seg.interval)
    merged: list[LabeledSegment] = []
    for speaker, ivs in by_speaker.items():
        for iv in merge_intervals(ivs):
            merged.append(LabeledSegment(iv, speaker))
    merged.sort(key=lambda s: (s.start, s.end, s.speaker))
    return tuple(merged)


@dataclass(frozen=True)
class WindowingConfig:
    """Sliding-window geometry for embedding extraction.

    ``min_tail`` is the shortest clipped final window worth keeping;
    it defaults to half the hop.
    """

    segment_len: float
    hop_len: float
    min_tail: float | None = None

    def __post_init__(self) -> None:
        if not (0 < self.hop_len <= self.segment_len):
            raise ValueError(f"need 0 < hop_len <= segment_len, got {self.hop_len}/{self.segment_len}")
        if self.min_tail is None:
            object.__setattr__(self, "min_tail", 0.5 * self.hop_len)
        if self.min_tail < 0:
            raise ValueError(f"min_tail must be non-negative: {self.min_tail}")

    @property
    def name(self) -> str:
        return f"{self.segment_len:g}/{self.hop_len:g}"


def window_speech(regions: Sequence[TimeInterval], cfg: WindowingConfig) -> list[TimeInterval]:
    """Slide fixed windows over each speech region.

    Windows never cross region boundaries.  Full windows are emitted while
    they fit strictly inside the region; the run ends with either a window
    landing exactly on the region end or a clipped tail, kept only when at
    least ``min_tail`` long.
    """
    for k in range(1, len(regions)):
        if regions[k].start < regions[k - 1].end - _EPS:
            raise ValueError("speech regions must be disjoint and sorted")
    windows: list[TimeInterval] = []
    for region in regions:
        k = 0
        while True:
            start = region.start + k * cfg.hop_len
            full_end = start + cfg.segment_len
            if full_end < region.end - _EPS:
                windows.append(TimeInterval(start, full_end))
                k += 1
                continue
            end = min(full_end, region.end)
            length = end - start
            if length >= cfg.segment_len - _EPS or length >= cfg.min_tail:
                windows.append(TimeInterval(start, end))
            break
    return windows


def parse_rttm(text: str | Iterable[str]) -> list[Hypothesis]:
    """Parse RTTM into one canonical Hypothesis per recording id.

    Lines starting with ``;;`` are comments; blank lines are skipped.
    Raises :class:`FormatError` naming the offending line.
    """
    lines = text.splitlines() if isinstance(text, str) else [str(l) for l in text]
    by_rec: dict[str, list[LabeledSegment]] = {}
    for num, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith(";;"):
            continue
        fields = line.split()
        if len(fields) < 9 or fields[0] != "SPEAKER":
            raise FormatError(f"RTTM line {num}: expected 'SPEAKER' record with >= 9 fields")
        try:
            onset = float(fields[3])
            dur = float(fields[4])
        except ValueError:
            raise FormatError(f"RTTM line {num}: non-numeric onset/duration") from None
        if dur <= 0:
            raise FormatError(f"RTTM line {num}: duration must be positive, got {dur}")
        try:
            seg = LabeledSegment(TimeInterval(onset, onset + dur), fields[7])
        except ValueError as exc:
            raise FormatError(f"RTTM line {num}: {exc}") from None
        by_rec.setdefault(fields[1], []).append(seg)
    return [Hypothesis(rec, segs) for rec, segs in sorted(by_rec.items())]


def write_rttm(hyps: Iterable[Hypothesis]) -> str:
    """Serialize hypotheses as RTTM, times rounded to milliseconds."""
    lines: list[str] = []
    for hyp in sorted(hyps, key=lambda h: h.recording_id):
        for seg in hyp.segments:
            lines.append(
                f"SPEAKER {hyp.recording_id} 1 {seg.start:.3f} "
                f"{seg.interval.duration:.3f} <NA> <NA> {seg.speaker} <NA> <NA>"
            )
    return "".join(line + "\n" for line in lines)
