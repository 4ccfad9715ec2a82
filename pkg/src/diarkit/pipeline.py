"""End-to-end orchestration, configuration, and the synthetic harness.

The full chain per recording and scale: binarize fused speech posteriors,
keep embedding windows that intersect speech, LDA-project, score with the
interpolated PLDA, derive an AHC threshold from the score GMM, cluster,
VB-HMM resegment, materialize segments, add second speakers inside
detected overlap, then DOVER-Lap across scales.

The synthetic generator builds seeded conversations with known ground
truth so the whole chain can be verified without any audio or neural
models.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ahc import ClusterAssignment, ahc_cluster, derive_threshold, fit_tied_gmm
from .embedding import (
    EmbeddingSequence,
    LdaModel,
    PldaModel,
    plda_score_matrix,
    project,
)
from .errors import DataError, DegenerateDataError
from .frontend import BinarizerConfig, PosteriorTrack, binarize, fuse_posteriors
from .ensemble import combine
from .timeline import (
    Hypothesis,
    LabeledSegment,
    TimeInterval,
    WindowingConfig,
    merge_intervals,
    window_speech,
)
from .vbhmm import VbhmmConfig, resegment, to_hypothesis

DEFAULT_SCALES = (
    WindowingConfig(1.0, 0.5),
    WindowingConfig(2.0, 1.0),
    WindowingConfig(3.0, 1.5),
)


@dataclass(frozen=True)
class PipelineConfig:
    windowing: tuple[WindowingConfig, ...] = DEFAULT_SCALES
    lda_dim: int = 128
    plda_alpha: float = 0.9
    vbhmm: VbhmmConfig = VbhmmConfig()
    ensemble_exponent: float = 0.1
    collar: float = 0.25
    vad: BinarizerConfig = BinarizerConfig(0.5, 0.5, 0.1, 0.1, 0.0)
    osd: BinarizerConfig = BinarizerConfig(0.5, 0.5, 0.1, 0.1, 0.0)

    def __post_init__(self) -> None:
        if not self.windowing:
            raise ValueError("windowing must list at least one scale")
        if not (0 <= self.plda_alpha <= 1):
            raise ValueError(f"plda_alpha must lie in [0, 1]: {self.plda_alpha}")
        if self.lda_dim < 1:
            raise ValueError(f"lda_dim must be positive: {self.lda_dim}")
        if self.collar < 0:
            raise ValueError(f"collar must be non-negative: {self.collar}")
        if self.ensemble_exponent <= 0:
            raise ValueError(f"ensemble_exponent must be positive: {self.ensemble_exponent}")


def _parse_windowing(value: str) -> tuple[WindowingConfig, ...]:
    out = []
    for part in value.replace(",", " ").split():
        nums = part.split("/")
        if len(nums) not in (2, 3):
            raise DataError(f"bad windowing entry {part!r}; want seg/hop or seg/hop/tail")
        try:
            seg, hop = float(nums[0]), float(nums[1])
            tail = float(nums[2]) if len(nums) == 3 else None
        except ValueError:
            raise DataError(f"non-numeric windowing entry {part!r}") from None
        out.append(WindowingConfig(seg, hop, tail))
    if not out:
        raise DataError("windowing must list at least one scale")
    return tuple(out)


_BINARIZER_KEYS = ("onset", "offset", "min_on", "min_off", "pad")
_VBHMM_KEYS = ("loop_p", "fa", "fb", "max_iters", "elbo_tol", "min_occupancy")


def parse_pipeline_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse the flat ``section.key = value`` configuration format."""
    cfg = base or PipelineConfig()
    updates: dict[str, dict] = {"vbhmm": {}, "vad": {}, "osd": {}, "": {}}
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {num}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.rpartition(".")
        if section not in updates:
            raise DataError(f"config line {num}: unknown section {section!r}")
        updates[section][name] = (value, num)

    def as_float(value: str, num: int) -> float:
        try:
            return float(value)
        except ValueError:
            raise DataError(f"config line {num}: non-numeric value {value!r}") from None

    top = updates[""]
    kwargs: dict = {}
    for name, (value, num) in top.items():
        if name == "windowing":
            kwargs["windowing"] = _parse_windowing(value)
        elif name == "lda_dim":
            kwargs["lda_dim"] = int(as_float(value, num))
        elif name in ("plda_alpha", "ensemble_exponent", "collar"):
            kwargs[name] = as_float(value, num)
        else:
            raise DataError(f"config line {num}: unknown key {name!r}")
    for section, keys, current in (
        ("vbhmm", _VBHMM_KEYS, cfg.vbhmm),
        ("vad", _BINARIZER_KEYS, cfg.vad),
        ("osd", _BINARIZER_KEYS, cfg.osd),
    ):
        if not updates[section]:
            continue
        sub: dict = {}
        for name, (value, num) in updates[section].items():
            if name not in keys:
                raise DataError(f"config line {num}: unknown key {section}.{name}")
            v = as_float(value, num)
            if name == "max_iters":
                v = int(v)
            sub[name] = v
        kwargs[section] = replace(current, **sub)
    try:
        return replace(cfg, **kwargs)
    except ValueError as exc:
        raise DataError(f"invalid configuration: {exc}") from None


def pipeline_config_text(cfg: PipelineConfig) -> str:
    """Serialize a config in the same flat key-value format."""
    lines = [
        "windowing = " + ",".join(f"{w.segment_len:g}/{w.hop_len:g}/{w.min_tail:g}" for w in cfg.windowing),
        f"lda_dim = {cfg.lda_dim}",
        f"plda_alpha = {cfg.plda_alpha:g}",
        f"ensemble_exponent = {cfg.ensemble_exponent:g}",
        f"collar = {cfg.collar:g}",
    ]
    for name, sub in (("vbhmm", cfg.vbhmm),):
        for key in _VBHMM_KEYS:
            lines.append(f"{name}.{key} = {getattr(sub, key):g}")
    for name, sub in (("vad", cfg.vad), ("osd", cfg.osd)):
        for key in _BINARIZER_KEYS:
            lines.append(f"{name}.{key} = {getattr(sub, key):g}")
    return "".join(line + "\n" for line in lines)


# -- overlap second-speaker assignment ---------------------------------------


def assign_overlap_second_speaker(
    diarization: Hypothesis, overlap_regions: list[TimeInterval]
) -> Hypothesis:
    """Add a second speaker inside detected-overlap regions.

    Where the diarization asserts exactly one speaker, the closest other
    speaker (by distance from their nearest segment boundary to the region
    center) is added.  Regions with zero or two-plus speakers, and
    recordings with a single speaker, are left untouched.  Never removes
    or relabels existing speech.
    """
    for a, b in zip(overlap_regions, overlap_regions[1:]):
        if b.start < a.end - 1e-9:
            raise ValueError("overlap regions must be sorted and disjoint")
    speakers = diarization.speakers()
    if len(speakers) < 2 or not overlap_regions:
        return diarization
    footprints = {s: merge_intervals(diarization.speaker_intervals(s)) for s in speakers}
    boundaries: dict[str, list[float]] = {
        s: [t for iv in footprints[s] for t in (iv.start, iv.end)] for s in speakers
    }
    points = sorted(
        {t for segs in footprints.values() for iv in segs for t in (iv.start, iv.end)}
    )

    def active_at(t: float) -> list[str]:
        return [
            s
            for s in speakers
            if any(iv.start <= t < iv.end for iv in footprints[s])
        ]

    added: list[LabeledSegment] = []
    for region in overlap_regions:
        cuts = [region.start] + [p for p in points if region.start < p < region.end] + [region.end]
        for lo, hi in zip(cuts, cuts[1:]):
            if hi - lo <= 1e-9:
                continue
            center = 0.5 * (lo + hi)
            active = active_at(center)
            if len(active) != 1:
                continue
            current = active[0]
            best: tuple[float, str] | None = None
            for s in speakers:
                if s == current:
                    continue
                dist = min(abs(b - center) for b in boundaries[s])
                if best is None or (dist, s) < best:
                    best = (dist, s)
            if best is not None:
                added.append(LabeledSegment(TimeInterval(lo, hi), best[1]))
    if not added:
        return diarization
    return Hypothesis(diarization.recording_id, list(diarization.segments) + added)


# -- per-recording pipeline ---------------------------------------------------


@dataclass(eq=False)
class RecordingResult:
    hypothesis: Hypothesis
    per_scale: tuple[Hypothesis, ...]
    speech: list[TimeInterval]
    overlap: list[TimeInterval]


def select_speech_windows(seq: EmbeddingSequence, speech: list[TimeInterval]) -> EmbeddingSequence:
    """Keep entries whose window intersects any speech region."""
    keep = [
        i
        for i, iv in enumerate(seq.intervals)
        if any(iv.intersects(region) for region in speech)
    ]
    return seq.select(np.array(keep, dtype=int))


def cluster_windows(
    proj: EmbeddingSequence,
    plda: PldaModel,
    threshold: float | None = None,
) -> tuple[ClusterAssignment, float | None]:
    """Score, derive a GMM threshold (unless given), and run AHC.

    Inputs too small to fit the score mixture (under four windows, or a
    degenerate score set) collapse to a single cluster.
    """
    n = len(proj)
    if n == 0:
        raise ValueError("no embedding windows to cluster")
    if n == 1:
        return ClusterAssignment((0,), 1), threshold
    scores = plda_score_matrix(plda, proj.vectors)
    if threshold is None:
        tri = scores.upper_triangle()
        if n < 4 or np.unique(tri).size < 2:
            return ClusterAssignment((0,) * n, 1), None
        try:
            gmm = fit_tied_gmm(tri)
        except DegenerateDataError:
            return ClusterAssignment((0,) * n, 1), None
        threshold = derive_threshold(gmm)
    return ahc_cluster(scores, threshold), threshold


def diarize_recording(
    config: PipelineConfig,
    vad_tracks: list[PosteriorTrack],
    osd_track: PosteriorTrack | None,
    embeddings_by_scale: list[EmbeddingSequence],
    lda: LdaModel | None,
    plda: PldaModel,
    threshold: float | None = None,
) -> RecordingResult:
    """Run the full chain for one recording; ensembles across scales."""
    if len(embeddings_by_scale) != len(config.windowing):
        raise DataError(
            f"{len(embeddings_by_scale)} embedding sets for {len(config.windowing)} scales"
        )
    fused = fuse_posteriors(vad_tracks)
    rec = fused.recording_id
    speech = binarize(fused, config.vad)
    overlap = binarize(osd_track, config.osd) if osd_track is not None else []

    per_scale: list[Hypothesis] = []
    for seq in embeddings_by_scale:
        if seq.recording_id != rec:
            raise DataError(f"embedding recording {seq.recording_id!r} != {rec!r}")
        kept = select_speech_windows(seq, speech)
        if len(kept) == 0:
            per_scale.append(Hypothesis(rec))
            continue
        proj = project(lda, kept) if lda is not None else kept
        init, _ = cluster_windows(proj, plda, threshold)
        result = resegment(proj, init, plda, config.vbhmm)
        hyp = to_hypothesis(result.assignment, list(proj.intervals), rec)
        hyp = assign_overlap_second_speaker(hyp, overlap)
        per_scale.append(hyp)

    if len(per_scale) == 1:
        final = per_scale[0]
    else:
        final = combine(per_scale, config.ensemble_exponent)
    return RecordingResult(final, tuple(per_scale), speech, overlap)


# -- synthetic conversations ---------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    n_speakers: int
    duration: float
    embed_dim: int = 16
    between_scale: float = 4.0
    within_scale: float = 0.05
    turn_mean: float = 5.0
    overlap_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_speakers < 1:
            raise ValueError(f"n_speakers must be >= 1: {self.n_speakers}")
        if self.duration <= 0 or self.turn_mean <= 0:
            raise ValueError("duration and turn_mean must be positive")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1: {self.embed_dim}")
        if min(self.between_scale, self.within_scale) <= 0:
            raise ValueError("between_scale and within_scale must be positive")
        if not (0 <= self.overlap_fraction < 1):
            raise ValueError(f"overlap_fraction must lie in [0, 1): {self.overlap_fraction}")


@dataclass(eq=False)
class SyntheticConversation:
    reference: Hypothesis
    vad: PosteriorTrack
    osd: PosteriorTrack
    scales: tuple[WindowingConfig, ...]
    embeddings: tuple[EmbeddingSequence, ...]
    labels: tuple[tuple[str, ...], ...]
    speaker_means: np.ndarray


def _coverage_track(rec: str, regions: list[TimeInterval], duration: float, rate: float) -> PosteriorTrack:
    n = int(round(duration * rate))
    cov = np.zeros(n)
    starts = np.arange(n) / rate
    for iv in regions:
        lo = np.maximum(starts, iv.start)
        hi = np.minimum(starts + 1.0 / rate, iv.end)
        cov += np.clip((hi - lo) * rate, 0.0, 1.0)
    cov = np.clip(cov, 0.0, 1.0)
    return PosteriorTrack(rec, rate, 0.05 + 0.90 * cov)


def multi_speaker_regions(hyp: Hypothesis) -> list[TimeInterval]:
    """Intervals where at least two speakers are simultaneously active."""
    points = sorted({t for seg in hyp.segments for t in (seg.start, seg.end)})
    out = []
    for lo, hi in zip(points, points[1:]):
        mid = 0.5 * (lo + hi)
        active = sum(1 for seg in hyp.segments if seg.start <= mid < seg.end)
        if active >= 2:
            out.append(TimeInterval(lo, hi))
    return merge_intervals(out)


def synthesize_conversation(
    spec: SyntheticSpec,
    scales: tuple[WindowingConfig, ...] = DEFAULT_SCALES,
    recording_id: str = "synth",
    frame_rate: float = 100.0,
) -> SyntheticConversation:
    """Seeded conversation with ground truth, posteriors, and embeddings.

    Turn lengths are exponential around ``turn_mean``; a fraction of turn
    transitions overlap the previous turn.  Speaker latent means are drawn
    once from ``N(0, between_scale I)``; window embeddings add
    ``N(0, within_scale I)`` noise, and windows covering two speakers mix
    both speakers' draws (duration-weighted).  Byte-identical outputs for
    a fixed spec.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_speakers
    speakers = [f"S{i}" for i in range(n)]
    means = rng.normal(0.0, np.sqrt(spec.between_scale), size=(n, spec.embed_dim))

    first_cycle = list(rng.permutation(n))
    segments: list[LabeledSegment] = []
    t = 0.0
    prev = -1
    turn_no = 0
    while t < spec.duration - 1.0:
        if turn_no < len(first_cycle):
            spk = int(first_cycle[turn_no])
        elif n == 1:
            spk = 0
        else:
            spk = int(rng.choice([i for i in range(n) if i != prev]))
        length = float(np.clip(rng.exponential(spec.turn_mean), 1.0, 4.0 * spec.turn_mean))
        start = t
        if (
            segments
            and n > 1
            and spk != prev
            and spec.overlap_fraction > 0
            and rng.random() < spec.overlap_fraction
        ):
            prev_seg = segments[-1]
            max_ov = min(0.8 * prev_seg.interval.duration, 0.8 * length, 1.5)
            if max_ov > 0.2:
                start = prev_seg.end - float(rng.uniform(0.2, max_ov))
        end = min(start + length, spec.duration)
        if end - start >= 0.8:
            segments.append(LabeledSegment(TimeInterval(start, end), speakers[spk]))
            prev = spk
            turn_no += 1
        t = max(t, end)
        if rng.random() < 0.35:
            t += float(rng.uniform(0.5, 2.0))
    if not segments:
        end = min(max(1.0, spec.turn_mean), spec.duration)
        segments.append(LabeledSegment(TimeInterval(0.0, end), speakers[0]))
    reference = Hypothesis(recording_id, segments)

    speech = reference.speech_regions()
    vad = _coverage_track(recording_id, speech, spec.duration, frame_rate)
    osd = _coverage_track(
        recording_id, multi_speaker_regions(reference), spec.duration, frame_rate
    )

    foot = {s: merge_intervals(reference.speaker_intervals(s)) for s in speakers}
    all_embeddings: list[EmbeddingSequence] = []
    all_labels: list[tuple[str, ...]] = []
    for cfg in scales:
        windows = window_speech(speech, cfg)
        vecs = np.zeros((len(windows), spec.embed_dim))
        labels: list[str] = []
        for w, win in enumerate(windows):
            ov = [
                (sum(win.overlap(iv) for iv in foot[s]), i)
                for i, s in enumerate(speakers)
            ]
            ov.sort(key=lambda p: (-p[0], p[1]))
            dom_cov, dom = ov[0]
            vec = means[dom] + rng.normal(0.0, np.sqrt(spec.within_scale), spec.embed_dim)
            if len(ov) > 1 and ov[1][0] >= 0.3 * win.duration:
                sec_cov, sec = ov[1]
                other = means[sec] + rng.normal(0.0, np.sqrt(spec.within_scale), spec.embed_dim)
                vec = (dom_cov * vec + sec_cov * other) / (dom_cov + sec_cov)
            vecs[w] = vec
            labels.append(speakers[dom])
        all_embeddings.append(EmbeddingSequence(recording_id, tuple(windows), vecs))
        all_labels.append(tuple(labels))

    return SyntheticConversation(
        reference=reference,
        vad=vad,
        osd=osd,
        scales=tuple(scales),
        embeddings=tuple(all_embeddings),
        labels=tuple(all_labels),
        speaker_means=means,
    )
