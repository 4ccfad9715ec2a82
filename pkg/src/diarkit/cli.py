"""Command-line interface.

Subcommands cover every pipeline stage so a run can be resumed from any
intermediate artifact: segment, train-lda, train-plda, interp-plda,
cluster, resegment, overlap, ensemble, score, synth, run.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import embedding as emb
from . import frontend
from .ahc import ClusterAssignment
from .ensemble import combine
from .errors import DataError, DiarkitError, NumericError
from .metrics import aggregate_der, compute_der, compute_jer
from .pipeline import (
    PipelineConfig,
    SyntheticSpec,
    _parse_windowing,
    assign_overlap_second_speaker,
    cluster_windows,
    diarize_recording,
    parse_pipeline_config,
    select_speech_windows,
    synthesize_conversation,
)
from .timeline import Hypothesis, LabeledSegment, TimeInterval, parse_rttm, write_rttm
from .vbhmm import resegment, to_hypothesis


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def _load_single_rttm(path: str) -> Hypothesis:
    hyps = parse_rttm(_read(path))
    if len(hyps) != 1:
        raise DataError(f"{path}: expected exactly one recording, found {len(hyps)}")
    return hyps[0]


def _binarizer_from_args(args, prefix: str, base: frontend.BinarizerConfig) -> frontend.BinarizerConfig:
    updates = {}
    for key in ("onset", "offset", "min_on", "min_off", "pad"):
        v = getattr(args, f"{prefix}_{key}", None)
        if v is not None:
            updates[key] = v
    return replace(base, **updates) if updates else base


def _add_binarizer_flags(p: argparse.ArgumentParser, prefix: str) -> None:
    for key in ("onset", "offset", "min_on", "min_off", "pad"):
        p.add_argument(f"--{prefix}-{key.replace('_', '-')}", type=float, default=None,
                       dest=f"{prefix}_{key}")


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = parse_pipeline_config(_read(args.config), cfg)
    updates = {}
    if getattr(args, "windowing", None):
        updates["windowing"] = _parse_windowing(args.windowing)
    for key in ("lda_dim", "plda_alpha", "ensemble_exponent", "collar"):
        v = getattr(args, key, None)
        if v is not None:
            updates[key] = v
    vb = {}
    for key in ("loop_p", "fa", "fb", "max_iters", "elbo_tol", "min_occupancy"):
        v = getattr(args, f"vbhmm_{key}", None)
        if v is not None:
            vb[key] = v
    if vb:
        updates["vbhmm"] = replace(cfg.vbhmm, **vb)
    vad = _binarizer_from_args(args, "vad", cfg.vad)
    if vad is not cfg.vad:
        updates["vad"] = vad
    osd = _binarizer_from_args(args, "osd", cfg.osd)
    if osd is not cfg.osd:
        updates["osd"] = osd
    try:
        return replace(cfg, **updates) if updates else cfg
    except ValueError as exc:
        raise DataError(f"invalid configuration: {exc}") from None


def _speech_label(intervals, rec: str) -> Hypothesis:
    return Hypothesis(rec, [LabeledSegment(iv, "speech") for iv in intervals])


# -- subcommand implementations ----------------------------------------------


def _cmd_segment(args) -> int:
    tracks = [frontend.read_posterior(_read(p)) for p in args.post]
    fused = frontend.fuse_posteriors(tracks)
    cfg = frontend.BinarizerConfig(args.onset, args.offset, args.min_on, args.min_off, args.pad)
    regions = frontend.binarize(fused, cfg)
    _write(args.out, write_rttm([_speech_label(regions, fused.recording_id)]))
    print(f"{fused.recording_id}: {len(regions)} speech regions")
    return 0


def _load_training_set(args) -> tuple[np.ndarray, list[str]]:
    if len(args.emb) != len(args.labels):
        raise DataError("need one --labels file per --emb file")
    vecs = []
    labs: list[str] = []
    for epath, lpath in zip(args.emb, args.labels):
        seq = emb.read_embeddings(_read(epath))
        lab = emb.read_labels(_read(lpath))
        if len(lab) != len(seq):
            raise DataError(f"{lpath}: {len(lab)} labels for {len(seq)} embeddings")
        vecs.append(seq.vectors)
        labs.extend(lab)
    return np.vstack(vecs), labs


def _cmd_train_lda(args) -> int:
    vectors, labels = _load_training_set(args)
    model = emb.train_lda(vectors, labels, args.dim)
    _write(args.out, emb.write_lda(model))
    print(f"LDA {model.input_dim} -> {model.output_dim} trained on {len(labels)} vectors")
    return 0


def _cmd_train_plda(args) -> int:
    vectors, labels = _load_training_set(args)
    if args.lda:
        lda = emb.read_lda(_read(args.lda))
        dummy = emb.EmbeddingSequence(
            "train",
            tuple(TimeInterval(i, i + 1) for i in range(len(vectors))),
            vectors,
        )
        vectors = emb.project(lda, dummy).vectors
    model = emb.train_plda(vectors, labels, iters=args.iters)
    _write(args.out, emb.write_plda(model))
    print(f"PLDA dim {model.dim} trained on {len(labels)} vectors ({args.iters} EM iters)")
    return 0


def _cmd_interp_plda(args) -> int:
    a = emb.read_plda(_read(args.model_a))
    b = emb.read_plda(_read(args.model_b))
    _write(args.out, emb.write_plda(emb.interpolate_plda(a, b, args.alpha)))
    print(f"interpolated PLDA written (alpha={args.alpha})")
    return 0


def _load_scale_inputs(args):
    seq = emb.read_embeddings(_read(args.emb))
    lda = emb.read_lda(_read(args.lda)) if args.lda else None
    plda = emb.read_plda(_read(args.plda))
    return seq, lda, plda


def _cmd_cluster(args) -> int:
    seq, lda, plda = _load_scale_inputs(args)
    if args.speech:
        speech_hyp = _load_single_rttm(args.speech)
        seq = select_speech_windows(seq, [s.interval for s in speech_hyp.segments])
    if len(seq) == 0:
        raise DataError("no embedding windows intersect the speech regions")
    proj = emb.project(lda, seq) if lda is not None else seq
    if args.dump_scores:
        scores = emb.plda_score_matrix(plda, proj.vectors)
        lines = [f"SCORES v1 {scores.n}"]
        lines.extend(" ".join(repr(v) for v in row) for row in scores.values)
        _write(args.dump_scores, "".join(l + "\n" for l in lines))
    assignment, threshold = cluster_windows(proj, plda, args.threshold)
    if args.out_emb:
        _write(args.out_emb, emb.write_embeddings(seq))
    if args.out_labels:
        _write(args.out_labels, emb.write_labels([str(l) for l in assignment.labels]))
    if args.out_rttm:
        hyp = to_hypothesis(assignment, list(proj.intervals), seq.recording_id)
        _write(args.out_rttm, write_rttm([hyp]))
    thr = "given" if args.threshold is not None else (
        f"{threshold:.4f}" if threshold is not None else "n/a"
    )
    print(f"{seq.recording_id}: {assignment.n_clusters} clusters over {len(seq)} windows (threshold {thr})")
    return 0


def _cmd_resegment(args) -> int:
    seq, lda, plda = _load_scale_inputs(args)
    labels = emb.read_labels(_read(args.labels))
    if len(labels) != len(seq):
        raise DataError(f"{len(labels)} labels for {len(seq)} embeddings")
    try:
        ints = [int(l) for l in labels]
    except ValueError:
        raise DataError("cluster label file must contain integer labels") from None
    remap: dict[int, int] = {}
    norm = []
    for l in ints:
        if l not in remap:
            remap[l] = len(remap)
        norm.append(remap[l])
    init = ClusterAssignment(tuple(norm), len(remap))
    proj = emb.project(lda, seq) if lda is not None else seq
    cfg = _config_from_args(args)
    result = resegment(proj, init, plda, cfg.vbhmm)
    if args.out_labels:
        _write(args.out_labels, emb.write_labels([str(l) for l in result.assignment.labels]))
    if args.out_rttm:
        hyp = to_hypothesis(result.assignment, list(proj.intervals), seq.recording_id)
        _write(args.out_rttm, write_rttm([hyp]))
    print(
        f"{seq.recording_id}: {init.n_clusters} -> {result.assignment.n_clusters} speakers, "
        f"{len(result.elbo)} iterations"
    )
    return 0


def _cmd_overlap(args) -> int:
    hyp = _load_single_rttm(args.rttm)
    osd = frontend.read_posterior(_read(args.osd))
    if osd.recording_id != hyp.recording_id:
        raise DataError(
            f"recording mismatch: RTTM {hyp.recording_id!r} vs OSD {osd.recording_id!r}"
        )
    cfg = _binarizer_from_args(args, "osd", PipelineConfig().osd)
    regions = frontend.binarize(osd, cfg)
    out = assign_overlap_second_speaker(hyp, regions)
    _write(args.out, write_rttm([out]))
    added = out.total_speaker_time() - hyp.total_speaker_time()
    print(f"{hyp.recording_id}: {len(regions)} overlap regions, +{added:.2f}s second-speaker time")
    return 0


def _cmd_ensemble(args) -> int:
    hyps = [_load_single_rttm(p) for p in args.inputs]
    result = combine(hyps, args.exponent)
    _write(args.output, write_rttm([result]))
    print(f"{result.recording_id}: combined {len(hyps)} hypotheses, {len(result.speakers())} speakers")
    return 0


def _cmd_score(args) -> int:
    refs = {h.recording_id: h for h in parse_rttm(_read(args.ref))}
    hyps = {h.recording_id: h for h in parse_rttm(_read(args.hyp))}
    ids = sorted(set(refs) | set(hyps))
    if not ids:
        raise DataError("no recordings to score")
    parts = []
    jers = []
    kv = []
    for rec in ids:
        ref = refs.get(rec, Hypothesis(rec))
        hyp = hyps.get(rec, Hypothesis(rec))
        der = compute_der(ref, hyp, args.collar)
        jer = compute_jer(ref, hyp)
        parts.append(der)
        jers.append(jer.jer)
        flag = " (no reference speech)" if der.degenerate else ""
        print(
            f"{rec}: DER {der.der:.2f}% (miss {der.missed:.2f}s fa {der.false_alarm:.2f}s "
            f"conf {der.confusion:.2f}s / ref {der.total_reference:.2f}s) JER {jer.jer:.2f}%{flag}"
        )
        kv.append((f"rec.{rec}.der", der.der))
        kv.append((f"rec.{rec}.jer", jer.jer))
    corpus = aggregate_der(parts)
    mean_der = float(np.mean([p.der for p in parts]))
    mean_jer = float(np.mean(jers))
    print(
        f"corpus: DER {corpus.der:.2f}% (duration-weighted) | "
        f"mean-DER {mean_der:.2f}% (per-recording) | JER {mean_jer:.2f}%"
    )
    kv = [("der.weighted", corpus.der), ("der.mean", mean_der), ("jer.mean", mean_jer)] + kv
    for key, value in kv:
        print(f"{key} = {value:.6f}")
    return 0


def _cmd_synth(args) -> int:
    scales = _parse_windowing(args.scales)
    spec = SyntheticSpec(
        n_speakers=args.speakers,
        duration=args.duration,
        embed_dim=args.embed_dim,
        between_scale=args.between_scale,
        within_scale=args.within_scale,
        turn_mean=args.turn_mean,
        overlap_fraction=args.overlap_fraction,
        seed=args.seed,
    )
    conv = synthesize_conversation(spec, scales, recording_id=args.recording_id)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc}") from None
    _write(str(out / "reference.rttm"), write_rttm([conv.reference]))
    _write(str(out / "vad.post"), frontend.write_posterior(conv.vad))
    _write(str(out / "osd.post"), frontend.write_posterior(conv.osd))
    for k, (seq, labels) in enumerate(zip(conv.embeddings, conv.labels)):
        _write(str(out / f"scale{k}.emb"), emb.write_embeddings(seq))
        _write(str(out / f"scale{k}.lbl"), emb.write_labels(list(labels)))
    print(
        f"wrote {args.recording_id}: {len(conv.reference.segments)} reference segments, "
        f"{len(scales)} scales to {out}"
    )
    return 0


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    vad_tracks = [frontend.read_posterior(_read(p)) for p in args.vad]
    osd = frontend.read_posterior(_read(args.osd)) if args.osd else None
    seqs = [emb.read_embeddings(_read(p)) for p in args.emb]
    lda = emb.read_lda(_read(args.lda)) if args.lda else None
    plda = emb.read_plda(_read(args.plda))
    result = diarize_recording(cfg, vad_tracks, osd, seqs, lda, plda, args.threshold)
    _write(args.out, write_rttm([result.hypothesis]))
    print(
        f"{result.hypothesis.recording_id}: {len(result.hypothesis.speakers())} speakers, "
        f"{len(result.hypothesis.segments)} segments"
    )
    return 0


# -- parser -------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config file (flat key = value)")
    p.add_argument("--windowing", help="scale list, e.g. '1.0/0.5,2.0/1.0'")
    p.add_argument("--lda-dim", type=int, dest="lda_dim")
    p.add_argument("--plda-alpha", type=float, dest="plda_alpha")
    p.add_argument("--ensemble-exponent", type=float, dest="ensemble_exponent")
    p.add_argument("--collar", type=float, dest="collar")
    for key in ("loop_p", "fa", "fb", "elbo_tol", "min_occupancy"):
        p.add_argument(f"--vbhmm-{key.replace('_', '-')}", type=float, dest=f"vbhmm_{key}")
    p.add_argument("--vbhmm-max-iters", type=int, dest="vbhmm_max_iters")
    _add_binarizer_flags(p, "vad")
    _add_binarizer_flags(p, "osd")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diarkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", help="fuse posteriors and binarize into speech regions")
    p.add_argument("--post", nargs="+", required=True, help="posterior files to fuse")
    p.add_argument("--onset", type=float, default=0.5)
    p.add_argument("--offset", type=float, default=0.5)
    p.add_argument("--min-on", type=float, default=0.1, dest="min_on")
    p.add_argument("--min-off", type=float, default=0.1, dest="min_off")
    p.add_argument("--pad", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("train-lda", help="train the LDA projection")
    p.add_argument("--emb", action="append", required=True)
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_lda)

    p = sub.add_parser("train-plda", help="train a two-covariance PLDA model")
    p.add_argument("--emb", action="append", required=True)
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--lda", help="project with this LDA model first")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_plda)

    p = sub.add_parser("interp-plda", help="convex-combine two PLDA models")
    p.add_argument("--model-a", required=True, dest="model_a")
    p.add_argument("--model-b", required=True, dest="model_b")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_interp_plda)

    p = sub.add_parser("cluster", help="PLDA scoring, GMM threshold, and AHC")
    p.add_argument("--emb", required=True)
    p.add_argument("--lda")
    p.add_argument("--plda", required=True)
    p.add_argument("--speech", help="speech-region RTTM to filter windows")
    p.add_argument("--threshold", type=float, help="override the GMM-derived threshold")
    p.add_argument("--dump-scores", dest="dump_scores")
    p.add_argument("--out-emb", dest="out_emb", help="write the filtered embeddings")
    p.add_argument("--out-labels", dest="out_labels")
    p.add_argument("--out-rttm", dest="out_rttm")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("resegment", help="VB-HMM frame reassignment")
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True, help="initial cluster labels (LBL file)")
    p.add_argument("--lda")
    p.add_argument("--plda", required=True)
    p.add_argument("--out-labels", dest="out_labels")
    p.add_argument("--out-rttm", dest="out_rttm")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_resegment)

    p = sub.add_parser("overlap", help="assign second speakers inside overlap regions")
    p.add_argument("--rttm", required=True)
    p.add_argument("--osd", required=True, help="overlap posterior file")
    _add_binarizer_flags(p, "osd")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("ensemble", help="DOVER-Lap combination of hypotheses")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--exponent", type=float, default=0.1)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("score", help="DER/JER against a reference RTTM")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.25)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("synth", help="generate a seeded synthetic conversation")
    p.add_argument("--speakers", type=int, required=True)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embed-dim", type=int, default=16, dest="embed_dim")
    p.add_argument("--between-scale", type=float, default=4.0, dest="between_scale")
    p.add_argument("--within-scale", type=float, default=0.05, dest="within_scale")
    p.add_argument("--turn-mean", type=float, default=5.0, dest="turn_mean")
    p.add_argument("--overlap-fraction", type=float, default=0.1, dest="overlap_fraction")
    p.add_argument("--scales", default="1.0/0.5,2.0/1.0,3.0/1.5")
    p.add_argument("--recording-id", default="synth", dest="recording_id")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="full diarization pipeline for one recording")
    p.add_argument("--vad", nargs="+", required=True, help="speech posterior files (fused)")
    p.add_argument("--osd", help="overlap posterior file")
    p.add_argument("--emb", action="append", required=True, help="one embedding file per scale")
    p.add_argument("--lda")
    p.add_argument("--plda", required=True)
    p.add_argument("--threshold", type=float, help="override the AHC threshold")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"diarkit: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DiarkitError, ValueError) as exc:
        print(f"diarkit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
