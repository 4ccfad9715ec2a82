"""Speaker-diarization back-end toolkit.

Turns precomputed detector posteriors and segment embeddings into
speaker-labeled timelines: LDA/PLDA scoring, GMM-thresholded
agglomerative clustering, VB-HMM resegmentation, overlap assignment,
DOVER-Lap ensembling, and DER/JER evaluation, plus a synthetic-data
harness for end-to-end verification.
"""

from .ahc import ClusterAssignment, TiedGmm1d, ahc_cluster, derive_threshold, fit_tied_gmm
from .embedding import (
    EmbeddingSequence,
    LdaModel,
    PldaModel,
    ScoreMatrix,
    interpolate_plda,
    plda_score_matrix,
    project,
    train_lda,
    train_plda,
)
from .ensemble import RankedHypothesis, combine, doverlap_combine, map_labels, rank_weights
from .errors import (
    DataError,
    DegenerateDataError,
    DegenerateModelError,
    DiarkitError,
    FormatError,
    FusionError,
    NumericError,
    TrainingError,
)
from .frontend import (
    BinarizerConfig,
    FBetaConfig,
    PosteriorTrack,
    binarize,
    f_beta,
    fuse_posteriors,
    tune_binarizer,
)
from .metrics import DerBreakdown, JerResult, aggregate_der, compute_der, compute_jer, frame_der_oracle
from .pipeline import (
    PipelineConfig,
    RecordingResult,
    SyntheticSpec,
    assign_overlap_second_speaker,
    diarize_recording,
    parse_pipeline_config,
    synthesize_conversation,
)
from .timeline import (
    Hypothesis,
    LabeledSegment,
    TimeInterval,
    WindowingConfig,
    parse_rttm,
    window_speech,
    write_rttm,
)
from .vbhmm import ElboTrace, Responsibilities, ResegmentResult, VbhmmConfig, resegment, to_hypothesis

__version__ = "0.1.0"

__all__ = [
    "BinarizerConfig",
    "ClusterAssignment",
    "DataError",
    "DegenerateDataError",
    "DegenerateModelError",
    "DerBreakdown",
    "DiarkitError",
    "ElboTrace",
    "EmbeddingSequence",
    "FBetaConfig",
    "FormatError",
    "FusionError",
    "Hypothesis",
    "JerResult",
    "LabeledSegment",
    "LdaModel",
    "NumericError",
    "PipelineConfig",
    "PldaModel",
    "PosteriorTrack",
    "RankedHypothesis",
    "RecordingResult",
    "ResegmentResult",
    "Responsibilities",
    "ScoreMatrix",
    "SyntheticSpec",
    "TiedGmm1d",
    "TimeInterval",
    "TrainingError",
    "VbhmmConfig",
    "WindowingConfig",
    "aggregate_der",
    "ahc_cluster",
    "assign_overlap_second_speaker",
    "binarize",
    "combine",
    "compute_der",
    "compute_jer",
    "derive_threshold",
    "diarize_recording",
    "doverlap_combine",
    "f_beta",
    "fit_tied_gmm",
    "frame_der_oracle",
    "fuse_posteriors",
    "interpolate_plda",
    "map_labels",
    "parse_pipeline_config",
    "parse_rttm",
    "plda_score_matrix",
    "project",
    "rank_weights",
    "resegment",
    "synthesize_conversation",
    "to_hypothesis",
    "train_lda",
    "train_plda",
    "tune_binarizer",
    "window_speech",
    "write_rttm",
]
