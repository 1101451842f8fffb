"""Alignment-kernel similarity and intensity regression for groups of feature vectors."""

__version__ = "0.1.0"

from .combine import GatingState, combine, fit_gating, softmax_weights
from .divergences import (
    LocalKernelParams,
    chi_square,
    local_similarity,
    log_local_similarity,
    sq_euclidean,
)
from .estimator import GroupKernelRegressor, GroupSorter
from .geometry import (
    FaceGraph,
    GlobalWeights,
    build_mst,
    eye_distance,
    global_weights,
    relative_distances,
    relative_sizes,
    sort_faces,
)
from .harness import (
    CvPlan,
    EvalReport,
    ExperimentConfig,
    SynthSpec,
    mae,
    make_folds,
    run_experiment,
    synth_dataset,
    synth_schema,
)
from .kernels import (
    GramMatrix,
    PsdReport,
    baseline_kernel,
    dtw_distance,
    enumerate_alignments,
    gak,
    gak_bruteforce,
    gram,
    log_gak,
    psd_check,
)
from .records import (
    ChannelSchema,
    ChannelSpec,
    FaceRecord,
    GroupRecord,
    ParseError,
    SortedSequence,
    ValidationError,
    dataset_hash,
    parse_group_records,
    serialize_group_records,
    validate_schema,
)
from .svr import SvrConfig, SvrSolution, kkt_residual, svr_fit, svr_predict

__all__ = [
    "ChannelSchema",
    "ChannelSpec",
    "CvPlan",
    "EvalReport",
    "ExperimentConfig",
    "FaceGraph",
    "FaceRecord",
    "GatingState",
    "GlobalWeights",
    "GramMatrix",
    "GroupKernelRegressor",
    "GroupRecord",
    "GroupSorter",
    "LocalKernelParams",
    "ParseError",
    "PsdReport",
    "SortedSequence",
    "SvrConfig",
    "SvrSolution",
    "SynthSpec",
    "ValidationError",
    "baseline_kernel",
    "build_mst",
    "chi_square",
    "combine",
    "dataset_hash",
    "dtw_distance",
    "enumerate_alignments",
    "eye_distance",
    "fit_gating",
    "gak",
    "gak_bruteforce",
    "global_weights",
    "gram",
    "kkt_residual",
    "local_similarity",
    "log_gak",
    "log_local_similarity",
    "mae",
    "make_folds",
    "parse_group_records",
    "psd_check",
    "relative_distances",
    "relative_sizes",
    "run_experiment",
    "serialize_group_records",
    "softmax_weights",
    "sort_faces",
    "sq_euclidean",
    "svr_fit",
    "svr_predict",
    "synth_dataset",
    "synth_schema",
    "validate_schema",
]
