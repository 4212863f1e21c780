"""Skeletal sign-language motion scoring.

Compares a student's motion sequence (BVH or the JSON mirror) against
stored teacher references and emits three feedback signals - confusion,
smoothness and alignment - plus per-joint error attribution and a 0-100
composite. Ships a reference-database builder, a rank-correlation
validation harness, a CLI and an HTTP service.
"""

from .errors import (
    BandInfeasible,
    BvhSyntaxError,
    ChannelMismatch,
    CorruptFile,
    DegenerateInput,
    DimensionMismatch,
    EmptyCorpus,
    EmptyInput,
    EmptyModel,
    EmptyMotion,
    SigLangError,
    TopologyMismatch,
    UnknownVocab,
    VersionMismatch,
)
from .kinematics import (
    Pose,
    SkeletonTopology,
    forward_kinematics,
    geodesic_angle,
    quat_canonicalize,
    quat_conj,
    quat_exp,
    quat_from_axis_angle,
    quat_identity,
    quat_log,
    quat_mul,
    quat_normalize,
    quat_rotate,
    slerp,
)
from .motion_io import (
    MotionSequence,
    euler_to_quat,
    motion_from_json,
    motion_to_json,
    parse_bvh,
    read_bvh_file,
    resample,
    resample_to_frame_count,
    write_bvh,
)
from .embedding import (
    EmbeddingWeights,
    FrameDifference,
    ProjectionBasis,
    SegmentEmbedding,
    fit_projection_basis,
    frame_difference,
    joint_log_diff,
    project,
    segment_descriptor,
)
from .smoothing import SmoothingConfig, SmoothnessResult, smooth_sequence, smoothness
from .assessment import (
    AlignmentResult,
    AssessmentConfig,
    AssessmentReport,
    ClusterModel,
    ConfusionResult,
    GradientSequence,
    angular_velocity,
    assess,
    class_distribution,
    ddtw,
    joint_weights,
    report_to_dict,
)
from .refdb import BuildConfig, ReferenceDatabase, TeacherTake, build, load, save
from .evalstats import (
    GradedStudent,
    RankVector,
    graded_corpus,
    rank,
    read_ratings_csv,
    spearman,
)

__version__ = "0.1.0"
