"""The ternary evaluation engine.

Three independent signals are computed for a student sequence against the
reference database and blended into one 0-100 composite:

* **confusion** - the student's segment embedding is soft-classified over
  the teacher vocabulary centroids (softmax of negated distances, so the
  nearest centroid is the most probable); the normalized entropy of that
  distribution says how ambiguous the sign is (0 = unambiguous, 1 = could
  be anything);
* **smoothness** - distance to the sequence's own smoothed idealization
  (see :mod:`siglang.smoothing`);
* **alignment** - derivative dynamic time warping over per-joint angular
  velocities, so tempo differences are discounted and only the motion
  *shape* is compared; joints the teacher actually moves carry more
  weight, and the warp path yields per-joint error attribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    BandInfeasible,
    DimensionMismatch,
    EmptyModel,
    EmptyMotion,
    TopologyMismatch,
    UnknownVocab,
)
from .kinematics import quat_canonicalize, quat_conj, quat_log, quat_mul
from .motion_io import MotionSequence, resample
from .embedding import EmbeddingWeights, SegmentEmbedding, project, segment_descriptor
from .smoothing import SmoothnessResult, smoothness

if TYPE_CHECKING:  # pragma: no cover - import only for annotations
    from .refdb import ReferenceDatabase

REPORT_JSON_VERSION = "siglang-report/1"

# reference angular-velocity scale (rad/s) for length-normalized DTW scores
REFERENCE_RATE = 1.0

# floor added to each joint's mean angular speed before weight normalization
WEIGHT_EPSILON = 1e-3


@dataclass
class ClusterModel:
    """Teacher vocabulary centroids in embedding space."""

    centroids: np.ndarray          # (K, n)
    labels: tuple[str, ...]
    temperature: float = 1.0

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        self.labels = tuple(self.labels)
        if self.centroids.shape[0] == 0 or len(self.labels) == 0:
            raise EmptyModel("cluster model needs at least one centroid")
        if self.centroids.shape[0] != len(self.labels):
            raise ValueError(
                f"{self.centroids.shape[0]} centroids for {len(self.labels)} labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("cluster labels must be unique")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def n(self) -> int:
        return self.centroids.shape[1]


@dataclass
class ConfusionResult:
    distribution: np.ndarray       # (K,), sums to 1
    labels: tuple[str, ...]
    assigned_label: str
    confusion: float               # normalized entropy in [0, 1]


@dataclass
class GradientSequence:
    """Per-interval, per-joint angular velocities (rad/s)."""

    values: np.ndarray             # (frames - 1, N, 3)
    fps: float

    @property
    def n_joints(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class AlignmentResult:
    distance: float
    normalized_score: float
    path: list[tuple[int, int]]
    per_joint_error: np.ndarray    # (N,)


@dataclass
class AssessmentConfig:
    """Composite weighting and warp-band settings for `assess`."""

    weight_confusion: float = 1.0 / 3.0
    weight_smoothness: float = 1.0 / 3.0
    weight_alignment: float = 1.0 / 3.0
    band: int | None = None

    def __post_init__(self):
        weights = (self.weight_confusion, self.weight_smoothness,
                   self.weight_alignment)
        if any(w < 0 for w in weights):
            raise ValueError(f"composite weights must be nonnegative: {weights}")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"composite weights must sum to 1: {weights}")


@dataclass
class AssessmentReport:
    vocab: str
    confusion: ConfusionResult
    smoothness: SmoothnessResult
    alignment: AlignmentResult
    composite: float
    worst_joints: list[str]
    joint_names: tuple[str, ...]


def class_distribution(e: SegmentEmbedding, model: ClusterModel) -> ConfusionResult:
    """Soft-classify an embedding over the vocabulary centroids.

    Probabilities are softmax(-distance / temperature), so the nearest
    centroid is the most probable. Confusion is the Shannon entropy of the
    distribution normalized by ln K (0 for K = 1).
    """
    if model.k == 0:
        raise EmptyModel("cluster model has no centroids")
    if e.n != model.n:
        raise DimensionMismatch(
            f"embedding dimension {e.n} does not match model dimension {model.n}")
    d = np.linalg.norm(model.centroids - e.vector, axis=1)
    logits = -d / model.temperature
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    assigned = model.labels[int(np.argmin(d))]
    if model.k == 1:
        confusion = 0.0
    else:
        nonzero = p[p > 0]
        entropy = float(-(nonzero * np.log(nonzero)).sum())
        confusion = entropy / np.log(model.k)
    return ConfusionResult(p, model.labels, assigned, float(confusion))


def angular_velocity(motion: MotionSequence) -> GradientSequence:
    """Per-joint angular velocity of each frame interval, in rad/s.

    Twice the log of the frame-to-frame relative rotation (which carries
    half the angle), scaled by the frame rate.
    """
    if motion.n_frames < 2:
        raise EmptyMotion("angular velocity needs at least two frames")
    rel = quat_mul(quat_conj(motion.rotations[:-1]), motion.rotations[1:])
    omega = 2.0 * quat_log(quat_canonicalize(rel)) * motion.fps
    return GradientSequence(omega, motion.fps)


def joint_weights(teacher: MotionSequence) -> np.ndarray:
    """Per-joint DTW weights favoring joints the teacher actually moves.

    Proportional to (epsilon + mean angular speed) and normalized to sum
    to 1; a fully static teacher yields uniform weights.
    """
    grad = angular_velocity(teacher)
    mean_speed = np.linalg.norm(grad.values, axis=2).mean(axis=0)
    w = WEIGHT_EPSILON + mean_speed
    return w / w.sum()


def ddtw(stu: GradientSequence, tea: GradientSequence, weights: np.ndarray,
         band: int | None = None) -> AlignmentResult:
    """Derivative DTW between student and teacher gradient sequences.

    The local cost of pairing student interval a with teacher interval b is
    the weighted sum over joints of the Euclidean angular-velocity
    difference. Classic dynamic programming over steps {(1,0),(0,1),(1,1)},
    optionally constrained to a Sakoe-Chiba band |a - b| <= band.
    """
    a_len, b_len = len(stu), len(tea)
    if a_len == 0 or b_len == 0:
        raise EmptyMotion("cannot align an empty gradient sequence")
    if stu.n_joints != tea.n_joints:
        raise TopologyMismatch(
            f"student has {stu.n_joints} joints, teacher {tea.n_joints}")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (stu.n_joints,):
        raise TopologyMismatch(
            f"need {stu.n_joints} joint weights, got shape {weights.shape}")
    if band is not None and band < abs(a_len - b_len):
        raise BandInfeasible(
            f"band {band} cannot bridge length difference {abs(a_len - b_len)}")

    diff = stu.values[:, None, :, :] - tea.values[None, :, :, :]
    per_joint_cost = np.linalg.norm(diff, axis=3)          # (A, B, N)
    cost = per_joint_cost @ weights                        # (A, B)

    inf = np.inf
    acc = np.full((a_len, b_len), inf)
    for i in range(a_len):
        if band is None:
            lo, hi = 0, b_len
        else:
            lo, hi = max(0, i - band), min(b_len, i + band + 1)
        for j in range(lo, hi):
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = inf
                if i > 0 and j > 0:
                    best = acc[i - 1, j - 1]
                if j > 0 and acc[i, j - 1] < best:
                    best = acc[i, j - 1]
                if i > 0 and acc[i - 1, j] < best:
                    best = acc[i - 1, j]
            acc[i, j] = cost[i, j] + best

    # backtrack; ties prefer the diagonal, then (0,1), then (1,0)
    path = [(a_len - 1, b_len - 1)]
    i, j = a_len - 1, b_len - 1
    while i > 0 or j > 0:
        candidates = []
        if i > 0 and j > 0:
            candidates.append((acc[i - 1, j - 1], (i - 1, j - 1)))
        if j > 0:
            candidates.append((acc[i, j - 1], (i, j - 1)))
        if i > 0:
            candidates.append((acc[i - 1, j], (i - 1, j)))
        best = min(c[0] for c in candidates)
        for value, cell in candidates:
            if value == best:
                i, j = cell
                break
        path.append((i, j))
    path.reverse()

    distance = float(acc[a_len - 1, b_len - 1])
    rows = np.array([p[0] for p in path])
    cols = np.array([p[1] for p in path])
    per_joint_error = per_joint_cost[rows, cols].mean(axis=0)
    score = float(np.exp(-distance / (len(path) * REFERENCE_RATE)))
    return AlignmentResult(distance, score, path, per_joint_error)


def assess(student: MotionSequence, vocab: str, db: "ReferenceDatabase",
           cfg: AssessmentConfig | None = None,
           embed_weights: EmbeddingWeights | None = None) -> AssessmentReport:
    """Full assessment of a student sequence against a stored teacher.

    The student is resampled to the database's canonical rate, embedded and
    soft-classified, scored for smoothness, and DTW-aligned against the
    stored teacher gradients with the teacher's joint weights. Deterministic
    for fixed inputs and configuration.
    """
    cfg = cfg or AssessmentConfig()
    entry = db.entry(vocab)
    if student.topology.joint_names != db.joint_names:
        raise TopologyMismatch(
            "student topology does not match the database: "
            f"{list(student.topology.joint_names)} vs {list(db.joint_names)}")

    stu = resample(student, db.canonical_fps)
    smooth_res = smoothness(stu, db.smoothing)
    weights = embed_weights if embed_weights is not None else db.embed_weights
    descriptor = segment_descriptor(stu, weights, db.descriptor_frames)
    emb = project(descriptor, db.basis, source_label=vocab)
    conf = class_distribution(emb, db.cluster_model)
    align = ddtw(angular_velocity(stu), entry.gradients, entry.dtw_weights, cfg.band)

    composite = 100.0 * (
        cfg.weight_confusion * (1.0 - conf.confusion)
        + cfg.weight_smoothness * smooth_res.score
        + cfg.weight_alignment * align.normalized_score
    )
    order = np.argsort(-align.per_joint_error, kind="stable")
    worst = [db.joint_names[i] for i in order[:3]]
    return AssessmentReport(vocab, conf, smooth_res, align, float(composite),
                            worst, db.joint_names)


def report_to_dict(report: AssessmentReport) -> dict:
    """Render a report as the versioned JSON-ready payload."""
    return {
        "version": REPORT_JSON_VERSION,
        "vocab": report.vocab,
        "confusion": {
            "distribution": {
                label: float(p)
                for label, p in zip(report.confusion.labels,
                                    report.confusion.distribution)
            },
            "assigned": report.confusion.assigned_label,
            "C": float(report.confusion.confusion),
        },
        "smoothness": {
            "d_s": float(report.smoothness.d_s),
            "S": float(report.smoothness.score),
        },
        "alignment": {
            "D": float(report.alignment.distance),
            "score": float(report.alignment.normalized_score),
            "path_len": len(report.alignment.path),
            "per_joint": {
                name: float(err)
                for name, err in zip(report.joint_names,
                                     report.alignment.per_joint_error)
            },
        },
        "composite": float(report.composite),
        "worst_joints": list(report.worst_joints),
    }
