"""Rotation-space motion embeddings.

The per-joint difference between two poses is the quaternion log of
``q_teacher * conj(q_student)`` (half-angle convention). Differences are
propagated down the joint tree so a parent's error also shows up in its
children: with per-joint weight matrix ``W_i``, local normalizer ``m1``
and propagation factor ``m2``,

    D_i = (1/m1) * W_i @ d_i + m2 * D_parent(i)

with ``D = 0`` for the (virtual) parent of the root. A whole segment is
summarized by re-timing it to a fixed frame count, embedding every frame
against the rest pose, and pooling each joint channel's temporal mean and
standard deviation into one 6N-dimensional descriptor; a centered
orthonormal basis (fit by the reference-database builder) projects that
descriptor into the low-dimensional space used for classification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, TopologyMismatch, VersionMismatch
from .kinematics import (
    Pose,
    SkeletonTopology,
    quat_canonicalize,
    quat_conj,
    quat_log,
    quat_mul,
)
from .motion_io import MotionSequence, resample_to_frame_count

WEIGHTS_JSON_VERSION = "siglang-weights/1"
DESCRIPTOR_FRAMES = 32


@dataclass
class EmbeddingWeights:
    """Per-joint 3x3 affine weights plus the scalar mixing constants."""

    per_joint: np.ndarray          # (N, 3, 3)
    m1: float = 1.0
    m2: float = 0.5

    def __post_init__(self):
        mats = np.asarray(self.per_joint, dtype=float)
        if mats.ndim != 3 or mats.shape[1:] != (3, 3):
            raise ValueError(f"per-joint weights must be (N, 3, 3), got {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise ValueError("non-finite weight matrix entry")
        if not self.m1 > 0:
            raise ValueError(f"m1 must be positive, got {self.m1}")
        if not 0 <= self.m2 < 1:
            raise ValueError(f"m2 must lie in [0, 1), got {self.m2}")
        self.per_joint = mats
        self.m1 = float(self.m1)
        self.m2 = float(self.m2)

    @classmethod
    def identity(cls, n_joints: int, m1: float = 1.0, m2: float = 0.5):
        return cls(np.tile(np.eye(3), (n_joints, 1, 1)), m1, m2)

    @property
    def n_joints(self) -> int:
        return self.per_joint.shape[0]


def weights_to_json(weights: EmbeddingWeights) -> dict:
    return {
        "version": WEIGHTS_JSON_VERSION,
        "m1": weights.m1,
        "m2": weights.m2,
        "per_joint": [[[float(v) for v in row] for row in mat]
                      for mat in weights.per_joint],
    }


def weights_from_json(obj: dict, topology: SkeletonTopology | None = None) -> EmbeddingWeights:
    version = obj.get("version")
    if version != WEIGHTS_JSON_VERSION:
        raise VersionMismatch(
            f"expected weights version {WEIGHTS_JSON_VERSION!r}, got {version!r}")
    weights = EmbeddingWeights(np.asarray(obj["per_joint"], dtype=float),
                               float(obj["m1"]), float(obj["m2"]))
    if topology is not None and weights.n_joints != topology.n_joints:
        raise TopologyMismatch(
            f"weights cover {weights.n_joints} joints, topology has "
            f"{topology.n_joints}")
    return weights


def load_weights_file(path, topology: SkeletonTopology | None = None) -> EmbeddingWeights:
    with open(path, "r", encoding="utf-8") as fh:
        return weights_from_json(json.load(fh), topology)


@dataclass
class FrameDifference:
    """Propagated per-joint embeddings for one teacher/student frame pair."""

    per_joint: np.ndarray   # (N, 3)
    scalar: float           # sqrt(sum of squared per-joint norms)


@dataclass
class SegmentEmbedding:
    """A motion segment's point in the reduced classification space."""

    vector: np.ndarray
    source_label: str | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=float).reshape(-1)

    @property
    def n(self) -> int:
        return self.vector.shape[0]


@dataclass
class ProjectionBasis:
    """Centered orthonormal basis mapping 6N descriptors to dimension n."""

    center: np.ndarray    # (6N,)
    columns: np.ndarray   # (6N, n), orthonormal columns

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(-1)
        self.columns = np.asarray(self.columns, dtype=float)
        if self.columns.ndim != 2 or self.columns.shape[0] != self.center.shape[0]:
            raise DimensionMismatch(
                f"basis columns {self.columns.shape} do not match center "
                f"dimension {self.center.shape[0]}")

    @property
    def n(self) -> int:
        return self.columns.shape[1]


def joint_log_diff(q_tea: np.ndarray, q_stu: np.ndarray) -> np.ndarray:
    """Log of the relative rotation taking the student joint to the teacher's.

    Zero iff the two rotations are identical; the norm is half the geodesic
    angle between them. Broadcasts over leading axes.
    """
    rel = quat_canonicalize(quat_mul(q_tea, quat_conj(q_stu)))
    return quat_log(rel)


def _propagate(d: np.ndarray, weights: EmbeddingWeights,
               parents: np.ndarray) -> np.ndarray:
    """Run the parent-propagation recursion over the last-but-one axis.

    d is (..., N, 3); parents are topologically ordered (parent < child).
    """
    out = np.empty_like(d)
    inv_m1 = 1.0 / weights.m1
    for i in range(d.shape[-2]):
        local = d[..., i, :] @ weights.per_joint[i].T * inv_m1
        p = parents[i]
        out[..., i, :] = local if p < 0 else local + weights.m2 * out[..., p, :]
    return out


def frame_difference(tea: Pose, stu: Pose, weights: EmbeddingWeights,
                     topology: SkeletonTopology) -> FrameDifference:
    n = topology.n_joints
    if tea.n_joints != n or stu.n_joints != n:
        raise TopologyMismatch(
            f"poses have {tea.n_joints}/{stu.n_joints} joints, topology has {n}")
    if weights.n_joints != n:
        raise TopologyMismatch(
            f"weights cover {weights.n_joints} joints, topology has {n}")
    d = joint_log_diff(tea.rotations, stu.rotations)
    per_joint = _propagate(d, weights, topology.parents)
    return FrameDifference(per_joint, float(np.linalg.norm(per_joint)))


def segment_descriptor(motion: MotionSequence, weights: EmbeddingWeights,
                       frame_count: int = DESCRIPTOR_FRAMES) -> np.ndarray:
    """Fixed-length raw descriptor of a motion segment.

    The segment is re-timed to ``frame_count`` frames; every frame is
    embedded against the all-identity rest pose; each joint contributes the
    temporal mean and standard deviation of its three embedding channels,
    giving a 6N vector. Time-reversal invariant by construction.
    """
    if weights.n_joints != motion.topology.n_joints:
        raise TopologyMismatch(
            f"weights cover {weights.n_joints} joints, topology has "
            f"{motion.topology.n_joints}")
    m = resample_to_frame_count(motion, frame_count)
    # against the rest pose the log difference is just the frame's own log
    d = quat_log(m.rotations)                       # (T, N, 3)
    per_joint = _propagate(d, weights, motion.topology.parents)
    mean = per_joint.mean(axis=0)                   # (N, 3)
    std = per_joint.std(axis=0)                     # (N, 3), population
    return np.concatenate([mean, std], axis=1).reshape(-1)


def project(descriptor: np.ndarray, basis: ProjectionBasis,
            source_label: str | None = None) -> SegmentEmbedding:
    descriptor = np.asarray(descriptor, dtype=float).reshape(-1)
    if descriptor.shape[0] != basis.center.shape[0]:
        raise DimensionMismatch(
            f"descriptor dimension {descriptor.shape[0]} does not match basis "
            f"dimension {basis.center.shape[0]}")
    return SegmentEmbedding(basis.columns.T @ (descriptor - basis.center), source_label)


def fit_projection_basis(descriptors: np.ndarray, n_max: int = 64) -> ProjectionBasis:
    """Fit the centered principal-component basis of a descriptor matrix.

    Dimension is min(n_max, numerical rank of the centered matrix), at
    least 1. Each basis vector's largest-magnitude entry is made positive,
    so the fit is deterministic.
    """
    descriptors = np.asarray(descriptors, dtype=float)
    if descriptors.ndim != 2 or descriptors.shape[0] == 0:
        raise ValueError(f"descriptor matrix must be (M, 6N), got {descriptors.shape}")
    center = descriptors.mean(axis=0)
    centered = descriptors - center
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s.size and s[0] > 0:
        tol = s[0] * max(centered.shape) * np.finfo(float).eps
        rank = int(np.sum(s > tol))
    else:
        rank = 0
    n = min(n_max, max(rank, 1))
    columns = vt[:n].T.copy()
    if rank == 0:
        columns = np.zeros((descriptors.shape[1], 1))
        columns[0, 0] = 1.0
    for k in range(columns.shape[1]):
        j = int(np.argmax(np.abs(columns[:, k])))
        if columns[j, k] < 0:
            columns[:, k] = -columns[:, k]
    return ProjectionBasis(center, columns)
