"""Build, persist and load the teacher reference database.

A database bundles everything assessment needs: the canonical topology and
frame rate, the resampled-and-smoothed teacher takes, their gradient
sequences and adaptive joint weights, the descriptor projection basis, the
per-vocabulary centroids, and each take's self scores.

Labels come from the ``<vocab>__<take>.bvh`` naming convention (a file
named without ``__`` is a single take of the vocabulary given by its
stem); a ``manifest.json`` mapping ``{"filename.bvh": "label"}`` in the
corpus directory overrides. Multiple takes of one label all contribute to
that label's centroid (the mean of their embeddings) and are all stored;
the first take in sorted filename order is the alignment reference.

The on-disk format is a JSON header followed by named, length-prefixed
little-endian float64 sections and a trailing CRC32. Building from the
same corpus bytes and configuration reproduces the file bit for bit.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFile,
    EmptyCorpus,
    SigLangError,
    TopologyMismatch,
    UnknownVocab,
    VersionMismatch,
)
from .kinematics import SkeletonTopology
from .motion_io import MotionSequence, read_bvh_file, resample
from .embedding import (
    EmbeddingWeights,
    ProjectionBasis,
    fit_projection_basis,
    project,
    segment_descriptor,
)
from .smoothing import SmoothingConfig, smooth_sequence, smoothness
from .assessment import (
    ClusterModel,
    GradientSequence,
    angular_velocity,
    class_distribution,
    joint_weights,
)

DB_VERSION = "siglang-db/1"


@dataclass
class BuildConfig:
    canonical_fps: float = 30.0
    n_max: int = 64
    scale: float = 0.01
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    descriptor_frames: int = 32
    temperature: float = 1.0


@dataclass
class TeacherTake:
    label: str
    take: str
    motion: MotionSequence
    gradients: GradientSequence
    dtw_weights: np.ndarray
    embedding: np.ndarray
    self_confusion: float
    self_smoothness: float


class ReferenceDatabase:
    def __init__(self, canonical_fps: float, topology: SkeletonTopology,
                 basis: ProjectionBasis, cluster_model: ClusterModel,
                 takes: list[TeacherTake], embed_weights: EmbeddingWeights,
                 smoothing_cfg: SmoothingConfig, descriptor_frames: int):
        self.canonical_fps = float(canonical_fps)
        self.topology = topology
        self.basis = basis
        self.cluster_model = cluster_model
        self.takes = list(takes)
        self.embed_weights = embed_weights
        self.smoothing = smoothing_cfg
        self.descriptor_frames = int(descriptor_frames)
        self._by_label: dict[str, list[TeacherTake]] = {}
        for take in self.takes:
            self._by_label.setdefault(take.label, []).append(take)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return self.topology.joint_names

    @property
    def labels(self) -> tuple[str, ...]:
        return self.cluster_model.labels

    @property
    def n(self) -> int:
        return self.basis.n

    def takes_for(self, label: str) -> list[TeacherTake]:
        if label not in self._by_label:
            raise UnknownVocab(f"no teacher reference for vocabulary {label!r}")
        return self._by_label[label]

    def entry(self, label: str) -> TeacherTake:
        """The alignment reference take for a label (first in build order)."""
        return self.takes_for(label)[0]


def _label_and_take(filename: str, manifest: dict[str, str]) -> tuple[str, str]:
    stem = Path(filename).stem
    if "__" in stem:
        label, take = stem.split("__", 1)
    else:
        label, take = stem, "0"
    if filename in manifest:
        label = str(manifest[filename])
    return label, take


def build(corpus_dir, cfg: BuildConfig | None = None,
          embed_weights: EmbeddingWeights | None = None) -> ReferenceDatabase:
    """Build a reference database from a directory of labeled BVH files.

    Deterministic for a fixed file set and configuration: files are taken
    in sorted name order and every downstream computation is pure.
    """
    cfg = cfg or BuildConfig()
    corpus = Path(corpus_dir)
    files = sorted(p for p in corpus.iterdir() if p.suffix.lower() == ".bvh") \
        if corpus.is_dir() else []
    if not files:
        raise EmptyCorpus(f"empty corpus: no .bvh files in {corpus_dir}")

    manifest_path = corpus / "manifest.json"
    manifest: dict[str, str] = {}
    if manifest_path.exists():
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = {str(k): str(v) for k, v in json.load(fh).items()}

    topology: SkeletonTopology | None = None
    motions: list[tuple[str, str, MotionSequence]] = []
    for path in files:
        try:
            raw = read_bvh_file(path, scale=cfg.scale)
        except SigLangError as exc:
            raise type(exc)(f"{path.name}: {exc}") from exc
        label, take = _label_and_take(path.name, manifest)
        if topology is None:
            topology = raw.topology
        elif raw.topology.joint_names != topology.joint_names:
            raise TopologyMismatch(
                f"{path.name}: joint names do not match the corpus topology")
        stored = smooth_sequence(
            resample(raw.with_label(label), cfg.canonical_fps), cfg.smoothing)
        motions.append((label, take, stored))

    weights = embed_weights if embed_weights is not None \
        else EmbeddingWeights.identity(topology.n_joints)

    descriptors = np.stack([
        segment_descriptor(m, weights, cfg.descriptor_frames)
        for _, _, m in motions
    ])
    basis = fit_projection_basis(descriptors, cfg.n_max)
    embeddings = [project(descriptors[i], basis, source_label=label).vector
                  for i, (label, _, _) in enumerate(motions)]

    labels = tuple(sorted({label for label, _, _ in motions}))
    centroids = np.stack([
        np.mean([e for e, (lab, _, _) in zip(embeddings, motions) if lab == label],
                axis=0)
        for label in labels
    ])
    model = ClusterModel(centroids, labels, cfg.temperature)

    takes = []
    for (label, take, motion), emb in zip(motions, embeddings):
        conf = class_distribution(
            project(segment_descriptor(motion, weights, cfg.descriptor_frames),
                    basis, source_label=label), model)
        smooth_score = smoothness(motion, cfg.smoothing).score
        takes.append(TeacherTake(
            label=label,
            take=take,
            motion=motion,
            gradients=angular_velocity(motion),
            dtw_weights=joint_weights(motion),
            embedding=emb,
            self_confusion=conf.confusion,
            self_smoothness=smooth_score,
        ))

    return ReferenceDatabase(cfg.canonical_fps, topology, basis, model, takes,
                             weights, cfg.smoothing, cfg.descriptor_frames)


# ---------------------------------------------------------------------------
# serialization


def _pack_section(name: str, array: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(array, dtype="<f8").tobytes()
    name_b = name.encode("utf-8")
    return struct.pack("<I", len(name_b)) + name_b \
        + struct.pack("<Q", len(payload)) + payload


def _db_to_bytes(db: ReferenceDatabase) -> bytes:
    header = {
        "version": DB_VERSION,
        "fps": db.canonical_fps,
        "joints": list(db.joint_names),
        "parents": [int(p) for p in db.topology.parents],
        "n": db.n,
        "labels": list(db.labels),
        "temperature": db.cluster_model.temperature,
        "m1": db.embed_weights.m1,
        "m2": db.embed_weights.m2,
        "smoothing": {
            "window": db.smoothing.window,
            "poly_order": db.smoothing.poly_order,
            "alpha": db.smoothing.alpha,
        },
        "descriptor_frames": db.descriptor_frames,
        "takes": [
            {
                "label": t.label,
                "take": t.take,
                "frames": t.motion.n_frames,
                "C": t.self_confusion,
                "S": t.self_smoothness,
            }
            for t in db.takes
        ],
    }
    header_b = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [struct.pack("<I", len(header_b)), header_b]
    parts.append(_pack_section("offsets", db.topology.rest_offsets))
    parts.append(_pack_section("basis.center", db.basis.center))
    parts.append(_pack_section("basis.columns", db.basis.columns))
    parts.append(_pack_section("centroids", db.cluster_model.centroids))
    parts.append(_pack_section("embed.per_joint", db.embed_weights.per_joint))
    for i, t in enumerate(db.takes):
        parts.append(_pack_section(f"take{i}.rot", t.motion.rotations))
        parts.append(_pack_section(f"take{i}.root", t.motion.root_positions))
        parts.append(_pack_section(f"take{i}.grad", t.gradients.values))
        parts.append(_pack_section(f"take{i}.weights", t.dtw_weights))
        parts.append(_pack_section(f"take{i}.emb", t.embedding))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save(db: ReferenceDatabase, path) -> None:
    Path(path).write_bytes(_db_to_bytes(db))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise CorruptFile("database file is truncated")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load(path) -> ReferenceDatabase:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise CorruptFile("database file is truncated")
    reader = _Reader(data[:-4])
    try:
        header_b = reader.take(reader.u32())
        header = json.loads(header_b.decode("utf-8"))
    except (CorruptFile, ValueError, UnicodeDecodeError):
        raise CorruptFile("unreadable database header") from None
    version = header.get("version")
    if version != DB_VERSION:
        raise VersionMismatch(
            f"expected database version {DB_VERSION!r}, got {version!r}")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFile("database checksum mismatch")

    sections: dict[str, np.ndarray] = {}
    while reader.pos < len(reader.data):
        name = reader.take(reader.u32()).decode("utf-8")
        payload = reader.take(reader.u64())
        sections[name] = np.frombuffer(payload, dtype="<f8")

    def section(name: str, shape) -> np.ndarray:
        if name not in sections:
            raise CorruptFile(f"missing database section {name!r}")
        arr = sections[name]
        if arr.size != int(np.prod(shape)):
            raise CorruptFile(f"section {name!r} has wrong size")
        return arr.reshape(shape).copy()

    joints = header["joints"]
    n_joints = len(joints)
    n = int(header["n"])
    labels = tuple(header["labels"])
    topology = SkeletonTopology(joints, header["parents"],
                                section("offsets", (n_joints, 3)))
    basis = ProjectionBasis(section("basis.center", (6 * n_joints,)),
                            section("basis.columns", (6 * n_joints, n)))
    model = ClusterModel(section("centroids", (len(labels), n)), labels,
                         float(header["temperature"]))
    weights = EmbeddingWeights(section("embed.per_joint", (n_joints, 3, 3)),
                               float(header["m1"]), float(header["m2"]))
    smoothing_cfg = SmoothingConfig(**header["smoothing"])
    fps = float(header["fps"])

    takes = []
    for i, meta in enumerate(header["takes"]):
        frames = int(meta["frames"])
        motion = MotionSequence(
            topology,
            section(f"take{i}.rot", (frames, n_joints, 4)),
            section(f"take{i}.root", (frames, 3)),
            fps, meta["label"], normalize=False)
        takes.append(TeacherTake(
            label=meta["label"],
            take=meta["take"],
            motion=motion,
            gradients=GradientSequence(
                section(f"take{i}.grad", (frames - 1, n_joints, 3)), fps),
            dtw_weights=section(f"take{i}.weights", (n_joints,)),
            embedding=section(f"take{i}.emb", (n,)),
            self_confusion=float(meta["C"]),
            self_smoothness=float(meta["S"]),
        ))

    return ReferenceDatabase(fps, topology, basis, model, takes, weights,
                             smoothing_cfg, int(header["descriptor_frames"]))
