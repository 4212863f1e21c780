"""BVH motion-capture reading/writing, a JSON mirror format, and resampling.

The parser understands the common BVH dialect: a HIERARCHY section of
ROOT/JOINT blocks with OFFSET and CHANNELS lines (End Site blocks are read
and discarded, they carry no rotation), then a MOTION section with
``Frames:``, ``Frame Time:`` and one whitespace-separated row per frame.

Rotation channels are degrees and are composed intrinsically in the order
the CHANNELS line declares them. Offsets and root positions are scaled
into meters (``scale`` is meters per BVH unit; the 0.01 default suits the
usual centimeter-authored files). Position channels on non-root joints are
read and ignored; the motion model is rotation-driven.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BvhSyntaxError,
    ChannelMismatch,
    EmptyMotion,
    TopologyMismatch,
    VersionMismatch,
)
from .kinematics import (
    Pose,
    SkeletonTopology,
    quat_canonicalize,
    quat_from_axis_angle,
    quat_identity,
    quat_mul,
    quat_normalize,
    slerp,
)

MOTION_JSON_VERSION = "siglang-motion/1"

_AXIS_VECTORS = {
    "X": np.array([1.0, 0.0, 0.0]),
    "Y": np.array([0.0, 1.0, 0.0]),
    "Z": np.array([0.0, 0.0, 1.0]),
}


def euler_to_quat(angles_deg, order: str) -> np.ndarray:
    """Canonical unit quaternion from intrinsic Euler rotations.

    ``angles_deg[..., k]`` rotates about ``order[k]``; axes must be a
    permutation of XYZ (e.g. "ZXY" as declared by BVH CHANNELS lines).
    """
    order = order.upper()
    if sorted(order) != ["X", "Y", "Z"]:
        raise ValueError(f"Euler order must permute XYZ, got {order!r}")
    angles = np.radians(np.asarray(angles_deg, dtype=float))
    q = np.broadcast_to(quat_identity(), angles.shape[:-1] + (4,))
    for k, axis in enumerate(order):
        q = quat_mul(q, quat_from_axis_angle(_AXIS_VECTORS[axis], angles[..., k]))
    return quat_canonicalize(quat_normalize(q))


def quat_to_euler_zxy(q) -> tuple[float, float, float]:
    """Intrinsic Z-X-Y Euler angles in degrees (the writer's channel order)."""
    w, x, y, z = quat_normalize(q)
    m21 = 2.0 * (y * z + w * x)        # sin(b)
    sb = max(-1.0, min(1.0, m21))
    b = math.asin(sb)
    if abs(sb) < 1.0 - 1e-9:
        a = math.atan2(-2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z))
        c = math.atan2(-2.0 * (x * z - w * y), 1.0 - 2.0 * (x * x + y * y))
    else:
        # gimbal lock: fold the free rotation into the Z angle
        a = math.atan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (y * y + z * z))
        c = 0.0
    return math.degrees(a), math.degrees(b), math.degrees(c)


class MotionSequence:
    """Timed frames of per-joint local rotations plus root translation.

    Rotations are held as a canonical ``(T, N, 4)`` array and root
    positions as ``(T, 3)`` meters; both are read-only after construction.
    """

    def __init__(self, topology: SkeletonTopology, rotations, root_positions,
                 fps: float, label: str | None = None, normalize: bool = True):
        # normalize=False trusts already-canonical data (deserialization
        # paths), keeping round trips bit-exact
        rot = np.asarray(rotations, dtype=float)
        root = np.asarray(root_positions, dtype=float)
        if rot.ndim != 3 or rot.shape[2] != 4:
            raise ValueError(f"rotations must be (T, N, 4), got {rot.shape}")
        if rot.shape[0] == 0:
            raise EmptyMotion("motion has no frames")
        if rot.shape[1] != topology.n_joints:
            raise TopologyMismatch(
                f"{rot.shape[1]} rotation tracks for {topology.n_joints} joints"
            )
        if root.shape != (rot.shape[0], 3):
            raise ValueError(f"root positions must be (T, 3), got {root.shape}")
        if not (math.isfinite(fps) and fps > 0):
            raise ValueError(f"fps must be finite and positive, got {fps}")
        if normalize:
            rot = quat_canonicalize(quat_normalize(rot))
        else:
            rot = rot.copy()
        root = root.copy()
        rot.flags.writeable = False
        root.flags.writeable = False
        self.topology = topology
        self.rotations = rot
        self.root_positions = root
        self.fps = float(fps)
        self.label = label

    @classmethod
    def from_poses(cls, topology, poses, fps, label=None):
        rot = np.stack([p.rotations for p in poses])
        root = np.stack([p.root_translation for p in poses])
        return cls(topology, rot, root, fps, label)

    @property
    def n_frames(self) -> int:
        return self.rotations.shape[0]

    @property
    def duration(self) -> float:
        """Seconds spanned from the first to the last frame."""
        return (self.n_frames - 1) / self.fps

    def pose(self, t: int) -> Pose:
        return Pose(self.rotations[t].copy(), self.root_positions[t].copy())

    @property
    def frames(self) -> list[Pose]:
        return [self.pose(t) for t in range(self.n_frames)]

    def with_label(self, label: str | None) -> "MotionSequence":
        return MotionSequence(self.topology, self.rotations, self.root_positions,
                              self.fps, label)


# ---------------------------------------------------------------------------
# BVH parsing


@dataclass
class _JointSpec:
    name: str
    parent: int
    offset: np.ndarray
    channels: list[str] = field(default_factory=list)


class _LineStream:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.idx = 0

    def next(self):
        """Next nonblank line as (1-based lineno, tokens); None at EOF."""
        while self.idx < len(self.lines):
            self.idx += 1
            tokens = self.lines[self.idx - 1].split()
            if tokens:
                return self.idx, tokens
        return None

    def require(self, what):
        item = self.next()
        if item is None:
            raise BvhSyntaxError(f"unexpected end of file, expected {what}",
                                 line=len(self.lines))
        return item


def parse_bvh(text, scale: float = 0.01, label: str | None = None) -> MotionSequence:
    """Parse BVH text into a MotionSequence.

    ``scale`` converts BVH length units to meters. Raises BvhSyntaxError
    (with a line number), ChannelMismatch or EmptyMotion on bad input.
    """
    if hasattr(text, "read"):
        text = text.read()
    stream = _LineStream(text)
    lineno, tokens = stream.require("HIERARCHY")
    if tokens[0] != "HIERARCHY":
        raise BvhSyntaxError(f"expected HIERARCHY, got {tokens[0]!r}", line=lineno)

    joints: list[_JointSpec] = []

    def parse_block(header_lineno, header_tokens, parent):
        kind = header_tokens[0]
        if kind in ("ROOT", "JOINT"):
            if len(header_tokens) < 2:
                raise BvhSyntaxError(f"{kind} needs a name", line=header_lineno)
            spec = _JointSpec(name="_".join(header_tokens[1:]), parent=parent,
                              offset=np.zeros(3))
            joints.append(spec)
            index = len(joints) - 1
        elif kind == "End":
            spec = None
            index = parent
        else:
            raise BvhSyntaxError(f"unexpected token {kind!r}", line=header_lineno)

        lineno, tokens = stream.require("'{'")
        if tokens[0] != "{":
            raise BvhSyntaxError(f"expected {{ after {kind}, got {tokens[0]!r}",
                                 line=lineno)
        lineno, tokens = stream.require("OFFSET")
        if tokens[0] != "OFFSET" or len(tokens) != 4:
            raise BvhSyntaxError("expected 'OFFSET x y z'", line=lineno)
        try:
            offset = np.array([float(v) for v in tokens[1:4]])
        except ValueError:
            raise BvhSyntaxError("non-numeric OFFSET value", line=lineno) from None
        if spec is not None:
            spec.offset = offset

        while True:
            lineno, tokens = stream.require("'}' or child")
            if tokens[0] == "}":
                return
            if tokens[0] == "CHANNELS":
                if spec is None:
                    raise BvhSyntaxError("End Site cannot declare CHANNELS", line=lineno)
                try:
                    count = int(tokens[1])
                except (IndexError, ValueError):
                    raise BvhSyntaxError("bad CHANNELS count", line=lineno) from None
                if len(tokens) != 2 + count:
                    raise BvhSyntaxError(
                        f"CHANNELS declares {count} names but lists {len(tokens) - 2}",
                        line=lineno)
                spec.channels = tokens[2:]
                rot = [c for c in spec.channels if c.endswith("rotation")]
                if rot and sorted(c[0] for c in rot) != ["X", "Y", "Z"]:
                    raise BvhSyntaxError(
                        f"rotation channels must permute XYZ, got {rot}", line=lineno)
            elif tokens[0] in ("JOINT",) or tokens[:2] == ["End", "Site"]:
                parse_block(lineno, tokens, index)
            else:
                raise BvhSyntaxError(f"unexpected token {tokens[0]!r}", line=lineno)

    lineno, tokens = stream.require("ROOT")
    if tokens[0] != "ROOT":
        raise BvhSyntaxError(f"expected ROOT, got {tokens[0]!r}", line=lineno)
    parse_block(lineno, tokens, -1)

    lineno, tokens = stream.require("MOTION")
    if tokens[0] != "MOTION":
        raise BvhSyntaxError(f"expected MOTION, got {tokens[0]!r}", line=lineno)
    lineno, tokens = stream.require("Frames:")
    if tokens[0] != "Frames:" or len(tokens) != 2:
        raise BvhSyntaxError("expected 'Frames: <count>'", line=lineno)
    try:
        n_frames = int(tokens[1])
    except ValueError:
        raise BvhSyntaxError("non-integer frame count", line=lineno) from None
    lineno, tokens = stream.require("Frame Time:")
    if tokens[:2] != ["Frame", "Time:"] or len(tokens) != 3:
        raise BvhSyntaxError("expected 'Frame Time: <seconds>'", line=lineno)
    try:
        frame_time = float(tokens[2])
    except ValueError:
        raise BvhSyntaxError("non-numeric frame time", line=lineno) from None
    if not (math.isfinite(frame_time) and frame_time > 0):
        raise BvhSyntaxError(f"frame time must be positive, got {frame_time}",
                             line=lineno)

    if n_frames <= 0:
        raise EmptyMotion("BVH declares zero frames")

    total_channels = sum(len(j.channels) for j in joints)
    rows = np.empty((n_frames, total_channels))
    for r in range(n_frames):
        item = stream.next()
        if item is None:
            raise BvhSyntaxError(
                f"expected {n_frames} data rows, found {r}", line=len(stream.lines))
        lineno, tokens = item
        if len(tokens) != total_channels:
            raise ChannelMismatch(
                f"line {lineno}: row has {len(tokens)} values, "
                f"hierarchy declares {total_channels} channels")
        try:
            rows[r] = [float(v) for v in tokens]
        except ValueError:
            raise BvhSyntaxError("non-numeric motion value", line=lineno) from None

    topo = SkeletonTopology(
        [j.name for j in joints],
        [j.parent for j in joints],
        np.stack([j.offset for j in joints]) * scale,
    )

    n = len(joints)
    rotations = np.broadcast_to(quat_identity(), (n_frames, n, 4)).copy()
    root_positions = np.zeros((n_frames, 3))
    col = 0
    for i, j in enumerate(joints):
        rot_cols, rot_order = [], []
        pos_cols = []
        for k, ch in enumerate(j.channels):
            if ch.endswith("rotation"):
                rot_cols.append(col + k)
                rot_order.append(ch[0])
            elif ch.endswith("position"):
                pos_cols.append((ch[0], col + k))
        if rot_cols:
            angles = rows[:, rot_cols]
            rotations[:, i, :] = euler_to_quat(angles, "".join(rot_order))
        if i == 0 and pos_cols:
            axis_index = {"X": 0, "Y": 1, "Z": 2}
            for axis, c in pos_cols:
                root_positions[:, axis_index[axis]] = rows[:, c] * scale
        col += len(j.channels)

    return MotionSequence(topo, rotations, root_positions, 1.0 / frame_time, label)


def read_bvh_file(path, scale: float = 0.01, label: str | None = None) -> MotionSequence:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_bvh(fh.read(), scale=scale, label=label)


# ---------------------------------------------------------------------------
# BVH writing


def _fmt(value: float) -> str:
    return format(value + 0.0, ".10g")  # +0.0 folds -0.0 into 0.0


def write_bvh(motion: MotionSequence, scale: float = 0.01) -> str:
    """Serialize to BVH text with ZXY rotation channels.

    Offsets and root positions are emitted in BVH units (meters / scale),
    so a parse with the same scale round-trips. Leaf joints get a zero End
    Site to keep the file well-formed.
    """
    topo = motion.topology
    children = [[] for _ in range(topo.n_joints)]
    for i in range(1, topo.n_joints):
        children[topo.parents[i]].append(i)

    out = ["HIERARCHY"]

    def emit(i, depth, kind):
        pad = "\t" * depth
        out.append(f"{pad}{kind} {topo.joint_names[i]}")
        out.append(pad + "{")
        off = topo.rest_offsets[i] / scale
        out.append(f"{pad}\tOFFSET {_fmt(off[0])} {_fmt(off[1])} {_fmt(off[2])}")
        if i == 0:
            out.append(f"{pad}\tCHANNELS 6 Xposition Yposition Zposition "
                       "Zrotation Xrotation Yrotation")
        else:
            out.append(f"{pad}\tCHANNELS 3 Zrotation Xrotation Yrotation")
        if children[i]:
            for c in children[i]:
                emit(c, depth + 1, "JOINT")
        else:
            out.append(f"{pad}\tEnd Site")
            out.append(pad + "\t{")
            out.append(f"{pad}\t\tOFFSET 0 0 0")
            out.append(pad + "\t}")
        out.append(pad + "}")

    emit(0, 0, "ROOT")
    out.append("MOTION")
    out.append(f"Frames: {motion.n_frames}")
    out.append(f"Frame Time: {format(1.0 / motion.fps, '.17g')}")
    for t in range(motion.n_frames):
        values = []
        pos = motion.root_positions[t] / scale
        values.extend(_fmt(v) for v in pos)
        for i in range(topo.n_joints):
            zxy = quat_to_euler_zxy(motion.rotations[t, i])
            values.extend(_fmt(v) for v in zxy)
        out.append(" ".join(values))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# JSON mirror


def motion_to_json(motion: MotionSequence) -> dict:
    """Versioned JSON mirror of a motion (used for fixtures and the API)."""
    topo = motion.topology
    return {
        "version": MOTION_JSON_VERSION,
        "topology": {
            "names": list(topo.joint_names),
            "parents": [int(p) for p in topo.parents],
            "offsets": [[float(v) for v in row] for row in topo.rest_offsets],
        },
        "fps": float(motion.fps),
        "frames": [
            {
                "root_t": [float(v) for v in motion.root_positions[t]],
                "quats": [[float(v) for v in q] for q in motion.rotations[t]],
            }
            for t in range(motion.n_frames)
        ],
        "label": motion.label,
    }


def motion_from_json(obj: dict) -> MotionSequence:
    version = obj.get("version")
    if version != MOTION_JSON_VERSION:
        raise VersionMismatch(
            f"expected motion version {MOTION_JSON_VERSION!r}, got {version!r}")
    topo_obj = obj["topology"]
    topo = SkeletonTopology(topo_obj["names"], topo_obj["parents"], topo_obj["offsets"])
    frames = obj["frames"]
    if not frames:
        raise EmptyMotion("motion JSON has no frames")
    rot = np.array([f["quats"] for f in frames], dtype=float)
    root = np.array([f["root_t"] for f in frames], dtype=float)
    return MotionSequence(topo, rot, root, float(obj["fps"]), obj.get("label"))


def dumps_motion_json(motion: MotionSequence) -> str:
    return json.dumps(motion_to_json(motion), sort_keys=True) + "\n"


def loads_motion_json(text: str) -> MotionSequence:
    return motion_from_json(json.loads(text))


# ---------------------------------------------------------------------------
# Resampling


def resample_to_frame_count(motion: MotionSequence, count: int,
                            fps: float | None = None) -> MotionSequence:
    """Uniformly re-time the motion onto `count` frames spanning the same
    duration, SLERPing rotations and lerping the root between neighbors."""
    if count < 1:
        raise EmptyMotion(f"cannot resample to {count} frames")
    src = motion.n_frames
    out_fps = motion.fps if fps is None else float(fps)
    if src == 1 or count == 1:
        rot = np.repeat(motion.rotations[:1], count, axis=0)
        root = np.repeat(motion.root_positions[:1], count, axis=0)
        return MotionSequence(motion.topology, rot, root, out_fps, motion.label)

    positions = np.arange(count) * ((src - 1) / (count - 1))
    positions[-1] = src - 1
    i0 = np.minimum(positions.astype(int), src - 2)
    u = positions - i0

    a = motion.rotations[i0]         # (count, N, 4)
    b = motion.rotations[i0 + 1]
    rot = slerp(a, b, u[:, None])
    root = (1.0 - u)[:, None] * motion.root_positions[i0] \
        + u[:, None] * motion.root_positions[i0 + 1]
    return MotionSequence(motion.topology, rot, root, out_fps, motion.label)


def resample(motion: MotionSequence, target_fps: float) -> MotionSequence:
    """Resample to a target frame rate, preserving duration within one
    output frame period and pinning the first and last poses exactly."""
    if not (math.isfinite(target_fps) and target_fps > 0):
        raise ValueError(f"target fps must be positive, got {target_fps}")
    count = max(1, int(round(motion.duration * target_fps)) + 1)
    return resample_to_frame_count(motion, count, fps=target_fps)
