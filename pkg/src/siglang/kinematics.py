"""Quaternion algebra and forward kinematics over joint hierarchies.

Quaternions are ``float64`` numpy arrays laid out ``[w, x, y, z]`` and
combined with the Hamilton product. Every function broadcasts over leading
axes, so a ``(T, N, 4)`` stack of rotations goes through the same code path
as a single quaternion.

Two conventions hold everywhere in this package:

* the canonical representative of a rotation has ``w >= 0``; for a half
  turn (``w == 0``) the sign is fixed by making the first nonzero vector
  component positive, so every rotation has exactly one representative;
* ``quat_log`` uses the half-angle convention: it maps
  ``(cos(t/2), sin(t/2)*axis)`` to ``(t/2)*axis``, so the log of a relative
  rotation ``a * conj(b)`` has norm equal to *half* the geodesic angle
  between ``a`` and ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TopologyMismatch

# sin(theta/2) below this switches log/exp to their series branches
_SMALL_ANGLE = 1e-6


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_canonicalize(q: np.ndarray) -> np.ndarray:
    """Return the double-cover representative with w >= 0.

    When w == 0 exactly, the first nonzero component of (x, y, z) is made
    positive so half-turn representatives are deterministic.
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    sign = np.where(
        w > 0, 1.0,
        np.where(
            w < 0, -1.0,
            np.where(
                x != 0, np.sign(x),
                np.where(y != 0, np.sign(y), np.where(z < 0, -1.0, 1.0)),
            ),
        ),
    )
    return q * sign[..., None]


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b (apply b first, then a, when rotating vectors)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion(s) q, i.e. q v q^-1."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., 1:4]
    w = q[..., 0:1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Unit quaternion rotating by angle_rad about axis (normalized here)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle_rad, dtype=float)
    half = 0.5 * angle
    w = np.cos(half)
    xyz = np.sin(half)[..., None] * axis
    return np.concatenate([w[..., None], xyz], axis=-1)


def quat_log(q: np.ndarray) -> np.ndarray:
    """Log map under the half-angle convention.

    Maps (cos(t/2), sin(t/2)*axis) to (t/2)*axis. Canonicalizes internally,
    so the output norm is at most pi/2. Near the identity the first-order
    series log(q) ~ (x, y, z) avoids the 0/0 in axis recovery.
    """
    q = quat_canonicalize(quat_normalize(q))
    xyz = q[..., 1:4]
    s = np.linalg.norm(xyz, axis=-1)
    w = q[..., 0]
    half_angle = np.arctan2(s, w)
    safe = np.where(s < _SMALL_ANGLE, 1.0, s)
    factor = np.where(s < _SMALL_ANGLE, 1.0, half_angle / safe)
    return xyz * factor[..., None]


def quat_exp(v: np.ndarray) -> np.ndarray:
    """Inverse of quat_log: (t/2)*axis back to a canonical unit quaternion."""
    v = np.asarray(v, dtype=float)
    half = np.linalg.norm(v, axis=-1)
    w = np.cos(half)
    # sin(m)/m with its limit at m = 0
    safe = np.where(half < 1e-12, 1.0, half)
    factor = np.where(half < 1e-12, 1.0, np.sin(safe) / safe)
    q = np.concatenate([w[..., None], v * factor[..., None]], axis=-1)
    return quat_canonicalize(quat_normalize(q))


def slerp(a: np.ndarray, b: np.ndarray, t) -> np.ndarray:
    """Geodesic interpolation from a (t=0) to b (t=1) along the shortest arc.

    b is sign-flipped when dot(a, b) < 0 so the interpolation never takes
    the long way round. t may broadcast against the leading axes of a and b.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = np.asarray(t, dtype=float)
    dot = np.sum(a * b, axis=-1)
    b = np.where(dot[..., None] < 0, -b, b)
    dot = np.abs(dot)
    dot = np.clip(dot, -1.0, 1.0)

    omega = np.arccos(dot)
    sin_omega = np.sin(omega)
    near = sin_omega < 1e-9
    safe_sin = np.where(near, 1.0, sin_omega)
    wa = np.where(near, 1.0 - t, np.sin((1.0 - t) * omega) / safe_sin)
    wb = np.where(near, t, np.sin(t * omega) / safe_sin)
    out = wa[..., None] * a + wb[..., None] * b
    return quat_normalize(out)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation angle (radians, in [0, pi]) taking b to a."""
    rel = quat_mul(np.asarray(a, dtype=float), quat_conj(b))
    return 2.0 * np.linalg.norm(quat_log(rel), axis=-1)


class SkeletonTopology:
    """Joint tree with parent links and rest offsets (meters).

    Joints are stored so that ``parents[i] < i`` for every non-root joint;
    the constructor reindexes its input to restore that ordering, which
    lets forward kinematics run as a single forward pass. The root's
    parent entry is -1.
    """

    def __init__(self, joint_names, parents, rest_offsets):
        names = [str(n) for n in joint_names]
        parents = np.asarray(parents, dtype=int)
        offsets = np.asarray(rest_offsets, dtype=float)
        n = len(names)
        if parents.shape != (n,) or offsets.shape != (n, 3):
            raise TopologyMismatch(
                f"inconsistent topology arrays: {n} names, "
                f"{parents.shape} parents, {offsets.shape} offsets"
            )
        if n == 0:
            raise TopologyMismatch("topology has no joints")
        if not np.all(np.isfinite(offsets)):
            raise TopologyMismatch("non-finite rest offset")
        roots = np.flatnonzero(parents < 0)
        if len(roots) != 1:
            raise TopologyMismatch(f"expected exactly one root, found {len(roots)}")

        order = self._topological_order(parents, int(roots[0]))
        inverse = np.empty(n, dtype=int)
        inverse[order] = np.arange(n)

        self.joint_names = tuple(names[i] for i in order)
        new_parents = np.array(
            [-1 if parents[i] < 0 else inverse[parents[i]] for i in order], dtype=int
        )
        new_offsets = offsets[order].copy()
        new_parents.flags.writeable = False
        new_offsets.flags.writeable = False
        self.parents = new_parents
        self.rest_offsets = new_offsets

    @staticmethod
    def _topological_order(parents, root):
        n = len(parents)
        placed = np.zeros(n, dtype=bool)
        order = [root]
        placed[root] = True
        while len(order) < n:
            progressed = False
            for i in range(n):
                if not placed[i] and placed[parents[i]]:
                    order.append(i)
                    placed[i] = True
                    progressed = True
            if not progressed:
                raise TopologyMismatch("parent links contain a cycle")
        return order

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def rest_pose(self) -> "Pose":
        rot = np.tile(quat_identity(), (self.n_joints, 1))
        return Pose(rot, np.zeros(3))

    def __eq__(self, other):
        if not isinstance(other, SkeletonTopology):
            return NotImplemented
        return (
            self.joint_names == other.joint_names
            and np.array_equal(self.parents, other.parents)
            and np.array_equal(self.rest_offsets, other.rest_offsets)
        )

    def __repr__(self):
        return f"SkeletonTopology({self.n_joints} joints, root={self.joint_names[0]!r})"


@dataclass
class Pose:
    """Local joint rotations (one canonical unit quaternion per joint) plus
    root translation in meters."""

    rotations: np.ndarray
    root_translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotations, dtype=float)
        if rot.ndim != 2 or rot.shape[1] != 4:
            raise ValueError(f"rotations must be (N, 4), got {rot.shape}")
        self.rotations = quat_canonicalize(quat_normalize(rot))
        self.root_translation = np.asarray(self.root_translation, dtype=float).reshape(3)

    @property
    def n_joints(self) -> int:
        return self.rotations.shape[0]


def forward_kinematics(topo: SkeletonTopology, pose: Pose) -> np.ndarray:
    """Global joint positions (N, 3) in meters.

    The root sits at the pose's root translation; each child is placed by
    rotating its rest offset with the accumulated product of the rotations
    along the path from the root.
    """
    n = topo.n_joints
    if pose.rotations.shape[0] != n:
        raise TopologyMismatch(
            f"pose has {pose.rotations.shape[0]} rotations for {n} joints"
        )
    positions = np.empty((n, 3))
    global_rot = np.empty((n, 4))
    positions[0] = pose.root_translation
    global_rot[0] = pose.rotations[0]
    for i in range(1, n):
        p = topo.parents[i]
        positions[i] = positions[p] + quat_rotate(global_rot[p], topo.rest_offsets[i])
        global_rot[i] = quat_mul(global_rot[p], pose.rotations[i])
    return positions
