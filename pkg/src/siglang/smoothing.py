"""Temporal smoothing of motion sequences and the smoothness score.

Each joint's rotation track is linearized into the tangent space at its
own temporal mean rotation, filtered channel-wise with a least-squares
polynomial (Savitzky-Golay) filter, and mapped back; the root translation
is filtered the same way. The linearization is single-valued as long as
the joint's rotations stay within a half-turn of their mean, which holds
comfortably for sign-language material.

Edge frames are produced by evaluating the polynomial fit of the last
window (scipy's ``interp`` mode) rather than by padding, so signals that
are polynomial in log space up to the filter order pass through unchanged
everywhere, boundaries included.

The smoothness score compares a sequence with its own smoothed version:
``d_s`` is the mean per-frame per-joint geodesic angle between the two and
the score is ``exp(-alpha * d_s)``, which is 1 exactly when the sequence
is already smooth and decays toward 0 as it gets noisier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .kinematics import (
    geodesic_angle,
    quat_canonicalize,
    quat_conj,
    quat_exp,
    quat_log,
    quat_mul,
)
from .motion_io import MotionSequence


@dataclass
class SmoothingConfig:
    window: int = 7        # odd, >= 3, frames
    poly_order: int = 3    # >= 1, < window
    alpha: float = 8.0     # score sharpness, 1/rad

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be an odd integer >= 3, got {self.window}")
        if not 1 <= self.poly_order < self.window:
            raise ValueError(
                f"poly_order must satisfy 1 <= order < window, got {self.poly_order}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class SmoothnessResult:
    smoothed: MotionSequence
    d_s: float
    score: float


def _mean_rotation(quats: np.ndarray) -> np.ndarray:
    """Normalized arithmetic mean of canonical quaternions (T, 4).

    Adequate while the track spans less than a half turn; falls back to
    the first frame if the mean degenerates.
    """
    total = quats.sum(axis=0)
    norm = np.linalg.norm(total)
    if norm < 1e-9:
        return quats[0].copy()
    return quat_canonicalize(total / norm)


def smooth_sequence(motion: MotionSequence,
                    cfg: SmoothingConfig | None = None) -> MotionSequence:
    """Low-pass the rotation tracks and root translation.

    Sequences shorter than the filter window are returned unchanged.
    """
    cfg = cfg or SmoothingConfig()
    if motion.n_frames < cfg.window:
        return motion

    rot = motion.rotations
    out = np.empty_like(rot)
    for j in range(rot.shape[1]):
        qm = _mean_rotation(rot[:, j])
        rel = quat_canonicalize(quat_mul(quat_conj(qm), rot[:, j]))
        logs = quat_log(rel)                                     # (T, 3)
        filtered = savgol_filter(logs, cfg.window, cfg.poly_order,
                                 axis=0, mode="interp")
        out[:, j] = quat_mul(qm, quat_exp(filtered))
    root = savgol_filter(motion.root_positions, cfg.window, cfg.poly_order,
                         axis=0, mode="interp")
    return MotionSequence(motion.topology, out, root, motion.fps, motion.label)


def smoothness(motion: MotionSequence,
               cfg: SmoothingConfig | None = None) -> SmoothnessResult:
    """Score how close the sequence is to its own smoothed idealization.

    Returns the smoothed sequence too, as the reference for correction
    display. A sequence shorter than the window scores 1 (identity
    smoothing).
    """
    cfg = cfg or SmoothingConfig()
    smoothed = smooth_sequence(motion, cfg)
    if smoothed is motion:
        return SmoothnessResult(motion, 0.0, 1.0)
    d_s = float(np.mean(geodesic_angle(motion.rotations, smoothed.rotations)))
    return SmoothnessResult(smoothed, d_s, float(np.exp(-cfg.alpha * d_s)))
