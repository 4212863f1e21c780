"""Ranking statistics and the synthetic graded-corpus generator.

Ranks are descending (rank 1 = best score) with ties averaged, and the
Spearman coefficient is the Pearson correlation of the two rank vectors,
which handles ties exactly. The graded-corpus generator stands in for
panels of raters at desk scale: it degrades a teacher sequence with
seeded rotation noise and tempo jitter at increasing levels, so the noise
order is the ground-truth quality ranking.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, EmptyInput
from .kinematics import quat_from_axis_angle, quat_mul, slerp
from .motion_io import MotionSequence

# tempo jitter applied to every degraded take: local speed in [0.8, 1.2]
TIME_WARP_SPAN = 0.2
TIME_WARP_SEGMENTS = 4


@dataclass
class RankVector:
    ranks: np.ndarray    # tie-averaged, 1-based, rank 1 = highest score


def rank(scores) -> RankVector:
    """Descending tie-averaged ranks (rank 1 = best)."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise EmptyInput("cannot rank an empty score list")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    order = np.argsort(-s, kind="stable")
    ranks = np.empty(s.size)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return RankVector(ranks)


def spearman(a, b) -> float:
    """Spearman rank correlation: Pearson correlation of the rank vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"inputs must be equal-length 1-D arrays: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise DegenerateInput("need at least two observations")
    ra = rank(a).ranks
    rb = rank(b).ranks
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0:
        raise DegenerateInput("rank variance is zero (all values tied)")
    return float((da * db).sum() / denom)


@dataclass
class GradedStudent:
    sigma: float
    level: int
    take: int
    motion: MotionSequence


def _time_warp(motion: MotionSequence, rng: np.random.Generator) -> MotionSequence:
    """Re-time with piecewise speed factors in [1-span, 1+span], keeping the
    frame count and total duration."""
    t = motion.n_frames
    if t < 2:
        return motion
    factors = rng.uniform(1.0 - TIME_WARP_SPAN, 1.0 + TIME_WARP_SPAN,
                          TIME_WARP_SEGMENTS)
    knots = np.linspace(0.0, t - 1.0, TIME_WARP_SEGMENTS + 1)
    seg = np.diff(knots) * factors
    source_knots = np.concatenate([[0.0], np.cumsum(seg)])
    source_knots *= (t - 1.0) / source_knots[-1]
    out_positions = np.interp(np.arange(t, dtype=float), knots, source_knots)
    out_positions[0] = 0.0
    out_positions[-1] = t - 1.0

    i0 = np.minimum(out_positions.astype(int), t - 2)
    u = out_positions - i0
    rot = slerp(motion.rotations[i0], motion.rotations[i0 + 1], u[:, None])
    root = (1.0 - u)[:, None] * motion.root_positions[i0] \
        + u[:, None] * motion.root_positions[i0 + 1]
    return MotionSequence(motion.topology, rot, root, motion.fps, motion.label)


def graded_corpus(teacher: MotionSequence, levels, takes_per_level: int = 1,
                  seed: int = 0) -> list[GradedStudent]:
    """Synthetic students at increasing degradation levels.

    ``levels`` must start at 0 and strictly increase; the level-0 take is
    the teacher itself, untouched. Every other take gets seeded i.i.d.
    axis-angle noise (random axis, angle ~ N(0, sigma)) on every joint of
    every frame, plus seeded tempo jitter of up to +/-20%. Deterministic
    per seed.
    """
    levels = [float(s) for s in levels]
    if not levels or levels[0] != 0.0:
        raise ValueError("noise levels must start at 0")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"noise levels must strictly increase: {levels}")
    if takes_per_level < 1:
        raise ValueError("need at least one take per level")

    rng = np.random.default_rng(seed)
    out = []
    t, n = teacher.n_frames, teacher.topology.n_joints
    for level, sigma in enumerate(levels):
        for take in range(takes_per_level):
            if sigma == 0.0:
                out.append(GradedStudent(sigma, level, take, teacher))
                continue
            warped = _time_warp(teacher, rng)
            axes = rng.normal(size=(t, n, 3))
            norms = np.linalg.norm(axes, axis=2, keepdims=True)
            axes = np.where(norms < 1e-12, np.array([1.0, 0.0, 0.0]), axes / norms)
            angles = rng.normal(0.0, sigma, size=(t, n))
            noise = quat_from_axis_angle(axes, angles)
            rot = quat_mul(warped.rotations, noise)
            out.append(GradedStudent(sigma, level, take, MotionSequence(
                teacher.topology, rot, warped.root_positions, teacher.fps,
                teacher.label)))
    return out


def read_ratings_csv(source) -> dict[str, float]:
    """Read an external rating list: two columns ``id,score``, header required."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInput("ratings CSV is empty") from None
    if [h.strip().lower() for h in header] != ["id", "score"]:
        raise ValueError(f"ratings CSV must start with an 'id,score' header, got {header}")
    ratings = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 2:
            raise ValueError(f"malformed ratings row: {row}")
        ratings[row[0].strip()] = float(row[1])
    return ratings
