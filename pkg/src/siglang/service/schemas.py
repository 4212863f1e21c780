"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, model_validator


class AssessRequest(BaseModel):
    """A student motion to score; supply exactly one of `bvh` or `motion`."""

    vocab: str
    bvh: str | None = None
    motion: dict | None = None     # the "siglang-motion/1" JSON mirror
    scale: float = 0.01            # meters per BVH unit, used with `bvh`

    @model_validator(mode="after")
    def _exactly_one_payload(self):
        if (self.bvh is None) == (self.motion is None):
            raise ValueError("provide exactly one of 'bvh' or 'motion'")
        return self


class ConfusionOut(BaseModel):
    distribution: dict[str, float]
    assigned: str
    C: float


class SmoothnessOut(BaseModel):
    d_s: float
    S: float


class AlignmentOut(BaseModel):
    D: float
    score: float
    path_len: int
    per_joint: dict[str, float]


class AssessmentOut(BaseModel):
    version: str
    vocab: str
    confusion: ConfusionOut
    smoothness: SmoothnessOut
    alignment: AlignmentOut
    composite: float
    worst_joints: list[str]


class ConvertRequest(BaseModel):
    """Format conversion; supply exactly one of `bvh` or `motion`."""

    bvh: str | None = None
    motion: dict | None = None
    scale: float = 0.01

    @model_validator(mode="after")
    def _exactly_one_payload(self):
        if (self.bvh is None) == (self.motion is None):
            raise ValueError("provide exactly one of 'bvh' or 'motion'")
        return self


class ConvertResponse(BaseModel):
    bvh: str | None = None
    motion: dict | None = None


class DatabaseInfo(BaseModel):
    fps: float
    joints: list[str]
    n: int
    labels: list[str]
    takes: int


class HealthOut(BaseModel):
    status: str
    vocab_count: int
