"""Pydantic request/response models of the HTTP API.

Images cross the wire either as raw PNG bodies (content negotiation per
endpoint) or as base64 PNG strings inside JSON.
"""

from __future__ import annotations

import base64
from typing import Optional

from pydantic import BaseModel, Field, field_validator


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


class HealthResponse(BaseModel):
    status: str
    generator_hash: Optional[str] = None
    detail: Optional[str] = None


class CreateSessionRequest(BaseModel):
    image_png: str = Field(description="base64-encoded RGB PNG at generator resolution")
    embed_steps: Optional[int] = Field(default=None, ge=0)


class SessionResponse(BaseModel):
    session_id: str
    reconstruction_png: str
    predicted_mask_png: str
    final_loss: float
    loss_trace_length: int
    latent_hash: str


class SessionInfo(BaseModel):
    session_id: str
    resolution: int
    latent_hash: str
    history: list[dict]
    applied_vectors: list[dict]
    busy: bool


class EditLambdas(BaseModel):
    rgb: float = 15.0
    ce: float = 1.0
    id: float = 10.0


class EditRequest(BaseModel):
    """Mask-conditioned edit launched as a background optimization job."""

    q_labels: list[int]
    buffer_px: int = 5
    mode: str = "learn-vector"
    scale: float = 1.0
    steps: Optional[int] = Field(default=None, ge=0)
    lambdas: EditLambdas = EditLambdas()
    mask_png: Optional[str] = Field(default=None,
                                    description="edited mask as base64 indexed PNG; "
                                                "defaults to the stored user mask")
    use_identity: bool = False
    save_vector_name: Optional[str] = None

    @field_validator("q_labels")
    @classmethod
    def _non_empty(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("q_labels must be non-empty")
        return v

    @field_validator("mode")
    @classmethod
    def _known_mode(cls, v: str) -> str:
        if v not in ("learn-vector", "from-scratch"):
            raise ValueError("mode must be 'learn-vector' or 'from-scratch'")
        return v


class JobSubmitted(BaseModel):
    job_id: str
    session_id: str
    status: str = "running"


class JobStatus(BaseModel):
    job_id: str
    status: str
    step: Optional[int] = None
    error: Optional[str] = None
    result: Optional[dict] = None


class ApplyRequest(BaseModel):
    vector: str
    scale: float = 1.0
    refine_steps: int = Field(default=0, ge=0)


class ApplyResponse(BaseModel):
    image_png: str
    mask_png: str
    latent_hash: str
    scale: float
    refine_steps: int
    loss_trace: list[float] = []


class VectorEntry(BaseModel):
    name: str
    label_set: list[int]
    generator_checkpoint_hash: str
    created_at: float
    notes: str
    compatible: Optional[bool] = None


class VectorCatalogResponse(BaseModel):
    entries: list[VectorEntry]
    warnings: list[str]


class BenchmarkRequest(BaseModel):
    vector: str
    scales: list[float] = [0.7, 1.0, 1.3, 1.5, 1.7]
    n_test: int = Field(default=8, ge=2)
    refinement_steps: list[int] = [0]
    seed: int = 100


class BenchmarkResponse(BaseModel):
    reports: list[dict]


class ErrorResponse(BaseModel):
    detail: str
