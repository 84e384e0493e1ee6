"""Pydantic request/response models for the service endpoints."""
from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class RunConfig(BaseModel):
    """Fields shared by pipeline commands; request models narrow it."""

    out_dir: str = "out"
    seed: int = 0
    template: str = "agnostic"


class IngestRequest(RunConfig):
    registry: str


class TranslateRequest(RunConfig):
    separator: str = "\t"


class AugmentRequest(RunConfig):
    variants_per_sample: int = Field(3, ge=1)
    max_positive_labels: int = Field(11, ge=1)
    max_negative_labels: int = Field(21, ge=0)
    universe_scope: str = "dataset"


class BalanceRequest(RunConfig):
    per_label_quota: int = Field(500, ge=1)
    exempt_tasks: list[str] = ["SA", "NLI"]


class EmitTrainRequest(RunConfig):
    stage: str = "finetune"
    source: str = "balance"


class GenPtPromptsRequest(RunConfig):
    passages: str
    kinds: str = "both"


class ParsePtResponsesRequest(RunConfig):
    responses: str
    max_negative_labels: int = Field(21, ge=0)


class BackendConfig(BaseModel):
    kind: str = "oracle"
    endpoint: Optional[str] = None
    path: str = "/v1/completions"
    prompt_field: str = "prompt"
    max_tokens_field: str = "max_tokens"
    temperature_field: str = "temperature"
    stop_field: str = "stop"
    response_text_path: str = "text"
    auth_env: str = "ATOMNLU_AUTH_TOKEN"
    timeout: float = 30.0
    retry_attempts: int = Field(3, ge=1)
    retry_backoff: float = Field(1.0, ge=0.0)
    command: list[str] = []
    scramble_fraction: float = Field(0.5, ge=0.0, le=1.0)
    max_new_tokens: int = Field(128, ge=1)
    beam_width: int = Field(4, ge=1)
    temperature: float = Field(1.0, gt=0.0)
    seed: int = 0


class EvalRequest(RunConfig):
    registry: str
    backend: BackendConfig = BackendConfig()
    sample_size: int = Field(48, ge=1)
    parallelism: int = Field(1, ge=1)
    role: str = "held_out"
    separator: str = "\t"


class ScoreRequest(RunConfig):
    pass


class ReportRequest(RunConfig):
    pass


class CommandError(BaseModel):
    code: str
    message: str


class CommandResponse(BaseModel):
    ok: bool
    command: str
    summary: dict[str, Any] = {}
    error: Optional[CommandError] = None


class RenderRequest(BaseModel):
    kind: str                      # "CLS" | "EXT"
    lang: str = "en"
    input_text: str
    candidates: list[str]
    template: str = "agnostic"


class RenderResponse(BaseModel):
    prompt: str


class ParseRequest(BaseModel):
    kind: str
    candidates: list[str]
    text: str
    template: str = "agnostic"


class ParseResponse(BaseModel):
    labels: list[str] = []
    extractions: dict[str, list[str]] = {}
    anomalies: list[dict[str, Any]] = []
