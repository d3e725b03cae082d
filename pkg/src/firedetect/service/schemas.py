"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    model_loaded: bool


class ModelInfoResponse(BaseModel):
    input_side: int
    layer_count: int
    param_count: int
    class_labels: list[str]


class ClassifyRequest(BaseModel):
    image_b64: str = Field(description="base64-encoded binary P6 PPM image")
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    sequence: int = 0
    timestamp_ms: int = 0


class DetectionResponse(BaseModel):
    sequence: int
    timestamp_ms: int
    fire_probability: float
    is_fire: bool


class MetricsRequest(BaseModel):
    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)
    tn: int = Field(ge=0)


class MetricsResponse(BaseModel):
    accuracy: float
    false_positive_rate: float
    false_negative_rate: float
    recall: float
    precision: float
    f_measure: float
    degenerate: list[str]


class SmokeEventRequest(BaseModel):
    timestamp_ms: int
    adc_value: int = Field(ge=0, le=1023)


class FrameEventRequest(BaseModel):
    image_b64: str = Field(description="base64-encoded binary P6 PPM frame")
    timestamp_ms: int
    sequence: int = 0


class AlarmCommandModel(BaseModel):
    kind: str
    timestamp_ms: int


class AlertModel(BaseModel):
    event: str
    timestamp: str
    confidence: float
    snapshot_ref: str | None
    idempotency_key: str


class DeliveryModel(BaseModel):
    ok: bool
    attempts: int
    status: int | None = None
    error: str | None = None


class EventResponse(BaseModel):
    phase: str
    detection: DetectionResponse | None = None
    commands: list[AlarmCommandModel]
    alerts: list[AlertModel]
    deliveries: list[DeliveryModel]


class UnitStateResponse(BaseModel):
    phase: str
    consecutive_smoke: int
    consecutive_fire: int
    last_event_ms: int | None
