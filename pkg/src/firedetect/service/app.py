"""HTTP service wrapping the detection core.

One long-running process serves multiple clients: cameras POST frames,
smoke sensors POST readings, and the embedded fusion state machine decides
when to sound alarms and push alerts to the configured webhook endpoint.
Event ingestion is serialized behind a lock, matching the single-consumer
contract of the state machine.
"""

from __future__ import annotations

import base64
import binascii
import os
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException

from ..alerts import DryRunNotifier, WebhookNotifier, alert_body
from ..dataio import decode_ppm
from ..errors import FireDetectError, FrameError, OutOfOrderEventError, PpmError
from ..fusion import (
    DirectorySnapshotStore,
    FusionConfig,
    FusionState,
    SmokeEvent,
    SmokeReading,
    VisionEvent,
    fusion_step,
    upload_snapshot,
)
from ..inference import Frame, classify_frame
from ..modelio import load_model
from ..network import Network
from ..training import ConfusionCounts, compute_metrics
from . import schemas


@dataclass
class ServiceSettings:
    model_path: str | None = None
    threshold: float = 0.5
    endpoint: str | None = None  # alert webhook; None collects alerts dry-run style
    snapshot_dir: str | None = None
    fusion: FusionConfig = field(default_factory=FusionConfig)

    @classmethod
    def from_env(cls) -> "ServiceSettings":
        fusion = FusionConfig(
            smoke_threshold=int(os.environ.get("FIREDETECT_SMOKE_THRESHOLD", 400)),
            smoke_debounce_n=int(os.environ.get("FIREDETECT_DEBOUNCE_N", 3)),
            fire_confirm_k=int(os.environ.get("FIREDETECT_CONFIRM_K", 3)),
            cooldown_ms=int(os.environ.get("FIREDETECT_COOLDOWN_MS", 60_000)),
            clear_ms=int(os.environ.get("FIREDETECT_CLEAR_MS", 10_000)),
        )
        return cls(
            model_path=os.environ.get("FIREDETECT_MODEL"),
            threshold=float(os.environ.get("FIREDETECT_THRESHOLD", 0.5)),
            endpoint=os.environ.get("FIREDETECT_ENDPOINT"),
            snapshot_dir=os.environ.get("FIREDETECT_SNAPSHOT_DIR"),
            fusion=fusion,
        )


class UnitRuntime:
    """Mutable unit state shared by request handlers."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.net: Network | None = load_model(settings.model_path) if settings.model_path else None
        self.state = FusionState()
        self.lock = threading.Lock()
        self.notifier = (
            WebhookNotifier(settings.endpoint) if settings.endpoint else DryRunNotifier()
        )
        self.store = (
            DirectorySnapshotStore(settings.snapshot_dir) if settings.snapshot_dir else None
        )

    def require_net(self) -> Network:
        if self.net is None:
            raise HTTPException(status_code=409, detail="no model loaded")
        return self.net

    def ingest(self, event) -> tuple[list, list, list]:
        with self.lock:
            try:
                self.state, commands, alerts = fusion_step(self.state, event, self.settings.fusion)
            except OutOfOrderEventError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            deliveries = []
            for alert in alerts:
                if self.store is not None and alert.snapshot_ref and self.state.last_fire_snapshot:
                    upload_snapshot(self.store, self.state.last_fire_snapshot)
                deliveries.append(self.notifier.send(alert))
        return commands, alerts, deliveries


def _decode_b64_ppm(image_b64: str):
    try:
        raw = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(status_code=422, detail=f"invalid base64 image: {exc}") from exc
    try:
        return decode_ppm(raw)
    except PpmError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _event_response(runtime, detection, commands, alerts, deliveries) -> schemas.EventResponse:
    det_model = None
    if detection is not None:
        det_model = schemas.DetectionResponse(
            sequence=detection.sequence,
            timestamp_ms=detection.timestamp_ms,
            fire_probability=detection.fire_probability,
            is_fire=detection.is_fire,
        )
    return schemas.EventResponse(
        phase=runtime.state.phase.value,
        detection=det_model,
        commands=[schemas.AlarmCommandModel(kind=c.kind.value, timestamp_ms=c.timestamp_ms) for c in commands],
        alerts=[schemas.AlertModel(**alert_body(a)) for a in alerts],
        deliveries=[
            schemas.DeliveryModel(ok=d.ok, attempts=d.attempts, status=d.status, error=d.error)
            for d in deliveries
        ],
    )


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    runtime = UnitRuntime(settings)
    app = FastAPI(title="firedetect", version="0.1.0")
    app.state.runtime = runtime

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", model_loaded=runtime.net is not None)

    @app.get("/model", response_model=schemas.ModelInfoResponse)
    def model_info():
        net = runtime.require_net()
        return schemas.ModelInfoResponse(
            input_side=net.config.input_side,
            layer_count=len(net.config.layers),
            param_count=net.param_count(),
            class_labels=list(net.config.class_labels),
        )

    @app.post("/classify", response_model=schemas.DetectionResponse)
    def classify(request: schemas.ClassifyRequest):
        net = runtime.require_net()
        image = _decode_b64_ppm(request.image_b64)
        frame = Frame(image=image, timestamp_ms=request.timestamp_ms, sequence=request.sequence)
        try:
            det = classify_frame(net, frame, request.threshold)
        except (FrameError, FireDetectError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.DetectionResponse(
            sequence=det.sequence,
            timestamp_ms=det.timestamp_ms,
            fire_probability=det.fire_probability,
            is_fire=det.is_fire,
        )

    @app.post("/metrics", response_model=schemas.MetricsResponse)
    def metrics(request: schemas.MetricsRequest):
        counts = ConfusionCounts(tp=request.tp, fp=request.fp, fn=request.fn, tn=request.tn)
        if counts.total == 0:
            raise HTTPException(status_code=422, detail="confusion counts sum to zero")
        report = compute_metrics(counts)
        return schemas.MetricsResponse(
            accuracy=report.accuracy,
            false_positive_rate=report.false_positive_rate,
            false_negative_rate=report.false_negative_rate,
            recall=report.recall,
            precision=report.precision,
            f_measure=report.f_measure,
            degenerate=list(report.degenerate),
        )

    @app.post("/events/smoke", response_model=schemas.EventResponse)
    def smoke_event(request: schemas.SmokeEventRequest):
        event = SmokeEvent(SmokeReading(request.timestamp_ms, request.adc_value))
        commands, alerts, deliveries = runtime.ingest(event)
        return _event_response(runtime, None, commands, alerts, deliveries)

    @app.post("/events/frame", response_model=schemas.EventResponse)
    def frame_event(request: schemas.FrameEventRequest):
        net = runtime.require_net()
        image = _decode_b64_ppm(request.image_b64)
        frame = Frame(image=image, timestamp_ms=request.timestamp_ms, sequence=request.sequence)
        det = classify_frame(net, frame, runtime.settings.threshold)
        snapshot = base64.b64decode(request.image_b64) if det.is_fire else None
        commands, alerts, deliveries = runtime.ingest(VisionEvent(det, snapshot))
        return _event_response(runtime, det, commands, alerts, deliveries)

    @app.get("/unit/state", response_model=schemas.UnitStateResponse)
    def unit_state():
        s = runtime.state
        return schemas.UnitStateResponse(
            phase=s.phase.value,
            consecutive_smoke=s.consecutive_smoke,
            consecutive_fire=s.consecutive_fire,
            last_event_ms=s.last_event_ms,
        )

    return app
