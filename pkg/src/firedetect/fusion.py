"""Detection-unit brain: fuse vision detections with smoke-sensor readings.

A single deterministic state machine consumes one merged, timestamp-ordered
event stream and decides when to sound which alarm and when to send an
alert. Time only advances with events; there is no wall clock, so replaying
an event log reproduces the identical command and alert sequence.

States and rules:

  Idle        -> SmokeAlert  after smoke_debounce_n consecutive readings at or
                             above smoke_threshold (debounce against transients)
  Idle/Smoke  -> FireAlert   after fire_confirm_k consecutive fire detections;
                             fire dominates smoke when both conditions hold
  any alert   -> Idle        once clear_ms passes with no triggering
                             observation for the active hazard (emits AllOff)

Smoke readings never raise the fire alarm and fire detections never raise
the smoke alarm: the two hazards drive distinct outputs. Re-alerts for the
same hazard are suppressed inside cooldown_ms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

from .errors import OutOfOrderEventError
from .inference import Detection


@dataclass(frozen=True)
class SmokeReading:
    timestamp_ms: int
    adc_value: int  # 10-bit ADC code

    def __post_init__(self):
        if not 0 <= self.adc_value <= 1023:
            raise ValueError(f"adc_value {self.adc_value} outside the 10-bit range 0-1023")


@dataclass(frozen=True)
class SmokeEvent:
    reading: SmokeReading

    @property
    def timestamp_ms(self) -> int:
        return self.reading.timestamp_ms


@dataclass(frozen=True)
class VisionEvent:
    detection: Detection
    snapshot: bytes | None = None  # encoded frame for the alert, if captured

    @property
    def timestamp_ms(self) -> int:
        return self.detection.timestamp_ms


UnitEvent = Union[SmokeEvent, VisionEvent]


class AlarmKind(Enum):
    FIRE_ALARM_ON = "FIRE_ALARM_ON"
    SMOKE_ALARM_ON = "SMOKE_ALARM_ON"
    ALL_OFF = "ALL_OFF"


@dataclass(frozen=True)
class AlarmCommand:
    kind: AlarmKind
    timestamp_ms: int


@dataclass(frozen=True)
class AlertMessage:
    event_kind: str  # "fire" or "smoke"
    timestamp: str  # ISO-8601
    confidence: float
    snapshot_ref: str | None = None


class Phase(Enum):
    IDLE = "idle"
    SMOKE_ALERT = "smoke_alert"
    FIRE_ALERT = "fire_alert"


@dataclass(frozen=True)
class FusionConfig:
    smoke_threshold: int = 400
    smoke_debounce_n: int = 3
    fire_confirm_k: int = 3
    cooldown_ms: int = 60_000
    clear_ms: int = 10_000  # quiet time before an active alert returns to Idle

    def __post_init__(self):
        for name in ("smoke_threshold", "smoke_debounce_n", "fire_confirm_k", "cooldown_ms", "clear_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class FusionState:
    phase: Phase = Phase.IDLE
    consecutive_smoke: int = 0
    consecutive_fire: int = 0
    last_smoke_trigger_ms: int | None = None
    last_fire_trigger_ms: int | None = None
    last_smoke_alert_ms: int | None = None
    last_fire_alert_ms: int | None = None
    last_event_ms: int | None = None
    last_fire_snapshot: bytes | None = None


def content_ref(data: bytes) -> str:
    """Content-addressed identifier: the SHA-256 hex digest of the bytes."""
    return hashlib.sha256(data).hexdigest()


def _iso(timestamp_ms: int) -> str:
    dt = datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc)
    return dt.isoformat(timespec="milliseconds")


def fusion_step(
    state: FusionState, event: UnitEvent, config: FusionConfig
) -> tuple[FusionState, list[AlarmCommand], list[AlertMessage]]:
    """Advance the state machine by one event.

    Pure function of (state, event, config). Events must arrive in
    nondecreasing timestamp order; an older timestamp raises
    OutOfOrderEventError.
    """
    ts = event.timestamp_ms
    if state.last_event_ms is not None and ts < state.last_event_ms:
        raise OutOfOrderEventError(
            f"event at {ts} ms arrived after one at {state.last_event_ms} ms"
        )

    commands: list[AlarmCommand] = []
    alerts: list[AlertMessage] = []
    updates: dict = {"last_event_ms": ts}
    phase = state.phase

    if isinstance(event, SmokeEvent):
        if event.reading.adc_value >= config.smoke_threshold:
            updates["consecutive_smoke"] = state.consecutive_smoke + 1
            updates["last_smoke_trigger_ms"] = ts
        else:
            updates["consecutive_smoke"] = 0
        smoke_hot = updates["consecutive_smoke"] >= config.smoke_debounce_n
        if smoke_hot and phase == Phase.IDLE:
            phase = Phase.SMOKE_ALERT
            commands.append(AlarmCommand(AlarmKind.SMOKE_ALARM_ON, ts))
            if _cooldown_open(state.last_smoke_alert_ms, ts, config):
                alerts.append(_smoke_alert(event.reading, ts))
                updates["last_smoke_alert_ms"] = ts
        elif smoke_hot and phase == Phase.SMOKE_ALERT:
            if _cooldown_open(state.last_smoke_alert_ms, ts, config):
                alerts.append(_smoke_alert(event.reading, ts))
                updates["last_smoke_alert_ms"] = ts
        # in FireAlert, fire dominates: smoke keeps counting but stays silent
    else:
        if event.detection.is_fire:
            updates["consecutive_fire"] = state.consecutive_fire + 1
            updates["last_fire_trigger_ms"] = ts
            if event.snapshot is not None:
                updates["last_fire_snapshot"] = event.snapshot
        else:
            updates["consecutive_fire"] = 0
        fire_hot = updates["consecutive_fire"] >= config.fire_confirm_k
        if fire_hot and phase != Phase.FIRE_ALERT:
            phase = Phase.FIRE_ALERT
            commands.append(AlarmCommand(AlarmKind.FIRE_ALARM_ON, ts))
            if _cooldown_open(state.last_fire_alert_ms, ts, config):
                snapshot = updates.get("last_fire_snapshot", state.last_fire_snapshot)
                alerts.append(_fire_alert(event.detection, ts, snapshot))
                updates["last_fire_alert_ms"] = ts
        elif fire_hot and phase == Phase.FIRE_ALERT:
            if _cooldown_open(state.last_fire_alert_ms, ts, config):
                snapshot = updates.get("last_fire_snapshot", state.last_fire_snapshot)
                alerts.append(_fire_alert(event.detection, ts, snapshot))
                updates["last_fire_alert_ms"] = ts

    # return to Idle after a sustained quiet period for the active hazard
    if phase == Phase.FIRE_ALERT:
        last_fire = updates.get("last_fire_trigger_ms", state.last_fire_trigger_ms)
        if last_fire is not None and ts - last_fire >= config.clear_ms:
            updates["consecutive_fire"] = 0
            last_smoke = updates.get("last_smoke_trigger_ms", state.last_smoke_trigger_ms)
            smoke_latched = (
                updates.get("consecutive_smoke", state.consecutive_smoke)
                >= config.smoke_debounce_n
                and last_smoke is not None
                and ts - last_smoke < config.clear_ms
            )
            if smoke_latched:
                phase = Phase.SMOKE_ALERT
                commands.append(AlarmCommand(AlarmKind.SMOKE_ALARM_ON, ts))
            else:
                phase = Phase.IDLE
                commands.append(AlarmCommand(AlarmKind.ALL_OFF, ts))
    elif phase == Phase.SMOKE_ALERT:
        last_smoke = updates.get("last_smoke_trigger_ms", state.last_smoke_trigger_ms)
        if last_smoke is not None and ts - last_smoke >= config.clear_ms:
            phase = Phase.IDLE
            updates["consecutive_smoke"] = 0
            commands.append(AlarmCommand(AlarmKind.ALL_OFF, ts))

    updates["phase"] = phase
    return replace(state, **updates), commands, alerts


def _cooldown_open(last_alert_ms: int | None, ts: int, config: FusionConfig) -> bool:
    return last_alert_ms is None or ts - last_alert_ms >= config.cooldown_ms


def _smoke_alert(reading: SmokeReading, ts: int) -> AlertMessage:
    return AlertMessage(
        event_kind="smoke",
        timestamp=_iso(ts),
        confidence=reading.adc_value / 1023.0,
        snapshot_ref=None,
    )


def _fire_alert(detection: Detection, ts: int, snapshot: bytes | None) -> AlertMessage:
    return AlertMessage(
        event_kind="fire",
        timestamp=_iso(ts),
        confidence=detection.fire_probability,
        snapshot_ref=content_ref(snapshot) if snapshot else None,
    )


def parse_sensor_stream(lines: Iterable[str]) -> tuple[list[SmokeReading], list[str]]:
    """Parse "timestamp_ms,adc_value" lines; malformed lines are skipped and reported."""
    readings: list[SmokeReading] = []
    issues: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            issues.append(f"line {lineno}: expected 'timestamp_ms,adc_value', got {line!r}")
            continue
        try:
            ts, adc = int(parts[0]), int(parts[1])
        except ValueError:
            issues.append(f"line {lineno}: non-integer field in {line!r}")
            continue
        try:
            readings.append(SmokeReading(ts, adc))
        except ValueError as exc:
            issues.append(f"line {lineno}: {exc}")
    return readings, issues


class DirectorySnapshotStore:
    """Content-addressed object store backed by a local directory.

    Keys are SHA-256 digests of the stored bytes, so uploads are idempotent:
    the same payload always lands at the same reference.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        ref = content_ref(data)
        path = self.root / ref
        if not path.exists():
            path.write_bytes(data)
        return ref

    def get(self, ref: str) -> bytes:
        return (self.root / ref).read_bytes()

    def __contains__(self, ref: str) -> bool:
        return (self.root / ref).exists()


def upload_snapshot(store, data: bytes) -> str:
    """Store image bytes, returning their stable content-addressed reference."""
    if not data:
        raise ValueError("refusing to upload an empty snapshot")
    return store.put(data)


def merge_events(
    smoke_readings: Iterable[SmokeReading], vision_events: Iterable[VisionEvent]
) -> list[UnitEvent]:
    """One timestamp-ordered stream; at equal timestamps smoke sorts first."""
    events: list[UnitEvent] = [SmokeEvent(r) for r in smoke_readings]
    events.extend(vision_events)
    return sorted(events, key=lambda e: (e.timestamp_ms, isinstance(e, VisionEvent)))


@dataclass
class UnitReport:
    commands: list[AlarmCommand]
    alerts: list[AlertMessage]
    deliveries: list
    final_state: FusionState


def run_unit(
    events: Iterable[UnitEvent],
    config: FusionConfig,
    notifier=None,
    store=None,
) -> UnitReport:
    """Fold an event stream through the state machine, dispatching alerts.

    Snapshot uploads and alert deliveries happen after each transition has
    committed; their failures are recorded but never mutate fusion state.
    """
    state = FusionState()
    all_commands: list[AlarmCommand] = []
    all_alerts: list[AlertMessage] = []
    deliveries: list = []
    for event in events:
        state, commands, alerts = fusion_step(state, event, config)
        all_commands.extend(commands)
        all_alerts.extend(alerts)
        for alert in alerts:
            if store is not None and alert.snapshot_ref and state.last_fire_snapshot:
                try:
                    upload_snapshot(store, state.last_fire_snapshot)
                except OSError:
                    pass  # alert still goes out, just without a resolvable ref
            if notifier is not None:
                deliveries.append(notifier.send(alert))
    return UnitReport(all_commands, all_alerts, deliveries, state)
