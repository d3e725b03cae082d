import numpy as np
import pytest

from firedetect.errors import OutOfOrderEventError
from firedetect.fusion import (
    AlarmKind,
    DirectorySnapshotStore,
    FusionConfig,
    FusionState,
    Phase,
    SmokeEvent,
    SmokeReading,
    VisionEvent,
    content_ref,
    fusion_step,
    merge_events,
    parse_sensor_stream,
    run_unit,
    upload_snapshot,
)
from firedetect.inference import Detection

CFG = FusionConfig(smoke_threshold=400, smoke_debounce_n=2, fire_confirm_k=2, cooldown_ms=5_000, clear_ms=2_000)


def smoke(ts, adc):
    return SmokeEvent(SmokeReading(ts, adc))


def fire_det(ts, seq=0, p=0.9, is_fire=True, snapshot=None):
    return VisionEvent(Detection(seq, ts, p, is_fire), snapshot)


def run_trace(events, config=CFG):
    state = FusionState()
    commands, alerts = [], []
    for event in events:
        state, c, a = fusion_step(state, event, config)
        commands.extend(c)
        alerts.extend(a)
    return state, commands, alerts


# ---------------------------------------------------------------------------
# transitions
# ---------------------------------------------------------------------------


def test_below_threshold_smoke_stays_idle():
    events = [smoke(t * 100, 300) for t in range(50)]
    state, commands, alerts = run_trace(events)
    assert state.phase == Phase.IDLE
    assert commands == []
    assert alerts == []


def test_smoke_debounce_triggers_once():
    state, commands, alerts = run_trace([smoke(0, 500), smoke(100, 500), smoke(200, 500)])
    assert state.phase == Phase.SMOKE_ALERT
    assert [c.kind for c in commands] == [AlarmKind.SMOKE_ALARM_ON]
    assert commands[0].timestamp_ms == 100  # second consecutive reading
    assert [a.event_kind for a in alerts] == ["smoke"]
    assert alerts[0].snapshot_ref is None
    assert 0 <= alerts[0].confidence <= 1


def test_single_spike_does_not_trigger():
    state, commands, _ = run_trace([smoke(0, 900), smoke(100, 100), smoke(200, 900), smoke(300, 100)])
    assert state.phase == Phase.IDLE
    assert commands == []


def test_fire_confirmation_and_snapshot():
    snap = b"jpeg-ish bytes"
    events = [fire_det(0, 0, snapshot=snap), fire_det(100, 1, snapshot=snap)]
    state, commands, alerts = run_trace(events)
    assert state.phase == Phase.FIRE_ALERT
    assert [c.kind for c in commands] == [AlarmKind.FIRE_ALARM_ON]
    assert len(alerts) == 1
    assert alerts[0].event_kind == "fire"
    assert alerts[0].snapshot_ref == content_ref(snap)
    assert alerts[0].confidence == pytest.approx(0.9)


def test_fire_dominates_smoke_alert():
    events = [
        smoke(0, 600),
        smoke(100, 600),  # smoke alert here
        fire_det(200, 0, snapshot=b"x"),
        fire_det(300, 1, snapshot=b"x"),  # fire takes over
    ]
    state, commands, alerts = run_trace(events)
    assert state.phase == Phase.FIRE_ALERT
    assert [c.kind for c in commands] == [AlarmKind.SMOKE_ALARM_ON, AlarmKind.FIRE_ALARM_ON]
    assert [a.event_kind for a in alerts] == ["smoke", "fire"]
    assert alerts[1].snapshot_ref == content_ref(b"x")


def test_smoke_alone_never_fires_fire_alarm():
    rng = np.random.default_rng(0)
    for trial in range(50):
        events = [smoke(t * 50, int(rng.integers(0, 1024))) for t in range(40)]
        _, commands, alerts = run_trace(events)
        assert all(c.kind != AlarmKind.FIRE_ALARM_ON for c in commands)
        assert all(a.event_kind != "fire" for a in alerts)


def test_vision_alone_never_fires_smoke_alarm():
    rng = np.random.default_rng(1)
    for trial in range(50):
        events = [fire_det(t * 50, t, is_fire=bool(rng.integers(0, 2))) for t in range(40)]
        _, commands, alerts = run_trace(events)
        assert all(c.kind != AlarmKind.SMOKE_ALARM_ON for c in commands)
        assert all(a.event_kind != "smoke" for a in alerts)


def test_nonconsecutive_fire_does_not_confirm():
    events = [fire_det(0, 0), fire_det(100, 1, is_fire=False), fire_det(200, 2)]
    state, commands, _ = run_trace(events)
    assert state.phase == Phase.IDLE
    assert commands == []


def test_cooldown_suppresses_repeat_alerts():
    # sustained smoke across 12 seconds with 5 s cooldown: alerts at trigger,
    # then one per elapsed cooldown window
    events = [smoke(t * 1000, 800) for t in range(13)]
    _, commands, alerts = run_trace(events)
    assert [c.kind for c in commands] == [AlarmKind.SMOKE_ALARM_ON]
    times = [a.timestamp for a in alerts]
    assert len(alerts) == 3  # t=1s, t=6s, t=11s
    for i in range(1, len(alerts)):
        assert times[i] > times[i - 1]


def test_clear_returns_to_idle_with_all_off():
    events = [smoke(0, 800), smoke(100, 800), smoke(5_000, 100)]
    state, commands, _ = run_trace(events)
    assert state.phase == Phase.IDLE
    assert [c.kind for c in commands] == [AlarmKind.SMOKE_ALARM_ON, AlarmKind.ALL_OFF]
    assert commands[-1].timestamp_ms == 5_000


def test_fire_clear_falls_back_to_latched_smoke():
    events = [
        smoke(0, 800),
        smoke(100, 800),
        fire_det(200, 0, snapshot=b"x"),
        fire_det(300, 1, snapshot=b"x"),
        smoke(2_400, 800),  # fire quiet for clear_ms, smoke still hot
    ]
    state, commands, _ = run_trace(events)
    assert state.phase == Phase.SMOKE_ALERT
    assert commands[-1].kind == AlarmKind.SMOKE_ALARM_ON


def test_replaying_event_log_reproduces_outputs():
    rng = np.random.default_rng(2)
    events = []
    ts = 0
    for i in range(200):
        ts += int(rng.integers(10, 400))
        if rng.random() < 0.5:
            events.append(smoke(ts, int(rng.integers(0, 1024))))
        else:
            events.append(fire_det(ts, i, is_fire=bool(rng.integers(0, 2)), snapshot=b"s"))
    first = run_trace(events)
    second = run_trace(events)
    assert first == second


def test_out_of_order_event_rejected():
    state = FusionState()
    state, _, _ = fusion_step(state, smoke(1000, 100), CFG)
    with pytest.raises(OutOfOrderEventError, match="500.*1000"):
        fusion_step(state, smoke(500, 100), CFG)


def test_equal_timestamps_allowed():
    state = FusionState()
    state, _, _ = fusion_step(state, smoke(1000, 100), CFG)
    fusion_step(state, smoke(1000, 100), CFG)


# ---------------------------------------------------------------------------
# sensor stream parsing
# ---------------------------------------------------------------------------


def test_parse_sensor_stream_basic():
    readings, issues = parse_sensor_stream(["1000,512"])
    assert readings == [SmokeReading(1000, 512)]
    assert issues == []


def test_parse_sensor_stream_out_of_range_skipped():
    readings, issues = parse_sensor_stream(["1000,2048"])
    assert readings == []
    assert len(issues) == 1
    assert "10-bit" in issues[0]


def test_parse_sensor_stream_empty_and_malformed():
    readings, issues = parse_sensor_stream([])
    assert readings == [] and issues == []
    readings, issues = parse_sensor_stream(["", "notanumber,5", "1,2,3", "200,300"])
    assert readings == [SmokeReading(200, 300)]
    assert len(issues) == 2


# ---------------------------------------------------------------------------
# snapshot store
# ---------------------------------------------------------------------------


def test_snapshot_store_content_addressing(tmp_path):
    store = DirectorySnapshotStore(tmp_path / "snaps")
    ref1 = upload_snapshot(store, b"same bytes")
    ref2 = upload_snapshot(store, b"same bytes")
    assert ref1 == ref2
    assert store.get(ref1) == b"same bytes"
    assert ref1 in store


def test_snapshot_store_rejects_empty(tmp_path):
    store = DirectorySnapshotStore(tmp_path / "snaps")
    with pytest.raises(ValueError, match="empty"):
        upload_snapshot(store, b"")


def test_merge_events_orders_by_timestamp_smoke_first():
    readings = [SmokeReading(100, 1), SmokeReading(300, 2)]
    visions = [fire_det(100, 0, is_fire=False), fire_det(200, 1, is_fire=False)]
    merged = merge_events(readings, visions)
    assert [e.timestamp_ms for e in merged] == [100, 100, 200, 300]
    assert isinstance(merged[0], SmokeEvent)
    assert isinstance(merged[1], VisionEvent)


# ---------------------------------------------------------------------------
# run_unit isolation
# ---------------------------------------------------------------------------


class FailingNotifier:
    def __init__(self):
        self.calls = 0

    def send(self, message):
        from firedetect.alerts import DeliveryResult

        self.calls += 1
        return DeliveryResult(ok=False, attempts=3, error="endpoint down")


def test_dispatch_failures_do_not_mutate_fusion_state(tmp_path):
    events = [smoke(0, 800), smoke(100, 800), fire_det(200, 0, snapshot=b"x"), fire_det(300, 1, snapshot=b"x")]
    failing = FailingNotifier()
    with_failures = run_unit(events, CFG, notifier=failing)
    silent = run_unit(events, CFG, notifier=None)
    assert failing.calls == 2
    assert with_failures.commands == silent.commands
    assert with_failures.alerts == silent.alerts
    assert with_failures.final_state == silent.final_state
    assert all(not d.ok for d in with_failures.deliveries)


def test_run_unit_uploads_snapshots(tmp_path):
    store = DirectorySnapshotStore(tmp_path / "snaps")
    events = [fire_det(0, 0, snapshot=b"frame"), fire_det(100, 1, snapshot=b"frame")]
    report = run_unit(events, CFG, store=store)
    ref = report.alerts[0].snapshot_ref
    assert ref is not None
    assert store.get(ref) == b"frame"
