"""Operator command line: train, eval, infer, bench, unit, serve.

Thin argument-parsing layer over the core package. Exit codes are distinct
per failure family: 2 configuration, 3 data, 4 model file, 5 runtime.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import synthetic
from .alerts import DryRunNotifier, WebhookNotifier
from .dataio import encode_ppm, load_dataset
from .errors import (
    DatasetError,
    FireDetectError,
    FrameError,
    ModelFormatError,
    PpmError,
    TrainingError,
)
from .fusion import (
    DirectorySnapshotStore,
    FusionConfig,
    VisionEvent,
    merge_events,
    parse_sensor_stream,
    run_unit,
)
from .inference import (
    DEFAULT_FRAME_INTERVAL_MS,
    bench_fps,
    classify_frame,
    format_detection,
    frames_from_dir,
    frames_from_ppm_stream,
    run_stream,
)
from .modelio import load_model, save_model
from .network import build_classifier
from .training import TrainConfig, evaluate, export_curves, format_metrics, train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_RUNTIME = 5


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_net(path: str):
    try:
        return load_model(path)
    except FileNotFoundError:
        _fail(EXIT_MODEL, f"model file not found: {path}")
    except ModelFormatError as exc:
        _fail(EXIT_MODEL, f"invalid model file {path}: {exc}")


@click.group()
def main():
    """Fire detection toolkit: training, streaming inference, and the alert unit."""


@main.command("train")
@click.option("--data", type=click.Path(), help="dataset root with fire/ and nofire/ subdirs")
@click.option("--synthetic", "use_synthetic", is_flag=True, help="train on a bundled synthetic blob dataset")
@click.option("--synthetic-count", default=40, show_default=True)
@click.option("--model", "model_out", required=True, type=click.Path(), help="output model path")
@click.option("--input-side", default=64, show_default=True, type=click.IntRange(64, 128))
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch", default=32, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--optimizer", default="adam", type=click.Choice(["adam", "sgd"]), show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--val-fraction", default=0.3, show_default=True)
@click.option("--stop-at-train-acc", type=float, default=None, help="stop early once train accuracy reaches this value")
@click.option("--curves-out", type=click.Path(), default=None, help="write per-epoch curves CSV here")
def cmd_train(data, use_synthetic, synthetic_count, model_out, input_side, epochs, batch, lr,
              optimizer, seed, val_fraction, stop_at_train_acc, curves_out):
    """Train a classifier and write the model file, curves, and metrics."""
    if bool(data) == use_synthetic:
        _fail(EXIT_CONFIG, "pass exactly one of --data or --synthetic")
    try:
        if use_synthetic:
            samples = synthetic.make_blob_samples(synthetic_count, input_side, seed)
        else:
            if not Path(data).is_dir():
                _fail(EXIT_DATA, f"dataset directory does not exist: {data}")
            samples, manifest = load_dataset(data, input_side)
            if manifest.skipped:
                click.echo(f"skipped {len(manifest.skipped)} undecodable files", err=True)
    except (DatasetError, PpmError) as exc:
        _fail(EXIT_DATA, str(exc))

    config = TrainConfig(
        epochs=epochs,
        batch_size=batch,
        learning_rate=lr,
        optimizer=optimizer,
        seed=seed,
        val_fraction=val_fraction,
        stop_at_train_accuracy=stop_at_train_acc,
    )
    net = build_classifier(input_side, seed)
    try:
        net, curves = train(net, samples, config)
    except TrainingError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    except DatasetError as exc:
        _fail(EXIT_DATA, str(exc))
    save_model(net, model_out)
    if curves_out:
        export_curves(curves, curves_out)
    last = curves[-1]
    click.echo(f"model={model_out}")
    click.echo(f"epochs_run={last.epoch}")
    click.echo(f"train_acc={last.train_acc:.6f}")
    click.echo(f"val_acc={last.val_acc:.6f}")
    _, report = evaluate(net, samples)
    click.echo(format_metrics(report))


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path(), help="labeled directory with fire/ and nofire/")
def cmd_eval(model_path, data):
    """Evaluate a model on a labeled directory; print the six-row metrics block."""
    net = _load_net(model_path)
    try:
        samples, _ = load_dataset(data, net.config.input_side)
        counts, report = evaluate(net, samples)
    except (DatasetError, PpmError) as exc:
        _fail(EXIT_DATA, str(exc))
    click.echo(f"tp={counts.tp}")
    click.echo(f"fp={counts.fp}")
    click.echo(f"fn={counts.fn}")
    click.echo(f"tn={counts.tn}")
    click.echo(format_metrics(report))


@main.command("infer")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", type=click.Path(), default=None,
              help="directory of frames; omit to read concatenated PPM frames from stdin")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--frame-interval-ms", default=DEFAULT_FRAME_INTERVAL_MS, show_default=True)
def cmd_infer(model_path, data, threshold, frame_interval_ms):
    """Stream per-frame detections to stdout as sequence,timestamp_ms,probability,is_fire."""
    net = _load_net(model_path)
    if data is not None:
        if not Path(data).is_dir():
            _fail(EXIT_DATA, f"frame directory does not exist: {data}")
        source = frames_from_dir(data, frame_interval_ms)
    else:
        source = frames_from_ppm_stream(sys.stdin.buffer, frame_interval_ms)
    try:
        summary = run_stream(
            net, source, threshold, sink=lambda det: click.echo(format_detection(det))
        )
    except FrameError as exc:
        _fail(EXIT_DATA, str(exc))
    if summary.error:
        _fail(EXIT_RUNTIME, summary.error)


@main.command("bench")
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="model to time; omit for a freshly initialized one")
@click.option("--input-side", default=64, show_default=True, type=click.IntRange(64, 128))
@click.option("--frames", default=200, show_default=True)
@click.option("--include-decode", is_flag=True, help="decode PPM bytes inside the timed loop")
@click.option("--seed", default=0, show_default=True)
def cmd_bench(model_path, input_side, frames, include_decode, seed):
    """Measure end-to-end classification throughput on synthetic frames."""
    net = _load_net(model_path) if model_path else build_classifier(input_side, seed)
    if net.config.input_side != input_side and model_path:
        input_side = net.config.input_side
    try:
        report = bench_fps(net, input_side, frames, include_decode=include_decode, seed=seed)
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    click.echo(f"frames={report.frames}")
    click.echo(f"wall_ms={report.wall_ms:.3f}")
    click.echo(f"fps={report.fps:.3f}")
    click.echo(f"p50_ms={report.p50_ms:.3f}")
    click.echo(f"p95_ms={report.p95_ms:.3f}")
    click.echo(f"max_ms={report.max_ms:.3f}")
    click.echo(f"mode={report.mode}")


@main.command("unit")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", type=click.Path(), default=None, help="directory of camera frames")
@click.option("--sensor", type=click.Path(), default=None,
              help="smoke sensor file of timestamp_ms,adc_value lines; '-' for stdin")
@click.option("--endpoint", default=None, help="alert webhook URL")
@click.option("--dry-run", is_flag=True, help="collect alerts locally instead of POSTing")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--smoke-threshold", default=400, show_default=True)
@click.option("--debounce-n", default=3, show_default=True)
@click.option("--confirm-k", default=3, show_default=True)
@click.option("--cooldown-ms", default=60_000, show_default=True)
@click.option("--clear-ms", default=10_000, show_default=True)
@click.option("--frame-interval-ms", default=DEFAULT_FRAME_INTERVAL_MS, show_default=True)
@click.option("--snapshot-dir", type=click.Path(), default=None)
def cmd_unit(model_path, data, sensor, endpoint, dry_run, threshold, smoke_threshold,
             debounce_n, confirm_k, cooldown_ms, clear_ms, frame_interval_ms, snapshot_dir):
    """Run the full detection unit over scripted frame and sensor streams.

    Alarm commands go to stdout as ALARM lines; alerts go to the endpoint
    (or are echoed as ALERT lines under --dry-run).
    """
    if endpoint is None and not dry_run:
        _fail(EXIT_CONFIG, "pass --endpoint or --dry-run")
    if data is None and sensor is None:
        _fail(EXIT_CONFIG, "nothing to consume: pass --data and/or --sensor")
    net = _load_net(model_path)

    readings = []
    if sensor is not None:
        if sensor != "-" and not Path(sensor).is_file():
            _fail(EXIT_DATA, f"sensor file does not exist: {sensor}")
        lines = sys.stdin if sensor == "-" else open(sensor, "r")
        try:
            readings, issues = parse_sensor_stream(lines)
        finally:
            if sensor != "-":
                lines.close()
        for issue in issues:
            click.echo(f"sensor: {issue}", err=True)

    vision_events = []
    if data is not None:
        if not Path(data).is_dir():
            _fail(EXIT_DATA, f"frame directory does not exist: {data}")
        try:
            for frame in frames_from_dir(data, frame_interval_ms):
                det = classify_frame(net, frame, threshold)
                snapshot = encode_ppm(frame.image) if det.is_fire else None
                vision_events.append(VisionEvent(det, snapshot))
        except FrameError as exc:
            _fail(EXIT_DATA, str(exc))

    config = FusionConfig(
        smoke_threshold=smoke_threshold,
        smoke_debounce_n=debounce_n,
        fire_confirm_k=confirm_k,
        cooldown_ms=cooldown_ms,
        clear_ms=clear_ms,
    )
    notifier = DryRunNotifier() if dry_run else WebhookNotifier(endpoint)
    store = DirectorySnapshotStore(snapshot_dir) if snapshot_dir else None
    try:
        report = run_unit(merge_events(readings, vision_events), config, notifier, store)
    except FireDetectError as exc:
        _fail(EXIT_RUNTIME, str(exc))

    for command in report.commands:
        click.echo(f"ALARM {command.timestamp_ms} {command.kind.value}")
    if dry_run:
        for body in notifier.sent:
            click.echo(
                f"ALERT {body['event']} {body['timestamp']} confidence={body['confidence']:.4f} "
                f"snapshot_ref={body['snapshot_ref']} key={body['idempotency_key']}"
            )
    else:
        failures = [d for d in report.deliveries if not d.ok]
        for failure in failures:
            click.echo(f"alert delivery failed after {failure.attempts} attempts: {failure.error}", err=True)
    click.echo(f"events={len(readings) + len(vision_events)} commands={len(report.commands)} alerts={len(report.alerts)}")


@main.command("serve")
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--endpoint", default=None, help="alert webhook URL")
@click.option("--snapshot-dir", type=click.Path(), default=None)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--smoke-threshold", default=400, show_default=True)
@click.option("--debounce-n", default=3, show_default=True)
@click.option("--confirm-k", default=3, show_default=True)
@click.option("--cooldown-ms", default=60_000, show_default=True)
@click.option("--clear-ms", default=10_000, show_default=True)
def cmd_serve(model_path, host, port, endpoint, snapshot_dir, threshold, smoke_threshold,
              debounce_n, confirm_k, cooldown_ms, clear_ms):
    """Run the HTTP service (cameras and sensors POST events to it)."""
    import uvicorn

    from .service import ServiceSettings, create_app

    if model_path is not None:
        _load_net(model_path)  # fail fast with the model exit code
    settings = ServiceSettings(
        model_path=model_path,
        threshold=threshold,
        endpoint=endpoint,
        snapshot_dir=snapshot_dir,
        fusion=FusionConfig(
            smoke_threshold=smoke_threshold,
            smoke_debounce_n=debounce_n,
            fire_confirm_k=confirm_k,
            cooldown_ms=cooldown_ms,
            clear_ms=clear_ms,
        ),
    )
    uvicorn.run(create_app(settings), host=host, port=port)


if __name__ == "__main__":
    main()
