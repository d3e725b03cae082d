import numpy as np
import pytest
from click.testing import CliRunner

from firedetect.cli import EXIT_CONFIG, EXIT_DATA, EXIT_MODEL, main
from firedetect.dataio import encode_ppm
from firedetect.modelio import load_model, save_model
from firedetect.synthetic import make_blob_samples, write_blob_dataset
from firedetect.training import evaluate


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def stub_model_path(tmp_path, always_fire_net):
    path = tmp_path / "stub.fnet"
    save_model(always_fire_net, path)
    return str(path)


def _write_frames(root, count, rng, side=24):
    root.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        img = rng.integers(0, 256, (side, side, 3), dtype=np.uint8)
        (root / f"frame_{i:03d}.ppm").write_bytes(encode_ppm(img))
    return root


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def test_train_on_synthetic_reloads_and_overfits(runner, tmp_path):
    model = tmp_path / "blob.fnet"
    curves = tmp_path / "curves.csv"
    result = runner.invoke(
        main,
        [
            "train", "--synthetic", "--synthetic-count", "16", "--input-side", "64",
            "--model", str(model), "--epochs", "120", "--seed", "7",
            "--stop-at-train-acc", "1.0", "--curves-out", str(curves),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "train_acc=1.000000" in result.output
    assert "accuracy=" in result.output and "f_measure=" in result.output
    net = load_model(model)
    samples = make_blob_samples(16, 64, seed=7)
    from firedetect.training import split_train_val

    train_set, _ = split_train_val(samples, 0.3, seed=7)
    _, report = evaluate(net, train_set)
    assert report.accuracy == 1.0
    assert curves.read_text().startswith("epoch,train_loss,val_loss,train_acc,val_acc")


def test_train_missing_dataset_names_path(runner, tmp_path):
    result = runner.invoke(
        main, ["train", "--data", str(tmp_path / "nope"), "--model", str(tmp_path / "m.fnet")]
    )
    assert result.exit_code == EXIT_DATA
    assert "nope" in result.output


def test_train_requires_exactly_one_source(runner, tmp_path):
    result = runner.invoke(main, ["train", "--model", str(tmp_path / "m.fnet")])
    assert result.exit_code == EXIT_CONFIG


def test_train_seeded_runs_reproduce_curves(runner, tmp_path):
    outputs = []
    for run in range(2):
        curves = tmp_path / f"curves_{run}.csv"
        result = runner.invoke(
            main,
            [
                "train", "--synthetic", "--synthetic-count", "8", "--input-side", "64",
                "--model", str(tmp_path / f"m{run}.fnet"), "--epochs", "3", "--seed", "5",
                "--curves-out", str(curves),
            ],
        )
        assert result.exit_code == 0, result.output
        outputs.append(curves.read_bytes())
    assert outputs[0] == outputs[1]


def test_train_rejects_out_of_range_input_side(runner, tmp_path):
    result = runner.invoke(
        main,
        ["train", "--synthetic", "--input-side", "32", "--model", str(tmp_path / "m.fnet")],
    )
    assert result.exit_code == EXIT_CONFIG


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def test_eval_always_fire_stub_on_unbalanced_set(runner, tmp_path, stub_model_path, rng):
    root = tmp_path / "data"
    _write_frames(root / "fire", 3, rng)
    _write_frames(root / "nofire", 7, rng)
    result = runner.invoke(main, ["eval", "--model", stub_model_path, "--data", str(root)])
    assert result.exit_code == 0, result.output
    assert "recall=1.000000" in result.output
    assert "accuracy=0.300000" in result.output
    assert "false_positive_rate=1.000000" in result.output
    for key in ("accuracy", "false_positive_rate", "false_negative_rate", "recall", "precision", "f_measure"):
        assert f"{key}=" in result.output


def test_eval_empty_directory_fails(runner, tmp_path, stub_model_path):
    (tmp_path / "data" / "fire").mkdir(parents=True)
    (tmp_path / "data" / "nofire").mkdir(parents=True)
    result = runner.invoke(main, ["eval", "--model", stub_model_path, "--data", str(tmp_path / "data")])
    assert result.exit_code == EXIT_DATA


def test_eval_invalid_model_exit_code(runner, tmp_path, rng):
    bad = tmp_path / "bad.fnet"
    bad.write_bytes(b"not a model")
    root = tmp_path / "data"
    _write_frames(root / "fire", 1, rng)
    _write_frames(root / "nofire", 1, rng)
    result = runner.invoke(main, ["eval", "--model", str(bad), "--data", str(root)])
    assert result.exit_code == EXIT_MODEL


# ---------------------------------------------------------------------------
# infer / bench
# ---------------------------------------------------------------------------


def test_infer_directory_emits_one_line_per_frame(runner, tmp_path, stub_model_path, rng):
    frames = _write_frames(tmp_path / "frames", 5, rng)
    result = runner.invoke(main, ["infer", "--model", stub_model_path, "--data", str(frames)])
    assert result.exit_code == 0, result.output
    lines = result.output.strip().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("0,0,")
    assert lines[0].endswith(",1")  # stub model always says fire


def test_infer_reads_ppm_stream_from_stdin(runner, stub_model_path, rng):
    blob = b"".join(
        encode_ppm(rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)) for _ in range(3)
    )
    result = runner.invoke(main, ["infer", "--model", stub_model_path], input=blob)
    assert result.exit_code == 0, result.output
    assert len(result.output.strip().splitlines()) == 3


def test_bench_prints_report(runner, stub_model_path):
    result = runner.invoke(
        main, ["bench", "--model", stub_model_path, "--frames", "100"]
    )
    assert result.exit_code == 0, result.output
    fields = dict(line.split("=") for line in result.output.strip().splitlines())
    assert fields["frames"] == "100"
    assert float(fields["fps"]) > 0
    assert float(fields["p50_ms"]) <= float(fields["p95_ms"]) <= float(fields["max_ms"])


def test_bench_default_build_clears_realtime_floor(runner):
    result = runner.invoke(main, ["bench", "--frames", "200"])
    assert result.exit_code == 0, result.output
    fields = dict(line.split("=") for line in result.output.strip().splitlines())
    assert float(fields["fps"]) >= 24.0


def test_bench_rejects_tiny_frame_count(runner, stub_model_path):
    result = runner.invoke(main, ["bench", "--model", stub_model_path, "--frames", "5"])
    assert result.exit_code == EXIT_CONFIG


# ---------------------------------------------------------------------------
# unit
# ---------------------------------------------------------------------------


def test_unit_smoke_only_scenario(runner, tmp_path, stub_model_path):
    sensor = tmp_path / "sensor.txt"
    sensor.write_text("\n".join(f"{t * 100},700" for t in range(5)) + "\n")
    result = runner.invoke(
        main,
        ["unit", "--model", stub_model_path, "--sensor", str(sensor), "--dry-run",
         "--smoke-threshold", "400", "--debounce-n", "3"],
    )
    assert result.exit_code == 0, result.output
    assert "SMOKE_ALARM_ON" in result.output
    assert "FIRE_ALARM_ON" not in result.output
    assert "ALERT smoke" in result.output


def test_unit_fire_scenario_with_snapshots(runner, tmp_path, stub_model_path, rng):
    frames = _write_frames(tmp_path / "frames", 4, rng)
    snaps = tmp_path / "snaps"
    result = runner.invoke(
        main,
        ["unit", "--model", stub_model_path, "--data", str(frames), "--dry-run",
         "--confirm-k", "3", "--snapshot-dir", str(snaps)],
    )
    assert result.exit_code == 0, result.output
    assert "FIRE_ALARM_ON" in result.output
    assert "ALERT fire" in result.output
    assert "snapshot_ref=None" not in result.output
    assert any(snaps.iterdir())


def test_unit_requires_endpoint_or_dry_run(runner, stub_model_path, tmp_path):
    sensor = tmp_path / "sensor.txt"
    sensor.write_text("0,100\n")
    result = runner.invoke(main, ["unit", "--model", stub_model_path, "--sensor", str(sensor)])
    assert result.exit_code == EXIT_CONFIG


def test_unit_reports_sensor_issues_on_stderr(runner, tmp_path, stub_model_path):
    sensor = tmp_path / "sensor.txt"
    sensor.write_text("0,700\n100,700\n200,700\nbogus line\n300,9999\n")
    result = runner.invoke(
        main,
        ["unit", "--model", stub_model_path, "--sensor", str(sensor), "--dry-run"],
    )
    assert result.exit_code == 0, result.output
    assert "events=3" in result.output


def test_unit_missing_sensor_file(runner, stub_model_path, tmp_path):
    result = runner.invoke(
        main,
        ["unit", "--model", stub_model_path, "--sensor", str(tmp_path / "gone.txt"), "--dry-run"],
    )
    assert result.exit_code == EXIT_DATA


def test_serve_with_bad_model_exits_model_code(runner, tmp_path):
    bad = tmp_path / "bad.fnet"
    bad.write_bytes(b"junk")
    result = runner.invoke(main, ["serve", "--model", str(bad)])
    assert result.exit_code == EXIT_MODEL
