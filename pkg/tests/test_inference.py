import io

import numpy as np
import pytest

from firedetect.dataio import encode_ppm
from firedetect.errors import FrameError
from firedetect.inference import (
    Detection,
    Frame,
    KOfNSmoother,
    bench_fps,
    classify_frame,
    format_detection,
    frames_from_dir,
    frames_from_ppm_stream,
    run_stream,
)
from firedetect.network import build_classifier


def _frame(rng, side=24, seq=0, ts=0):
    return Frame(rng.integers(0, 256, (side, side, 3), dtype=np.uint8), ts, seq)


# ---------------------------------------------------------------------------
# classify_frame
# ---------------------------------------------------------------------------


def test_threshold_boundary_counts_as_fire(always_fire_net, rng):
    # the zeroed net emits exactly 0.5, and 0.5 >= 0.5 is fire
    det = classify_frame(always_fire_net, _frame(rng), threshold=0.5)
    assert det.fire_probability == 0.5
    assert det.is_fire


def test_classify_same_frame_twice_identical(rng):
    net = build_classifier(24, seed=0)
    frame = _frame(rng)
    a = classify_frame(net, frame)
    b = classify_frame(net, frame)
    assert a == b


def test_classify_resizes_arbitrary_frame_sizes(rng):
    net = build_classifier(24, seed=0)
    det = classify_frame(net, Frame(rng.integers(0, 256, (31, 57, 3), dtype=np.uint8), 5, 2))
    assert det.sequence == 2 and det.timestamp_ms == 5
    assert 0.0 <= det.fire_probability <= 1.0


def test_classify_rejects_malformed_frame(rng):
    net = build_classifier(24, seed=0)
    with pytest.raises(FrameError):
        classify_frame(net, Frame(np.zeros((24, 24), np.uint8), 0, 0))
    with pytest.raises(ValueError):
        classify_frame(net, _frame(rng), threshold=1.5)


def test_held_out_fire_blob_classifies_as_fire(blob_training):
    from firedetect.synthetic import make_blob_samples

    net, _, _ = blob_training
    held_out = make_blob_samples(2, 64, seed=999)  # unseen draw, same generator
    fire_sample = next(s for s in held_out if s.label == 0)
    frame = Frame(np.round(fire_sample.image * 255).astype(np.uint8), 0, 0)
    assert classify_frame(net, frame).is_fire


# ---------------------------------------------------------------------------
# run_stream
# ---------------------------------------------------------------------------


def test_stream_empty_source(always_fire_net):
    summary = run_stream(always_fire_net, [])
    assert summary.frames == 0
    assert summary.fire_frames == 0
    assert summary.error is None


def test_stream_conserves_frames_in_order(always_fire_net, rng):
    frames = [_frame(rng, seq=i, ts=i * 10) for i in range(7)]
    seen: list[Detection] = []
    summary = run_stream(always_fire_net, frames, sink=seen.append)
    assert summary.frames == 7
    assert [d.sequence for d in seen] == list(range(7))
    assert summary.fire_frames == 7  # the stub net always says fire


def test_stream_partial_summary_on_source_failure(always_fire_net, rng):
    def broken():
        yield _frame(rng, seq=0)
        yield _frame(rng, seq=1)
        raise OSError("camera unplugged")

    summary = run_stream(always_fire_net, broken())
    assert summary.frames == 2
    assert "camera unplugged" in summary.error


def test_stream_rejects_nonincreasing_sequence(always_fire_net, rng):
    frames = [_frame(rng, seq=3), _frame(rng, seq=3)]
    summary = run_stream(always_fire_net, frames)
    assert summary.frames == 1
    assert "out-of-order" in summary.error


def test_k_of_n_smoothing(always_fire_net, rng):
    smoother = KOfNSmoother(k=2, n=3)
    assert smoother.update(True) is False
    assert smoother.update(True) is True
    assert smoother.update(False) is True
    assert smoother.update(False) is False


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def test_bench_report_internally_consistent():
    net = build_classifier(24, seed=0)
    report = bench_fps(net, 24, n_frames=100, warmup=5)
    recomputed = report.frames / (report.wall_ms / 1000.0)
    assert abs(report.fps - recomputed) / recomputed < 0.02
    assert report.p50_ms <= report.p95_ms <= report.max_ms
    assert report.mode == "synthetic"


def test_bench_with_decode_mode():
    net = build_classifier(24, seed=0)
    report = bench_fps(net, 24, n_frames=100, include_decode=True)
    assert report.mode == "with_decode"
    assert report.fps > 0


def test_bench_monotone_work():
    fast = bench_fps(build_classifier(64, seed=0), 64, n_frames=100)
    slow = bench_fps(build_classifier(128, seed=0), 128, n_frames=100)
    assert slow.fps <= fast.fps


def test_bench_rejects_small_frame_counts():
    net = build_classifier(24, seed=0)
    with pytest.raises(ValueError, match="100"):
        bench_fps(net, 24, n_frames=10)


# ---------------------------------------------------------------------------
# frame sources
# ---------------------------------------------------------------------------


def test_frames_from_dir_sorted(tmp_path, rng):
    for name in ("c.ppm", "a.ppm", "b.ppm"):
        img = rng.integers(0, 256, (6, 6, 3), dtype=np.uint8)
        (tmp_path / name).write_bytes(encode_ppm(img))
    frames = list(frames_from_dir(tmp_path, interval_ms=10))
    assert [f.sequence for f in frames] == [0, 1, 2]
    assert [f.timestamp_ms for f in frames] == [0, 10, 20]


def test_frames_from_ppm_stream(rng):
    images = [rng.integers(0, 256, (5, 4, 3), dtype=np.uint8) for _ in range(3)]
    blob = b"".join(encode_ppm(img) for img in images)
    frames = list(frames_from_ppm_stream(io.BytesIO(blob), interval_ms=42))
    assert len(frames) == 3
    for i, (frame, img) in enumerate(zip(frames, images)):
        assert frame.sequence == i
        assert frame.timestamp_ms == i * 42
        assert (frame.image == img).all()


def test_frames_from_ppm_stream_truncated(rng):
    img = rng.integers(0, 256, (5, 4, 3), dtype=np.uint8)
    blob = encode_ppm(img)[:-7]
    with pytest.raises(FrameError, match="truncated"):
        list(frames_from_ppm_stream(io.BytesIO(blob)))


def test_frames_from_ppm_stream_trailing_whitespace(rng):
    img = rng.integers(0, 256, (3, 3, 3), dtype=np.uint8)
    frames = list(frames_from_ppm_stream(io.BytesIO(encode_ppm(img) + b"\n")))
    assert len(frames) == 1


def test_format_detection_line():
    det = Detection(sequence=3, timestamp_ms=126, fire_probability=0.981342, is_fire=True)
    assert format_detection(det) == "3,126,0.981342,1"
