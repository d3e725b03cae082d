"""Streaming frame classification and throughput benchmarking.

Frames carry raw 8-bit RGB pixels plus a monotonic timestamp and a strictly
increasing sequence number. classify_frame is pure with respect to
(network, frame, threshold): resize, normalize, eval-mode forward, threshold
on the fire-class probability (>= rule, so a probability exactly at the
threshold counts as fire).
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, Iterable, Iterator

import numpy as np

from .dataio import decode_image_file, decode_ppm, encode_ppm, resize_bilinear
from .errors import FrameError
from .network import EVAL, Network, forward
from .training import FIRE_LABEL

DEFAULT_FRAME_INTERVAL_MS = 42  # ~24 fps pacing for sources without real timestamps


@dataclass
class Frame:
    image: np.ndarray  # uint8 [h, w, 3]
    timestamp_ms: int
    sequence: int


@dataclass
class Detection:
    sequence: int
    timestamp_ms: int
    fire_probability: float
    is_fire: bool


@dataclass
class StreamSummary:
    frames: int
    fire_frames: int
    wall_ms: float
    fps: float
    error: str | None = None


@dataclass
class BenchReport:
    frames: int
    wall_ms: float
    fps: float
    p50_ms: float
    p95_ms: float
    max_ms: float
    mode: str  # "synthetic" or "with_decode"


def classify_frame(net: Network, frame: Frame, threshold: float = 0.5) -> Detection:
    """Classify one frame; deterministic for identical inputs."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    img = np.asarray(frame.image)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise FrameError(f"malformed frame {frame.sequence}: image shape {img.shape}")
    resized = resize_bilinear(img, net.config.input_side) / 255.0
    probs, _ = forward(net, resized[None, ...], EVAL)
    p_fire = float(probs[0, FIRE_LABEL])
    return Detection(
        sequence=frame.sequence,
        timestamp_ms=frame.timestamp_ms,
        fire_probability=p_fire,
        is_fire=p_fire >= threshold,
    )


class KOfNSmoother:
    """Optional temporal smoothing: fire only when >= k of the last n raw decisions were fire."""

    def __init__(self, k: int, n: int):
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        self.k = k
        self.n = n
        self.history: list[bool] = []

    def update(self, raw_is_fire: bool) -> bool:
        self.history.append(raw_is_fire)
        if len(self.history) > self.n:
            self.history.pop(0)
        return sum(self.history) >= self.k


def run_stream(
    net: Network,
    source: Iterable[Frame],
    threshold: float = 0.5,
    sink: Callable[[Detection], None] | None = None,
    smoother: KOfNSmoother | None = None,
) -> StreamSummary:
    """Classify every frame from ``source`` in order, emitting to ``sink``.

    Exactly one Detection per frame, in sequence order. A source read failure
    terminates the stream and is reported in the partial summary.
    """
    frames = 0
    fire_frames = 0
    error = None
    last_sequence = None
    start = time.perf_counter()
    iterator = iter(source)
    while True:
        try:
            frame = next(iterator)
        except StopIteration:
            break
        except Exception as exc:  # partial summary on source failure
            error = f"source failure after {frames} frames: {exc}"
            break
        if last_sequence is not None and frame.sequence <= last_sequence:
            error = f"out-of-order sequence {frame.sequence} after {last_sequence}"
            break
        last_sequence = frame.sequence
        detection = classify_frame(net, frame, threshold)
        if smoother is not None:
            detection.is_fire = smoother.update(detection.is_fire)
        frames += 1
        fire_frames += int(detection.is_fire)
        if sink is not None:
            sink(detection)
    wall_ms = (time.perf_counter() - start) * 1000.0
    fps = frames / (wall_ms / 1000.0) if wall_ms > 0 else 0.0
    return StreamSummary(frames, fire_frames, wall_ms, fps, error)


def bench_fps(
    net: Network,
    input_side: int,
    n_frames: int = 200,
    warmup: int = 10,
    include_decode: bool = False,
    seed: int = 0,
) -> BenchReport:
    """Time end-to-end classify_frame over synthetic random frames.

    The headline mode excludes image decode; with ``include_decode`` each
    frame is a PPM byte blob decoded inside the timed region.
    """
    if n_frames < 100:
        raise ValueError(f"need at least 100 frames for a stable figure, got {n_frames}")
    rng = np.random.default_rng(seed)
    images = [
        rng.integers(0, 256, (input_side, input_side, 3), dtype=np.uint8) for _ in range(16)
    ]
    blobs = [encode_ppm(img) for img in images] if include_decode else None

    def run_one(i: int) -> Detection:
        j = i % len(images)
        img = decode_ppm(blobs[j]) if include_decode else images[j]
        return classify_frame(net, Frame(img, timestamp_ms=i, sequence=i))

    for i in range(max(warmup, 10)):
        run_one(i)

    latencies = np.empty(n_frames)
    start = time.perf_counter()
    for i in range(n_frames):
        t0 = time.perf_counter()
        run_one(i)
        latencies[i] = (time.perf_counter() - t0) * 1000.0
    wall_ms = (time.perf_counter() - start) * 1000.0
    return BenchReport(
        frames=n_frames,
        wall_ms=wall_ms,
        fps=n_frames / (wall_ms / 1000.0),
        p50_ms=float(np.percentile(latencies, 50)),
        p95_ms=float(np.percentile(latencies, 95)),
        max_ms=float(latencies.max()),
        mode="with_decode" if include_decode else "synthetic",
    )


def frames_from_dir(
    path: str | Path, interval_ms: int = DEFAULT_FRAME_INTERVAL_MS
) -> Iterator[Frame]:
    """Frames from a directory of image files, consumed in sorted path order.

    Files carry no capture times, so timestamps are synthesized at a fixed
    interval.
    """
    files = sorted(p for p in Path(path).iterdir() if p.is_file())
    for i, file in enumerate(files):
        try:
            image = decode_image_file(file)
        except Exception as exc:
            raise FrameError(f"cannot decode frame file {file}: {exc}") from exc
        yield Frame(image=image, timestamp_ms=i * interval_ms, sequence=i)


def frames_from_ppm_stream(
    stream: BinaryIO, interval_ms: int = DEFAULT_FRAME_INTERVAL_MS
) -> Iterator[Frame]:
    """Frames from a byte stream of concatenated binary P6 PPM images."""
    sequence = 0
    while True:
        header = _read_ppm_header(stream)
        if header is None:
            return
        width, height = header
        payload = stream.read(3 * width * height)
        if len(payload) < 3 * width * height:
            raise FrameError(
                f"truncated frame {sequence}: expected {3 * width * height} payload bytes"
            )
        image = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()
        yield Frame(image=image, timestamp_ms=sequence * interval_ms, sequence=sequence)
        sequence += 1


def _read_ppm_header(stream: BinaryIO) -> tuple[int, int] | None:
    """Incrementally read one P6 header; None at clean end of stream."""
    tokens: list[bytes] = []
    current = b""
    in_comment = False
    saw_content = False
    while len(tokens) < 4:
        c = stream.read(1)
        if not c:
            if not saw_content and not tokens and not current:
                return None  # clean end of stream (only trailing whitespace)
            raise FrameError("stream ended inside a frame header")
        if in_comment:
            if c in (b"\r", b"\n"):
                in_comment = False
            continue
        if c == b"#" and not current:
            in_comment = True
            saw_content = True
            continue
        if c in (b" ", b"\t", b"\r", b"\n"):
            if current:
                tokens.append(current)
                current = b""
            continue
        current += c
        saw_content = True
    if tokens[0] != b"P6":
        raise FrameError(f"bad frame magic {tokens[0]!r}, expected b'P6'")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise FrameError(f"non-numeric frame header fields: {tokens[1:4]}") from None
    if maxval != 255:
        raise FrameError(f"unsupported frame maxval {maxval}")
    return width, height


def format_detection(det: Detection) -> str:
    """Line record: sequence, timestamp_ms, fire_probability, is_fire."""
    return f"{det.sequence},{det.timestamp_ms},{det.fire_probability:.6f},{int(det.is_fire)}"
