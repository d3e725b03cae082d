"""Dataset ingestion: image decoding, resizing, normalization, augmentation.

A dataset is a directory with two class subdirectories, ``fire/`` and
``nofire/``. Files are consumed in sorted path order so loading is
deterministic regardless of filesystem enumeration. Binary P6 PPM is decoded
natively (bit-exact, no third-party decoder in the loop); other formats are
handed to Pillow as a convenience.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DatasetError, PpmError

CLASS_DIRS = ("fire", "nofire")


@dataclass
class Sample:
    """One labeled image: float32 ``[side, side, 3]`` with values in [0, 1]."""

    image: np.ndarray
    label: int
    source_id: str


@dataclass
class DatasetManifest:
    root: str
    files: dict[str, list[str]]
    counts: dict[str, int]
    skipped: list[tuple[str, str]]  # (path, reason)

    def report(self) -> str:
        lines = [f"root: {self.root}"]
        for cls in CLASS_DIRS:
            lines.append(f"{cls}: {self.counts.get(cls, 0)} images")
        lines.append(f"skipped: {len(self.skipped)}")
        for path, reason in self.skipped:
            lines.append(f"  {path}: {reason}")
        return "\n".join(lines)


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode binary P6 PPM with maxval 255 into a uint8 ``[h, w, 3]`` array.

    Header comments (``#`` to end of line) are allowed anywhere between
    tokens. Exactly one whitespace byte separates the maxval from the pixel
    payload.
    """

    def next_token(pos: int, what: str) -> tuple[bytes, int]:
        while pos < len(data):
            c = data[pos : pos + 1]
            if c in (b" ", b"\t", b"\r", b"\n"):
                pos += 1
            elif c == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\r", b"\n"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos : pos + 1] not in (b" ", b"\t", b"\r", b"\n"):
            pos += 1
        if start == pos:
            raise PpmError(f"truncated header while reading {what}")
        return data[start:pos], pos

    magic, pos = next_token(0, "magic")
    if magic != b"P6":
        raise PpmError(f"bad magic {magic!r}, expected b'P6'")
    fields = []
    for what in ("width", "height", "maxval"):
        token, pos = next_token(pos, what)
        try:
            fields.append(int(token))
        except ValueError:
            raise PpmError(f"non-numeric {what}: {token!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PpmError(f"non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise PpmError(f"unsupported maxval {maxval}, only 255 is accepted")
    if pos >= len(data):
        raise PpmError("truncated payload: no pixel data after header")
    pos += 1  # the single whitespace byte terminating the header
    expected = 3 * width * height
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise PpmError(f"truncated payload: expected {expected} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(image: np.ndarray) -> bytes:
    """Encode a uint8 ``[h, w, 3]`` array as binary P6 PPM."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise PpmError(f"encode_ppm expects [h, w, 3], got {img.shape}")
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def resize_bilinear(image: np.ndarray, out_side: int) -> np.ndarray:
    """Bilinear resize to ``out_side`` squared, returning float32.

    Sampling is at pixel centers (align-corners-false): the source coordinate
    for destination pixel d is (d + 0.5) * in/out - 0.5, with neighbor
    indices clamped to the edges. Accepts ``[h, w]`` or ``[h, w, c]``.
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    if img.ndim != 3:
        raise PpmError(f"resize_bilinear expects [h, w] or [h, w, c], got shape {image.shape}")
    src = img.astype(np.float64)
    in_h, in_w = src.shape[:2]

    def axis_coords(n_in: int, n_out: int):
        centers = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(centers).astype(np.int64)
        frac = centers - lo
        lo_c = np.clip(lo, 0, n_in - 1)
        hi_c = np.clip(lo + 1, 0, n_in - 1)
        return lo_c, hi_c, frac

    y0, y1, fy = axis_coords(in_h, out_side)
    x0, x1, fx = axis_coords(in_w, out_side)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    tl = src[np.ix_(y0, x0)]
    tr = src[np.ix_(y0, x1)]
    bl = src[np.ix_(y1, x0)]
    br = src[np.ix_(y1, x1)]
    out = (
        tl * (1.0 - fy) * (1.0 - fx)
        + tr * (1.0 - fy) * fx
        + bl * fy * (1.0 - fx)
        + br * fy * fx
    )
    out = out.astype(np.float32)
    return out[:, :, 0] if squeeze else out


def decode_image_file(path: Path) -> np.ndarray:
    """Decode one image file to uint8 RGB; PPM natively, everything else via Pillow."""
    if path.suffix.lower() == ".ppm":
        return decode_ppm(path.read_bytes())
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DatasetError(f"undecodable image: {exc}") from exc


def load_dataset(root: str | Path, input_side: int) -> tuple[list[Sample], DatasetManifest]:
    """Load the two-class image corpus under ``root``.

    Every image is decoded, bilinearly resized to ``input_side`` squared, and
    normalized to [0, 1] by dividing by 255. Undecodable files are excluded
    and reported in the manifest skip list. Raises DatasetError if a class
    directory is missing or yields zero decodable images.
    """
    root = Path(root)
    samples: list[Sample] = []
    files: dict[str, list[str]] = {}
    counts: dict[str, int] = {}
    skipped: list[tuple[str, str]] = []
    for label, cls in enumerate(CLASS_DIRS):
        cls_dir = root / cls
        if not cls_dir.is_dir():
            raise DatasetError(f"missing class directory: {cls_dir}")
        loaded = []
        for path in sorted(p for p in cls_dir.iterdir() if p.is_file()):
            try:
                raw = decode_image_file(path)
            except (PpmError, DatasetError, OSError) as exc:
                skipped.append((str(path), str(exc)))
                continue
            image = resize_bilinear(raw, input_side) / 255.0
            np.clip(image, 0.0, 1.0, out=image)
            samples.append(Sample(image=image, label=label, source_id=str(path)))
            loaded.append(str(path))
        if not loaded:
            raise DatasetError(f"no decodable images in class directory: {cls_dir}")
        files[cls] = loaded
        counts[cls] = len(loaded)
    return samples, DatasetManifest(str(root), files, counts, skipped)


def augment(sample: Sample, rng: np.random.Generator) -> Sample:
    """Randomized label-preserving augmentation.

    With independent 50% probabilities: horizontal flip, and a random crop
    covering 90-100% of the area, resized back to the original side.
    """
    image = sample.image
    if rng.random() < 0.5:
        image = image[:, ::-1, :].copy()
    if rng.random() < 0.5:
        side = image.shape[0]
        frac = math.sqrt(rng.uniform(0.9, 1.0))
        crop = max(1, int(round(side * frac)))
        if crop < side:
            y0 = int(rng.integers(0, side - crop + 1))
            x0 = int(rng.integers(0, side - crop + 1))
            image = resize_bilinear(image[y0 : y0 + crop, x0 : x0 + crop, :], side)
            np.clip(image, 0.0, 1.0, out=image)
    return Sample(image=image, label=sample.label, source_id=sample.source_id)
