"""Synthetic two-color-blob datasets.

Self-contained stand-in corpus for pipeline tests and demos: "fire" images
carry a warm (red-dominant) blob on a dark noisy background, "nofire" images
a cool (blue-dominant) one. Trivially separable by construction, so any
working classifier must be able to drive training accuracy to 100% on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataio import CLASS_DIRS, Sample, encode_ppm


def _blob_image(side: int, warm: bool, rng: np.random.Generator) -> np.ndarray:
    img = rng.uniform(0.04, 0.12, (side, side, 3))
    cy, cx = rng.uniform(0.3, 0.7, 2) * side
    radius = rng.uniform(0.18, 0.32) * side
    yy, xx = np.mgrid[0:side, 0:side]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    if warm:
        color = (rng.uniform(0.85, 1.0), rng.uniform(0.3, 0.55), rng.uniform(0.0, 0.12))
    else:
        color = (rng.uniform(0.0, 0.12), rng.uniform(0.3, 0.55), rng.uniform(0.85, 1.0))
    for ch, value in enumerate(color):
        img[..., ch][mask] = value + rng.uniform(-0.04, 0.04, int(mask.sum()))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_blob_samples(count: int, input_side: int, seed: int = 0) -> list[Sample]:
    """``count`` samples, split evenly between the two classes, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    n_fire = count // 2
    samples = []
    for i in range(count):
        label = 0 if i < n_fire else 1
        cls = CLASS_DIRS[label]
        image = _blob_image(input_side, warm=(label == 0), rng=rng)
        samples.append(Sample(image=image, label=label, source_id=f"synthetic/{cls}/{i:04d}"))
    return samples


def write_blob_dataset(root: str | Path, count: int, input_side: int, seed: int = 0) -> Path:
    """Write a blob dataset as PPM files under ``root/fire`` and ``root/nofire``."""
    root = Path(root)
    for cls in CLASS_DIRS:
        (root / cls).mkdir(parents=True, exist_ok=True)
    for sample in make_blob_samples(count, input_side, seed):
        cls = CLASS_DIRS[sample.label]
        name = sample.source_id.rsplit("/", 1)[-1]
        data = encode_ppm(np.round(sample.image * 255.0).astype(np.uint8))
        (root / cls / f"{name}.ppm").write_bytes(data)
    return root
