import struct

import numpy as np
import numpy.testing as npt
import pytest

from firedetect.errors import (
    BadMagicError,
    ChecksumError,
    FormatVersionError,
    TruncatedModelError,
)
from firedetect.modelio import load_model, save_model
from firedetect.network import EVAL, build_classifier, forward


@pytest.fixture()
def small_net():
    return build_classifier(24, seed=5)


def test_round_trip_bit_identical_outputs(tmp_path, small_net, rng):
    path = tmp_path / "model.fnet"
    save_model(small_net, path)
    loaded = load_model(path)
    assert loaded.param_count() == small_net.param_count()
    x = rng.random((2, 24, 24, 3)).astype(np.float32)
    original, _ = forward(small_net, x, EVAL)
    restored, _ = forward(loaded, x, EVAL)
    npt.assert_array_equal(original, restored)


def test_round_trip_preserves_config(tmp_path, small_net):
    path = tmp_path / "model.fnet"
    save_model(small_net, path)
    loaded = load_model(path)
    assert loaded.config.input_side == 24
    assert [s.kind for s in loaded.config.layers] == [s.kind for s in small_net.config.layers]
    assert [s.rate for s in loaded.config.layers] == pytest.approx(
        [s.rate for s in small_net.config.layers]
    )


def test_canonical_file_size(tmp_path):
    net = build_classifier(64, seed=0)
    path = tmp_path / "model.fnet"
    save_model(net, path)
    size = path.stat().st_size
    # 16-byte fixed header, then per-layer metadata, then 4 bytes per
    # parameter, then the 4-byte checksum
    metadata = 3 * 9 + 3 * 1 + 4 * 5 + 1 + 3 * 9
    assert size == 16 + metadata + 646_818 * 4 + 4
    assert abs(size / 1e6 - 2.59) < 0.01


def test_payload_corruption_detected(tmp_path, small_net):
    path = tmp_path / "model.fnet"
    save_model(small_net, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF  # one payload byte
    path.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_model(path)


def test_bad_magic(tmp_path, small_net):
    path = tmp_path / "model.fnet"
    save_model(small_net, path)
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"XNET"
    path.write_bytes(bytes(blob))
    with pytest.raises(BadMagicError):
        load_model(path)


def test_version_mismatch(tmp_path, small_net):
    path = tmp_path / "model.fnet"
    save_model(small_net, path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatVersionError):
        load_model(path)


def test_truncated_payload(tmp_path, small_net):
    path = tmp_path / "model.fnet"
    save_model(small_net, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(TruncatedModelError):
        load_model(path)


def test_error_types_are_distinct():
    kinds = {BadMagicError, FormatVersionError, TruncatedModelError, ChecksumError}
    assert len(kinds) == 4
