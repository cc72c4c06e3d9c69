"""Binary checkpoint format: byte-level round trips, a hand-built fixture,
and corruption diagnostics with offsets."""

import json
import struct

import numpy as np
import pytest

from attnlink.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from attnlink.errors import FormatError


def _tensors(rng):
    return {
        "a.w": rng.normal(size=(3, 4)).astype(np.float32),
        "a.b": rng.normal(size=4).astype(np.float64),
        "scalar": np.float64(2.5).reshape(()),
    }


def test_save_load_save_byte_identical(tmp_path, rng):
    p1, p2 = tmp_path / "one.aal", tmp_path / "two.aal"
    save_checkpoint(p1, _tensors(rng), {"epoch": 3, "config": {"lr": 0.05}})
    tensors, meta = load_checkpoint(p1)
    save_checkpoint(p2, tensors, meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_values_and_meta(tmp_path, rng):
    path = tmp_path / "ckpt.aal"
    original = _tensors(rng)
    save_checkpoint(path, original, {"epoch": 7})
    tensors, meta = load_checkpoint(path)
    assert list(tensors) == list(original)
    for name in original:
        assert tensors[name].dtype == original[name].dtype
        np.testing.assert_array_equal(tensors[name], original[name])
    assert meta == {"epoch": 7}


def test_empty_tensor_list(tmp_path):
    path = tmp_path / "empty.aal"
    save_checkpoint(path, {}, {})
    raw = path.read_bytes()
    # magic + zero count + length-prefixed "{}"
    assert raw == MAGIC + struct.pack("<I", 0) + struct.pack("<I", 2) + b"{}"
    tensors, meta = load_checkpoint(path)
    assert tensors == {} and meta == {}


def test_hand_built_fixture(tmp_path):
    """A file assembled byte by byte parses to the expected tensor."""
    payload = np.array([1.5, -2.0, 0.25], dtype="<f4").tobytes()
    meta = json.dumps({"epoch": 1}, sort_keys=True, separators=(",", ":")).encode()
    raw = (MAGIC + struct.pack("<I", 1)
           + struct.pack("<H", 3) + b"x.w"
           + struct.pack("<BB", 0, 1) + struct.pack("<I", 3) + payload
           + struct.pack("<I", len(meta)) + meta)
    path = tmp_path / "fixture.aal"
    path.write_bytes(raw)
    tensors, loaded_meta = load_checkpoint(path)
    np.testing.assert_array_equal(tensors["x.w"], np.array([1.5, -2.0, 0.25], dtype=np.float32))
    assert loaded_meta == {"epoch": 1}


def test_bad_magic_offset_zero(tmp_path):
    path = tmp_path / "bad.aal"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 16)
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert exc.value.offset == 0


def test_truncated_payload_reports_offset(tmp_path, rng):
    path = tmp_path / "ok.aal"
    save_checkpoint(path, {"w": rng.normal(size=(4, 4))}, {})
    raw = path.read_bytes()
    trunc = tmp_path / "trunc.aal"
    trunc.write_bytes(raw[:30])
    with pytest.raises(FormatError) as exc:
        load_checkpoint(trunc)
    assert exc.value.offset is not None


def test_unknown_dtype_code(tmp_path):
    raw = (MAGIC + struct.pack("<I", 1)
           + struct.pack("<H", 1) + b"w"
           + struct.pack("<BB", 7, 0))
    path = tmp_path / "bad.aal"
    path.write_bytes(raw)
    with pytest.raises(FormatError, match="dtype code 7"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "ok.aal"
    save_checkpoint(path, {}, {})
    bad = tmp_path / "bad.aal"
    bad.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(FormatError, match="trailing"):
        load_checkpoint(bad)


def test_bad_json_config(tmp_path):
    raw = MAGIC + struct.pack("<I", 0) + struct.pack("<I", 3) + b"{{{"
    path = tmp_path / "bad.aal"
    path.write_bytes(raw)
    with pytest.raises(FormatError, match="JSON"):
        load_checkpoint(path)


def test_unsupported_dtype_on_save(tmp_path):
    with pytest.raises(FormatError):
        save_checkpoint(tmp_path / "x.aal", {"w": np.zeros(3, dtype=np.int32)}, {})
