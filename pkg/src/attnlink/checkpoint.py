"""Binary checkpoint format.

Little-endian layout: magic "AALCKPT1"; u32 tensor count; per tensor a u16
name length, the UTF-8 name, a u8 dtype code (0 = f32, 1 = f64), a u8 rank,
rank u32 dims and the raw row-major payload; then one u32 length-prefixed
JSON metadata block (config echo and epoch). Saving a loaded checkpoint
reproduces the file byte for byte.
"""

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"AALCKPT1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def save_checkpoint(path, tensors, meta):
    """Write named arrays (insertion order preserved) plus a JSON metadata echo."""
    blob = bytearray(MAGIC)
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            raise FormatError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        blob += struct.pack("<H", len(raw)) + raw
        blob += struct.pack("<BB", _CODES[arr.dtype], arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype(arr.dtype.newbyteorder("<")).tobytes()
    cfg = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<I", len(cfg)) + cfg
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise FormatError(f"truncated while reading {what}", offset=self.pos)
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Read a checkpoint; returns (ordered dict of name -> array, metadata dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    r = _Reader(raw)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError(f"bad magic, expected {MAGIC!r}", offset=0)
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        code, rank = r.unpack("<BB", "dtype/rank")
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code} for tensor {name!r}", offset=r.pos - 2)
        dims = r.unpack(f"<{rank}I", "dims") if rank else ()
        dt = _DTYPES[code]
        n_items = int(np.prod(dims)) if rank else 1
        payload = r.take(n_items * dt.itemsize, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=dt).reshape(dims).copy()
    (cfg_len,) = r.unpack("<I", "config length")
    cfg_raw = r.take(cfg_len, "config block")
    if r.pos != len(raw):
        raise FormatError(f"{len(raw) - r.pos} trailing bytes after config block", offset=r.pos)
    try:
        meta = json.loads(cfg_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"config block is not valid JSON: {exc}",
                          offset=len(raw) - cfg_len) from exc
    return tensors, meta
