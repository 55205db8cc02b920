"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SAATCKPT"  u32 version
    u32 n, n bytes of UTF-8 "key=value" lines (model config)
    u32 count, then per parameter:
        u32 name_len, name, u32 rank, rank x u32 extents, u64 byte offset
    payload: float32 values, parameters back to back in manifest order
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpointError, ShapeMismatchError
from .model import SAAT, ModelConfig, build

MAGIC = b"SAATCKPT"
VERSION = 1


def encode(model: SAAT) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    cfg = "\n".join(model.config.to_lines()).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    params = list(model.named_parameters())
    buf.write(struct.pack("<I", len(params)))
    offset = 0
    for name, t in params:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(struct.pack("<Q", offset))
        offset += t.size * 4
    for _, t in params:
        buf.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return buf.getvalue()


def save(model: SAAT, path) -> None:
    Path(path).write_bytes(encode(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpointError(
                f"corrupt checkpoint: truncated at byte {self.pos} (need {n} more, have {len(self.data) - self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes):
    """Parse into (config, manifest, payload) where manifest is [(name, shape, offset)]."""
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpointError("corrupt checkpoint: bad magic")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CorruptCheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (n,) = r.unpack("<I")
    try:
        text = r.take(n).decode("utf-8")
    except UnicodeDecodeError as e:
        raise CorruptCheckpointError(f"corrupt checkpoint: config block is not UTF-8 ({e})") from None
    try:
        values = dict(line.split("=", 1) for line in text.splitlines() if line)
    except ValueError:
        raise CorruptCheckpointError("corrupt checkpoint: malformed config block") from None
    config = ModelConfig.from_mapping(values)
    (count,) = r.unpack("<I")
    manifest = []
    expected = 0
    for _ in range(count):
        (ln,) = r.unpack("<I")
        name = r.take(ln).decode("utf-8")
        (rank,) = r.unpack("<I")
        shape = r.unpack(f"<{rank}I")
        (offset,) = r.unpack("<Q")
        if offset != expected:
            raise CorruptCheckpointError(f"corrupt checkpoint: offset of {name} is {offset}, expected {expected}")
        expected += int(np.prod(shape)) * 4
        manifest.append((name, tuple(shape), offset))
    payload = data[r.pos:]
    if len(payload) != expected:
        raise CorruptCheckpointError(
            f"corrupt checkpoint: payload has {len(payload)} bytes, manifest needs {expected}")
    return config, manifest, payload


def _check_manifest(model: SAAT, manifest) -> None:
    params = list(model.named_parameters())
    for i, (name, shape, _) in enumerate(manifest):
        if i >= len(params):
            raise ShapeMismatchError(f"checkpoint has extra parameter {name} {shape}")
        pname, t = params[i]
        if pname != name or t.shape != shape:
            raise ShapeMismatchError(
                f"parameter mismatch at #{i}: checkpoint {name} {shape} vs model {pname} {t.shape}")
    if len(params) > len(manifest):
        pname, t = params[len(manifest)]
        raise ShapeMismatchError(f"checkpoint is missing parameter {pname} {t.shape}")


def load_into(model: SAAT, path) -> SAAT:
    _, manifest, payload = decode(Path(path).read_bytes())
    _check_manifest(model, manifest)
    for (name, shape, offset), (_, t) in zip(manifest, model.named_parameters()):
        n = int(np.prod(shape))
        vals = np.frombuffer(payload, dtype="<f4", count=n, offset=offset).reshape(shape)
        t.data = vals.astype(t.dtype)
        t.grad = None
    return model


def load(path, config: ModelConfig | None = None, dtype=np.float32) -> SAAT:
    """Rebuild the stored model; with ``config`` the file must match that architecture."""
    stored, _, _ = decode(Path(path).read_bytes())
    model = build(config if config is not None else stored, dtype)
    return load_into(model, path)
