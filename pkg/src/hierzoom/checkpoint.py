"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"HZG1"  u32 version
    u32 n + n bytes      canonical config text (UTF-8)
    u32 count
    count x [u32 n, name bytes, u32 rank, rank x u64 extent, f64 payload]
    u32 n + n bytes      metadata as canonical JSON (epoch, losses, rng state)

Files are written to a temporary sibling and renamed into place, so a
reader never observes a half-written checkpoint.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .errors import ConfigurationError, FormatError
from .models import ModelBundle

MAGIC = b"HZG1"
VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    params: dict  # name -> float64 ndarray, in model order
    meta: dict = field(default_factory=dict)
    version: int = VERSION


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def encode_checkpoint(ckpt):
    out = bytearray(MAGIC)
    out += struct.pack("<I", ckpt.version)
    text = ckpt.config.to_text().encode()
    out += struct.pack("<I", len(text)) + text
    out += struct.pack("<I", len(ckpt.params))
    for name, value in ckpt.params.items():
        arr = np.ascontiguousarray(getattr(value, "data", value), dtype="<f8")
        raw = name.encode()
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += arr.tobytes()
    meta = _canonical_json(ckpt.meta)
    out += struct.pack("<I", len(meta)) + meta
    return bytes(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated checkpoint: {what} needs {n} bytes at offset {self.pos}, "
                f"{len(self.buf) - self.pos} left"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def decode_checkpoint(buf):
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    n = r.u32("config length")
    try:
        config = parse_config(r.take(n, "config text").decode())
    except (UnicodeDecodeError, ConfigurationError) as exc:
        raise FormatError(f"unreadable config text: {exc}") from None
    params = {}
    for i in range(r.u32("record count")):
        name = r.take(r.u32(f"record {i} name length"), f"record {i} name").decode()
        rank = r.u32(f"{name} rank")
        shape = struct.unpack(f"<{rank}Q", r.take(8 * rank, f"{name} extents"))
        count = int(np.prod(shape, dtype=np.int64))
        payload = r.take(8 * count, f"{name} payload")
        params[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    meta_raw = r.take(r.u32("metadata length"), "metadata")
    try:
        meta = json.loads(meta_raw)
    except ValueError as exc:
        raise FormatError(f"unreadable metadata: {exc}") from None
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after metadata")
    return Checkpoint(config, params, meta, version)


def save_checkpoint(ckpt, path):
    path = Path(path)
    data = encode_checkpoint(ckpt)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())


def bundle_checkpoint(bundle, config, meta=None):
    """Snapshot (copies) of every bundle parameter."""
    params = {name: t.data.copy() for name, t in bundle.named_parameters()}
    return Checkpoint(config, params, dict(meta or {}))


def restore_bundle(ckpt, model_cfg=None):
    """Rebuild a model bundle from ``ckpt``.

    ``model_cfg`` defaults to the stored config; any other config must
    produce exactly the stored parameter names and shapes.
    """
    bundle = ModelBundle(model_cfg or ckpt.config.model, seed=0)
    expected = dict(bundle.named_parameters())
    missing = sorted(set(expected) - set(ckpt.params))
    extra = sorted(set(ckpt.params) - set(expected))
    if missing or extra:
        raise ConfigurationError(f"checkpoint parameters do not match model: missing {missing}, unexpected {extra}")
    for name, t in expected.items():
        value = ckpt.params[name]
        if value.shape != t.shape:
            raise ConfigurationError(f"{name}: checkpoint shape {value.shape} != model shape {t.shape}")
        t.data[...] = value
    return bundle


def rng_state(rng):
    return rng.bit_generator.state


def rng_from_state(state):
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)
