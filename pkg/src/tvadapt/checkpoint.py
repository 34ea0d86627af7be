"""Versioned binary checkpoints: bit-exact parameter and config snapshots.

Layout (little-endian): magic ``RAPC``, u32 format version, u32 config
length + flat-text config, u64 completed-step counter (the RNG state:
every stream is derived from the config seed plus counters), u32 entry
count, then per parameter: u16 name length + name, u8 frozen flag,
u8 ndim, u32 dims, raw float64 payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import config as config_mod
from .exceptions import VersionError
from .model import AdapterModel

MAGIC = b"RAPC"
VERSION = 1


@dataclass
class Checkpoint:
    config: object
    params: dict  # name -> (ndarray, frozen)
    steps: int


def save_checkpoint(path, model, steps=0):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    cfg_text = config_mod.dumps(model.config).encode("utf-8")
    blob += struct.pack("<I", len(cfg_text))
    blob += cfg_text
    blob += struct.pack("<Q", steps)
    names = model.store.names()
    blob += struct.pack("<I", len(names))
    for name in names:
        t = model.store[name]
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<BB", 0 if t.requires_grad else 1, t.data.ndim)
        blob += struct.pack(f"<{t.data.ndim}I", *t.data.shape)
        blob += np.ascontiguousarray(t.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise VersionError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != VERSION:
        raise VersionError(f"{path}: format version {version}, expected {VERSION}")
    (cfg_len,) = struct.unpack_from("<I", view, 8)
    offset = 12
    cfg = config_mod.loads(bytes(view[offset : offset + cfg_len]).decode("utf-8"))
    offset += cfg_len
    (steps,) = struct.unpack_from("<Q", view, offset)
    offset += 8
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        frozen, ndim = struct.unpack_from("<BB", view, offset)
        offset += 2
        shape = struct.unpack_from(f"<{ndim}I", view, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(view, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += 8 * size
        params[name] = (data.astype(np.float64).copy(), bool(frozen))
    return Checkpoint(config=cfg, params=params, steps=steps)


def restore_model(checkpoint):
    """Rebuild the model and overwrite every parameter from the snapshot."""
    model = AdapterModel(checkpoint.config)
    expected = set(model.store.names())
    got = set(checkpoint.params)
    if expected != got:
        missing = sorted(expected - got)[:3]
        extra = sorted(got - expected)[:3]
        raise VersionError(
            f"checkpoint does not match config-built model (missing {missing}, extra {extra})"
        )
    for name, (data, frozen) in checkpoint.params.items():
        t = model.store[name]
        if t.data.shape != data.shape:
            raise VersionError(f"shape mismatch for {name}: {t.data.shape} vs {data.shape}")
        t.data[:] = data
        t.requires_grad = not frozen
    return model


def load_model(path):
    ckpt = load_checkpoint(path)
    return restore_model(ckpt), ckpt
