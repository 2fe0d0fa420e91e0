"""Binary model checkpoints.

Layout (little-endian): b"TCNM", u32 version, u32-prefixed architecture tag,
u32-prefixed JSON header (config, n_classes, input_dims, fps, filter width),
u32 tensor count, then per tensor: u32-prefixed name, u32 ndim, u64 shape
entries and the float64 values in C order.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, TruncatedPayload, VersionUnsupported
from .models import Arch, ModelParams, config_from_dict, config_to_dict

MAGIC = b"TCNM"
VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps_model(model: ModelParams) -> bytes:
    header = {
        "config": config_to_dict(model.config),
        "n_classes": model.n_classes,
        "input_dims": model.input_dims,
        "fps_at_train": model.fps_at_train.hex(),
        "filter_width": model.filter_width,
    }
    out = io.BytesIO()
    out.write(MAGIC + struct.pack("<I", VERSION))
    out.write(_pack_str(model.arch.value))
    out.write(_pack_str(json.dumps(header, sort_keys=True)))
    out.write(struct.pack("<I", len(model.params)))
    for name, value in model.params.items():
        out.write(_pack_str(name))
        out.write(struct.pack("<I", value.ndim))
        out.write(struct.pack(f"<{value.ndim}Q", *value.shape))
        out.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedPayload(f"checkpoint ends inside {what}")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str) -> str:
        return self.take(self.u32(what), what).decode("utf-8")


def loads_model(blob: bytes) -> ModelParams:
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise BadMagic("not a TCNM checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise VersionUnsupported(f"checkpoint version {version} (supported: {VERSION})")
    arch = Arch(r.string("architecture tag"))
    header = json.loads(r.string("header"))
    params = {}
    for _ in range(r.u32("tensor count")):
        name = r.string("tensor name")
        ndim = r.u32(f"{name} rank")
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim, f"{name} shape"))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(r.take(8 * count, f"{name} values"), dtype="<f8")
        params[name] = values.astype(np.float64).reshape(shape)
    if r.pos != len(blob):
        raise TruncatedPayload("trailing bytes after the last tensor")
    return ModelParams(
        arch,
        config_from_dict(arch, header["config"]),
        header["n_classes"],
        header["input_dims"],
        float.fromhex(header["fps_at_train"]),
        params,
        header["filter_width"],
    )


def save_model(model: ModelParams, path: str | Path) -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path: str | Path) -> ModelParams:
    return loads_model(Path(path).read_bytes())
