"""Binary checkpoint files.

Layout: 8-byte magic, little-endian u32 schema version, u32 header length,
UTF-8 JSON header (configuration, training metadata, tensor table), then the
tensors as contiguous little-endian float32 data in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ParloopError, SchemaVersionError
from .model import ModelConfig, check_params
from .training import Checkpoint, Hyperparameters

MAGIC = b"PLOOPCK\x00"
SCHEMA = 1
_DTYPE = np.dtype("<f4")


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    table = []
    blobs = []
    offset = 0
    for name, arr in ckpt.weights.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = {
        "config": ckpt.config.to_json(),
        "hyper": ckpt.hyper.to_json() if ckpt.hyper is not None else None,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "val_acc": ckpt.val_acc,
        "dtype": _DTYPE.str,
        "tensors": table,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<II", SCHEMA, len(raw)) + raw + b"".join(blobs)


def loads_checkpoint(buf: bytes) -> Checkpoint:
    if buf[: len(MAGIC)] != MAGIC:
        raise ParloopError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    if len(buf) < pos + 8:
        raise ParloopError("checkpoint truncated in its header")
    schema, hlen = struct.unpack_from("<II", buf, pos)
    if schema != SCHEMA:
        raise SchemaVersionError(f"unsupported checkpoint schema {schema}")
    pos += 8
    try:
        header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParloopError(f"corrupt checkpoint header: {exc}") from exc
    base = pos + hlen
    config = ModelConfig(**header["config"])
    dtype = np.dtype(config.dtype)
    weights = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        if start + t["nbytes"] > len(buf):
            raise ParloopError(f"checkpoint truncated in tensor {t['name']}")
        arr = np.frombuffer(buf, dtype=_DTYPE, count=t["nbytes"] // _DTYPE.itemsize, offset=start)
        weights[t["name"]] = arr.reshape(t["shape"]).astype(dtype)
    check_params(weights, config)
    hyper = Hyperparameters(**header["hyper"]) if header.get("hyper") else None
    return Checkpoint(weights, config, hyper, header["epoch"], header["val_loss"], header["val_acc"])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())
