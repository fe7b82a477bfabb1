"""Versioned binary model checkpoints.

Layout: 4-byte magic, u32 format version, u32 header length, JSON header
(model config, parameter manifest, free-form metadata), then the raw
little-endian tensor bytes in manifest order. Equal models produce equal
bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .model import Model, ModelConfig

MAGIC = b"LTCP"
FORMAT_VERSION = 1


def save_checkpoint(model: Model, path: str | Path, meta: dict | None = None) -> None:
    names = sorted(model.params)
    header = {
        "model": {
            "classes": list(model.config.classes),
            "input_resolution": model.config.input_resolution,
            "channels": list(model.config.channels),
            "embedding_dim": model.config.embedding_dim,
            "dtype": model.config.dtype,
        },
        "params": [
            {"name": n, "shape": list(model.params[n].shape),
             "dtype": str(model.params[n].dtype)}
            for n in names
        ],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for n in names:
            tensor = model.params[n]
            f.write(np.ascontiguousarray(tensor, dtype=tensor.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path: str | Path) -> tuple[Model, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValidationError(f"not a checkpoint file: {path}")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    cfg = ModelConfig(
        classes=tuple(header["model"]["classes"]),
        input_resolution=int(header["model"]["input_resolution"]),
        channels=tuple(header["model"]["channels"]),
        embedding_dim=int(header["model"]["embedding_dim"]),
        dtype=header["model"]["dtype"],
    )
    model = Model(cfg)
    offset = 12 + header_len
    for entry in header["params"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        tensor = np.frombuffer(raw[offset : offset + nbytes], dtype=dtype)
        model.params[entry["name"]] = tensor.reshape(entry["shape"]).astype(
            np.dtype(entry["dtype"])
        )
        offset += nbytes
    if offset != len(raw):
        raise ValidationError("checkpoint has trailing or missing bytes")
    return model, header["meta"]
