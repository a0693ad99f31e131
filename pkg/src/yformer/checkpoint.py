"""Binary model checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"YFORMER\\0"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header: {"model_config": {...}, "extra": {...},
              "arrays": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    payload   raw C-order array bytes; offsets are relative to the payload start
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, Yformer

MAGIC = b"YFORMER\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: Yformer, extra: dict | None = None) -> None:
    arrays = []
    blobs = []
    offset = 0
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.data, dtype=p.data.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        arrays.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"model_config": model.cfg.to_dict(), "extra": extra or {}, "arrays": arrays}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[Yformer, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", raw[8:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", raw[12:20])
    header = json.loads(raw[20 : 20 + hlen].decode())
    payload = memoryview(raw)[20 + hlen :]
    model = Yformer(ModelConfig.from_dict(header["model_config"]))
    state = {}
    for a in header["arrays"]:
        buf = payload[a["offset"] : a["offset"] + a["nbytes"]]
        state[a["name"]] = np.frombuffer(buf, dtype=np.dtype(a["dtype"])).reshape(a["shape"]).astype(np.float64)
    model.load_state_dict(state)
    return model, header["extra"]
