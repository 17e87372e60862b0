"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes  b"LYFGCKPT"
    version    u32
    cfg_len    u32      length of the UTF-8 JSON config echo that follows
    cfg_json   cfg_len bytes (sorted keys)
    count      u32      number of parameter blobs
    per blob:
      name_len u16, name (UTF-8)
      dtype    u8       1 = f32, 2 = f64
      ndim     u8, then ndim x u32 dims
      data     prod(dims) little-endian floats, C order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .params import Params, param_shapes

MAGIC = b"LYFGCKPT"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params: Params, cfg: ModelConfig, extra: dict | None = None) -> bytes:
    meta = {"model": asdict(cfg), "extra": extra or {}}
    js = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<II", VERSION, len(js)), js, struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.asarray(params[name])
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"parameter {name} has unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(out)


def decode_checkpoint(data: bytes) -> tuple[ModelConfig, Params, dict]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    at = 8

    def take(fmt):
        nonlocal at
        vals = struct.unpack_from(fmt, data, at)
        at += struct.calcsize(fmt)
        return vals

    try:
        version, n_js = take("<II")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        meta = json.loads(data[at : at + n_js].decode("utf-8"))
        at += n_js
        (count,) = take("<I")
        params = {}
        for _ in range(count):
            (n_name,) = take("<H")
            name = data[at : at + n_name].decode("utf-8")
            at += n_name
            code, ndim = take("<BB")
            shape = take(f"<{ndim}I")
            dt = _DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if at + size > len(data):
                raise CheckpointError(f"truncated blob {name}")
            params[name] = np.frombuffer(data, dtype=dt, count=size // dt.itemsize, offset=at).reshape(shape).astype(np.float64)
            at += size
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e
    if at != len(data):
        raise CheckpointError("trailing bytes after last blob")
    cfg = ModelConfig(**meta["model"])
    check_params(params, cfg)
    return cfg, params, meta.get("extra", {})


def check_params(params: Params, cfg: ModelConfig) -> None:
    want = param_shapes(cfg)
    if set(want) != set(params):
        missing = sorted(set(want) - set(params))
        extra = sorted(set(params) - set(want))
        raise CheckpointError(f"parameter set does not match config (missing {missing}, unexpected {extra})")
    for k, shape in want.items():
        if tuple(params[k].shape) != tuple(shape):
            raise CheckpointError(f"{k}: shape {params[k].shape} but config implies {shape}")


def save_checkpoint(path, params: Params, cfg: ModelConfig, extra: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(params, cfg, extra))


def load_checkpoint(path) -> tuple[ModelConfig, Params, dict]:
    return decode_checkpoint(Path(path).read_bytes())
