"""Versioned binary checkpoint: magic "MIRR", config, vocabulary, then named
float32 parameter arrays (name length + UTF-8 name + rank + extents + values,
all integers little-endian u32)."""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .corpus import RESERVED, Vocabulary
from .params import ModelConfig

MAGIC = b"MIRR"
VERSION = 1


@dataclass
class Checkpoint:
    params: dict
    config: ModelConfig
    vocab: Vocabulary
    meta: dict


def _write_block(f, data: bytes):
    f.write(struct.pack("<I", len(data)))
    f.write(data)


def _read_block(f) -> bytes:
    (n,) = struct.unpack("<I", f.read(4))
    return f.read(n)


def save_checkpoint(path, params, config: ModelConfig, vocab: Vocabulary, meta: dict | None = None):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        header = {"model": config.to_dict(), "meta": meta or {}}
        _write_block(f, json.dumps(header, sort_keys=True).encode("utf-8"))
        tokens = vocab.id_to_token[len(RESERVED):]
        _write_block(f, json.dumps(tokens, ensure_ascii=False).encode("utf-8"))
        f.write(struct.pack("<I", len(params)))
        for name, tensor in params.items():
            _write_block(f, name.encode("utf-8"))
            arr = np.ascontiguousarray(tensor.data, dtype="<f4")
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path} is not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(_read_block(f).decode("utf-8"))
        tokens = json.loads(_read_block(f).decode("utf-8"))
        (n_params,) = struct.unpack("<I", f.read(4))
        params = {}
        for _ in range(n_params):
            name = _read_block(f).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            params[name] = Tensor(arr.astype(np.float32))
        return Checkpoint(
            params=params,
            config=ModelConfig.from_dict(header["model"]),
            vocab=Vocabulary(tokens),
            meta=header.get("meta", {}),
        )
