"""Binary checkpoint container.

Layout, little-endian::

    b"MDGN" | u32 version | u32 header length | JSON header
    | float64 blocks: parameters, then Adam m and v (if present), then loss history
    | u32 CRC-32 of every preceding byte

Blocks appear in the order listed in the header, each as a raw row-major array.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from moldgnn.errors import CheckpointError
from moldgnn.graphdata import Normalizer
from moldgnn.model import ModelConfig, ModelParams
from moldgnn.training import AdamState, Checkpoint, TrainConfig

MAGIC = b"MDGN"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


def _block(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def dumps(ckpt: Checkpoint) -> bytes:
    arrays = ckpt.params.arrays
    header = {
        "model": ckpt.params.config.to_dict(),
        "params": [[name, list(a.shape)] for name, a in arrays.items()],
        "normalizer": ckpt.normalizer.to_dict(),
        "train_config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "loss_history_length": len(ckpt.loss_history),
        "rng": ckpt.rng_state,
        "adam_t": None if ckpt.adam is None else ckpt.adam.t,
        "provenance": ckpt.provenance,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(hbytes)), hbytes]
    parts += [_block(a) for a in arrays.values()]
    if ckpt.adam is not None:
        parts += [_block(ckpt.adam.m[k]) for k in arrays]
        parts += [_block(ckpt.adam.v[k]) for k in arrays]
    parts.append(_block(np.asarray(ckpt.loss_history, dtype=np.float64)))
    payload = b"".join(parts)
    return payload + _U32.pack(zlib.crc32(payload))


def loads(data: bytes) -> Checkpoint:
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic or too short)")
    (version,) = _U32.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    payload, (crc,) = data[:-4], _U32.unpack(data[-4:])
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint checksum mismatch (file truncated or corrupt)")
    (hlen,) = _U32.unpack_from(data, 8)
    try:
        header = json.loads(payload[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None

    offset = 12 + hlen

    def take(shape) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(payload):
            raise CheckpointError("checkpoint payload shorter than its header declares")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        offset = end
        return arr

    mcfg = ModelConfig(**header["model"])
    arrays = {name: take(tuple(shape)) for name, shape in header["params"]}
    adam = None
    if header["adam_t"] is not None:
        m = {name: take(tuple(shape)) for name, shape in header["params"]}
        v = {name: take(tuple(shape)) for name, shape in header["params"]}
        adam = AdamState(m, v, int(header["adam_t"]))
    history = take((header["loss_history_length"],)).tolist()
    if offset != len(payload):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(
        params=ModelParams(mcfg, arrays),
        normalizer=Normalizer(**header["normalizer"]),
        config=TrainConfig.from_dict(header["train_config"]),
        epoch=int(header["epoch"]),
        loss_history=history,
        adam=adam,
        provenance=header.get("provenance") or {},
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return loads(data)
