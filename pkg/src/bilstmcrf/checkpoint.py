"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"BLSTMCRF"             8-byte magic
    u32                     format version
    u64                     header length N
    N bytes                 UTF-8 JSON header (config, vocabularies, tensor table)
    ...                     raw tensor buffers, row-major, at header offsets
    32 bytes                SHA-256 of everything above

Tensors are stored as float32 unless the checkpoint is written in 64-bit mode.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"BLSTMCRF"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: dict
    inventories: dict
    tensors: "OrderedDict[str, np.ndarray]"
    optimizer: dict | None = None
    optimizer_tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    best_validation_loss: float | None = None
    epoch: int | None = None
    version: int = FORMAT_VERSION


def _table(arrays, start: int, dtype) -> tuple[list, list[bytes]]:
    entries, blobs = [], []
    offset = start
    for name, arr in arrays.items():
        buf = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": np.dtype(dtype).str,
                        "offset": offset, "nbytes": len(buf)})
        blobs.append(buf)
        offset += len(buf)
    return entries, blobs


def save_checkpoint(ckpt: Checkpoint, path, wide: bool = False) -> None:
    dtype = np.dtype("<f8" if wide else "<f4")
    entries, blobs = _table(ckpt.tensors, 0, dtype)
    n_main = sum(len(b) for b in blobs)
    opt_entries, opt_blobs = _table(ckpt.optimizer_tensors, n_main, dtype)
    header = {
        "config": ckpt.config,
        "inventories": ckpt.inventories,
        "tensors": entries,
        "optimizer": ckpt.optimizer,
        "optimizer_tensors": opt_entries,
        "best_validation_loss": ckpt.best_validation_loss,
        "epoch": ckpt.epoch,
    }
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    body = _PREFIX.pack(MAGIC, ckpt.version, len(hbytes)) + hbytes + b"".join(blobs + opt_blobs)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())
    tmp.replace(path)


def _read_arrays(entries, payload: bytes) -> "OrderedDict[str, np.ndarray]":
    out = OrderedDict()
    for e in entries:
        lo, hi = e["offset"], e["offset"] + e["nbytes"]
        if hi > len(payload):
            raise CheckpointError(f"tensor {e['name']} runs past the end of the payload")
        arr = np.frombuffer(payload[lo:hi], dtype=np.dtype(e["dtype"]))
        out[e["name"]] = arr.reshape(e["shape"]).copy()
    return out


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST:
        raise CheckpointError(f"{path}: file too short ({len(raw)} bytes) to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupt file)")
    start = _PREFIX.size
    if start + hlen > len(body):
        raise CheckpointError(f"{path}: header length {hlen} exceeds file size")
    header = json.loads(body[start: start + hlen].decode("utf-8"))
    payload = body[start + hlen:]
    expected = sum(e["nbytes"] for e in header["tensors"] + header["optimizer_tensors"])
    if expected != len(payload):
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, header describes {expected}")
    return Checkpoint(
        config=header["config"],
        inventories=header["inventories"],
        tensors=_read_arrays(header["tensors"], payload),
        optimizer=header["optimizer"],
        optimizer_tensors=_read_arrays(header["optimizer_tensors"], payload),
        best_validation_loss=header["best_validation_loss"],
        epoch=header["epoch"],
        version=version,
    )
