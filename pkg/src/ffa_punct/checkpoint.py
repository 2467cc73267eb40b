"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"FFA1"
    u32 length, config text (canonical ``key = value`` lines, UTF-8)
    u8 has_vocab; if set: u32 length, vocabulary tokens joined by "\\n"
    u32 tensor count, then per tensor:
        u16 name length, name (UTF-8)
        2-byte dtype tag (b"f4" or b"f8")
        u8 ndim, ndim x u32 dims
        raw little-endian values, row-major
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .config import ModelConfig
from .data import Vocabulary
from .exceptions import CheckpointError
from .model import FFAModel, init_model

MAGIC = b"FFA1"
_TAGS = {np.dtype(np.float32): b"f4", np.dtype(np.float64): b"f8"}
_FROM_TAG = {tag: dt for dt, tag in _TAGS.items()}


def _write_blob(fh, data: bytes):
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_blob(fh) -> bytes:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n)


def dumps(model: FFAModel) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    _write_blob(fh, model.config.to_text().encode("utf-8"))
    if model.vocab is None:
        fh.write(b"\x00")
    else:
        fh.write(b"\x01")
        _write_blob(fh, "\n".join(model.vocab.itos).encode("utf-8"))
    params = model.named_parameters()
    fh.write(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        arr = tensor.data
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(_TAGS[arr.dtype])
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    return fh.getvalue()


def loads(blob: bytes) -> FFAModel:
    fh = io.BytesIO(blob)
    if _read_exact(fh, 4) != MAGIC:
        raise CheckpointError("not an FFA1 checkpoint")
    config = ModelConfig.from_text(_read_blob(fh).decode("utf-8"))
    vocab = None
    if _read_exact(fh, 1) == b"\x01":
        itos = _read_blob(fh).decode("utf-8").split("\n")
        vocab = Vocabulary(itos[len(Vocabulary.RESERVED):])
        if vocab.itos != itos:
            raise CheckpointError("vocabulary section is malformed")
    model = init_model(config, vocab)
    params = model.named_parameters()
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    seen = set()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, name_len).decode("utf-8")
        dtype = _FROM_TAG.get(_read_exact(fh, 2))
        if dtype is None:
            raise CheckpointError(f"unknown dtype tag for {name}")
        (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
        shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
        size = int(np.prod(shape)) * dtype.itemsize
        arr = np.frombuffer(_read_exact(fh, size), dtype=dtype.newbyteorder("<")).reshape(shape)
        if name not in params:
            raise CheckpointError(f"unexpected tensor {name!r}")
        target = params[name]
        if target.shape != tuple(shape) or target.dtype != dtype:
            raise CheckpointError(f"tensor {name!r}: stored {shape}/{dtype}, model wants {target.shape}/{target.dtype}")
        target.data = arr.astype(dtype, copy=True)
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)}")
    if fh.read(1):
        raise CheckpointError("trailing bytes after tensor section")
    return model


def save_checkpoint(model: FFAModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_checkpoint(path) -> FFAModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
