"""PDM1 compact binary model format for edge deployment.

Byte layout (all integers little-endian):

    offset  size  field
    0       4     magic "PDM1"
    4       4     format version (uint32, currently 1)
    8       4     header length in bytes (uint32)
    12      H     header:
                    cell_kind   uint8   (0 = lstm, 1 = gru)
                    vocab_size  uint32
                    embed_dim   uint32
                    hidden_dim  uint32
                    max_len     uint32
                    dropout     float32
                    threshold   float32
                    n_dense     uint32
                    dense dims  uint32 x n_dense
    12+H    4*P   payload: parameter tensors as float32, row-major, in
                  declared order (embedding, cell tensors, dense w/b pairs)
    end-4   4     CRC32 of header + payload
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
import zlib
from typing import List, Tuple

import numpy as np

from .errors import (
    ConfigError,
    ModelCorruptionError,
    ModelFormatError,
    ModelVersionError,
)
from .layers import GRU_TENSORS, LSTM_TENSORS
from .model import ModelConfig, ModelGraph

MAGIC = b"PDM1"
VERSION = 1
_CELL_CODES = {"lstm": 0, "gru": 1}
_CELL_NAMES = {v: k for k, v in _CELL_CODES.items()}


def tensor_order(cfg: ModelConfig) -> List[str]:
    """The fixed serialization order of every parameter tensor."""
    names = ["embed"]
    cell = LSTM_TENSORS if cfg.cell_kind == "lstm" else GRU_TENSORS
    names.extend(f"cell.{n}" for n in cell)
    for k in range(len(cfg.dense_dims)):
        names.append(f"dense{k}.w")
        names.append(f"dense{k}.b")
    return names


def _pack_header(cfg: ModelConfig, threshold: float) -> bytes:
    head = struct.pack(
        "<BIIIIffI",
        _CELL_CODES[cfg.cell_kind],
        cfg.vocab_size,
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.max_len,
        cfg.dropout_rate,
        threshold,
        len(cfg.dense_dims),
    )
    return head + struct.pack(f"<{len(cfg.dense_dims)}I", *cfg.dense_dims)


def save_model(m: ModelGraph, path: str) -> int:
    """Write the model atomically (temp file + rename); returns bytes written."""
    header = _pack_header(m.config, m.threshold)
    payload = b"".join(
        np.ascontiguousarray(m.params[name], dtype="<f4").tobytes()
        for name in tensor_order(m.config)
    )
    body = header + payload
    blob = (
        MAGIC
        + struct.pack("<II", VERSION, len(header))
        + body
        + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    )
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as e:
        raise IOError(f"cannot write model to {path}: {e}") from e
    return len(blob)


def _tensor_shapes(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes: List[Tuple[str, Tuple[int, ...]]] = [
        ("embed", (cfg.vocab_size, cfg.embed_dim))
    ]
    cell = LSTM_TENSORS if cfg.cell_kind == "lstm" else GRU_TENSORS
    d, h = cfg.embed_dim, cfg.hidden_dim
    for n in cell:
        if n.startswith("W_"):
            shapes.append((f"cell.{n}", (d, h)))
        elif n.startswith("U_"):
            shapes.append((f"cell.{n}", (h, h)))
        else:
            shapes.append((f"cell.{n}", (h,)))
    in_dim = h
    for k, out_dim in enumerate(cfg.dense_dims):
        shapes.append((f"dense{k}.w", (in_dim, out_dim)))
        shapes.append((f"dense{k}.b", (out_dim,)))
        in_dim = out_dim
    return shapes


def load_model(path: str) -> ModelGraph:
    """Read a PDM1 file back into an infer-mode graph (weights widened to f64)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise IOError(f"cannot read model from {path}: {e}") from e
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a PDM1 file")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ModelVersionError(f"{path}: unsupported format version {version}")
    if len(blob) < 12 + header_len + 4:
        raise ModelFormatError(f"{path}: truncated header")
    body = blob[12:-4]
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    header = blob[12 : 12 + header_len]
    fixed = struct.calcsize("<BIIIIffI")
    if header_len < fixed:
        raise ModelFormatError(f"{path}: header too short ({header_len} bytes)")
    cell_code, vocab, embed, hidden, max_len, drop, threshold, n_dense = struct.unpack_from(
        "<BIIIIffI", header, 0
    )
    if cell_code not in _CELL_NAMES:
        raise ModelFormatError(f"{path}: unknown cell code {cell_code}")
    if header_len != fixed + 4 * n_dense:
        raise ModelFormatError(f"{path}: header length inconsistent with {n_dense} dense dims")
    dense_dims = struct.unpack_from(f"<{n_dense}I", header, fixed)
    try:
        cfg = ModelConfig(
            cell_kind=_CELL_NAMES[cell_code],
            vocab_size=vocab,
            embed_dim=embed,
            hidden_dim=hidden,
            dense_dims=tuple(int(d) for d in dense_dims),
            dropout_rate=float(np.float32(drop)),
            output_kind="sigmoid_scalar" if dense_dims and dense_dims[-1] == 1 else "softmax_pair",
            max_len=max_len,
        )
        cfg.validate()
    except ConfigError as e:
        raise ModelFormatError(f"{path}: invalid header: {e}") from e
    shapes = _tensor_shapes(cfg)
    payload_len = 4 * sum(math.prod(s) for _, s in shapes)
    if len(blob) != 12 + header_len + payload_len + 4:
        raise ModelFormatError(
            f"{path}: payload size {len(blob) - 16 - header_len} != expected {payload_len}"
        )
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ModelCorruptionError(f"{path}: CRC mismatch, file is corrupt")
    params = {}
    offset = 12 + header_len
    for name, shape in shapes:
        count = math.prod(shape)
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[name] = arr.astype(np.float64).reshape(shape)
        offset += 4 * count
    return ModelGraph(config=cfg, params=params, mode="infer", threshold=float(threshold))
