"""Flat binary formats for tensors (``CUET``) and prior models (``CUEP``).

Tensor file layout, all little-endian::

    b"CUET" | u32 version | u32 rank | u32 dims[rank] | f64 payload (row-major)

Prior model layout::

    b"CUEP" | u32 version | u8 kind | u32 patch_size | u32 d_in | u32 d_hidden
    | u32 d_out | u32 n_heads | f64 mask_ratio
    | f64 W_e, b_e, W_d, b_d, [head_w, head_b, [head2_w, head2_b]]
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .priors import KINDS, PriorModel

TENSOR_MAGIC = b"CUET"
MODEL_MAGIC = b"CUEP"
VERSION = 1


class FormatError(ValueError):
    pass


def tensor_to_bytes(arr) -> bytes:
    a = np.array(arr, dtype="<f8", order="C")
    head = TENSOR_MAGIC + struct.pack("<II", VERSION, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes(order="C")


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError("not a tensor file (bad magic)")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported tensor file version {version}")
    dims = struct.unpack_from(f"<{rank}I", buf, 12)
    off = 12 + 4 * rank
    n = int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != 8 * n:
        raise FormatError(f"payload holds {len(buf) - off} bytes, expected {8 * n}")
    return np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(dims).astype(np.float64)


def write_tensor(path: str | os.PathLike, arr) -> None:
    with open(path, "wb") as f:
        f.write(tensor_to_bytes(arr))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return tensor_from_bytes(f.read())


def model_to_bytes(model: PriorModel) -> bytes:
    n_heads = 0 if model.head_w is None else (2 if model.head2_w is not None else 1)
    out = [
        MODEL_MAGIC,
        struct.pack("<IB", VERSION, KINDS.index(model.kind)),
        struct.pack("<5I", model.patch_size, model.d_in, model.d_hidden, model.d_out, n_heads),
        struct.pack("<d", model.mask_ratio),
    ]
    for arr in model.params().values():
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def model_from_bytes(buf: bytes) -> PriorModel:
    if buf[:4] != MODEL_MAGIC:
        raise FormatError("not a prior model file (bad magic)")
    version, kind = struct.unpack_from("<IB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    if kind >= len(KINDS):
        raise FormatError(f"unknown prior kind byte {kind}")
    patch, d_in, d_h, d_out, n_heads = struct.unpack_from("<5I", buf, 9)
    (mask_ratio,) = struct.unpack_from("<d", buf, 29)
    shapes = [(d_h, d_in), (d_h,), (d_out, d_h), (d_out,)] + [(d_h,), (1,)] * n_heads
    off = 37
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape))
        if off + 8 * n > len(buf):
            raise FormatError("truncated model file")
        arrays.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64))
        off += 8 * n
    if off != len(buf):
        raise FormatError("trailing bytes in model file")
    heads = arrays[4:] + [None] * (4 - len(arrays[4:]))
    return PriorModel(KINDS[kind], patch, mask_ratio, *arrays[:4], *heads)


def save_model(path: str | os.PathLike, model: PriorModel) -> None:
    with open(path, "wb") as f:
        f.write(model_to_bytes(model))


def load_model(path: str | os.PathLike) -> PriorModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())
