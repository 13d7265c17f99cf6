"""Tensor serialization.

Tensors are plain float64 numpy arrays. On disk a tensor is a 4-byte
big-endian rank, one 4-byte big-endian extent per axis, then the payload as
little-endian fp64 (the same payload encoding the TCP transport uses).
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import ShapeMismatch

_U32 = struct.Struct(">I")
PAYLOAD_DTYPE = np.dtype("<f8")


def as_tensor(values):
    return np.array(values, dtype=np.float64)


def tensor_to_bytes(t):
    t = np.asarray(t, dtype=np.float64)
    head = _U32.pack(t.ndim) + b"".join(_U32.pack(e) for e in t.shape)
    return head + np.ascontiguousarray(t, dtype=PAYLOAD_DTYPE).tobytes()


def tensor_from_bytes(data):
    if len(data) < 4:
        raise ShapeMismatch("truncated tensor header")
    (ndim,) = _U32.unpack_from(data, 0)
    off = 4 + 4 * ndim
    if len(data) < off:
        raise ShapeMismatch("truncated tensor header")
    shape = tuple(_U32.unpack_from(data, 4 + 4 * i)[0] for i in range(ndim))
    count = int(np.prod(shape, dtype=np.int64))
    if len(data) - off != 8 * count:
        raise ShapeMismatch(f"payload holds {(len(data) - off) / 8:g} values, shape {shape} needs {count}")
    return np.frombuffer(data, dtype=PAYLOAD_DTYPE, offset=off).astype(np.float64).reshape(shape)


def save_tensor(path, t):
    Path(path).write_bytes(tensor_to_bytes(t))


def load_tensor(path):
    return tensor_from_bytes(Path(path).read_bytes())
