"""Named-tensor weight container.

Byte layout (all integers little-endian):

    magic        4 bytes   b"NTC1"
    count        uint32    number of tensors
    per tensor header, repeated ``count`` times:
        name_len uint16
        name     name_len bytes, utf-8
        ndim     uint8
        dims     ndim x uint32
    payloads: for each tensor in header order, raw float32
              little-endian values in row-major (C) order.

Tensors are always stored as float32 and loaded back as float64 arrays.
"""

import struct

import numpy as np

MAGIC = b"NTC1"


def save_weights(path, tensors):
    """Write a {name: array} mapping to ``path``."""
    names = list(tensors)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.asarray(tensors[name])
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for name in names:
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            fh.write(arr.tobytes())


def load_weights(path):
    """Read a container written by :func:`save_weights`."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a weight container")
        (count,) = struct.unpack("<I", fh.read(4))
        headers = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            headers.append((name, shape))
        tensors = {}
        for name, shape in headers:
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(fh.read(4 * n), dtype="<f4")
            if data.size != n:
                raise ValueError(f"{path}: truncated payload for {name!r}")
            tensors[name] = data.astype(np.float64).reshape(shape)
    return tensors
