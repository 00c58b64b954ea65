"""Flat binary parameter container.

Layout: header `<II` (format version, parameter count), then one record
per parameter: `<I` name length, UTF-8 name, `<B` value width in bytes
(4 or 8), `<I` rank, `<I`*rank extents, raw little-endian values in
row-major order. Round-trips are bit-exact.
"""

import struct

import numpy as np

FORMAT_VERSION = 1

_WIDTH_TO_DTYPE = {4: "<f4", 8: "<f8"}


class CheckpointError(ValueError):
    pass


def save_params(path, named_params: dict) -> None:
    """Write an ordered {name: ndarray-or-Tensor} mapping."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", FORMAT_VERSION, len(named_params)))
        for name, value in named_params.items():
            arr = np.ascontiguousarray(getattr(value, "data", value))
            if arr.dtype.itemsize not in _WIDTH_TO_DTYPE:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<BI", arr.dtype.itemsize, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(_WIDTH_TO_DTYPE[arr.dtype.itemsize], copy=False).tobytes())


def load_params(path) -> dict:
    """Read back the {name: ndarray} mapping, preserving order and dtype."""
    out = {}
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise CheckpointError("truncated header")
        version, count = struct.unpack("<II", head)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read(fh, 4))
            name = _read(fh, name_len).decode("utf-8")
            width, rank = struct.unpack("<BI", _read(fh, 5))
            if width not in _WIDTH_TO_DTYPE:
                raise CheckpointError(f"bad value width {width} for {name!r}")
            shape = struct.unpack(f"<{rank}I", _read(fh, 4 * rank))
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            raw = _read(fh, n * width)
            arr = np.frombuffer(raw, dtype=_WIDTH_TO_DTYPE[width]).reshape(shape)
            out[name] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return out


def _read(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated record")
    return raw
