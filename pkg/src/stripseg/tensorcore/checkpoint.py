"""Binary checkpoint format.

Layout (all integers u32 little-endian)::

    b"SSEG" | version | config_len | config bytes |
    { name_len | name (utf-8) | rank | dims[rank] | float32-le values }*

Records run to end of file.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

MAGIC = b"SSEG"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(config_blob: bytes, tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(config_blob)), config_blob]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> Tuple[bytes, Dict[str, np.ndarray]]:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    if len(buf) < 12:
        raise CheckpointError("truncated header")
    version, clen = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    config_blob = bytes(buf[pos : pos + clen])
    if len(config_blob) != clen:
        raise CheckpointError("truncated config blob")
    pos += clen
    tensors: Dict[str, np.ndarray] = {}
    try:
        while pos < len(buf):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            values = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
            tensors[name] = values.astype(np.float32).reshape(dims)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated or corrupt record at byte {pos}") from exc
    return config_blob, tensors


def save_checkpoint(path: Union[str, Path], config_blob: bytes, tensors: Dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_checkpoint(config_blob, tensors))


def load_checkpoint(path: Union[str, Path]) -> Tuple[bytes, Dict[str, np.ndarray]]:
    return decode_checkpoint(Path(path).read_bytes())
