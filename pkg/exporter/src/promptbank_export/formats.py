"""Writers for the engine's binary input formats.

The engine never imports this package; the byte layouts below are the
contract between the two sides.

MGPB: magic b"MGPB" | u32 version=1 | u32 rows | u32 dim |
      rows*dim little-endian float32 row-major.
      Keys file: UTF-8, one key per line, LF-terminated.
MGPV: magic b"MGPV" | u32 version=1 | u32 video_count | u32 dim |
      index entries (u16 id_len | id | u32 frame_count | u64 offset) |
      frame matrices. Offsets are absolute file positions.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIII")


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"MGPB", 1, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4", copy=False).tobytes())


def write_keys(path: str | Path, keys: list[str]) -> None:
    for key in keys:
        if "\n" in key:
            raise ValueError(f"key contains newline: {key!r}")
    Path(path).write_text("".join(k + "\n" for k in keys), encoding="utf-8")


def write_video_container(path: str | Path, videos: dict[str, np.ndarray]) -> None:
    entries = []
    dim = None
    for video_id, frames in videos.items():
        frames = np.ascontiguousarray(frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"{video_id}: frames must be T x d with T >= 1")
        if not np.isfinite(frames).all():
            raise ValueError(f"{video_id}: non-finite frame features")
        if dim is None:
            dim = frames.shape[1]
        elif frames.shape[1] != dim:
            raise ValueError(f"{video_id}: dimension {frames.shape[1]} != {dim}")
        entries.append((video_id, frames))

    index_size = sum(2 + len(v.encode("utf-8")) + 12 for v, _ in entries)
    offset = _HEADER.size + index_size
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"MGPV", 1, len(entries), dim or 0))
        for video_id, frames in entries:
            raw = video_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<IQ", frames.shape[0], offset))
            offset += frames.nbytes
        for _, frames in entries:
            fh.write(frames.astype("<f4", copy=False).tobytes())


def sha256_of(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
