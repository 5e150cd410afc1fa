"""Readers and writers for the MGPB matrix and MGPV video-feature formats.

MGPB (embedding matrix):
    magic b"MGPB" | u32 version=1 | u32 rows | u32 dim |
    rows*dim little-endian float32, row-major.
    Companion keys file: UTF-8, one key per line, LF-terminated,
    exactly `rows` lines.

MGPV (per-video frame features):
    magic b"MGPV" | u32 version=1 | u32 video_count | u32 dim |
    index table of (u16 id_len | id bytes | u32 frame_count | u64 byte_offset) |
    concatenated frame matrices (frame_count x dim float32 LE each).
    byte_offset is absolute from the start of the file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DuplicateVideoId,
    IndexOutOfBounds,
    NonFiniteValue,
    RowCountMismatch,
)

MATRIX_MAGIC = b"MGPB"
VIDEO_MAGIC = b"MGPV"
VERSION = 1

_HEADER = struct.Struct("<4sIII")


def _check_finite(matrix: np.ndarray) -> None:
    bad = ~np.isfinite(matrix)
    if bad.any():
        row = int(np.argwhere(bad)[0][0]) if matrix.ndim == 2 else 0
        raise NonFiniteValue(row)


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {matrix.shape}")
    _check_finite(matrix)
    rows, dim = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, VERSION, rows, dim))
        fh.write(matrix.astype("<f4", copy=False).tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise BadMagic(f"{path}: file too short for a matrix header")
    magic, version, rows, dim = _HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise BadMagic(f"{path}: expected magic {MATRIX_MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * rows * dim
    if len(data) != expected:
        raise RowCountMismatch(f"{path}: header says {rows}x{dim}, payload size is off")
    matrix = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, dim)
    _check_finite(matrix)
    return matrix.copy()


def write_keys(path: str | Path, keys: list[str]) -> None:
    for key in keys:
        if "\n" in key:
            raise ValueError(f"key contains a newline: {key!r}")
    Path(path).write_text("".join(k + "\n" for k in keys), encoding="utf-8")


def read_keys(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        return []
    if not text.endswith("\n"):
        raise RowCountMismatch(f"{path}: keys file must be LF-terminated")
    return text[:-1].split("\n")


def write_video_container(path: str | Path, videos: dict[str, np.ndarray]) -> None:
    """Write per-video frame matrices; iteration order of `videos` is kept."""
    entries = []
    for video_id, frames in videos.items():
        frames = np.ascontiguousarray(frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"{video_id}: frame matrix must be T x d with T >= 1")
        _check_finite(frames)
        entries.append((video_id, frames))
    dims = {frames.shape[1] for _, frames in entries}
    if len(dims) > 1:
        raise ValueError(f"videos disagree on feature dimension: {sorted(dims)}")
    dim = dims.pop() if dims else 0

    index_size = sum(2 + len(vid.encode("utf-8")) + 4 + 8 for vid, _ in entries)
    offset = _HEADER.size + index_size
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VIDEO_MAGIC, VERSION, len(entries), dim))
        for video_id, frames in entries:
            raw_id = video_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_id)))
            fh.write(raw_id)
            fh.write(struct.pack("<IQ", frames.shape[0], offset))
            offset += frames.nbytes
        for _, frames in entries:
            fh.write(frames.astype("<f4", copy=False).tobytes())


def read_video_container(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise BadMagic(f"{path}: file too short for a container header")
    magic, version, video_count, dim = _HEADER.unpack_from(data)
    if magic != VIDEO_MAGIC:
        raise BadMagic(f"{path}: expected magic {VIDEO_MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")

    videos: dict[str, np.ndarray] = {}
    pos = _HEADER.size
    index = []
    for _ in range(video_count):
        if pos + 2 > len(data):
            raise IndexOutOfBounds(f"{path}: truncated index table")
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + id_len + 12 > len(data):
            raise IndexOutOfBounds(f"{path}: truncated index entry")
        video_id = data[pos:pos + id_len].decode("utf-8")
        pos += id_len
        frame_count, byte_offset = struct.unpack_from("<IQ", data, pos)
        pos += 12
        index.append((video_id, frame_count, byte_offset))

    for video_id, frame_count, byte_offset in index:
        if video_id in videos:
            raise DuplicateVideoId(video_id)
        if frame_count < 1:
            raise IndexOutOfBounds(f"{path}: {video_id!r} declares zero frames")
        nbytes = 4 * frame_count * dim
        if byte_offset + nbytes > len(data) or byte_offset < pos:
            raise IndexOutOfBounds(
                f"{path}: {video_id!r} points outside the file "
                f"(offset {byte_offset}, {nbytes} bytes)"
            )
        frames = np.frombuffer(data, dtype="<f4", count=frame_count * dim,
                               offset=byte_offset).reshape(frame_count, dim)
        _check_finite(frames)
        videos[video_id] = frames.copy()
    return videos
