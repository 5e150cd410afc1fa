"""Video frame loading and uniform-stride sampling."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


class DecodeError(Exception):
    """Video source could not be decoded."""


def sample_indices(total: int, count: int) -> list[int]:
    """Uniform-stride frame indices; all frames when total <= count."""
    if total < 1:
        raise DecodeError("source has no frames")
    if total <= count:
        return list(range(total))
    return [(i * total) // count for i in range(count)]


def load_frames(path: str | Path) -> np.ndarray:
    """All frames of a source as T x H x W x 3 uint8 (BGR).

    Accepts a video file (anything cv2 can open), a .npy array of
    stacked frames, or a directory of images.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DecodeError(f"{path}: no image files")
        import cv2
        frames = []
        for file in files:
            img = cv2.imread(str(file))
            if img is None:
                raise DecodeError(f"{file}: unreadable image")
            frames.append(img)
        return np.stack(frames)
    if path.suffix == ".npy":
        try:
            arr = np.load(path)
        except Exception as exc:
            raise DecodeError(f"{path}: {exc}") from exc
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise DecodeError(f"{path}: expected T x H x W x 3, got {arr.shape}")
        return arr.astype(np.uint8)
    if not path.exists():
        raise DecodeError(f"{path}: no such file")
    import cv2
    cap = cv2.VideoCapture(str(path))
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame)
    cap.release()
    if not frames:
        raise DecodeError(f"{path}: no decodable frames")
    return np.stack(frames)


def sampled_frames(path: str | Path, count: int) -> np.ndarray:
    frames = load_frames(path)
    return frames[sample_indices(frames.shape[0], count)]
