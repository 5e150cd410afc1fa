"""Pluggable text/frame encoders, selected by id string.

The default `hash-<dim>` encoder is a deterministic hashed-projection
featurizer: every token hashes to a fixed pseudo-random direction and a
sentence is the normalized token mean. It needs no weights, so exports
are reproducible on any machine; the manifest pins whichever encoder id
produced a file. `st:<model>` delegates to sentence-transformers when
the model is available locally and fails loudly otherwise.
"""

from __future__ import annotations

import numpy as np


class EncoderLoadError(Exception):
    """Requested encoder (or its weights) is unavailable."""


_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def _hash_normals(seed: int, n: int) -> np.ndarray:
    """n standard normals from a counter-based splitmix64 stream."""
    idx = np.arange(1, 2 * ((n + 1) // 2) + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + idx * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    u = (z >> np.uint64(11)).astype(np.float64) / (1 << 53)
    u1, u2 = u[0::2], u[1::2]
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(u.shape[0], dtype=np.float64)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


class HashedProjectionEncoder:
    """Deterministic bag-of-tokens featurizer; `hash-<dim>`."""

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderLoadError(f"hash encoder dimension must be >= 1, got {dim}")
        self.dim = dim
        self.encoder_id = f"hash-{dim}"
        self._token_cache: dict[str, np.ndarray] = {}
        # fixed projection for frame features: 256 gray pixels -> dim
        self._frame_projection = _hash_normals(
            _fnv1a64(f"frame-projection:{dim}"), 256 * dim
        ).reshape(256, dim)

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            vec = _hash_normals(_fnv1a64(token), self.dim)
            self._token_cache[token] = vec
        return vec

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = [t.strip(".,!?;:\"'()[]") for t in text.lower().split()]
            tokens = [t for t in tokens if t]
            if not tokens:
                continue  # zero row: no content to embed
            acc = np.zeros(self.dim)
            for token in tokens:
                acc += self._token_vector(token)
            acc /= len(tokens)
            norm = np.linalg.norm(acc)
            rows[i] = acc / norm if norm > 0 else acc
        return rows.astype(np.float32)

    def encode_frames(self, frames: np.ndarray) -> np.ndarray:
        """T x H x W x 3 uint8 frames to T x dim unit features."""
        import cv2

        out = np.zeros((frames.shape[0], self.dim), dtype=np.float64)
        for t, frame in enumerate(frames):
            gray = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)
            small = cv2.resize(gray, (16, 16), interpolation=cv2.INTER_AREA)
            flat = small.astype(np.float64).reshape(-1) / 255.0
            vec = flat @ self._frame_projection
            norm = np.linalg.norm(vec)
            out[t] = vec / norm if norm > 0 else vec
        return out.astype(np.float32)


class SentenceTransformerEncoder:
    """Wraps a locally cached sentence-transformers model; `st:<name>`."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except Exception as exc:
            raise EncoderLoadError(f"sentence-transformers unavailable: {exc}") from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderLoadError(
                f"cannot load model {model_name!r} (no local weights?): {exc}"
            ) from exc
        self.encoder_id = f"st:{model_name}"
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(texts, convert_to_numpy=True), dtype=np.float32
        )

    def encode_frames(self, frames: np.ndarray) -> np.ndarray:
        raise EncoderLoadError(f"{self.encoder_id} is text-only; use hash-<dim> for frames")


def get_encoder(encoder_id: str):
    if encoder_id.startswith("hash-"):
        try:
            dim = int(encoder_id.split("-", 1)[1])
        except ValueError:
            raise EncoderLoadError(f"bad hash encoder id {encoder_id!r}") from None
        return HashedProjectionEncoder(dim)
    if encoder_id.startswith("st:"):
        return SentenceTransformerEncoder(encoder_id[3:])
    raise EncoderLoadError(f"unknown encoder id {encoder_id!r}")
