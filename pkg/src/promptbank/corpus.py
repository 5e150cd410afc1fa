"""Corpus, embedding bank, and video feature store loading.

Caption records arrive pre-parsed: noun phrases and subject/predicate/
object triples are produced offline by an exporter and shipped as
`captions.jsonl`. The loader validates structure only; it never parses
text. All loaded structures are immutable after construction and safe
to share across threads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .errors import (
    DuplicateId,
    EmptyCorpus,
    MalformedRecord,
    MissingEmbedding,
    RowCountMismatch,
    UnknownVideo,
)
from .textnorm import is_token_substring, normalize_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Caption:
    """One caption with its pre-parsed noun phrases and triples."""

    id: str
    video_id: str
    text: str
    noun_phrases: tuple[str, ...]
    triples: tuple[tuple[str, str, str], ...]


@dataclass(frozen=True)
class CaptionCorpus:
    captions: tuple[Caption, ...]
    by_video: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.by_video:
            grouped: dict[str, list[str]] = {}
            for cap in self.captions:
                grouped.setdefault(cap.video_id, []).append(cap.id)
            object.__setattr__(
                self, "by_video", {v: tuple(ids) for v, ids in grouped.items()}
            )

    def __len__(self) -> int:
        return len(self.captions)

    @property
    def video_ids(self) -> list[str]:
        return list(self.by_video)

    def caption(self, caption_id: str) -> Caption:
        try:
            return self._index[caption_id]
        except AttributeError:
            object.__setattr__(self, "_index", {c.id: c for c in self.captions})
            return self._index[caption_id]

    def captions_for(self, video_id: str) -> list[Caption]:
        if video_id not in self.by_video:
            raise UnknownVideo(video_id)
        return [self.caption(cid) for cid in self.by_video[video_id]]


class EmbeddingBank:
    """Keyed row-major float32 matrix with total lookup over its keys.

    Vectors are stored un-normalized; cosine normalization happens at
    use time so consumers that need raw dot products keep them.
    """

    def __init__(self, keys: list[str], matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError("embedding matrix must be 2-d")
        if len(keys) != matrix.shape[0]:
            raise RowCountMismatch(
                f"{len(keys)} keys vs {matrix.shape[0]} matrix rows"
            )
        if len(set(keys)) != len(keys):
            seen: set[str] = set()
            dup = next(k for k in keys if k in seen or seen.add(k))
            raise DuplicateId(dup)
        self.keys: tuple[str, ...] = tuple(keys)
        self.matrix: np.ndarray = matrix
        self._index: dict[str, int] = {k: i for i, k in enumerate(keys)}
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, key: str) -> np.ndarray:
        try:
            return self.matrix[self._index[key]]
        except KeyError:
            raise MissingEmbedding(key) from None

    def rows(self, keys: list[str]) -> np.ndarray:
        """Submatrix for `keys`, in the given order."""
        try:
            idx = [self._index[k] for k in keys]
        except KeyError as exc:
            raise MissingEmbedding(exc.args[0]) from None
        return self.matrix[idx]

    def save(self, matrix_path: str | Path, keys_path: str | Path) -> None:
        binio.write_matrix(matrix_path, self.matrix)
        binio.write_keys(keys_path, list(self.keys))


class VideoFeatureStore:
    """Per-video T x d frame feature matrices."""

    def __init__(self, videos: dict[str, np.ndarray]):
        self._videos = {vid: np.ascontiguousarray(m, dtype=np.float32)
                        for vid, m in videos.items()}
        for m in self._videos.values():
            m.setflags(write=False)

    def __len__(self) -> int:
        return len(self._videos)

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._videos

    @property
    def video_ids(self) -> list[str]:
        return list(self._videos)

    def frames(self, video_id: str) -> np.ndarray:
        try:
            return self._videos[video_id]
        except KeyError:
            raise UnknownVideo(video_id) from None

    def save(self, path: str | Path) -> None:
        binio.write_video_container(path, self._videos)


def _require_str(record: dict, key: str, line_no: int) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value:
        raise MalformedRecord(line_no, f"field {key!r} must be a non-empty string")
    return value


def load_captions(path: str | Path) -> CaptionCorpus:
    """Load `captions.jsonl`; one JSON object per line.

    Noun phrases and triple endpoints that are not token substrings of
    the normalized caption text are flagged non-literal with a warning,
    not an error: parsers may lemmatize or reorder.
    """
    captions: list[Caption] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, "record must be a JSON object")
            cap_id = _require_str(record, "id", line_no)
            video_id = _require_str(record, "video_id", line_no)
            text = _require_str(record, "text", line_no)
            phrases = record.get("noun_phrases", [])
            triples = record.get("triples", [])
            if not isinstance(phrases, list) or any(not isinstance(p, str) for p in phrases):
                raise MalformedRecord(line_no, "noun_phrases must be a list of strings")
            if (not isinstance(triples, list)
                    or any(not (isinstance(t, list) and len(t) == 3
                                and all(isinstance(x, str) for x in t))
                           for t in triples)):
                raise MalformedRecord(line_no, "triples must be a list of [s, p, o] triples")
            if cap_id in seen:
                raise DuplicateId(cap_id)
            seen.add(cap_id)

            norm_text = normalize_text(text)
            for phrase in phrases:
                if not is_token_substring(phrase, norm_text):
                    logger.warning("caption %s: non-literal noun phrase %r", cap_id, phrase)
            for subj, _, obj in triples:
                for endpoint in (subj, obj):
                    if not is_token_substring(endpoint, norm_text):
                        logger.warning("caption %s: non-literal triple endpoint %r",
                                       cap_id, endpoint)

            captions.append(Caption(
                id=cap_id,
                video_id=video_id,
                text=text,
                noun_phrases=tuple(phrases),
                triples=tuple((s, p, o) for s, p, o in triples),
            ))
    if not captions:
        raise EmptyCorpus(f"{path}: no caption records")
    return CaptionCorpus(captions=tuple(captions))


def load_embedding_bank(matrix_path: str | Path, keys_path: str | Path) -> EmbeddingBank:
    matrix = binio.read_matrix(matrix_path)
    keys = binio.read_keys(keys_path)
    if len(keys) != matrix.shape[0]:
        raise RowCountMismatch(
            f"{keys_path}: {len(keys)} keys for {matrix.shape[0]} rows"
        )
    return EmbeddingBank(keys, matrix)


def load_video_features(path: str | Path) -> VideoFeatureStore:
    return VideoFeatureStore(binio.read_video_container(path))
