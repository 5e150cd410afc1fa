"""Similarity kernels and retrieval strategies over the memory banks.

Scoring is an exact scan: video-to-item similarity is the mean over
frames of the frame/item cosine, computed with one blocked matrix
product per bank. Banks stay small enough (hundreds of thousands of
rows) that approximate indexing would only add moving parts.

Returned lists are always sorted by (score desc, key asc). The only
stochastic step, in-domain category retention, draws from a seeded
splitmix64 stream in the stats section's iteration order, one draw per
category, so a seed fully determines the outcome.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import EmbeddingBank
from .errors import (
    DimensionMismatch,
    EmptyBank,
    EmptyInput,
    StatsModeMismatch,
)
from .rng import SplitMix64
from .taxonomy import (
    CROSS_DOMAIN,
    IN_DOMAIN,
    CategoryStats,
    round_half_away_from_zero,
)

logger = logging.getLogger(__name__)

# Shift offset applied before normalizing score lists that contain
# non-positive mass; keeps top-p well defined for cosine scores <= 0.
TOP_P_EPSILON = 1e-9

RETENTION_BATCH = "batch"
RETENTION_PER_ITEM = "per_item"


@dataclass(frozen=True)
class ScoredItem:
    key: str
    score: float
    category: str | None = None


@dataclass
class RetrievalConfig:
    mode: str = IN_DOMAIN            # in_domain | cross_domain | direct_top_k
    k: int = 1                       # direct mode budget
    base_retrieval: int = 2          # B, cross mode
    tau: float = 1.0                 # top-p threshold, in (0, 1]
    seed: int = 0
    temperature: float = 1.0         # caption-prompt softmax temperature
    retention: str = RETENTION_BATCH

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.mode == "direct_top_k" and self.k < 1:
            raise ValueError(f"k must be >= 1 in direct mode, got {self.k}")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in float64; zero vectors score 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(u.shape[-1], v.shape[-1])
    un = np.linalg.norm(u)
    vn = np.linalg.norm(v)
    if un == 0.0 or vn == 0.0:
        return 0.0
    return float(u @ v / (un * vn))


def video_item_similarity(frames: np.ndarray, item_embedding: np.ndarray) -> float:
    """Mean over frames of the frame/item cosine."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[None, :]
    item = np.asarray(item_embedding, dtype=np.float64)
    if frames.shape[1] != item.shape[0]:
        raise DimensionMismatch(frames.shape[1], item.shape[0])
    return float(np.mean([cosine(f, item) for f in frames]))


def bank_scores(frames: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Vectorized video_item_similarity against every matrix row."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[None, :]
    matrix = np.asarray(matrix, dtype=np.float64)
    if frames.shape[1] != matrix.shape[1]:
        raise DimensionMismatch(frames.shape[1], matrix.shape[1])
    fn = np.linalg.norm(frames, axis=1, keepdims=True)
    mn = np.linalg.norm(matrix, axis=1, keepdims=True)
    fhat = np.divide(frames, fn, out=np.zeros_like(frames), where=fn != 0.0)
    mhat = np.divide(matrix, mn, out=np.zeros_like(matrix), where=mn != 0.0)
    return (fhat @ mhat.T).mean(axis=0)


def _sorted_items(
    keys: Sequence[str],
    scores: np.ndarray,
    categories: Mapping[str, str] | None = None,
) -> list[ScoredItem]:
    order = sorted(range(len(keys)), key=lambda i: (-scores[i], keys[i]))
    return [
        ScoredItem(
            key=keys[i],
            score=float(scores[i]),
            category=categories.get(keys[i]) if categories else None,
        )
        for i in order
    ]


def score_bank(
    frames: np.ndarray,
    keys: Sequence[str],
    embeddings: EmbeddingBank,
) -> list[ScoredItem]:
    """Every bank item scored against the video, sorted."""
    if not keys:
        raise EmptyBank("bank has no items to score")
    return _sorted_items(list(keys), bank_scores(frames, embeddings.rows(list(keys))))


def direct_top_k(
    frames: np.ndarray,
    keys: Sequence[str],
    embeddings: EmbeddingBank,
    k: int,
) -> list[ScoredItem]:
    """Plain global top-k, the non-category baseline."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return score_bank(frames, keys, embeddings)[:k]


def _category_label(assignment_value) -> str:
    if isinstance(assignment_value, tuple):
        from .taxonomy import pair_label
        return pair_label(*assignment_value)
    return assignment_value


def retrieve_in_domain(
    frames: np.ndarray,
    keys: Sequence[str],
    embeddings: EmbeddingBank,
    assignment: Mapping[str, str] | Mapping[str, tuple[str, str]],
    stats: CategoryStats,
    section: str,
    seed: int,
    retention: str = RETENTION_BATCH,
) -> list[ScoredItem]:
    """Category-aware retrieval with statistical priors.

    Per category, the top-round(mu) members by similarity form a batch;
    one Uniform[0,1) draw per category (in stats order, drawn whether or
    not the batch is empty, so the stream never shifts) retains the
    batch iff u < p. `retention="per_item"` instead draws one u per
    batch member and keeps members independently.
    """
    if stats.mode != IN_DOMAIN:
        raise StatsModeMismatch(IN_DOMAIN, stats.mode)
    if not keys:
        raise EmptyBank("bank has no items to score")
    if retention not in (RETENTION_BATCH, RETENTION_PER_ITEM):
        raise ValueError(f"unknown retention mode {retention!r}")

    key_list = list(keys)
    scores = bank_scores(frames, embeddings.rows(key_list))
    labels = {k: _category_label(assignment[k]) for k in key_list if k in assignment}
    ranked = _sorted_items(key_list, scores, labels)

    by_category: dict[str, list[ScoredItem]] = {}
    for item in ranked:
        if item.category is not None:
            by_category.setdefault(item.category, []).append(item)

    stream = SplitMix64(seed)
    kept: list[ScoredItem] = []
    for category, entry in stats.section(section).items():
        members = by_category.get(category, [])
        cap = round_half_away_from_zero(entry.mu)
        batch = members[:cap]
        if retention == RETENTION_BATCH:
            u = stream.uniform()
            if u < entry.p:
                kept.extend(batch)
        else:
            for item in batch:
                if stream.uniform() < entry.p:
                    kept.append(item)
    return sorted(kept, key=lambda it: (-it.score, it.key))


def retrieve_cross_domain(
    frames: np.ndarray,
    keys: Sequence[str],
    embeddings: EmbeddingBank,
    assignment: Mapping[str, str] | Mapping[str, tuple[str, str]],
    stats: CategoryStats,
    section: str,
) -> list[ScoredItem]:
    """Deterministic union of per-category top-quota items."""
    if stats.mode != CROSS_DOMAIN:
        raise StatsModeMismatch(CROSS_DOMAIN, stats.mode)
    if not keys:
        raise EmptyBank("bank has no items to score")

    key_list = list(keys)
    scores = bank_scores(frames, embeddings.rows(key_list))
    labels = {k: _category_label(assignment[k]) for k in key_list if k in assignment}
    ranked = _sorted_items(key_list, scores, labels)

    by_category: dict[str, list[ScoredItem]] = {}
    for item in ranked:
        if item.category is not None:
            by_category.setdefault(item.category, []).append(item)

    kept: list[ScoredItem] = []
    for category, entry in stats.section(section).items():
        kept.extend(by_category.get(category, [])[:entry.quota])
    if not kept:
        logger.warning("cross-domain retrieval produced an empty set (all quotas zero?)")
    return sorted(kept, key=lambda it: (-it.score, it.key))


def top_p_refine(items: Sequence[ScoredItem], tau: float) -> list[ScoredItem]:
    """Shortest score-descending prefix whose normalized mass reaches tau.

    Scores are normalized by their sum; when the minimum score is not
    strictly positive, all scores are first shifted by -min + epsilon.
    If accumulated float error keeps every prefix below tau, the whole
    list is returned, so the output is never empty.
    """
    if not items:
        raise EmptyInput("top-p refinement over an empty list")
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must be in (0, 1], got {tau}")

    ordered = sorted(items, key=lambda it: (-it.score, it.key))
    raw = np.array([it.score for it in ordered], dtype=np.float64)
    if raw.min() <= 0.0:
        raw = raw - raw.min() + TOP_P_EPSILON
    shares = raw / raw.sum()
    cumulative = np.cumsum(shares)
    qualifying = np.nonzero(cumulative >= tau)[0]
    cut = int(qualifying[0]) + 1 if qualifying.size else len(ordered)
    return list(ordered[:cut])


def ec_weighted_embedding(
    frames: np.ndarray,
    caption_ids: Sequence[str],
    embeddings: EmbeddingBank,
    temperature: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax-weighted mixture of caption embeddings for one video.

    Returns (mixture vector, weights aligned with caption_ids); the
    weights sum to 1 and the mixture lies in the captions' convex hull.
    """
    if not caption_ids:
        raise EmptyBank("caption bank is empty")
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    matrix = embeddings.rows(list(caption_ids)).astype(np.float64)
    sims = bank_scores(frames, matrix)
    logits = sims / temperature
    logits -= logits.max()
    weights = np.exp(logits)
    weights /= weights.sum()
    return weights @ matrix, weights
