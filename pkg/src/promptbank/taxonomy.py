"""Category assignment and statistical priors for category-aware retrieval.

Two different counts share the name "category count" in the retrieval
literature, so they live in separate fields here:

* in-domain: `video_count` is the number of videos whose deduplicated
  phrase set touches the category, and `member_hits` accumulates the
  size of those intersections. Priors follow: p = video_count / |V|,
  mu = member_hits / video_count.
* cross-domain: `instance_count` is the raw number of parsed phrase
  (or triple) instances in the corpus belonging to the category; the
  minimum positive count is the base b, and each category receives a
  retrieval quota r = round(instance_count / b * B).

round() is round-half-away-from-zero, centralized in
:func:`round_half_away_from_zero`, because bank sizes must not depend
on banker's rounding quirks.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .banks import EnhancedTriple, NounPhraseBank, SceneGraphBank
from .corpus import CaptionCorpus, EmbeddingBank
from .errors import AllCategoriesEmpty, EmptyCorpus, UncategorizedPhrase
from .textnorm import normalize_text

logger = logging.getLogger(__name__)

IN_DOMAIN = "in_domain"
CROSS_DOMAIN = "cross_domain"

PAIR_SEPARATOR = "_pred_"


def round_half_away_from_zero(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def pair_label(subject_category: str, object_category: str) -> str:
    return f"{subject_category}{PAIR_SEPARATOR}{object_category}"


@dataclass(frozen=True)
class CategoryModel:
    """Taxonomy plus per-unit assignments.

    `np_assignment` maps every bank phrase to one category;
    `sg_assignment` maps every bank triple key to its
    (subject category, object category) pair.
    """

    categories: tuple[str, ...]
    np_assignment: dict[str, str]
    sg_assignment: dict[str, tuple[str, str]] = field(default_factory=dict)

    def pair_labels(self) -> list[str]:
        return sorted({pair_label(s, o) for s, o in self.sg_assignment.values()})


@dataclass
class StatEntry:
    video_count: int = 0      # in-domain N: videos touching the category
    member_hits: int = 0      # in-domain: summed intersection sizes
    p: float = 0.0
    mu: float = 0.0
    instance_count: int = 0   # cross-domain N: parsed instances in the corpus
    quota: int = 0            # cross-domain r

    def to_dict(self) -> dict:
        return {
            "video_count": self.video_count,
            "member_hits": self.member_hits,
            "p": self.p,
            "mu": self.mu,
            "instance_count": self.instance_count,
            "quota": self.quota,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StatEntry":
        return cls(**{k: doc[k] for k in
                      ("video_count", "member_hits", "p", "mu", "instance_count", "quota")})


@dataclass
class CategoryStats:
    """Priors for one retrieval mode. Section iteration order is the draw order."""

    mode: str
    video_count: int = 0
    base_b: int = 0
    base_retrieval: int = 0   # B, cross-domain only
    np: dict[str, StatEntry] = field(default_factory=dict)
    sg: dict[str, StatEntry] = field(default_factory=dict)
    sg_base_b: int = 0

    def section(self, kind: str) -> dict[str, StatEntry]:
        if kind == "np":
            return self.np
        if kind == "sg":
            return self.sg
        raise ValueError(f"unknown stats section {kind!r}")


def load_taxonomy(path: str | Path) -> tuple[list[str], dict[str, list[str]]]:
    """Read `categories.json`: {"taxonomy": [...], "assignments": {cat: [phrases]}}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    taxonomy = list(doc["taxonomy"])
    assignments = {cat: list(doc.get("assignments", {}).get(cat, [])) for cat in taxonomy}
    extra = set(doc.get("assignments", {})) - set(taxonomy)
    if extra:
        raise UncategorizedPhrase(
            f"assignment categories missing from taxonomy: {sorted(extra)}"
        )
    return taxonomy, assignments


def assign_categories(
    np_bank: NounPhraseBank,
    taxonomy: list[str],
    assignments: dict[str, list[str]],
) -> CategoryModel:
    """Assign every bank phrase its category from the taxonomy file.

    Phrases listed in the file but absent from the bank are ignored with
    a warning; a bank phrase missing from the file is an error. A phrase
    listed under two categories keeps the first (taxonomy order) with a
    warning.
    """
    phrase_to_cat: dict[str, str] = {}
    bank_phrases = set(np_bank.phrases)
    for cat in taxonomy:
        for raw in assignments.get(cat, []):
            phrase = normalize_text(raw)
            if phrase in phrase_to_cat:
                if phrase_to_cat[phrase] != cat:
                    logger.warning("phrase %r listed under %r and %r; keeping %r",
                                   phrase, phrase_to_cat[phrase], cat, phrase_to_cat[phrase])
                continue
            if phrase not in bank_phrases:
                logger.warning("taxonomy phrase %r is not in the bank; ignored", phrase)
                continue
            phrase_to_cat[phrase] = cat
    for phrase in np_bank.phrases:
        if phrase not in phrase_to_cat:
            raise UncategorizedPhrase(phrase)
    return CategoryModel(categories=tuple(taxonomy), np_assignment=phrase_to_cat)


def assign_nearest_category(
    phrase: str,
    bge_bank: EmbeddingBank,
    model: CategoryModel,
) -> str:
    """Category of the bank phrase nearest in embedding space.

    Ties break lexicographically ascending on the neighbor phrase.
    """
    query = bge_bank.lookup(phrase).astype(np.float64)
    neighbors = sorted(model.np_assignment)
    rows = bge_bank.rows(neighbors).astype(np.float64)
    qn = np.linalg.norm(query)
    rn = np.linalg.norm(rows, axis=1)
    safe = np.where(rn == 0.0, 1.0, rn)
    sims = np.where(rn == 0.0, 0.0, rows @ query / safe) / (qn if qn != 0.0 else 1.0)
    if qn == 0.0:
        sims = np.zeros(len(neighbors))
    best = min(range(len(neighbors)), key=lambda i: (-sims[i], neighbors[i]))
    return model.np_assignment[neighbors[best]]


def categorize_scene_graphs(
    sg_bank: SceneGraphBank,
    model: CategoryModel,
    bge_bank: EmbeddingBank,
) -> CategoryModel:
    """Complete the model with a category pair per bank triple.

    Endpoints that are bank phrases keep their category; the rest are
    resolved through their nearest bank-phrase embedding.
    """
    resolved: dict[str, str] = {}

    def endpoint_category(text: str) -> str:
        if text in model.np_assignment:
            return model.np_assignment[text]
        if text not in resolved:
            resolved[text] = assign_nearest_category(text, bge_bank, model)
        return resolved[text]

    sg_assignment = {}
    for key, _ in sg_bank.entries:
        subj, _, obj = sg_bank.components[key]
        sg_assignment[key] = (endpoint_category(subj), endpoint_category(obj))
    return CategoryModel(
        categories=model.categories,
        np_assignment=dict(model.np_assignment),
        sg_assignment=sg_assignment,
    )


def _in_domain_section(
    per_video_units: dict[str, set[str]],
    members_by_category: dict[str, set[str]],
    category_order: list[str],
    video_count: int,
) -> dict[str, StatEntry]:
    section: dict[str, StatEntry] = {}
    for cat in category_order:
        members = members_by_category.get(cat, set())
        n_videos = 0
        hits = 0
        for units in per_video_units.values():
            inter = len(units & members)
            if inter > 0:
                n_videos += 1
                hits += inter
        entry = StatEntry(video_count=n_videos, member_hits=hits)
        entry.p = n_videos / video_count if video_count else 0.0
        entry.mu = hits / n_videos if n_videos else 0.0
        section[cat] = entry
    return section


def compute_in_domain_stats(
    corpus: CaptionCorpus,
    model: CategoryModel,
    selections: list[EnhancedTriple] | None = None,
) -> CategoryStats:
    """Per-category occurrence probability p and mean distinct count mu.

    Phrases are deduplicated per video before intersecting with each
    category's bank phrases. When `selections` are provided and the
    model carries triple assignments, the same procedure runs over
    enhanced triples grouped by category pair.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("no captions to compute statistics over")
    video_count = len(corpus.by_video)

    per_video_phrases: dict[str, set[str]] = {}
    for vid, cap_ids in corpus.by_video.items():
        phrases: set[str] = set()
        for cid in cap_ids:
            phrases.update(normalize_text(p) for p in corpus.caption(cid).noun_phrases)
        phrases.discard("")
        per_video_phrases[vid] = phrases

    np_members: dict[str, set[str]] = {}
    for phrase, cat in model.np_assignment.items():
        np_members.setdefault(cat, set()).add(phrase)

    stats = CategoryStats(mode=IN_DOMAIN, video_count=video_count)
    stats.np = _in_domain_section(
        per_video_phrases, np_members, list(model.categories), video_count
    )

    if selections is not None and model.sg_assignment:
        per_video_keys: dict[str, set[str]] = {vid: set() for vid in corpus.by_video}
        caption_video = {c.id: c.video_id for c in corpus.captions}
        bank_keys = set(model.sg_assignment)
        for sel in selections:
            if sel.key in bank_keys:
                per_video_keys[caption_video[sel.source_caption_id]].add(sel.key)
        sg_members: dict[str, set[str]] = {}
        for key, (subj_cat, obj_cat) in model.sg_assignment.items():
            sg_members.setdefault(pair_label(subj_cat, obj_cat), set()).add(key)
        stats.sg = _in_domain_section(
            per_video_keys, sg_members, model.pair_labels(), video_count
        )
    return stats


def quotas_from_counts(counts: dict[str, int], base_retrieval: int) -> tuple[int, dict[str, int]]:
    """Quota per category from instance counts: r = round(N / b * B).

    b is the smallest positive count (its category receives exactly B);
    zero-count categories receive a zero quota.
    """
    if base_retrieval < 1:
        raise ValueError(f"base retrieval number must be >= 1, got {base_retrieval}")
    positive = [n for n in counts.values() if n > 0]
    if not positive:
        raise AllCategoriesEmpty("every category has a zero instance count")
    base = min(positive)
    quotas = {
        cat: round_half_away_from_zero(n / base * base_retrieval) if n > 0 else 0
        for cat, n in counts.items()
    }
    return base, quotas


def compute_cross_domain_quotas(
    corpus: CaptionCorpus,
    model: CategoryModel,
    base_retrieval: int,
    selections: list[EnhancedTriple] | None = None,
) -> CategoryStats:
    """Instance counts over the source corpus and per-category quotas.

    Unlike the in-domain statistics, instances are counted raw: every
    parsed occurrence of a bank phrase counts, with no per-video or
    per-caption deduplication. Triple quotas (when selections are given)
    use the pair-level minimum as their own base.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("no captions to compute statistics over")

    np_counts: Counter[str] = Counter()
    for cap in corpus.captions:
        for raw in cap.noun_phrases:
            phrase = normalize_text(raw)
            cat = model.np_assignment.get(phrase)
            if cat is not None:
                np_counts[cat] += 1
    counts = {cat: np_counts.get(cat, 0) for cat in model.categories}
    base, quotas = quotas_from_counts(counts, base_retrieval)

    stats = CategoryStats(
        mode=CROSS_DOMAIN,
        video_count=len(corpus.by_video),
        base_b=base,
        base_retrieval=base_retrieval,
    )
    stats.np = {
        cat: StatEntry(instance_count=counts[cat], quota=quotas[cat])
        for cat in model.categories
    }

    if selections is not None and model.sg_assignment:
        sg_counts: Counter[str] = Counter()
        for sel in selections:
            assigned = model.sg_assignment.get(sel.key)
            if assigned is not None:
                sg_counts[pair_label(*assigned)] += 1
        pair_counts = {label: sg_counts.get(label, 0) for label in model.pair_labels()}
        if any(n > 0 for n in pair_counts.values()):
            sg_base, sg_quotas = quotas_from_counts(pair_counts, base_retrieval)
            stats.sg_base_b = sg_base
            stats.sg = {
                label: StatEntry(instance_count=pair_counts[label], quota=sg_quotas[label])
                for label in model.pair_labels()
            }
        else:
            logger.warning("no triple instances matched the bank; sg quotas empty")
    return stats


# --- serialization ---

def save_model(path: str | Path, model: CategoryModel, meta: dict) -> None:
    doc = {
        **meta,
        "taxonomy": list(model.categories),
        "np_assignment": dict(sorted(model.np_assignment.items())),
        "sg_assignment": {k: list(v) for k, v in sorted(model.sg_assignment.items())},
    }
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> CategoryModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return CategoryModel(
        categories=tuple(doc["taxonomy"]),
        np_assignment=dict(doc["np_assignment"]),
        sg_assignment={k: (v[0], v[1]) for k, v in doc.get("sg_assignment", {}).items()},
    )


def save_stats(path: str | Path, stats: CategoryStats, meta: dict) -> None:
    doc = {
        **meta,
        "mode": stats.mode,
        "video_count": stats.video_count,
        "base_b": stats.base_b,
        "sg_base_b": stats.sg_base_b,
        "base_retrieval": stats.base_retrieval,
        "np": {cat: entry.to_dict() for cat, entry in stats.np.items()},
        "np_order": list(stats.np),
        "sg": {label: entry.to_dict() for label, entry in stats.sg.items()},
        "sg_order": list(stats.sg),
    }
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_stats(path: str | Path) -> CategoryStats:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    stats = CategoryStats(
        mode=doc["mode"],
        video_count=doc["video_count"],
        base_b=doc.get("base_b", 0),
        sg_base_b=doc.get("sg_base_b", 0),
        base_retrieval=doc.get("base_retrieval", 0),
    )
    stats.np = {cat: StatEntry.from_dict(doc["np"][cat]) for cat in doc["np_order"]}
    stats.sg = {label: StatEntry.from_dict(doc["sg"][label]) for label in doc["sg_order"]}
    return stats
