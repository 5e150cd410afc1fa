"""Construction of the three textual memory banks.

The noun-phrase bank keeps the most frequent phrases; the scene-graph
bank keeps the most frequent attribute-enriched triples; the caption
bank keeps every training caption. Scene-graph enrichment is a
two-phase process: candidate triples are emitted first (so an offline
exporter can embed the strings), then the best candidate per original
triple is selected by cosine similarity against the owning caption.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Caption, CaptionCorpus, EmbeddingBank
from .errors import EmptyCorpus, MissingEmbedding
from .textnorm import is_token_substring, normalize_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NounPhraseBank:
    """Phrases with corpus frequencies, ordered by (frequency desc, phrase asc)."""

    entries: tuple[tuple[str, int], ...]

    @property
    def phrases(self) -> list[str]:
        return [p for p, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, phrase: str) -> bool:
        return phrase in {p for p, _ in self.entries}


@dataclass(frozen=True)
class EnhancedTriple:
    subject: str
    predicate: str
    object: str
    source_caption_id: str

    @property
    def key(self) -> str:
        return f"{self.subject} {self.predicate} {self.object}"


@dataclass(frozen=True)
class SceneGraphBank:
    """Enhanced triples keyed by their space-joined string form.

    `components` maps each key back to its (subject, predicate, object)
    split, which the joined form alone cannot recover once subjects or
    objects span multiple tokens.
    """

    entries: tuple[tuple[str, int], ...]
    components: dict[str, tuple[str, str, str]]

    @property
    def keys(self) -> list[str]:
        return [k for k, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class CaptionBank:
    """All training captions: (caption id, text) pairs in corpus order."""

    entries: tuple[tuple[str, str], ...]

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TripleCandidates:
    """All enhancement candidates for one (caption, triple) pair."""

    caption_id: str
    caption_text: str
    triple_index: int
    predicate: str
    pairs: tuple[tuple[str, str], ...]  # (subject option, object option)

    @property
    def keys(self) -> list[str]:
        return [f"{a} {self.predicate} {b}" for a, b in self.pairs]


def build_np_bank(corpus: CaptionCorpus, n_p: int) -> NounPhraseBank:
    """Rank normalized noun phrases by frequency and keep the top n_p.

    A phrase set is formed per caption, so repeats inside one caption
    count once; frequency is the number of captions containing the
    phrase. Ties break lexicographically ascending.
    """
    if n_p < 1:
        raise ValueError(f"n_p must be >= 1, got {n_p}")
    if len(corpus) == 0:
        raise EmptyCorpus("cannot build a phrase bank from an empty corpus")
    counts: Counter[str] = Counter()
    for cap in corpus.captions:
        counts.update({normalize_text(p) for p in cap.noun_phrases if normalize_text(p)})
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return NounPhraseBank(entries=tuple(ranked[:n_p]))


def candidate_sets(caption: Caption) -> list[TripleCandidates]:
    """Enumerate enhancement candidates for every triple of one caption.

    For triple <sub, pred, obj>: subject options are sub itself plus
    every caption phrase containing sub as a token substring; object
    options likewise. Candidates are the cross product, ordered by
    (subject, object) ascending.
    """
    phrases = []
    seen: set[str] = set()
    for p in caption.noun_phrases:
        norm = normalize_text(p)
        if norm and norm not in seen:
            seen.add(norm)
            phrases.append(norm)

    out = []
    for idx, (subj, pred, obj) in enumerate(caption.triples):
        subj_n, pred_n, obj_n = normalize_text(subj), normalize_text(pred), normalize_text(obj)
        subj_opts = sorted({subj_n} | {p for p in phrases if is_token_substring(subj_n, p)})
        obj_opts = sorted({obj_n} | {p for p in phrases if is_token_substring(obj_n, p)})
        pairs = tuple((a, b) for a in subj_opts for b in obj_opts)
        out.append(TripleCandidates(
            caption_id=caption.id,
            caption_text=caption.text,
            triple_index=idx,
            predicate=pred_n,
            pairs=pairs,
        ))
    return out


def emit_sg_candidates(corpus: CaptionCorpus) -> list[TripleCandidates]:
    """Candidate manifest for the whole corpus, in caption order."""
    out: list[TripleCandidates] = []
    for cap in corpus.captions:
        out.extend(candidate_sets(cap))
    return out


def candidate_strings(candidates: list[TripleCandidates]) -> list[str]:
    """Deduplicated strings an exporter must embed: captions plus candidates."""
    strings = {c.caption_text for c in candidates}
    for cand in candidates:
        strings.update(cand.keys)
    return sorted(strings)


def write_candidates_jsonl(path: str | Path, candidates: list[TripleCandidates]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cand in candidates:
            fh.write(json.dumps({
                "caption_id": cand.caption_id,
                "triple_index": cand.triple_index,
                "candidates": cand.keys,
            }, ensure_ascii=False, sort_keys=True) + "\n")


def _cosine_rows(query: np.ndarray, rows: np.ndarray) -> np.ndarray:
    query = query.astype(np.float64)
    rows = rows.astype(np.float64)
    qn = np.linalg.norm(query)
    rn = np.linalg.norm(rows, axis=1)
    if qn == 0.0:
        return np.zeros(rows.shape[0])
    safe = np.where(rn == 0.0, 1.0, rn)
    sims = rows @ query / (safe * qn)
    return np.where(rn == 0.0, 0.0, sims)


def select_enhanced_sg(
    caption: Caption,
    candidates: TripleCandidates,
    bge_bank: EmbeddingBank,
) -> EnhancedTriple:
    """Pick the candidate whose embedding is closest to the caption's.

    Ties break toward the longer key string (richer attributes win),
    then lexicographically ascending.
    """
    keys = candidates.keys
    if not keys:
        raise ValueError("candidate set is empty")
    caption_vec = bge_bank.lookup(caption.text)
    sims = _cosine_rows(caption_vec, bge_bank.rows(keys))
    order = sorted(
        range(len(keys)),
        key=lambda i: (-sims[i], -len(keys[i]), keys[i]),
    )
    best = order[0]
    subj, obj = candidates.pairs[best]
    return EnhancedTriple(
        subject=subj,
        predicate=candidates.predicate,
        object=obj,
        source_caption_id=caption.id,
    )


def select_all(corpus: CaptionCorpus, bge_bank: EmbeddingBank) -> list[EnhancedTriple]:
    """Run candidate enumeration and selection over the whole corpus."""
    selections = []
    for cap in corpus.captions:
        for cand in candidate_sets(cap):
            selections.append(select_enhanced_sg(cap, cand, bge_bank))
    return selections


def build_sg_bank(
    corpus: CaptionCorpus,
    selections: list[EnhancedTriple],
    n_g: int,
) -> SceneGraphBank:
    """Frequency table over selected triples, top n_g kept."""
    if n_g < 1:
        raise ValueError(f"n_g must be >= 1, got {n_g}")
    counts: Counter[str] = Counter()
    components: dict[str, tuple[str, str, str]] = {}
    for sel in selections:
        counts[sel.key] += 1
        components.setdefault(sel.key, (sel.subject, sel.predicate, sel.object))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n_g]
    kept = {k for k, _ in ranked}
    return SceneGraphBank(
        entries=tuple(ranked),
        components={k: v for k, v in components.items() if k in kept},
    )


def build_ec_bank(corpus: CaptionCorpus) -> CaptionBank:
    return CaptionBank(entries=tuple((c.id, c.text) for c in corpus.captions))


# --- bank serialization ---

def save_np_bank(path: str | Path, bank: NounPhraseBank, meta: dict) -> None:
    _dump_json(path, {
        **meta,
        "entries": [{"phrase": p, "frequency": f} for p, f in bank.entries],
    })


def load_np_bank(path: str | Path) -> NounPhraseBank:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return NounPhraseBank(entries=tuple(
        (e["phrase"], int(e["frequency"])) for e in doc["entries"]
    ))


def save_sg_bank(path: str | Path, bank: SceneGraphBank, meta: dict) -> None:
    _dump_json(path, {
        **meta,
        "entries": [
            {
                "key": k,
                "frequency": f,
                "subject": bank.components[k][0],
                "predicate": bank.components[k][1],
                "object": bank.components[k][2],
            }
            for k, f in bank.entries
        ],
    })


def load_sg_bank(path: str | Path) -> SceneGraphBank:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = tuple((e["key"], int(e["frequency"])) for e in doc["entries"])
    components = {
        e["key"]: (e["subject"], e["predicate"], e["object"]) for e in doc["entries"]
    }
    return SceneGraphBank(entries=entries, components=components)


def save_ec_bank(path: str | Path, bank: CaptionBank, meta: dict) -> None:
    _dump_json(path, {
        **meta,
        "entries": [{"id": i, "text": t} for i, t in bank.entries],
    })


def load_ec_bank(path: str | Path) -> CaptionBank:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return CaptionBank(entries=tuple((e["id"], e["text"]) for e in doc["entries"]))


def _dump_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
