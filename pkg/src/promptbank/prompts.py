"""Prompt bundle assembly for training and inference.

A bundle's slot order is fixed: noun phrases, then scene graphs, then
the single caption-level vector. Training bundles are built around a
perturbed caption embedding (a sampled near neighbor plus Gaussian
noise); inference bundles around category-aware retrieval plus the
softmax-weighted caption mixture.

Neighbor convention for the perturbation: the pool ranks all captions
by cosine to the source caption, self included, except that when the
corpus contains other captions with the exact same text the source id
itself is dropped (its duplicates already represent the text). The
convention string is recorded in every export manifest.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import binio
from .banks import CaptionBank, NounPhraseBank, SceneGraphBank
from .corpus import CaptionCorpus, EmbeddingBank, VideoFeatureStore
from .errors import EmptyBank, IoFailure, MissingEmbedding, UnknownCaption, UnknownVideo
from .retrieval import (
    RetrievalConfig,
    ScoredItem,
    bank_scores,
    ec_weighted_embedding,
    retrieve_cross_domain,
    retrieve_in_domain,
    top_p_refine,
)
from .rng import SplitMix64, derive_seed
from .taxonomy import CROSS_DOMAIN, IN_DOMAIN, CategoryModel, CategoryStats

logger = logging.getLogger(__name__)

NEIGHBOR_CONVENTION = (
    "cosine ranking over all captions, self included; "
    "self id excluded when exact-text duplicates exist"
)


@dataclass(frozen=True)
class AugmentedEmbedding:
    vector: np.ndarray
    source_caption_id: str
    sampled_neighbor_id: str
    noise_variance: float


@dataclass(frozen=True)
class PromptBundle:
    """Ordered prompt slots: noun phrases, scene graphs, one caption vector."""

    np_slots: tuple[str, ...]
    sg_slots: tuple[str, ...]
    ec_slot: np.ndarray
    target_text: str | None = None
    provenance: dict = field(default_factory=dict)


def augment_caption_embedding(
    caption_id: str,
    ec_embeddings: EmbeddingBank,
    m: int,
    lambda_sq: float,
    seed: int,
    texts: dict[str, str] | None = None,
) -> AugmentedEmbedding:
    """Sample a near neighbor of the caption and perturb its embedding.

    The neighbor is drawn uniformly from the m nearest captions by
    cosine (ids break score ties ascending), then each dimension gets
    i.i.d. Normal(0, lambda_sq) noise. The random stream is derived
    from (seed, caption_id): first the neighbor draw, then the noise.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if lambda_sq < 0.0:
        raise ValueError(f"lambda_sq must be >= 0, got {lambda_sq}")
    if caption_id not in ec_embeddings:
        raise UnknownCaption(caption_id)

    anchor = ec_embeddings.lookup(caption_id)
    keys = list(ec_embeddings.keys)
    sims = bank_scores(anchor, ec_embeddings.matrix)

    pool = keys
    if texts is not None:
        own_text = texts.get(caption_id)
        has_duplicate = any(
            k != caption_id and texts.get(k) == own_text for k in keys
        )
        if has_duplicate:
            pool = [k for k in keys if k != caption_id]
    sim_of = dict(zip(keys, sims))
    ranked = sorted(pool, key=lambda k: (-sim_of[k], k))
    nearest = ranked[:m]

    stream = SplitMix64(derive_seed(seed, f"augment:{caption_id}"))
    neighbor_id = nearest[stream.choice_index(len(nearest))]
    base = ec_embeddings.lookup(neighbor_id).astype(np.float64)
    noise = stream.normals(base.shape[0], sigma=float(np.sqrt(lambda_sq)))
    return AugmentedEmbedding(
        vector=base + noise,
        source_caption_id=caption_id,
        sampled_neighbor_id=neighbor_id,
        noise_variance=lambda_sq,
    )


def _text_top_k(
    query: np.ndarray,
    keys: Sequence[str],
    embeddings: EmbeddingBank,
    k: int,
) -> list[ScoredItem]:
    if not keys:
        raise EmptyBank("bank has no items to score")
    key_list = list(keys)
    scores = bank_scores(query, embeddings.rows(key_list))
    order = sorted(range(len(key_list)), key=lambda i: (-scores[i], key_list[i]))
    return [ScoredItem(key=key_list[i], score=float(scores[i])) for i in order[:k]]


def build_training_prompt(
    aug: AugmentedEmbedding,
    np_bank: NounPhraseBank,
    sg_bank: SceneGraphBank,
    np_embeddings: EmbeddingBank,
    sg_embeddings: EmbeddingBank,
    k_p: int,
    k_g: int,
    target_text: str,
) -> PromptBundle:
    """Top-k_p phrases and top-k_g triples by cosine to the perturbed vector."""
    if k_p < 1 or k_g < 1:
        raise ValueError(f"k_p and k_g must be >= 1, got {k_p}, {k_g}")
    np_items = _text_top_k(aug.vector, np_bank.phrases, np_embeddings, k_p)
    sg_items = _text_top_k(aug.vector, sg_bank.keys, sg_embeddings, k_g)
    return PromptBundle(
        np_slots=tuple(it.key for it in np_items),
        sg_slots=tuple(it.key for it in sg_items),
        ec_slot=aug.vector,
        target_text=target_text,
        provenance={
            "source_caption_id": aug.source_caption_id,
            "neighbor_id": aug.sampled_neighbor_id,
            "noise_variance": aug.noise_variance,
        },
    )


def build_inference_prompt(
    video_id: str,
    features: VideoFeatureStore,
    np_bank: NounPhraseBank,
    sg_bank: SceneGraphBank,
    ec_bank: CaptionBank,
    np_embeddings: EmbeddingBank,
    sg_embeddings: EmbeddingBank,
    ec_embeddings: EmbeddingBank,
    model: CategoryModel,
    stats: CategoryStats,
    config: RetrievalConfig,
) -> PromptBundle:
    """Category-aware retrieval, top-p refinement, and the caption mixture."""
    if video_id not in features:
        raise UnknownVideo(video_id)
    frames = features.frames(video_id)

    def retrieve(keys, embeddings, assignment, section):
        if config.mode == IN_DOMAIN:
            candidates = retrieve_in_domain(
                frames, keys, embeddings, assignment, stats, section,
                seed=derive_seed(config.seed, f"retrieve:{section}:{video_id}"),
                retention=config.retention,
            )
        elif config.mode == CROSS_DOMAIN:
            candidates = retrieve_cross_domain(
                frames, keys, embeddings, assignment, stats, section,
            )
        else:
            raise ValueError(f"unsupported inference mode {config.mode!r}")
        return top_p_refine(candidates, config.tau) if candidates else []

    np_items = retrieve(np_bank.phrases, np_embeddings, model.np_assignment, "np")
    sg_items = retrieve(sg_bank.keys, sg_embeddings, model.sg_assignment, "sg")
    ec_vector, _ = ec_weighted_embedding(
        frames, ec_bank.ids, ec_embeddings, config.temperature
    )
    return PromptBundle(
        np_slots=tuple(it.key for it in np_items),
        sg_slots=tuple(it.key for it in sg_items),
        ec_slot=ec_vector,
        provenance={"video_id": video_id, "mode": config.mode, "tau": config.tau},
    )


# --- dataset export ---

def export_training_prompts(
    corpus: CaptionCorpus,
    np_bank: NounPhraseBank,
    sg_bank: SceneGraphBank,
    np_embeddings: EmbeddingBank,
    sg_embeddings: EmbeddingBank,
    ec_embeddings: EmbeddingBank,
    out_dir: str | Path,
    k_p: int,
    k_g: int,
    m: int,
    lambda_sq: float,
    seed: int,
    meta: dict | None = None,
) -> dict:
    """One training record per caption; captions without embeddings are skipped.

    Writes prompts_train.jsonl, prompt_vectors.mgpb(.keys), manifest.json.
    Reruns with identical inputs and seed are byte-identical.
    """
    out = Path(out_dir)
    texts = {c.id: c.text for c in corpus.captions}

    records = []
    vectors: list[np.ndarray] = []
    vector_keys: list[str] = []
    skipped: list[str] = []
    for cap in corpus.captions:
        if cap.id not in ec_embeddings:
            skipped.append(cap.id)
            continue
        aug = augment_caption_embedding(
            cap.id, ec_embeddings, m, lambda_sq, seed, texts=texts
        )
        bundle = build_training_prompt(
            aug, np_bank, sg_bank, np_embeddings, sg_embeddings,
            k_p, k_g, target_text=cap.text,
        )
        records.append({
            "id": cap.id,
            "np": list(bundle.np_slots),
            "sg": list(bundle.sg_slots),
            "ec_ref": cap.id,
            "target": cap.text,
            "neighbor": aug.sampled_neighbor_id,
            "noise_variance": lambda_sq,
        })
        vectors.append(np.asarray(bundle.ec_slot, dtype=np.float32))
        vector_keys.append(cap.id)

    manifest = {
        "kind": "train",
        "records": len(records),
        "skipped": skipped,
        "seed": seed,
        "k_p": k_p,
        "k_g": k_g,
        "m": m,
        "lambda_sq": lambda_sq,
        "neighbor_convention": NEIGHBOR_CONVENTION,
        **(meta or {}),
    }
    _write_dataset(out, "prompts_train.jsonl", records, vectors, vector_keys, manifest)
    return manifest


def export_inference_prompts(
    features: VideoFeatureStore,
    np_bank: NounPhraseBank,
    sg_bank: SceneGraphBank,
    ec_bank: CaptionBank,
    np_embeddings: EmbeddingBank,
    sg_embeddings: EmbeddingBank,
    ec_embeddings: EmbeddingBank,
    model: CategoryModel,
    stats: CategoryStats,
    config: RetrievalConfig,
    out_dir: str | Path,
    meta: dict | None = None,
) -> dict:
    """One inference record per video, in container order."""
    out = Path(out_dir)
    records = []
    vectors: list[np.ndarray] = []
    vector_keys: list[str] = []
    skipped: list[str] = []
    for video_id in features.video_ids:
        try:
            bundle = build_inference_prompt(
                video_id, features, np_bank, sg_bank, ec_bank,
                np_embeddings, sg_embeddings, ec_embeddings,
                model, stats, config,
            )
        except MissingEmbedding as exc:
            logger.warning("video %s skipped: %s", video_id, exc)
            skipped.append(video_id)
            continue
        records.append({
            "id": video_id,
            "np": list(bundle.np_slots),
            "sg": list(bundle.sg_slots),
            "ec_ref": video_id,
        })
        vectors.append(np.asarray(bundle.ec_slot, dtype=np.float32))
        vector_keys.append(video_id)

    manifest = {
        "kind": "infer",
        "records": len(records),
        "skipped": skipped,
        "seed": config.seed,
        "mode": config.mode,
        "tau": config.tau,
        "temperature": config.temperature,
        "retention": config.retention,
        **(meta or {}),
    }
    _write_dataset(out, "prompts_infer.jsonl", records, vectors, vector_keys, manifest)
    return manifest


def _write_dataset(
    out: Path,
    records_name: str,
    records: list[dict],
    vectors: list[np.ndarray],
    vector_keys: list[str],
    manifest: dict,
) -> None:
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text(encoding="utf-8"))
        if previous.get("kind") != manifest["kind"]:
            raise IoFailure(
                f"{out} already holds a {previous.get('kind')!r} export; "
                f"write {manifest['kind']!r} prompts into their own directory"
            )
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / records_name, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        if vectors:
            matrix = np.stack(vectors)
        else:
            matrix = np.zeros((0, 1), dtype=np.float32)
        binio.write_matrix(out / "prompt_vectors.mgpb", matrix)
        binio.write_keys(out / "prompt_vectors.keys", vector_keys)
        manifest["files"] = {
            "records": records_name,
            "vectors": "prompt_vectors.mgpb",
            "vector_keys": "prompt_vectors.keys",
        }
        (out / "manifest.json").write_text(
            json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoFailure(f"cannot write dataset under {out}: {exc}") from exc


def load_prompt_dataset(out_dir: str | Path) -> list[PromptBundle]:
    """Reconstruct every bundle from a manifest directory, bit-exactly."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    matrix = binio.read_matrix(out / manifest["files"]["vectors"])
    keys = binio.read_keys(out / manifest["files"]["vector_keys"])
    row_of = {k: i for i, k in enumerate(keys)}
    bundles = []
    with open(out / manifest["files"]["records"], "r", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            bundles.append(PromptBundle(
                np_slots=tuple(record["np"]),
                sg_slots=tuple(record["sg"]),
                ec_slot=matrix[row_of[record["ec_ref"]]],
                target_text=record.get("target"),
                provenance={"id": record["id"]},
            ))
    return bundles
