"""Command-line entry point exposing the pipeline as subcommands.

Exit codes: 0 success, 2 invalid configuration, 3 missing input file,
1 runtime failure. Logs are line-delimited JSON on stderr; every output
file embeds the hash of the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import banks as banks_mod
from . import binio
from .config import PRESETS, PipelineConfig, config_hash, resolve_config
from .corpus import load_captions, load_embedding_bank, load_video_features
from .errors import ConfigError, PromptBankError
from .logs import setup_logging
from .metrics import evaluate_run, self_bleu
from .prompts import export_inference_prompts, export_training_prompts
from .retrieval import (
    RetrievalConfig,
    direct_top_k,
    ec_weighted_embedding,
    retrieve_cross_domain,
    retrieve_in_domain,
    top_p_refine,
)
from .rng import derive_seed
from .taxonomy import (
    CROSS_DOMAIN,
    IN_DOMAIN,
    assign_categories,
    categorize_scene_graphs,
    compute_cross_domain_quotas,
    compute_in_domain_stats,
    load_model,
    load_stats,
    load_taxonomy,
    save_model,
    save_stats,
)

logger = logging.getLogger(__name__)


def _emb_keys_path(matrix_path: str) -> Path:
    return Path(matrix_path).with_suffix(".keys")


def _load_bank_pair(matrix_path: str):
    return load_embedding_bank(matrix_path, _emb_keys_path(matrix_path))


def _ec_embeddings_by_id(bank, ids: list[str], texts: list[str]):
    """Caption embeddings keyed by caption id.

    Exporters emit text-keyed matrices (one row per unique string); the
    engine operates on caption ids. Accept either keying and rekey
    text-keyed banks through the corpus id -> text mapping.
    """
    from promptbank.corpus import EmbeddingBank

    if all(i in bank for i in ids):
        return bank
    missing = [t for t in texts if t not in bank]
    if missing:
        raise PromptBankError(
            f"caption embeddings cover neither ids nor texts "
            f"(first miss: {missing[0]!r})"
        )
    rows = bank.rows(texts)
    return EmbeddingBank(ids, rows)


def _require_inputs(*paths: str | None) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(p)


def _meta(cfg: PipelineConfig) -> dict:
    return {"config": cfg.to_dict(), "config_hash": config_hash(cfg)}


def _thread_count(cfg: PipelineConfig) -> int:
    return cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def _load_selections(path: str) -> list[banks_mod.EnhancedTriple]:
    selections = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                selections.append(banks_mod.EnhancedTriple(
                    subject=doc["subject"],
                    predicate=doc["predicate"],
                    object=doc["object"],
                    source_caption_id=doc["caption_id"],
                ))
    return selections


# --- subcommands ---

def _write_meta(out: Path, name: str, cfg: PipelineConfig, extra: dict) -> None:
    (out / name).write_text(
        json.dumps({**_meta(cfg), **extra}, ensure_ascii=False,
                   sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def cmd_sg_candidates(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.captions)
    corpus = load_captions(args.captions)
    candidates = banks_mod.emit_sg_candidates(corpus)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    banks_mod.write_candidates_jsonl(out / "sg_candidates.jsonl", candidates)
    strings = banks_mod.candidate_strings(candidates)
    (out / "strings.txt").write_text(
        "".join(s + "\n" for s in strings), encoding="utf-8"
    )
    _write_meta(out, "sg_candidates_meta.json", cfg,
                {"candidate_sets": len(candidates), "strings": len(strings)})
    logger.info("emitted %d candidate sets, %d strings to embed",
                len(candidates), len(strings))
    return 0


def cmd_sg_select(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.captions, args.bge_emb, _emb_keys_path(args.bge_emb))
    corpus = load_captions(args.captions)
    bge = _load_bank_pair(args.bge_emb)
    records = []
    for cap in corpus.captions:
        for cand in banks_mod.candidate_sets(cap):
            sel = banks_mod.select_enhanced_sg(cap, cand, bge)
            records.append({
                "caption_id": sel.source_caption_id,
                "triple_index": cand.triple_index,
                "subject": sel.subject,
                "predicate": sel.predicate,
                "object": sel.object,
                "key": sel.key,
            })
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "sg_selections.jsonl", records)
    _write_meta(out, "sg_selections_meta.json", cfg, {"selections": len(records)})
    logger.info("selected %d enhanced triples", len(records))
    return 0


def cmd_build_banks(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.captions, args.selections)
    corpus = load_captions(args.captions)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(cfg)

    np_bank = banks_mod.build_np_bank(corpus, cfg.n_p)
    banks_mod.save_np_bank(out / "np_bank.json", np_bank, meta)

    if args.selections:
        selections = _load_selections(args.selections)
        sg_bank = banks_mod.build_sg_bank(corpus, selections, cfg.n_g)
        banks_mod.save_sg_bank(out / "sg_bank.json", sg_bank, meta)

    ec_bank = banks_mod.build_ec_bank(corpus)
    banks_mod.save_ec_bank(out / "ec_bank.json", ec_bank, meta)
    logger.info("banks built: %d phrases, %d captions", len(np_bank), len(ec_bank))
    return 0


def cmd_classify(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.np_bank)
    np_bank = banks_mod.load_np_bank(args.np_bank)
    if args.taxonomy == "default":
        source = resources.files("promptbank.data") / "default_taxonomy.json"
        with resources.as_file(source) as path:
            taxonomy, assignments = load_taxonomy(path)
    else:
        _require_inputs(args.taxonomy)
        taxonomy, assignments = load_taxonomy(args.taxonomy)
    model = assign_categories(np_bank, taxonomy, assignments)
    if args.sg_bank:
        _require_inputs(args.sg_bank, args.bge_emb, _emb_keys_path(args.bge_emb))
        sg_bank = banks_mod.load_sg_bank(args.sg_bank)
        bge = _load_bank_pair(args.bge_emb)
        model = categorize_scene_graphs(sg_bank, model, bge)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "category_model.json", model, _meta(cfg))
    logger.info("classified %d phrases, %d triples",
                len(model.np_assignment), len(model.sg_assignment))
    return 0


def cmd_stats(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.captions, args.model)
    corpus = load_captions(args.captions)
    model = load_model(args.model)
    selections = _load_selections(args.selections) if args.selections else None
    if cfg.mode == IN_DOMAIN:
        stats = compute_in_domain_stats(corpus, model, selections)
    else:
        stats = compute_cross_domain_quotas(corpus, model, cfg.base_retrieval, selections)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_stats(out / "stats.json", stats, _meta(cfg))
    logger.info("stats ready: mode=%s categories=%d pairs=%d",
                stats.mode, len(stats.np), len(stats.sg))
    return 0


def _retrieve_one(video_id, features, np_bank, sg_bank, ec_bank,
                  np_emb, sg_emb, ec_emb, model, stats, cfg: PipelineConfig):
    frames = features.frames(video_id)

    def pick(keys, embeddings, assignment, section):
        if not keys or not assignment:
            return []
        if cfg.mode == IN_DOMAIN:
            items = retrieve_in_domain(
                frames, keys, embeddings, assignment, stats, section,
                seed=derive_seed(cfg.seed, f"retrieve:{section}:{video_id}"),
                retention=cfg.retention,
            )
        else:
            items = retrieve_cross_domain(
                frames, keys, embeddings, assignment, stats, section)
        return top_p_refine(items, cfg.tau) if items else []

    np_items = pick(np_bank.phrases, np_emb, model.np_assignment, "np")
    sg_items = pick(sg_bank.keys if sg_bank else [], sg_emb, model.sg_assignment, "sg")
    ec_vector, weights = ec_weighted_embedding(
        frames, ec_bank.ids, ec_emb, cfg.temperature)
    top = np.argsort(-weights)[:10]
    record = {
        "video_id": video_id,
        "np": [{"key": it.key, "score": it.score} for it in np_items],
        "sg": [{"key": it.key, "score": it.score} for it in sg_items],
        "ec_weights_topk": [
            {"id": ec_bank.ids[i], "weight": float(weights[i])} for i in top
        ],
    }
    return record, ec_vector


def cmd_retrieve(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.features, args.np_bank, args.ec_bank, args.model,
                    args.stats, args.np_emb, args.ec_emb)
    features = load_video_features(args.features)
    np_bank = banks_mod.load_np_bank(args.np_bank)
    sg_bank = banks_mod.load_sg_bank(args.sg_bank) if args.sg_bank else None
    ec_bank = banks_mod.load_ec_bank(args.ec_bank)
    model = load_model(args.model)
    stats = load_stats(args.stats)
    np_emb = _load_bank_pair(args.np_emb)
    sg_emb = _load_bank_pair(args.sg_emb) if args.sg_emb else None
    ec_emb = _ec_embeddings_by_id(
        _load_bank_pair(args.ec_emb), ec_bank.ids, [t for _, t in ec_bank.entries]
    )

    expected = IN_DOMAIN if cfg.mode == IN_DOMAIN else CROSS_DOMAIN
    if stats.mode != expected:
        raise ConfigError(f"stats file is {stats.mode}, config wants {expected}")

    video_ids = features.video_ids
    with ThreadPoolExecutor(max_workers=_thread_count(cfg)) as pool:
        results = list(pool.map(
            lambda vid: _retrieve_one(vid, features, np_bank, sg_bank, ec_bank,
                                      np_emb, sg_emb, ec_emb, model, stats, cfg),
            video_ids,
        ))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "retrieved.jsonl", [r for r, _ in results])
    if results:
        matrix = np.stack([v for _, v in results]).astype(np.float32)
    else:
        matrix = np.zeros((0, 1), dtype=np.float32)
    binio.write_matrix(out / "ec_vectors.mgpb", matrix)
    binio.write_keys(out / "ec_vectors.keys", video_ids)
    (out / "retrieve_meta.json").write_text(
        json.dumps(_meta(cfg), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    logger.info("retrieved prompts for %d videos", len(video_ids))
    return 0


def cmd_assemble_train(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.captions, args.np_bank, args.sg_bank,
                    args.np_emb, args.sg_emb, args.ec_emb)
    corpus = load_captions(args.captions)
    ec_emb = _ec_embeddings_by_id(
        _load_bank_pair(args.ec_emb),
        [c.id for c in corpus.captions],
        [c.text for c in corpus.captions],
    )
    manifest = export_training_prompts(
        corpus,
        banks_mod.load_np_bank(args.np_bank),
        banks_mod.load_sg_bank(args.sg_bank),
        _load_bank_pair(args.np_emb),
        _load_bank_pair(args.sg_emb),
        ec_emb,
        args.out_dir,
        k_p=cfg.k_p, k_g=cfg.k_g, m=cfg.m,
        lambda_sq=cfg.lambda_sq, seed=cfg.seed,
        meta=_meta(cfg),
    )
    logger.info("assembled %d training prompts (%d skipped)",
                manifest["records"], len(manifest["skipped"]))
    return 0


def cmd_assemble_infer(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.features, args.np_bank, args.sg_bank, args.ec_bank,
                    args.model, args.stats, args.np_emb, args.sg_emb, args.ec_emb)
    stats = load_stats(args.stats)
    expected = IN_DOMAIN if cfg.mode == IN_DOMAIN else CROSS_DOMAIN
    if stats.mode != expected:
        raise ConfigError(f"stats file is {stats.mode}, config wants {expected}")
    retrieval_cfg = RetrievalConfig(
        mode=cfg.mode, tau=cfg.tau, seed=cfg.seed,
        temperature=cfg.temperature, retention=cfg.retention,
        base_retrieval=cfg.base_retrieval,
    )
    ec_bank = banks_mod.load_ec_bank(args.ec_bank)
    ec_emb = _ec_embeddings_by_id(
        _load_bank_pair(args.ec_emb), ec_bank.ids, [t for _, t in ec_bank.entries]
    )
    manifest = export_inference_prompts(
        load_video_features(args.features),
        banks_mod.load_np_bank(args.np_bank),
        banks_mod.load_sg_bank(args.sg_bank),
        ec_bank,
        _load_bank_pair(args.np_emb),
        _load_bank_pair(args.sg_emb),
        ec_emb,
        load_model(args.model),
        stats,
        retrieval_cfg,
        args.out_dir,
        meta=_meta(cfg),
    )
    logger.info("assembled %d inference prompts (%d skipped)",
                manifest["records"], len(manifest["skipped"]))
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.predictions, args.references)
    report = evaluate_run(args.predictions, args.references)
    doc = {**report.to_dict(), **_meta(cfg)}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(json.dumps({k: doc[k] for k in ("bleu4", "rouge_l", "cider", "self_bleu")},
                     sort_keys=True))
    return 0


def cmd_selfbleu(args, cfg: PipelineConfig) -> int:
    _require_inputs(args.sentences)
    lines = [
        line.strip() for line in
        Path(args.sentences).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    score = self_bleu(lines)
    print(json.dumps({"self_bleu": score, "sentences": len(lines)}, sort_keys=True))
    return 0


COMMANDS = {
    "sg-candidates": cmd_sg_candidates,
    "sg-select": cmd_sg_select,
    "build-banks": cmd_build_banks,
    "classify": cmd_classify,
    "stats": cmd_stats,
    "retrieve": cmd_retrieve,
    "assemble-train": cmd_assemble_train,
    "assemble-infer": cmd_assemble_infer,
    "evaluate": cmd_evaluate,
    "selfbleu": cmd_selfbleu,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptbank",
        description="Memory bank construction, category-aware retrieval, "
                    "prompt assembly, and caption metrics.",
    )
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat key = value config file")
    shared.add_argument("--preset", choices=sorted(PRESETS),
                        help="dataset preset with shipped defaults")
    shared.add_argument("--seed", type=int, help="root random seed")
    shared.add_argument("--mode", choices=["in_domain", "cross_domain"],
                        help="retrieval statistics mode")
    shared.add_argument("--tau", type=float, help="top-p cumulative threshold tau")
    shared.add_argument("--base-b", type=int, dest="base_retrieval",
                        help="cross-domain base retrieval number B")
    shared.add_argument("--threads", type=int, help="worker thread cap (0 = cores)")
    shared.add_argument("--out-dir", default="out", help="output directory")
    shared.add_argument("--np-size", type=int, dest="n_p",
                        help="noun phrase bank size N_p")
    shared.add_argument("--sg-size", type=int, dest="n_g",
                        help="scene graph bank size N_g")
    shared.add_argument("--k-p", type=int, dest="k_p", help="phrase retrieval count K_p")
    shared.add_argument("--k-g", type=int, dest="k_g", help="graph retrieval count K_g")
    shared.add_argument("--neighbors", type=int, dest="m",
                        help="perturbation neighbor pool size M")
    shared.add_argument("--noise-var", type=float, dest="lambda_sq",
                        help="perturbation noise variance lambda^2")
    shared.add_argument("--temperature", type=float,
                        help="caption mixture softmax temperature")
    shared.add_argument("--retention", choices=["batch", "per_item"],
                        help="in-domain category retention rule")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sg-candidates", parents=[shared],
                       help="emit enhancement candidates and strings to embed")
    p.add_argument("--captions", required=True)

    p = sub.add_parser("sg-select", parents=[shared],
                       help="pick best candidate per triple by caption similarity")
    p.add_argument("--captions", required=True)
    p.add_argument("--bge-emb", required=True,
                   help="text embedding matrix (.mgpb with sibling .keys)")

    p = sub.add_parser("build-banks", parents=[shared],
                       help="build phrase, graph, and caption banks")
    p.add_argument("--captions", required=True)
    p.add_argument("--selections", help="sg_selections.jsonl from sg-select")

    p = sub.add_parser("classify", parents=[shared],
                       help="assign categories to bank phrases and triples")
    p.add_argument("--np-bank", required=True)
    p.add_argument("--sg-bank")
    p.add_argument("--taxonomy", default="default",
                   help="categories.json, or 'default' for the shipped taxonomy")
    p.add_argument("--bge-emb", help="needed when --sg-bank is given")

    p = sub.add_parser("stats", parents=[shared],
                       help="compute statistical priors (p, mu, quotas)")
    p.add_argument("--captions", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--selections")

    p = sub.add_parser("retrieve", parents=[shared],
                       help="category-aware retrieval with top-p refinement")
    p.add_argument("--features", required=True, help="video feature container (.mgpv)")
    p.add_argument("--np-bank", required=True)
    p.add_argument("--sg-bank")
    p.add_argument("--ec-bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--np-emb", required=True)
    p.add_argument("--sg-emb")
    p.add_argument("--ec-emb", required=True)

    p = sub.add_parser("assemble-train", parents=[shared],
                       help="export training prompt bundles")
    p.add_argument("--captions", required=True)
    p.add_argument("--np-bank", required=True)
    p.add_argument("--sg-bank", required=True)
    p.add_argument("--np-emb", required=True)
    p.add_argument("--sg-emb", required=True)
    p.add_argument("--ec-emb", required=True)

    p = sub.add_parser("assemble-infer", parents=[shared],
                       help="export inference prompt bundles")
    p.add_argument("--features", required=True)
    p.add_argument("--np-bank", required=True)
    p.add_argument("--sg-bank", required=True)
    p.add_argument("--ec-bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--np-emb", required=True)
    p.add_argument("--sg-emb", required=True)
    p.add_argument("--ec-emb", required=True)

    p = sub.add_parser("evaluate", parents=[shared],
                       help="score predictions against references")
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True)

    p = sub.add_parser("selfbleu", parents=[shared],
                       help="diversity of a sentence list (one per line)")
    p.add_argument("--sentences", required=True)

    return parser


_CONFIG_KEYS = (
    "seed", "mode", "tau", "base_retrieval", "threads", "n_p", "n_g",
    "k_p", "k_g", "m", "lambda_sq", "temperature", "retention",
)


def main(argv: list[str] | None = None) -> int:
    setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
        cfg = resolve_config(args.preset, args.config, overrides)
    except ConfigError as exc:
        logger.error("invalid configuration: %s", exc)
        return 2
    except FileNotFoundError as exc:
        logger.error("missing config file: %s", exc)
        return 3
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        logger.error("invalid configuration: %s", exc)
        return 2
    except FileNotFoundError as exc:
        logger.error("missing input: %s", exc)
        return 3
    except PromptBankError as exc:
        logger.error("pipeline failure: %s", exc)
        return 1
    except Exception:
        logger.exception("unexpected failure")
        return 1


def run() -> None:
    sys.exit(main())
