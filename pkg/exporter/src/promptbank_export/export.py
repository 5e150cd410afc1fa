"""The three export jobs: parsed captions, text embeddings, video features.

Every job writes a manifest pinning the parser/encoder id, dimensions,
frame policy, and SHA-256 checksums of the emitted files, so engine
outputs stay attributable to the exact export that produced them.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import formats
from .encoders import get_encoder
from .frames import DecodeError, sampled_frames
from .parser import PARSER_ID, parse_caption

logger = logging.getLogger(__name__)


def _write_manifest(out_dir: Path, name: str, doc: dict) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return doc


def export_captions(input_path: str | Path, out_dir: str | Path) -> dict:
    """Parse raw captions into the engine's captions.jsonl record format.

    Input: JSONL with {"video_id", "text"} and an optional "id"
    (defaults to cap<line>). Empty lines are skipped with a warning;
    captions the parser cannot handle keep an empty parse.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    empty_parses = 0
    with open(input_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                logger.warning("line %d: empty, skipped", line_no)
                continue
            raw = json.loads(line)
            text = raw["text"]
            phrases, triples = parse_caption(text)
            if not phrases and not triples:
                logger.warning("line %d: empty parse for %r", line_no, text)
                empty_parses += 1
            records.append({
                "id": raw.get("id", f"cap{line_no:05d}"),
                "video_id": raw["video_id"],
                "text": text,
                "noun_phrases": phrases,
                "triples": [list(t) for t in triples],
            })
    caps_path = out / "captions.jsonl"
    with open(caps_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return _write_manifest(out, "captions_manifest.json", {
        "parser": PARSER_ID,
        "records": len(records),
        "empty_parses": empty_parses,
        "checksums": {"captions.jsonl": formats.sha256_of(caps_path)},
    })


def export_text_embeddings(
    strings_path: str | Path,
    encoder_id: str,
    out_dir: str | Path,
    stem: str = "text_emb",
) -> dict:
    """One embedding row per input line, keys file alongside."""
    encoder = get_encoder(encoder_id)
    lines = Path(strings_path).read_text(encoding="utf-8").splitlines()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix = encoder.encode_texts(lines)
    matrix_path = out / f"{stem}.mgpb"
    keys_path = out / f"{stem}.keys"
    formats.write_matrix(matrix_path, matrix)
    formats.write_keys(keys_path, lines)
    return _write_manifest(out, f"{stem}_manifest.json", {
        "encoder": encoder.encoder_id,
        "dimension": encoder.dim,
        "rows": len(lines),
        "checksums": {
            f"{stem}.mgpb": formats.sha256_of(matrix_path),
            f"{stem}.keys": formats.sha256_of(keys_path),
        },
    })


def export_video_features(
    videos_path: str | Path,
    encoder_id: str,
    out_dir: str | Path,
    frame_count: int = 8,
    stem: str = "video_feats",
) -> dict:
    """Sample frames uniformly, encode them, and write the MGPV container.

    Input: JSONL with {"video_id", "path"}; path may be a video file, a
    .npy stack, or a directory of images. Undecodable sources land in
    manifest["skipped"], not in the container.
    """
    if frame_count < 1:
        raise ValueError(f"frame_count must be >= 1, got {frame_count}")
    encoder = get_encoder(encoder_id)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    videos: dict[str, np.ndarray] = {}
    skipped: list[str] = []
    with open(videos_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            entry = json.loads(line)
            video_id = entry["video_id"]
            if video_id in videos:
                raise ValueError(f"duplicate video id {video_id!r}")
            try:
                frames = sampled_frames(entry["path"], frame_count)
            except DecodeError as exc:
                logger.warning("video %s skipped: %s", video_id, exc)
                skipped.append(video_id)
                continue
            videos[video_id] = encoder.encode_frames(frames)

    container_path = out / f"{stem}.mgpv"
    formats.write_video_container(container_path, videos)
    return _write_manifest(out, f"{stem}_manifest.json", {
        "encoder": encoder.encoder_id,
        "dimension": encoder.dim,
        "videos": len(videos),
        "skipped": skipped,
        "frame_policy": f"uniform-stride, {frame_count} frames",
        "checksums": {f"{stem}.mgpv": formats.sha256_of(container_path)},
    })
