"""promptbank-export command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .encoders import EncoderLoadError
from .export import export_captions, export_text_embeddings, export_video_features

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptbank-export",
        description="Produce promptbank input files: parsed captions, "
                    "text embeddings (MGPB), video features (MGPV).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-captions", help="parse raw captions to captions.jsonl")
    p.add_argument("--input", required=True, help='JSONL of {"video_id","text"[,"id"]}')
    p.add_argument("--out-dir", default="export")

    p = sub.add_parser("export-text-emb", help="embed strings, one per line")
    p.add_argument("--strings", required=True)
    p.add_argument("--encoder", default="hash-512")
    p.add_argument("--out-dir", default="export")
    p.add_argument("--stem", default="text_emb")

    p = sub.add_parser("export-video-emb", help="sample and embed video frames")
    p.add_argument("--videos", required=True, help='JSONL of {"video_id","path"}')
    p.add_argument("--encoder", default="hash-512")
    p.add_argument("--frames", type=int, default=8, help="frames per video")
    p.add_argument("--out-dir", default="export")
    p.add_argument("--stem", default="video_feats")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "export-captions":
            manifest = export_captions(args.input, args.out_dir)
        elif args.command == "export-text-emb":
            manifest = export_text_embeddings(args.strings, args.encoder,
                                              args.out_dir, args.stem)
        else:
            manifest = export_video_features(args.videos, args.encoder,
                                             args.out_dir, args.frames, args.stem)
    except FileNotFoundError as exc:
        logger.error("missing input: %s", exc)
        return 3
    except EncoderLoadError as exc:
        logger.error("encoder failure: %s", exc)
        return 2
    except Exception as exc:
        logger.error("export failed: %s", exc)
        return 1
    print(json.dumps(manifest, sort_keys=True))
    return 0


def run() -> None:
    sys.exit(main())
