"""Line-delimited JSON logging to stderr for pipeline scraping."""

from __future__ import annotations

import json
import logging
import os
import sys


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        if record.exc_info:
            doc["exc"] = self.formatException(record.exc_info)
        return json.dumps(doc, ensure_ascii=False)


def setup_logging(level: str | None = None) -> None:
    """Configure root logging; PROMPTBANK_LOG=debug|info picks the level."""
    chosen = (level or os.environ.get("PROMPTBANK_LOG", "info")).lower()
    numeric = logging.DEBUG if chosen == "debug" else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(numeric)
