"""Pipeline configuration: presets, config files, and the config hash.

Per-dataset presets carry the shipped defaults (bank sizes, retrieval
counts, perturbation parameters, top-p thresholds); the two cross pairs
carry their own retrieval counts and threshold. A config file is a flat
TOML-style `key = value` list (strings, integers, floats, booleans,
`#` comments); command-line flags override file values, which override
preset values.

Every pipeline output embeds `config_hash`, the SHA-256 of the resolved
configuration in canonical JSON, so artifacts are traceable to the
exact settings that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError

MODES = ("in_domain", "cross_domain")

PRESETS: dict[str, dict] = {
    "msvd": {
        "n_p": 1000, "n_g": 37711, "n_c": 48774,
        "k_p": 13, "k_g": 16, "m": 5, "lambda_sq": 0.01, "tau": 0.6,
        "mode": "in_domain",
    },
    "msrvtt": {
        "n_p": 1000, "n_g": 100000, "n_c": 130260,
        "k_p": 14, "k_g": 19, "m": 5, "lambda_sq": 0.01, "tau": 0.8,
        "mode": "in_domain",
    },
    "vatex": {
        "n_p": 3000, "n_g": 400000, "n_c": 250060,
        "k_p": 10, "k_g": 13, "m": 5, "lambda_sq": 0.01, "tau": 0.6,
        "mode": "in_domain",
    },
    # cross pairs: source-domain banks, target-domain videos
    "msrvtt_to_msvd": {
        "n_p": 1000, "n_g": 100000, "n_c": 130260,
        "k_p": 12, "k_g": 34, "m": 5, "lambda_sq": 0.01, "tau": 0.5,
        "mode": "cross_domain",
    },
    "msvd_to_msrvtt": {
        "n_p": 1000, "n_g": 37711, "n_c": 48774,
        "k_p": 14, "k_g": 25, "m": 5, "lambda_sq": 0.01, "tau": 0.5,
        "mode": "cross_domain",
    },
}


@dataclass
class PipelineConfig:
    dataset: str = "custom"
    n_p: int = 1000          # noun phrase bank size N_p
    n_g: int = 100000        # scene graph bank size N_g
    n_c: int | None = None   # caption bank size N_c (informational)
    k_p: int = 14            # training retrieval count K_p
    k_g: int = 19            # training retrieval count K_g
    m: int = 5               # neighbor pool size M
    lambda_sq: float = 0.01  # perturbation variance lambda^2
    tau: float = 0.8         # top-p threshold tau
    base_retrieval: int = 2  # cross-domain base retrieval number B
    temperature: float = 1.0
    seed: int = 0
    mode: str = "in_domain"
    retention: str = "batch"
    threads: int = 0         # 0 = logical core count

    def validate(self) -> "PipelineConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        for name in ("n_p", "n_g", "k_p", "k_g", "m", "base_retrieval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lambda_sq < 0:
            raise ConfigError(f"lambda_sq must be >= 0, got {self.lambda_sq}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.retention not in ("batch", "per_item"):
            raise ConfigError(f"retention must be batch or per_item, got {self.retention!r}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        return self

    def to_dict(self) -> dict:
        # threads is an execution detail; outputs must not depend on it
        doc = asdict(self)
        doc.pop("threads")
        return doc


def parse_kv_file(path: str | Path) -> dict:
    """Parse a flat `key = value` config file.

    Accepted values: quoted strings, integers, floats, true/false.
    Lines starting with `#` (and blank lines) are ignored. Sections and
    nesting are not supported.
    """
    values: dict = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key or not value:
            raise ConfigError(f"{path}:{line_no}: expected key = value")
        values[key] = _parse_scalar(value, f"{path}:{line_no}")
    return values


def _parse_scalar(text: str, where: str):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {text!r}") from None


def resolve_config(
    preset: str | None = None,
    config_file: str | Path | None = None,
    overrides: dict | None = None,
) -> PipelineConfig:
    """Merge preset < config file < explicit overrides into one config."""
    merged: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
        merged["dataset"] = preset
    if config_file is not None:
        merged.update(parse_kv_file(config_file))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**merged).validate()


def config_hash(config: PipelineConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
