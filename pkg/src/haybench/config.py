"""Run configuration: TOML file over defaults, then command-line overrides.

The merged configuration is a plain nested dict so it can be hashed
canonically into the run manifest. Dotted-path overrides (``--set
eval.budgets=8192,16384``) parse scalars as TOML values would.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError

DEFAULTS: dict = {
    "corpus": {
        "file": "corpus.jsonl",
        "qa": "qa.jsonl",
        "tokenizer": "reference",
    },
    "retrieval": {
        "strategies": ["bm25"],
        "k1": 1.2,
        "b": 0.75,
        "rrf_k": 60,
        "top_n": 1000,
        "embeddings": "",
        "query_embeddings": "",
        "embed_endpoint": "",
    },
    "ppr": {},
    "eval": {
        "budgets": [8192, 16384, 32768, 65536, 131072],
        "cutoffs": [10, 20, 40, 80, 160],
        "ordering": "ranked",
        "seeds": [0, 1, 2],
        "mode": "static",
        "rounds": 3,
        "strict": False,
        "final_uses_original": False,
        "no_context": False,
        "workers": 4,
    },
    "model": {
        "endpoint": "",
        "name": "",
        "temperature": 0.0,
        "top_p": 1.0,
        "max_tokens": 1024,
    },
}

_PPR_KEYS = {"seed_count", "damping", "tolerance", "max_iterations", "symmetrize"}


def _deep_merge(base: dict, extra: dict, path: str = "") -> dict:
    merged = dict(base)
    for key, value in extra.items():
        where = f"{path}.{key}" if path else key
        if key not in base and path in ("corpus", "retrieval", "eval", "model"):
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base.get(key), dict) and isinstance(value, dict):
            merged[key] = _deep_merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None = None) -> dict:
    if path is None:
        merged = json.loads(json.dumps(DEFAULTS))
    else:
        with Path(path).open("rb") as handle:
            try:
                loaded = tomllib.load(handle)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        merged = _deep_merge(DEFAULTS, loaded)
    validate_config(merged)
    return merged


def _parse_scalar(text: str):
    lowered = text.strip()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(lowered)
    except ValueError:
        pass
    try:
        return float(lowered)
    except ValueError:
        pass
    return lowered


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Each override is ``section.key=value``; comma in the value makes a
    list."""
    updated = json.loads(json.dumps(config))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        dotted, _, raw = item.partition("=")
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts
        if section not in updated:
            raise ConfigError(f"unknown configuration section {section!r}")
        if "," in raw:
            value = [_parse_scalar(part) for part in raw.split(",") if part.strip()]
        else:
            value = _parse_scalar(raw)
        updated[section][key] = value
    validate_config(updated)
    return updated


def validate_config(config: dict) -> None:
    for tag in config["retrieval"]["strategies"]:
        base = str(tag).removesuffix("+ppr")
        if base not in ("bm25", "dense", "hybrid"):
            raise ConfigError(f"unknown retrieval strategy {tag!r}")
    if config["eval"]["ordering"] not in ("ranked", "random"):
        raise ConfigError(f"unknown ordering {config['eval']['ordering']!r}")
    if config["eval"]["mode"] not in ("static", "enforced", "variable"):
        raise ConfigError(f"unknown mode {config['eval']['mode']!r}")
    if int(config["eval"]["rounds"]) < 1:
        raise ConfigError("eval.rounds must be at least 1")
    for budget in config["eval"]["budgets"]:
        if int(budget) < 0:
            raise ConfigError(f"negative budget {budget}")
    unknown = set(config.get("ppr", {})) - _PPR_KEYS
    if unknown:
        raise ConfigError(f"unknown ppr keys: {', '.join(sorted(unknown))}")


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_token_budget(text: str) -> int:
    """``"8K"`` means 8 * 1024 tokens; bare integers pass through."""
    cleaned = text.strip()
    if cleaned.lower().endswith("k"):
        return int(cleaned[:-1]) * 1024
    return int(cleaned)
