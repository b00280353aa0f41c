"""Effective pipeline configuration.

All tunables live here so that config_hash covers the full behavior of a
run and a run-card is enough to replay it. Values are deliberately flat
key/value pairs: the hash is over the canonical JSON of to_dict().
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .canon import digest_value

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    # corpus chunking
    min_chunk: int = 200
    max_chunk: int = 800

    # lexical ranking
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    # fusion
    k_rrf: int = 60
    lexical_weight: float = 0.5
    vector_weight: float = 0.5
    top_k: int = 10

    # embedding
    embed_dim: int = 256
    embedding_provider: str = "hashing"
    classifier_provider: str = "stub"

    # citation packing
    pack_budget: int = 1200
    min_evidence_score: float = 0.01

    # validator thresholds
    conf_threshold: float = 0.7
    min_support: int = 2
    conflict_ratio: float = 0.8

    # description refiner
    min_desc_tokens: int = 3
    noise_nonalnum_ratio: float = 0.4
    stop_phrases: tuple[str, ...] = (
        "best in class",
        "industry leading",
        "world class",
        "state of the art",
        "trusted by professionals",
    )

    # orchestration
    max_retries: int = 2
    stage_timeout_s: float = 30.0

    # deployment
    on_prem: bool = True
    auth_token: str = ""
    token_subject: str = "sme"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        out["schema_version"] = SCHEMA_VERSION
        return out

    @property
    def config_hash(self) -> str:
        return digest_value(self.to_dict())

    def thresholds(self) -> dict[str, Any]:
        return {
            "CONF_THRESHOLD": self.conf_threshold,
            "MIN_SUPPORT": self.min_support,
            "CONFLICT_RATIO": self.conflict_ratio,
            "MIN_EVIDENCE_SCORE": self.min_evidence_score,
            "PACK_BUDGET": self.pack_budget,
        }

    def index_params(self) -> dict[str, Any]:
        return {
            "k1": self.bm25_k1,
            "b": self.bm25_b,
            "k_rrf": self.k_rrf,
            "weights": {"lexical": self.lexical_weight, "vector": self.vector_weight},
            "D": self.embed_dim,
        }

    def with_overrides(self, **kwargs: Any) -> "PipelineConfig":
        if "stop_phrases" in kwargs and isinstance(kwargs["stop_phrases"], list):
            kwargs["stop_phrases"] = tuple(kwargs["stop_phrases"])
        return replace(self, **kwargs)


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known - {"schema_version"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in data.items() if k in known}
    if "stop_phrases" in kwargs:
        kwargs["stop_phrases"] = tuple(kwargs["stop_phrases"])
    return PipelineConfig(**kwargs)


def load_config(path: str | Path | None = None, **overrides: Any) -> PipelineConfig:
    """Defaults, overlaid with a JSON file (if given), then keyword overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        data.update(json.loads(Path(path).read_text(encoding="utf-8")))
    data.update(overrides)
    return config_from_dict(data)
