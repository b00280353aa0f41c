"""Pluggable model providers with deterministic in-process defaults.

The default embedder feature-hashes tokens into D signed buckets and
L2-normalizes (zero vector for empty text), so retrieval runs fully
offline. The default classifier aggregates fused-score mass per control
list over the offered evidence spans: label = argmax mass, confidence =
top mass / total mass, ties broken toward the stricter list so low-margin
items end up in front of a reviewer either way.

External providers (real embedding models, hosted classifiers) register
under a name and are selected purely by configuration; in on-prem mode
nothing here opens a network connection.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import ProviderUnavailable
from .labels import RISK_PRIORITY, ControlList
from .retrieval import tokenize


class EmbeddingProvider(Protocol):
    name: str
    version: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class EvidenceSpan:
    """One offered citation, as the classifier sees it."""

    snippet_id: str
    control_list: ControlList
    verbatim_text: str
    fused_score: float


@dataclass(frozen=True)
class ClassifyRequest:
    manufacturer: str
    equipment_or_service: str
    model_no: str
    description: str
    prompt: str
    spans: tuple[EvidenceSpan, ...]


@dataclass(frozen=True)
class ClassifierOutput:
    label: ControlList
    confidence: float
    reasoning_steps: tuple[str, ...]
    used_snippets: tuple[str, ...]


class ClassifierProvider(Protocol):
    name: str
    version: str

    def classify(self, request: ClassifyRequest) -> ClassifierOutput: ...


class HashingEmbedder:
    """Feature hashing of tokens into signed buckets, L2-normalized.

    Bucket and sign come from a BLAKE2b digest of the token, so vectors are
    stable across processes and platforms.
    """

    name = "hashing"

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.version = f"hashing-{dim}/1"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            return vec.astype(np.float32)
        return (vec / norm).astype(np.float32)


class EvidenceWeightedClassifier:
    """Deterministic label proposal from offered evidence only.

    Empty evidence fails safe: EAR99 at confidence 0.0, which downstream
    validation always routes to a human.
    """

    name = "stub"
    version = "stub-evidence-weighted/1"

    def classify(self, request: ClassifyRequest) -> ClassifierOutput:
        if not request.spans:
            return ClassifierOutput(
                label=ControlList.EAR99,
                confidence=0.0,
                reasoning_steps=(
                    "No policy evidence was offered for this item.",
                    "Defaulting to EAR99 at zero confidence so the item is routed to review.",
                ),
                used_snippets=(),
            )
        mass: dict[ControlList, float] = {}
        for span in request.spans:
            mass[span.control_list] = mass.get(span.control_list, 0.0) + span.fused_score
        total = sum(mass.values())
        label = max(mass, key=lambda cl: (mass[cl], -RISK_PRIORITY.index(cl)))
        confidence = mass[label] / total if total > 0 else 0.0
        used = tuple(s.snippet_id for s in request.spans if s.control_list is label)
        breakdown = ", ".join(
            f"{cl.value}={mass[cl]:.6f}" for cl in RISK_PRIORITY if cl in mass
        )
        return ClassifierOutput(
            label=label,
            confidence=confidence,
            reasoning_steps=(
                f"Aggregated fused evidence mass per control list: {breakdown}.",
                f"{label.value} holds the largest share ({confidence:.6f} of total mass).",
                f"Citing the {len(used)} offered span(s) tagged {label.value}.",
            ),
            used_snippets=used,
        )


@dataclass
class ProviderRegistry:
    embedders: dict[str, Callable[[int], EmbeddingProvider]] = field(default_factory=dict)
    classifiers: dict[str, Callable[[], ClassifierProvider]] = field(default_factory=dict)

    def embedder(self, name: str, dim: int) -> EmbeddingProvider:
        try:
            factory = self.embedders[name]
        except KeyError:
            raise ProviderUnavailable(f"no embedding provider registered as {name!r}")
        return factory(dim)

    def classifier(self, name: str) -> ClassifierProvider:
        try:
            factory = self.classifiers[name]
        except KeyError:
            raise ProviderUnavailable(f"no classifier provider registered as {name!r}")
        return factory()


DEFAULT_REGISTRY = ProviderRegistry(
    embedders={"hashing": lambda dim: HashingEmbedder(dim)},
    classifiers={"stub": EvidenceWeightedClassifier},
)


def resolve_providers(
    config, registry: ProviderRegistry | None = None
) -> tuple[EmbeddingProvider, ClassifierProvider]:
    registry = registry or DEFAULT_REGISTRY
    embedder = registry.embedder(config.embedding_provider, config.embed_dim)
    classifier = registry.classifier(config.classifier_provider)
    return embedder, classifier


def model_versions(embedder: EmbeddingProvider, classifier: ClassifierProvider) -> dict[str, str]:
    return {"embedder": embedder.version, "classifier": classifier.version}
