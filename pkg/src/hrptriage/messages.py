"""A2A message schema and the in-process publish/subscribe bus.

Every inter-agent event carries exactly eight fields: type, item_id,
state, context, citations, decision, validator, provenance. Optional
content is an explicit empty value (empty list/map, JSON null), never a
missing key, so every stage can run against partial upstream output.

The wire form is canonical JSON (sorted keys, no insignificant
whitespace); audit digests and config hashes are computed over these
bytes, so the encoding is part of the contract. Delivery is at-least-once
within the process and consumers are expected to deduplicate on
provenance.message_id.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

from .canon import canonical_json, utc_now_iso
from .corpus import CorpusSnapshot
from .errors import BusClosed, MissingIdentity, SchemaViolation
from .labels import ControlList, RiskLevel, is_hrp, risk_level_for

logger = logging.getLogger(__name__)

WIRE_SCHEMA_VERSION = 1


class MessageType(str, Enum):
    SUBMIT = "SUBMIT"
    REFINE_REQUEST = "REFINE_REQUEST"
    REFINED = "REFINED"
    RETRIEVE_REQUEST = "RETRIEVE_REQUEST"
    EVIDENCE = "EVIDENCE"
    CLASSIFY_REQUEST = "CLASSIFY_REQUEST"
    PROPOSAL = "PROPOSAL"
    VALIDATE_REQUEST = "VALIDATE_REQUEST"
    VERDICT = "VERDICT"
    FINAL = "FINAL"
    HUMAN_REVIEW_REQUEST = "HUMAN_REVIEW_REQUEST"
    FEEDBACK = "FEEDBACK"
    ERROR = "ERROR"


class ItemState(str, Enum):
    SUBMITTED = "SUBMITTED"
    REFINING = "REFINING"
    RETRIEVING = "RETRIEVING"
    CLASSIFYING = "CLASSIFYING"
    VALIDATING = "VALIDATING"
    AWAITING_HUMAN = "AWAITING_HUMAN"
    FINALIZED = "FINALIZED"
    FAILED = "FAILED"


class AgentName(str, Enum):
    ORCH = "ORCH"
    IR = "IR"
    DR = "DR"
    HRP = "HRP"
    VR = "VR"
    FL = "FL"
    HUMAN = "HUMAN"


class Verdict(str, Enum):
    AGREE = "AGREE"
    REVIEW = "REVIEW"
    CONFLICT = "CONFLICT"


HUMAN_OVERRIDE_KEY = "human_override"


def new_message_id() -> str:
    return f"msg-{uuid.uuid4().hex}"


@dataclass(frozen=True)
class CitationRef:
    snippet_id: str
    char_start: int
    char_end: int

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "char_start": self.char_start,
            "char_end": self.char_end,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CitationRef":
        return cls(
            snippet_id=data["snippet_id"],
            char_start=int(data["char_start"]),
            char_end=int(data["char_end"]),
        )


@dataclass(frozen=True)
class Decision:
    label: ControlList
    hrp_flag: bool
    risk_level: RiskLevel
    confidence: float
    cited_snippets: tuple[str, ...]
    reasoning_steps: tuple[str, ...]

    @classmethod
    def for_label(
        cls,
        label: ControlList,
        confidence: float,
        cited_snippets: Iterable[str] = (),
        reasoning_steps: Iterable[str] = (),
    ) -> "Decision":
        """Derive hrp_flag and risk_level from the label; they are never set freely."""
        return cls(
            label=label,
            hrp_flag=is_hrp(label),
            risk_level=risk_level_for(label),
            confidence=confidence,
            cited_snippets=tuple(cited_snippets),
            reasoning_steps=tuple(reasoning_steps),
        )

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "hrp_flag": self.hrp_flag,
            "risk_level": self.risk_level.value,
            "confidence": self.confidence,
            "cited_snippets": list(self.cited_snippets),
            "reasoning_steps": list(self.reasoning_steps),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Decision":
        return cls(
            label=ControlList(data["label"]),
            hrp_flag=bool(data["hrp_flag"]),
            risk_level=RiskLevel(data["risk_level"]),
            confidence=float(data["confidence"]),
            cited_snippets=tuple(data.get("cited_snippets", [])),
            reasoning_steps=tuple(data.get("reasoning_steps", [])),
        )


@dataclass(frozen=True)
class ValidatorVerdict:
    verdict: Verdict
    coverage_count: int
    conflict_lists: tuple[str, ...]  # sorted control-list values
    notes: str

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "coverage_count": self.coverage_count,
            "conflict_lists": sorted(self.conflict_lists),
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ValidatorVerdict":
        return cls(
            verdict=Verdict(data["verdict"]),
            coverage_count=int(data["coverage_count"]),
            conflict_lists=tuple(sorted(data.get("conflict_lists", []))),
            notes=data.get("notes", ""),
        )


@dataclass(frozen=True)
class Provenance:
    run_card_id: str
    message_id: str
    parent_message_id: str | None
    sender_agent: AgentName
    timestamp: str  # UTC ISO-8601
    config_hash: str
    model_versions: tuple[tuple[str, str], ...]  # sorted (provider, version)

    @classmethod
    def make(
        cls,
        run_card_id: str,
        sender_agent: AgentName,
        config_hash: str,
        model_versions: Mapping[str, str] | None = None,
        parent_message_id: str | None = None,
        timestamp: str | None = None,
    ) -> "Provenance":
        return cls(
            run_card_id=run_card_id,
            message_id=new_message_id(),
            parent_message_id=parent_message_id,
            sender_agent=sender_agent,
            timestamp=timestamp or utc_now_iso(),
            config_hash=config_hash,
            model_versions=tuple(sorted((model_versions or {}).items())),
        )

    def to_dict(self) -> dict:
        return {
            "run_card_id": self.run_card_id,
            "message_id": self.message_id,
            "parent_message_id": self.parent_message_id,
            "sender_agent": self.sender_agent.value,
            "timestamp": self.timestamp,
            "config_hash": self.config_hash,
            "model_versions": {k: v for k, v in self.model_versions},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Provenance":
        return cls(
            run_card_id=data.get("run_card_id", ""),
            message_id=data["message_id"],
            parent_message_id=data.get("parent_message_id"),
            sender_agent=AgentName(data.get("sender_agent", "ORCH")),
            timestamp=data.get("timestamp", ""),
            config_hash=data.get("config_hash", ""),
            model_versions=tuple(sorted(dict(data.get("model_versions", {})).items())),
        )


@dataclass(frozen=True)
class A2AMessage:
    type: MessageType
    item_id: str
    state: ItemState
    context: tuple[tuple[str, str], ...] = ()  # sorted key/value pairs
    citations: tuple[CitationRef, ...] = ()
    decision: Decision | None = None
    validator: ValidatorVerdict | None = None
    provenance: Provenance = field(
        default_factory=lambda: Provenance.make("", AgentName.ORCH, "")
    )

    @property
    def message_id(self) -> str:
        return self.provenance.message_id

    def context_map(self) -> dict[str, str]:
        return {k: v for k, v in self.context}

    def with_context(self, **entries: str) -> "A2AMessage":
        merged = dict(self.context)
        merged.update(entries)
        return replace(self, context=tuple(sorted(merged.items())))

    def to_dict(self) -> dict:
        return {
            "type": self.type.value,
            "item_id": self.item_id,
            "state": self.state.value,
            "context": self.context_map(),
            "citations": [c.to_dict() for c in self.citations],
            "decision": self.decision.to_dict() if self.decision else None,
            "validator": self.validator.to_dict() if self.validator else None,
            "provenance": self.provenance.to_dict(),
        }

    def to_wire(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "A2AMessage":
        return cls(
            type=MessageType(data["type"]),
            item_id=data["item_id"],
            state=ItemState(data["state"]),
            context=tuple(sorted((str(k), str(v)) for k, v in data.get("context", {}).items())),
            citations=tuple(CitationRef.from_dict(c) for c in data.get("citations", [])),
            decision=Decision.from_dict(data["decision"]) if data.get("decision") else None,
            validator=(
                ValidatorVerdict.from_dict(data["validator"]) if data.get("validator") else None
            ),
            provenance=Provenance.from_dict(data["provenance"]),
        )

    @classmethod
    def from_wire(cls, wire: str) -> "A2AMessage":
        return cls.from_dict(json.loads(wire))


def make_message(
    type: MessageType,
    item_id: str,
    state: ItemState,
    provenance: Provenance,
    context: Mapping[str, str] | None = None,
    citations: Iterable[CitationRef] = (),
    decision: Decision | None = None,
    validator: ValidatorVerdict | None = None,
) -> A2AMessage:
    return A2AMessage(
        type=type,
        item_id=item_id,
        state=state,
        context=tuple(sorted((context or {}).items())),
        citations=tuple(citations),
        decision=decision,
        validator=validator,
        provenance=provenance,
    )


FIELD_NAMES = (
    "type",
    "item_id",
    "state",
    "context",
    "citations",
    "decision",
    "validator",
    "provenance",
)


def normalize(partial: Mapping[str, Any]) -> A2AMessage:
    """Fill absent fields with typed defaults; drop and log unknown keys.

    type and item_id identify the event and cannot be defaulted.
    """
    if "type" not in partial or "item_id" not in partial:
        raise MissingIdentity("type and item_id are required")
    unknown = set(partial) - set(FIELD_NAMES)
    if unknown:
        logger.warning("dropping unknown message keys: %s", sorted(unknown))
    data: dict[str, Any] = {
        "type": partial["type"],
        "item_id": partial["item_id"],
        "state": partial.get("state", ItemState.SUBMITTED.value),
        "context": partial.get("context") or {},
        "citations": partial.get("citations") or [],
        "decision": partial.get("decision"),
        "validator": partial.get("validator"),
    }
    if partial.get("provenance"):
        data["provenance"] = partial["provenance"]
        return A2AMessage.from_dict(data)
    message = A2AMessage.from_dict({**data, "provenance": {"message_id": "pending"}})
    return replace(message, provenance=Provenance.make("", AgentName.ORCH, ""))


def validate_schema(
    message: A2AMessage | Mapping[str, Any],
    snapshot: CorpusSnapshot | None = None,
) -> list[str]:
    """Return **all** contract violations; an empty list means valid."""
    violations: list[str] = []
    if isinstance(message, Mapping):
        for name in FIELD_NAMES:
            if name not in message:
                violations.append(f"missing field {name}")
        if violations:
            return violations
        try:
            message = A2AMessage.from_dict(message)
        except (ValueError, KeyError, TypeError) as exc:
            return [f"unparseable message: {exc}"]

    decision = message.decision
    if decision is not None:
        if decision.hrp_flag != is_hrp(decision.label):
            violations.append(
                f"hrp_flag {decision.hrp_flag} inconsistent with label {decision.label.value}"
            )
        if decision.risk_level != risk_level_for(decision.label):
            violations.append(
                f"risk_level {decision.risk_level.value} inconsistent with label "
                f"{decision.label.value}"
            )
        if not (0.0 <= decision.confidence <= 1.0):
            violations.append(f"confidence {decision.confidence} outside [0, 1]")

    if message.type is MessageType.FINAL:
        cited = decision.cited_snippets if decision else ()
        overridden = HUMAN_OVERRIDE_KEY in message.context_map()
        if decision is None:
            violations.append("final message without a decision")
        elif not cited and not overridden:
            violations.append("uncited final decision")

    for ref in message.citations:
        if ref.char_start >= ref.char_end:
            violations.append(f"citation {ref.snippet_id} has empty span")
        if snapshot is not None:
            snippet = snapshot.snippet_by_id(ref.snippet_id)
            if snippet is None:
                violations.append(f"citation {ref.snippet_id} not in snapshot")
            elif ref.char_end > len(snippet.text):
                violations.append(f"citation {ref.snippet_id} span outside snippet")

    if not message.provenance.message_id:
        violations.append("provenance.message_id empty")
    return violations


@dataclass(frozen=True)
class DeliveryReceipt:
    message_id: str
    delivered_to: int


class MessageBus:
    """Synchronous in-process fan-out with schema gating at publish time.

    Subscribers for a type are invoked in registration order; publishes
    from one sender reach each subscriber in publication order (the bus
    serializes dispatch). Messages are immutable values.
    """

    def __init__(self, snapshot: CorpusSnapshot | None = None):
        self._subscribers: dict[MessageType, list[Callable[[A2AMessage], None]]] = {}
        self._all: list[Callable[[A2AMessage], None]] = []
        self._lock = threading.RLock()
        self._closed = False
        self._snapshot = snapshot

    def subscribe(self, type: MessageType, handler: Callable[[A2AMessage], None]) -> None:
        with self._lock:
            self._subscribers.setdefault(type, []).append(handler)

    def subscribe_all(self, handler: Callable[[A2AMessage], None]) -> None:
        with self._lock:
            self._all.append(handler)

    def close(self) -> None:
        with self._lock:
            self._closed = True

    def publish(self, message: A2AMessage) -> DeliveryReceipt:
        violations = validate_schema(message, self._snapshot)
        if violations:
            raise SchemaViolation(violations)
        with self._lock:
            if self._closed:
                raise BusClosed("bus is closed")
            handlers = list(self._subscribers.get(message.type, [])) + list(self._all)
            for handler in handlers:
                handler(message)
        return DeliveryReceipt(message_id=message.message_id, delivered_to=len(handlers))
