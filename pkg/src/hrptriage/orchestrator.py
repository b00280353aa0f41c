"""Per-item state machine driving the agents in order.

The orchestrator schedules DR -> IR -> HRP -> VR for each item, wraps
tool/provider calls with retries and a wall-clock timeout, stamps every
message with the run-card, and publishes everything on the bus (where the
audit recorder picks it up). It never generates model content itself: an
AGREE verdict finalizes the proposal unchanged, anything else routes to a
human, and a stage that exhausts its attempts fails the item with an
ERROR event in the audit trail.

Items are independent: batch runs hand each item to one worker and
results come back in input order regardless of completion order.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .agents import (
    Feedback,
    FeedbackAction,
    FeedbackCache,
    ItemFields,
    dr_refine,
    fl_log,
    hrp_classify,
    ir_retrieve,
    vr_validate,
)
from .audit import AuditStore
from .canon import canonical_json, digest_value, utc_now_iso
from .config import PipelineConfig
from .corpus import CorpusSnapshot
from .errors import NotAwaitingHuman, StageExhausted, StageTimeout, UnknownItem
from .messages import (
    A2AMessage,
    AgentName,
    Decision,
    ItemState,
    MessageBus,
    MessageType,
    Provenance,
    Verdict,
    make_message,
)
from .providers import ProviderRegistry, model_versions, resolve_providers
from .retrieval import CitationPack, RankedSnippet, build_search_index
from .toolhost import InProcessToolClient, VectorStoreClient, default_registry


# ---------------------------------------------------------------------------
# Run card
# ---------------------------------------------------------------------------


def build_run_card(
    config: PipelineConfig, snapshot_id: str, versions: Mapping[str, str]
) -> dict:
    """Reproducibility envelope stamped on every message of a session."""
    identity = {
        "config_hash": config.config_hash,
        "snapshot_id": snapshot_id,
        "model_versions": dict(versions),
    }
    return {
        "run_card_id": "rc-" + digest_value(identity)[:16],
        "config_hash": config.config_hash,
        "snapshot_id": snapshot_id,
        "index_params": config.index_params(),
        "model_versions": dict(versions),
        "thresholds": config.thresholds(),
        "created_at": utc_now_iso(),
        "config": config.to_dict(),
    }


# ---------------------------------------------------------------------------
# Session state machine
# ---------------------------------------------------------------------------

_ACTIVE = (
    ItemState.SUBMITTED,
    ItemState.REFINING,
    ItemState.RETRIEVING,
    ItemState.CLASSIFYING,
    ItemState.VALIDATING,
)

ALLOWED_TRANSITIONS: set[tuple[ItemState, ItemState]] = {
    (ItemState.SUBMITTED, ItemState.REFINING),
    (ItemState.REFINING, ItemState.RETRIEVING),
    (ItemState.RETRIEVING, ItemState.CLASSIFYING),
    (ItemState.CLASSIFYING, ItemState.VALIDATING),
    (ItemState.VALIDATING, ItemState.FINALIZED),
    (ItemState.VALIDATING, ItemState.AWAITING_HUMAN),
    (ItemState.AWAITING_HUMAN, ItemState.FINALIZED),
} | {(state, ItemState.FAILED) for state in _ACTIVE}


@dataclass
class SessionState:
    item_id: str
    current_state: ItemState = ItemState.SUBMITTED
    attempt_counts: dict[str, int] = field(default_factory=dict)
    history: list[str] = field(default_factory=list)
    transitions: list[tuple[ItemState, ItemState]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def transition(self, new_state: ItemState) -> None:
        edge = (self.current_state, new_state)
        if edge not in ALLOWED_TRANSITIONS:
            raise ValueError(f"illegal state transition {edge[0].value} -> {edge[1].value}")
        self.transitions.append(edge)
        self.current_state = new_state


def _run_with_timeout(fn: Callable[[], Any], timeout_s: float) -> Any:
    if timeout_s <= 0:
        return fn()
    executor = ThreadPoolExecutor(max_workers=1)
    try:
        future: Future = executor.submit(fn)
        try:
            return future.result(timeout=timeout_s)
        except FutureTimeout as exc:
            raise StageTimeout(f"stage exceeded {timeout_s}s") from exc
    finally:
        executor.shutdown(wait=False)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


class Pipeline:
    """Everything one deployment needs: snapshot, indexes, providers, bus, audit."""

    def __init__(
        self,
        snapshot: CorpusSnapshot,
        config: PipelineConfig,
        audit_root: str | Path,
        registry: ProviderRegistry | None = None,
        vector_store=None,
        search_index=None,
    ):
        self.snapshot = snapshot
        self.config = config
        self.embedder, self.classifier = resolve_providers(config, registry)
        self.search_index = search_index or build_search_index(snapshot, config, self.embedder)
        self.tool_registry = default_registry(self.search_index)
        self.tool_client = InProcessToolClient(self.tool_registry)
        self.vector_store = vector_store or VectorStoreClient(self.tool_client)
        self.model_versions = model_versions(self.embedder, self.classifier)
        self.run_card = build_run_card(config, snapshot.snapshot_id, self.model_versions)
        self.audit = AuditStore(audit_root)
        # the session's run card lives beside its chains so a sealed audit
        # directory is exportable on its own
        (self.audit.root / "runcard.json").write_text(
            canonical_json(self.run_card), encoding="utf-8"
        )
        self.bus = MessageBus(snapshot)
        self.feedback_cache = FeedbackCache()
        self.sessions: dict[str, SessionState] = {}
        self._messages: dict[str, list[A2AMessage]] = {}
        self._fields: dict[str, ItemFields] = {}
        self._session_lock = threading.Lock()
        self._audited: set[str] = set()
        self.bus.subscribe_all(self._record)

    # -- bus sink -------------------------------------------------------------

    def _record(self, message: A2AMessage) -> None:
        # idempotent consumer: at-least-once delivery, exactly-once audit
        if message.message_id in self._audited:
            return
        self._audited.add(message.message_id)
        self.audit.append(message.to_dict())
        self._messages.setdefault(message.item_id, []).append(message)
        session = self.sessions.get(message.item_id)
        if session is not None:
            session.history.append(message.message_id)

    def _provenance(self, sender: AgentName, parent: str | None) -> Provenance:
        return Provenance.make(
            run_card_id=self.run_card["run_card_id"],
            sender_agent=sender,
            config_hash=self.config.config_hash,
            model_versions=self.model_versions,
            parent_message_id=parent,
        )

    def _attempt(self, session: SessionState, stage: str, fn: Callable[[], A2AMessage]) -> A2AMessage:
        """Retry wrapper: 1 + max_retries attempts, timeout per attempt."""
        last_error: Exception | None = None
        max_attempts = 1 + self.config.max_retries
        for _ in range(max_attempts):
            session.attempt_counts[stage] = session.attempt_counts.get(stage, 0) + 1
            try:
                return _run_with_timeout(fn, self.config.stage_timeout_s)
            except Exception as exc:
                last_error = exc
        raise StageExhausted(stage, session.attempt_counts[stage], last_error)

    # -- single item ----------------------------------------------------------

    def run_item(
        self,
        fields: ItemFields,
        use_description: bool = True,
        item_id: str | None = None,
    ) -> dict:
        problems = fields.validate()
        if problems:
            raise ValueError("; ".join(problems))
        item_id = item_id or f"item-{uuid.uuid4().hex[:12]}"
        session = SessionState(item_id=item_id)
        with self._session_lock:
            self.sessions[item_id] = session
            self._fields[item_id] = fields

        submit = make_message(
            MessageType.SUBMIT,
            item_id=item_id,
            state=ItemState.SUBMITTED,
            provenance=self._provenance(AgentName.ORCH, None),
            context={
                "manufacturer": fields.manufacturer,
                "equipment_or_service": fields.equipment_or_service,
                "model_no": fields.model_no,
                "description": fields.description or "",
                "use_description": "true" if use_description else "false",
            },
        )
        self.bus.publish(submit)

        try:
            session.transition(ItemState.REFINING)
            refined_msg = self._attempt(
                session,
                "refine",
                lambda: dr_refine(
                    fields,
                    self.config,
                    self._provenance(AgentName.DR, submit.message_id),
                    item_id=item_id,
                ),
            )
            self.bus.publish(refined_msg)
            refined_description = refined_msg.context_map().get("refined_description", "")

            session.transition(ItemState.RETRIEVING)
            evidence_msg = self._attempt(
                session,
                "retrieve",
                lambda: ir_retrieve(
                    fields,
                    refined_description,
                    self.vector_store,
                    self.config,
                    self._provenance(AgentName.IR, refined_msg.message_id),
                    item_id=item_id,
                    use_description=use_description,
                ),
            )
            self.bus.publish(evidence_msg)
            evidence_ctx = evidence_msg.context_map()
            pack = CitationPack.from_dict(json.loads(evidence_ctx["citation_pack"]))
            ranked = [
                RankedSnippet.from_dict(r) for r in json.loads(evidence_ctx["ranked"])
            ]

            session.transition(ItemState.CLASSIFYING)
            proposal_msg = self._attempt(
                session,
                "classify",
                lambda: hrp_classify(
                    fields,
                    refined_description,
                    pack,
                    ranked,
                    self.classifier,
                    self._provenance(AgentName.HRP, evidence_msg.message_id),
                    item_id=item_id,
                ),
            )
            self.bus.publish(proposal_msg)
            proposal = proposal_msg.decision
            assert proposal is not None

            session.transition(ItemState.VALIDATING)
            verdict_msg = self._attempt(
                session,
                "validate",
                lambda: vr_validate(
                    proposal,
                    ranked,
                    self.config,
                    self._provenance(AgentName.VR, proposal_msg.message_id),
                    item_id=item_id,
                ),
            )
            self.bus.publish(verdict_msg)
            verdict = verdict_msg.validator
            assert verdict is not None
        except StageExhausted as exc:
            session.transition(ItemState.FAILED)
            error = make_message(
                MessageType.ERROR,
                item_id=item_id,
                state=ItemState.FAILED,
                provenance=self._provenance(AgentName.ORCH, None),
                context={"error": str(exc), "stage": exc.stage},
            )
            self.bus.publish(error)
            return self.aggregate_response(session)

        if verdict.verdict is Verdict.AGREE:
            session.transition(ItemState.FINALIZED)
            final = make_message(
                MessageType.FINAL,
                item_id=item_id,
                state=ItemState.FINALIZED,
                provenance=self._provenance(AgentName.ORCH, verdict_msg.message_id),
                citations=proposal_msg.citations,
                decision=proposal,
                validator=verdict,
            )
            self.bus.publish(final)
        else:
            session.transition(ItemState.AWAITING_HUMAN)
            review = make_message(
                MessageType.HUMAN_REVIEW_REQUEST,
                item_id=item_id,
                state=ItemState.AWAITING_HUMAN,
                provenance=self._provenance(AgentName.ORCH, verdict_msg.message_id),
                citations=proposal_msg.citations,
                decision=proposal,
                validator=verdict,
            )
            self.bus.publish(review)
        return self.aggregate_response(session)

    # -- human resolution -------------------------------------------------------

    def resume_with_feedback(self, item_id: str, feedback: Feedback) -> dict:
        session = self.sessions.get(item_id)
        if session is None:
            raise UnknownItem(item_id)
        with session.lock:  # per-item transitions are serialized
            return self._resume_locked(session, item_id, feedback)

    def _resume_locked(self, session: SessionState, item_id: str, feedback: Feedback) -> dict:
        if session.current_state is not ItemState.AWAITING_HUMAN:
            raise NotAwaitingHuman(
                f"item {item_id} is {session.current_state.value}, not AWAITING_HUMAN"
            )
        feedback.validate()
        review_msg = self._last_message(item_id, MessageType.HUMAN_REVIEW_REQUEST)
        proposal = review_msg.decision if review_msg else None

        feedback_msg = fl_log(
            feedback, item_id, self._provenance(AgentName.FL, review_msg.message_id if review_msg else None)
        )
        self.bus.publish(feedback_msg)
        self.feedback_cache.record(self._fields[item_id], item_id, feedback)

        if feedback.action is FeedbackAction.OVERRIDE:
            assert feedback.override_label is not None
            steps = list(proposal.reasoning_steps) if proposal else []
            steps.append(
                f"Reviewer {feedback.reviewer_id} overrode to "
                f"{feedback.override_label.value}: {feedback.rationale}"
            )
            decision = Decision.for_label(
                feedback.override_label,
                confidence=1.0,
                cited_snippets=proposal.cited_snippets if proposal else (),
                reasoning_steps=steps,
            )
            marker = "overridden"
        else:
            assert proposal is not None
            steps = list(proposal.reasoning_steps)
            steps.append(f"Reviewer {feedback.reviewer_id} accepted: {feedback.rationale}")
            decision = Decision.for_label(
                proposal.label,
                confidence=proposal.confidence,
                cited_snippets=proposal.cited_snippets,
                reasoning_steps=steps,
            )
            marker = "accepted"

        session.transition(ItemState.FINALIZED)
        final = make_message(
            MessageType.FINAL,
            item_id=item_id,
            state=ItemState.FINALIZED,
            provenance=self._provenance(AgentName.HUMAN, feedback_msg.message_id),
            context={"human_override": marker, "reviewed_by": feedback.reviewer_id},
            citations=review_msg.citations if review_msg else (),
            decision=decision,
            validator=review_msg.validator if review_msg else None,
        )
        self.bus.publish(final)
        return self.aggregate_response(session)

    def log_advisory_feedback(self, item_id: str, feedback: Feedback) -> dict:
        """Feedback on an already-final item: recorded, never state-changing."""
        session = self.sessions.get(item_id)
        if session is None:
            raise UnknownItem(item_id)
        feedback.validate()
        message = fl_log(feedback, item_id, self._provenance(AgentName.FL, None))
        message = make_message(
            MessageType.FEEDBACK,
            item_id=item_id,
            state=session.current_state,
            provenance=message.provenance,
            context=message.context_map(),
        )
        self.bus.publish(message)
        self.feedback_cache.record(self._fields[item_id], item_id, feedback)
        return self.aggregate_response(session)

    # -- batch ------------------------------------------------------------------

    def run_batch(
        self,
        items: list[ItemFields],
        parallelism: int = 1,
        use_description: bool = True,
    ) -> list[dict]:
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if not items:
            return []

        def one(fields: ItemFields) -> dict:
            try:
                return self.run_item(fields, use_description=use_description)
            except Exception as exc:
                return {
                    "item_id": "",
                    "status": ItemState.FAILED.value,
                    "decision": None,
                    "verdict": None,
                    "citations": [],
                    "reasoning": [],
                    "run_card_id": self.run_card["run_card_id"],
                    "error": str(exc),
                    "timestamp": utc_now_iso(),
                }

        if parallelism == 1:
            return [one(fields) for fields in items]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, items))

    # -- views --------------------------------------------------------------------

    def _last_message(self, item_id: str, type: MessageType) -> A2AMessage | None:
        for message in reversed(self._messages.get(item_id, [])):
            if message.type is type:
                return message
        return None

    def aggregate_response(self, session: SessionState) -> dict:
        """Normalize the session into one record with explicit empties."""
        item_id = session.item_id
        final = self._last_message(item_id, MessageType.FINAL)
        review = self._last_message(item_id, MessageType.HUMAN_REVIEW_REQUEST)
        error = self._last_message(item_id, MessageType.ERROR)
        bearer = final or review
        decision = bearer.decision if bearer else None
        verdict = bearer.validator if bearer else None
        context = bearer.context_map() if bearer else {}
        return {
            "item_id": item_id,
            "status": session.current_state.value,
            "decision": decision.to_dict() if decision else None,
            "verdict": verdict.to_dict() if verdict else None,
            "citations": [c.to_dict() for c in (bearer.citations if bearer else ())],
            "reasoning": list(decision.reasoning_steps) if decision else [],
            "run_card_id": self.run_card["run_card_id"],
            "override": context.get("human_override", ""),
            "error": (error.context_map().get("error", "") if error else ""),
            "timestamp": (bearer or error).provenance.timestamp if (bearer or error) else "",
        }

    def result_view(self, item_id: str) -> dict:
        session = self.sessions.get(item_id)
        if session is None:
            raise UnknownItem(item_id)
        record = self.aggregate_response(session)
        evidence_msg = self._last_message(item_id, MessageType.EVIDENCE)
        evidence_rows = []
        if evidence_msg is not None:
            pack = CitationPack.from_dict(
                json.loads(evidence_msg.context_map()["citation_pack"])
            )
            for span in pack.spans:
                snippet = self.snapshot.snippet_by_id(span.snippet_id)
                evidence_rows.append(
                    {
                        "snippet_id": span.snippet_id,
                        "section_id": snippet.section_id if snippet else "",
                        "control_list": snippet.control_list.value if snippet else "",
                        "verbatim_text": span.verbatim_text,
                        "trace_id": evidence_msg.message_id,
                    }
                )
        decision = record["decision"]
        return {
            "item_id": item_id,
            "status": record["status"],
            "prediction": (
                {
                    "hrp_flag": decision["hrp_flag"],
                    "label": decision["label"],
                    "risk_level": decision["risk_level"],
                    "confidence": decision["confidence"],
                }
                if decision
                else None
            ),
            "reasoning_steps": record["reasoning"],
            "evidence_rows": evidence_rows,
            "verdict": record["verdict"],
            "override": record["override"],
            "error": record["error"],
            "run_card": {
                "run_card_id": self.run_card["run_card_id"],
                "config_hash": self.run_card["config_hash"],
                "snapshot_id": self.run_card["snapshot_id"],
                "model_versions": self.run_card["model_versions"],
            },
            "advisory_feedback": self.feedback_cache.lookup(self._fields[item_id]),
        }

    def export_bundle(self, item_id: str, out_dir: str | Path) -> Path:
        from .audit import export_bundle as _export

        session = self.sessions.get(item_id)
        if session is None:
            raise UnknownItem(item_id)
        return _export(
            self.audit,
            item_id,
            self.snapshot,
            self.run_card,
            self.aggregate_response(session),
            out_dir,
        )
