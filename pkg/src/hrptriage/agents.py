"""The five pipeline agents as pure stage functions.

Each agent consumes item state plus configuration and produces one typed
message; none of them mutate shared state, so stages for different items
can run concurrently. The retrieval agent (IR) reaches the vector store
only through the tool interface, and the description refiner (DR) is a
deterministic rewrite that never calls out anywhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .canon import canonical_json
from .config import PipelineConfig
from .errors import (
    MalformedProviderOutput,
    MissingOverrideLabel,
    MissingRationale,
    NoEvidence,
)
from .labels import ControlList
from .messages import (
    A2AMessage,
    AgentName,
    CitationRef,
    Decision,
    ItemState,
    MessageType,
    Provenance,
    ValidatorVerdict,
    Verdict,
    make_message,
)
from .providers import ClassifierProvider, ClassifyRequest, EvidenceSpan
from .retrieval import CitationPack, EMPTY_PACK, QueryObject, RankedSnippet, pack_citations


@dataclass(frozen=True)
class ItemFields:
    manufacturer: str
    equipment_or_service: str
    model_no: str
    description: str | None = None

    def validate(self) -> list[str]:
        problems = []
        for name in ("manufacturer", "equipment_or_service", "model_no"):
            if not (getattr(self, name) or "").strip():
                problems.append(f"{name} must be non-empty")
        return problems

    def field_text(self) -> str:
        return f"{self.manufacturer} {self.equipment_or_service} {self.model_no}"

    def cache_key(self) -> tuple[str, str, str]:
        return (
            self.manufacturer.strip().lower(),
            self.equipment_or_service.strip().lower(),
            self.model_no.strip().lower(),
        )

    def to_dict(self) -> dict:
        return {
            "manufacturer": self.manufacturer,
            "equipment_or_service": self.equipment_or_service,
            "model_no": self.model_no,
            "description": self.description,
        }


# ---------------------------------------------------------------------------
# DR: description refiner
# ---------------------------------------------------------------------------


def _token_count(text: str) -> int:
    return len(text.split())


def refine_description(fields: ItemFields, config: PipelineConfig) -> tuple[str, bool]:
    """Deterministic rewrite; returns (refined_text, needs_clarification).

    Too-short or absent descriptions are flagged rather than invented.
    """
    raw = (fields.description or "").strip()
    if _token_count(raw) < config.min_desc_tokens:
        return raw, True
    text = re.sub(r"\s+", " ", raw)
    for phrase in config.stop_phrases:
        text = re.sub(re.escape(phrase), "", text, flags=re.IGNORECASE)
    text = re.sub(r"\s+", " ", text).strip(" ;,")
    lowered = text.lower()
    if (
        fields.manufacturer.strip().lower() not in lowered
        and fields.model_no.strip().lower() not in lowered
    ):
        text = f"{text}; manufacturer: {fields.manufacturer.strip()}; model: {fields.model_no.strip()}"
    return text, False


def dr_refine(
    fields: ItemFields, config: PipelineConfig, provenance: Provenance, item_id: str = ""
) -> A2AMessage:
    refined, needs_clarification = refine_description(fields, config)
    return make_message(
        MessageType.REFINED,
        item_id=item_id,
        state=ItemState.REFINING,
        provenance=provenance,
        context={
            "refined_description": refined,
            "needs_clarification": "true" if needs_clarification else "false",
        },
    )


# ---------------------------------------------------------------------------
# IR: hybrid retrieval through the vector store tool
# ---------------------------------------------------------------------------


def description_is_noisy(description: str, config: PipelineConfig) -> bool:
    """Flag junk descriptions so retrieval falls back to fields only."""
    stripped = description.strip()
    if not stripped:
        return True
    if _token_count(stripped) < config.min_desc_tokens:
        return True
    non_alnum = sum(1 for c in stripped if not (c.isalnum() or c.isspace()))
    return non_alnum / len(stripped) > config.noise_nonalnum_ratio


def _merge_rankings(
    primary: list[RankedSnippet], secondary: list[RankedSnippet]
) -> list[RankedSnippet]:
    # keep per-snippet max fused score across the two query forms
    best: dict[str, RankedSnippet] = {}
    for item in list(primary) + list(secondary):
        kept = best.get(item.snippet_id)
        if kept is None or item.fused_score > kept.fused_score:
            best[item.snippet_id] = item
    return sorted(best.values(), key=lambda r: (-r.fused_score, r.snippet_id))


def ir_retrieve(
    fields: ItemFields,
    refined_description: str,
    vector_store,
    config: PipelineConfig,
    provenance: Provenance,
    item_id: str = "",
    use_description: bool = True,
) -> A2AMessage:
    """Search with fields-only and (when usable) fields+description queries.

    Absence of evidence is not an error here: the EVIDENCE message simply
    carries zero citations and the validator takes it from there.
    """
    base = dict(
        top_k=config.top_k,
        lexical_weight=config.lexical_weight,
        vector_weight=config.vector_weight,
    )
    fields_query = QueryObject(field_text=fields.field_text(), use_description=False, **base)
    ranked = vector_store.search(fields_query)

    description = refined_description or (fields.description or "")
    query_form = "fields_only"
    if use_description and description and not description_is_noisy(description, config):
        desc_query = QueryObject(
            field_text=fields.field_text(),
            description_text=description,
            use_description=True,
            **base,
        )
        ranked = _merge_rankings(vector_store.search(desc_query), ranked)
        query_form = "fields+description"

    ranked = ranked[: config.top_k]
    try:
        pack = pack_citations(
            ranked,
            QueryObject(
                field_text=fields.field_text(),
                description_text=description if query_form == "fields+description" else None,
                use_description=query_form == "fields+description",
                **base,
            ),
            budget=config.pack_budget,
            min_score=config.min_evidence_score,
        )
    except NoEvidence:
        pack = EMPTY_PACK

    return make_message(
        MessageType.EVIDENCE,
        item_id=item_id,
        state=ItemState.RETRIEVING,
        provenance=provenance,
        context={
            "query_form": query_form,
            "citation_pack": canonical_json(pack.to_dict()),
            "ranked": canonical_json([r.to_dict() for r in ranked]),
        },
        citations=[
            CitationRef(s.snippet_id, s.char_start, s.char_end) for s in pack.spans
        ],
    )


# ---------------------------------------------------------------------------
# HRP: grounded classification
# ---------------------------------------------------------------------------


def build_prompt(fields: ItemFields, refined_description: str, pack: CitationPack) -> str:
    """Assemble the grounded prompt: item fields plus packed spans, nothing else."""
    lines = [
        "Classify the procurement item into exactly one of USML, NRC, CCL, EAR99.",
        f"Manufacturer: {fields.manufacturer}",
        f"Equipment/Service: {fields.equipment_or_service}",
        f"Model No.: {fields.model_no}",
        f"Description: {refined_description or '(none provided)'}",
        "Policy evidence (cite snippet ids verbatim):",
    ]
    if pack.spans:
        for span in pack.spans:
            lines.append(f"[{span.snippet_id}] {span.verbatim_text}")
    else:
        lines.append("(no evidence retrieved)")
    return "\n".join(lines)


def hrp_classify(
    fields: ItemFields,
    refined_description: str,
    pack: CitationPack,
    ranked: list[RankedSnippet],
    classifier: ClassifierProvider,
    provenance: Provenance,
    item_id: str = "",
) -> A2AMessage:
    """Propose a decision grounded in the offered pack.

    Provider output citing anything outside the pack is rejected: the
    stage fails closed rather than forwarding ungrounded citations.
    """
    scores = {r.snippet_id: r for r in ranked}
    spans = tuple(
        EvidenceSpan(
            snippet_id=span.snippet_id,
            control_list=scores[span.snippet_id].control_list,
            verbatim_text=span.verbatim_text,
            fused_score=scores[span.snippet_id].fused_score,
        )
        for span in pack.spans
        if span.snippet_id in scores
    )
    prompt = build_prompt(fields, refined_description, pack)
    output = classifier.classify(
        ClassifyRequest(
            manufacturer=fields.manufacturer,
            equipment_or_service=fields.equipment_or_service,
            model_no=fields.model_no,
            description=refined_description,
            prompt=prompt,
            spans=spans,
        )
    )
    offered = pack.snippet_ids
    stray = [s for s in output.used_snippets if s not in offered]
    if stray:
        raise MalformedProviderOutput(f"provider cited snippets outside the pack: {stray}")
    if not (0.0 <= output.confidence <= 1.0) or output.confidence != output.confidence:
        raise MalformedProviderOutput(f"provider confidence {output.confidence} invalid")

    decision = Decision.for_label(
        output.label,
        confidence=output.confidence,
        cited_snippets=output.used_snippets,
        reasoning_steps=output.reasoning_steps,
    )
    return make_message(
        MessageType.PROPOSAL,
        item_id=item_id,
        state=ItemState.CLASSIFYING,
        provenance=provenance,
        context={"prompt": prompt},
        citations=[
            CitationRef(s.snippet_id, s.char_start, s.char_end)
            for s in pack.spans
            if s.snippet_id in output.used_snippets
        ],
        decision=decision,
    )


# ---------------------------------------------------------------------------
# VR: coverage / conflict gate
# ---------------------------------------------------------------------------


def vr_validate(
    proposal: Decision,
    ranked: list[RankedSnippet],
    config: PipelineConfig,
    provenance: Provenance,
    item_id: str = "",
) -> A2AMessage:
    """Emit AGREE / REVIEW / CONFLICT; the orchestrator finalizes or routes.

    coverage = cited snippets that carry the proposed label with enough
    fused score; conflict = two or more lists whose best snippets score
    within CONFLICT_RATIO of the best overall.
    """
    by_id = {r.snippet_id: r for r in ranked}
    coverage_count = 0
    for snippet_id in proposal.cited_snippets:
        r = by_id.get(snippet_id)
        if (
            r is not None
            and r.control_list is proposal.label
            and r.fused_score >= config.min_evidence_score
        ):
            coverage_count += 1

    top_by_list: dict[ControlList, float] = {}
    for r in ranked:
        if r.fused_score < config.min_evidence_score:
            continue  # sub-floor noise must not manufacture conflicts
        if r.fused_score > top_by_list.get(r.control_list, 0.0):
            top_by_list[r.control_list] = r.fused_score
    top_overall = max(top_by_list.values(), default=0.0)
    conflict_lists = {
        cl.value
        for cl, score in top_by_list.items()
        if top_overall > 0 and score >= config.conflict_ratio * top_overall
    }

    if len(conflict_lists) >= 2:
        verdict = Verdict.CONFLICT
        notes = f"contradictory evidence from {sorted(conflict_lists)}"
    elif coverage_count < config.min_support or proposal.confidence < config.conf_threshold:
        verdict = Verdict.REVIEW
        notes = (
            f"coverage {coverage_count} (need {config.min_support}), "
            f"confidence {proposal.confidence:.4f} (need {config.conf_threshold})"
        )
    else:
        verdict = Verdict.AGREE
        notes = f"{coverage_count} on-policy citations support {proposal.label.value}"

    return make_message(
        MessageType.VERDICT,
        item_id=item_id,
        state=ItemState.VALIDATING,
        provenance=provenance,
        validator=ValidatorVerdict(
            verdict=verdict,
            coverage_count=coverage_count,
            conflict_lists=tuple(sorted(conflict_lists)),
            notes=notes,
        ),
        decision=proposal,
    )


# ---------------------------------------------------------------------------
# FL: feedback logging
# ---------------------------------------------------------------------------


class FeedbackAction(str, Enum):
    ACCEPT = "ACCEPT"
    OVERRIDE = "OVERRIDE"


@dataclass(frozen=True)
class Feedback:
    reviewer_id: str
    action: FeedbackAction
    rationale: str
    override_label: ControlList | None = None
    rating: int | None = None  # opaque 1-5, not interpreted
    policy_ref: str | None = None

    def validate(self) -> None:
        if not self.rationale.strip():
            raise MissingRationale("feedback requires a short rationale")
        if self.action is FeedbackAction.OVERRIDE and self.override_label is None:
            raise MissingOverrideLabel("override feedback requires an override_label")

    def to_dict(self) -> dict:
        return {
            "reviewer_id": self.reviewer_id,
            "action": self.action.value,
            "rationale": self.rationale,
            "override_label": self.override_label.value if self.override_label else None,
            "rating": self.rating,
            "policy_ref": self.policy_ref,
        }


class FeedbackCache:
    """Reviewer decisions keyed by (manufacturer, equipment, model).

    Lookups surface prior feedback as advisory context for reviewers; the
    cache is never fed back into classification.
    """

    def __init__(self):
        self._entries: dict[tuple[str, str, str], list[dict]] = {}

    def record(self, fields: ItemFields, item_id: str, feedback: Feedback) -> None:
        entry = {"item_id": item_id, **feedback.to_dict()}
        self._entries.setdefault(fields.cache_key(), []).append(entry)

    def lookup(self, fields: ItemFields) -> list[dict]:
        return list(self._entries.get(fields.cache_key(), []))


def fl_log(
    feedback: Feedback,
    item_id: str,
    provenance: Provenance,
) -> A2AMessage:
    """Validate and shape the FEEDBACK message; appending is the caller's duty."""
    feedback.validate()
    context = {
        "reviewer_id": feedback.reviewer_id,
        "action": feedback.action,
        "rationale": feedback.rationale,
    }
    if feedback.override_label is not None:
        context["override_label"] = feedback.override_label.value
    if feedback.rating is not None:
        context["rating"] = str(feedback.rating)
    if feedback.policy_ref:
        context["policy_ref"] = feedback.policy_ref
    return make_message(
        MessageType.FEEDBACK,
        item_id=item_id,
        state=ItemState.AWAITING_HUMAN,
        provenance=provenance,
        context=context,
    )
