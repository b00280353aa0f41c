from __future__ import annotations

import logging

import pytest

from hrptriage.errors import BusClosed, MissingIdentity, SchemaViolation
from hrptriage.labels import ControlList, RiskLevel
from hrptriage.messages import (
    A2AMessage,
    AgentName,
    CitationRef,
    Decision,
    DeliveryReceipt,
    ItemState,
    MessageBus,
    MessageType,
    Provenance,
    ValidatorVerdict,
    Verdict,
    make_message,
    normalize,
    validate_schema,
)


def _prov(sender=AgentName.ORCH, parent=None):
    return Provenance.make(
        run_card_id="rc-test",
        sender_agent=sender,
        config_hash="deadbeef",
        model_versions={"classifier": "stub/1"},
        parent_message_id=parent,
    )


def _proposal_message(item_id="i1", cited=("s1",)):
    return make_message(
        MessageType.PROPOSAL,
        item_id=item_id,
        state=ItemState.CLASSIFYING,
        provenance=_prov(AgentName.HRP),
        decision=Decision.for_label(ControlList.USML, 0.9, cited_snippets=cited),
        citations=[CitationRef("s1", 0, 10)],
    )


# ---------------------------------------------------------------------------
# Decision derivations
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "label,hrp,risk",
    [
        (ControlList.USML, True, RiskLevel.LEVEL1),
        (ControlList.NRC, True, RiskLevel.LEVEL1),
        (ControlList.CCL, True, RiskLevel.LEVEL2),
        (ControlList.EAR99, False, RiskLevel.LOW),
    ],
)
def test_decision_derives_flag_and_level(label, hrp, risk):
    decision = Decision.for_label(label, 0.5)
    assert decision.hrp_flag is hrp
    assert decision.risk_level is risk


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------


def test_normalize_fills_typed_defaults():
    message = normalize({"type": "EVIDENCE", "item_id": "i1"})
    assert message.type is MessageType.EVIDENCE
    assert message.item_id == "i1"
    assert message.citations == ()
    assert message.context == ()
    assert message.decision is None
    assert message.validator is None
    assert message.provenance.message_id  # generated, never missing


def test_normalize_drops_unknown_keys_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="hrptriage.messages"):
        with_extra = normalize({"type": "EVIDENCE", "item_id": "i1", "foo": 1})
    without = normalize({"type": "EVIDENCE", "item_id": "i1"})
    assert with_extra.to_dict()["context"] == without.to_dict()["context"]
    assert with_extra.citations == without.citations
    assert any("foo" in record.message for record in caplog.records)


def test_normalize_requires_identity():
    with pytest.raises(MissingIdentity):
        normalize({"item_id": "i1"})
    with pytest.raises(MissingIdentity):
        normalize({"type": "EVIDENCE"})


def test_normalize_idempotent():
    first = normalize({"type": "PROPOSAL", "item_id": "i9", "state": "CLASSIFYING"})
    second = normalize(first.to_dict())
    assert second == first


# ---------------------------------------------------------------------------
# wire round trip
# ---------------------------------------------------------------------------


def test_wire_round_trip_identity():
    message = _proposal_message()
    assert A2AMessage.from_wire(message.to_wire()) == message

    verdict_msg = make_message(
        MessageType.VERDICT,
        item_id="i2",
        state=ItemState.VALIDATING,
        provenance=_prov(AgentName.VR, parent="msg-parent"),
        validator=ValidatorVerdict(Verdict.CONFLICT, 1, ("CCL", "USML"), "two lists"),
        context={"a": "1", "b": "2"},
    )
    assert A2AMessage.from_wire(verdict_msg.to_wire()) == verdict_msg


def test_wire_form_has_all_eight_fields_sorted():
    wire = _proposal_message().to_wire()
    import json

    data = json.loads(wire)
    assert list(data) == sorted(data)
    assert set(data) == {
        "type", "item_id", "state", "context", "citations", "decision", "validator", "provenance",
    }
    # absent optional content is explicit, never missing
    assert data["validator"] is None


# ---------------------------------------------------------------------------
# validate_schema
# ---------------------------------------------------------------------------


def test_uncited_final_is_a_violation():
    final = make_message(
        MessageType.FINAL,
        item_id="i1",
        state=ItemState.FINALIZED,
        provenance=_prov(),
        decision=Decision.for_label(ControlList.USML, 0.9),
    )
    assert any("uncited final" in v for v in validate_schema(final))


def test_override_marker_permits_uncited_final():
    final = make_message(
        MessageType.FINAL,
        item_id="i1",
        state=ItemState.FINALIZED,
        provenance=_prov(),
        context={"human_override": "accepted"},
        decision=Decision.for_label(ControlList.NRC, 0.2),
    )
    assert validate_schema(final) == []


def test_inconsistent_derived_fields_flagged():
    bad = Decision(
        label=ControlList.EAR99,
        hrp_flag=True,
        risk_level=RiskLevel.LOW,
        confidence=0.5,
        cited_snippets=(),
        reasoning_steps=(),
    )
    message = make_message(
        MessageType.PROPOSAL,
        item_id="i1",
        state=ItemState.CLASSIFYING,
        provenance=_prov(),
        decision=bad,
    )
    violations = validate_schema(message)
    assert any("hrp_flag" in v for v in violations)


def test_wellformed_proposal_passes():
    assert validate_schema(_proposal_message()) == []


def test_all_violations_reported_not_just_first():
    bad = Decision(
        label=ControlList.EAR99,
        hrp_flag=True,
        risk_level=RiskLevel.LEVEL1,
        confidence=1.5,
        cited_snippets=(),
        reasoning_steps=(),
    )
    final = make_message(
        MessageType.FINAL,
        item_id="i1",
        state=ItemState.FINALIZED,
        provenance=_prov(),
        decision=bad,
    )
    violations = validate_schema(final)
    assert len(violations) >= 3  # flag, level, confidence (+ uncited)


def test_dict_input_reports_missing_fields():
    violations = validate_schema({"type": "SUBMIT", "item_id": "i1"})
    assert any("missing field state" in v for v in violations)
    assert any("missing field provenance" in v for v in violations)


def test_citations_resolve_against_snapshot(fixture_snapshot):
    real = fixture_snapshot.snippets[0]
    good = make_message(
        MessageType.EVIDENCE,
        item_id="i1",
        state=ItemState.RETRIEVING,
        provenance=_prov(AgentName.IR),
        citations=[CitationRef(real.snippet_id, 0, min(5, len(real.text)))],
    )
    assert validate_schema(good, fixture_snapshot) == []
    phantom = make_message(
        MessageType.EVIDENCE,
        item_id="i1",
        state=ItemState.RETRIEVING,
        provenance=_prov(AgentName.IR),
        citations=[CitationRef("no-such-snippet", 0, 5)],
    )
    assert any("not in snapshot" in v for v in validate_schema(phantom, fixture_snapshot))


# ---------------------------------------------------------------------------
# bus
# ---------------------------------------------------------------------------


def test_single_subscriber_receives_message():
    bus = MessageBus()
    seen = []
    bus.subscribe(MessageType.SUBMIT, seen.append)
    message = make_message(
        MessageType.SUBMIT, item_id="i1", state=ItemState.SUBMITTED, provenance=_prov()
    )
    receipt = bus.publish(message)
    assert isinstance(receipt, DeliveryReceipt)
    assert receipt.message_id == message.message_id
    assert seen == [message]


def test_schema_gate_blocks_invalid_publish():
    bus = MessageBus()
    uncited_final = make_message(
        MessageType.FINAL,
        item_id="i1",
        state=ItemState.FINALIZED,
        provenance=_prov(),
        decision=Decision.for_label(ControlList.CCL, 0.9),
    )
    with pytest.raises(SchemaViolation):
        bus.publish(uncited_final)


def test_fanout_in_registration_order():
    bus = MessageBus()
    order = []
    bus.subscribe(MessageType.EVIDENCE, lambda m: order.append("first"))
    bus.subscribe(MessageType.EVIDENCE, lambda m: order.append("second"))
    message = make_message(
        MessageType.EVIDENCE, item_id="i1", state=ItemState.RETRIEVING, provenance=_prov()
    )
    receipt = bus.publish(message)
    assert order == ["first", "second"]
    assert receipt.delivered_to == 2


def test_publication_order_preserved_per_subscriber():
    bus = MessageBus()
    seen = []
    bus.subscribe_all(lambda m: seen.append(m.message_id))
    sent = []
    for _ in range(10):
        message = make_message(
            MessageType.SUBMIT, item_id="i1", state=ItemState.SUBMITTED, provenance=_prov()
        )
        sent.append(message.message_id)
        bus.publish(message)
    assert seen == sent


def test_closed_bus_rejects_publish():
    bus = MessageBus()
    bus.close()
    message = make_message(
        MessageType.SUBMIT, item_id="i1", state=ItemState.SUBMITTED, provenance=_prov()
    )
    with pytest.raises(BusClosed):
        bus.publish(message)
