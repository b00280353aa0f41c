"""Append-only, hash-chained audit store with bundle export and replay.

One JSONL chain per item session, kept under a common root:

    <root>/<item_id>.jsonl     one event per line
    <root>/index.json          item_id -> event count (written on seal/close)

Each event is {seq, prev_hash, event_hash, payload, recorded_at} where
payload is the canonical-JSON *string* of the audited record (an A2A
message or a feedback record) and

    event_hash = sha256(prev_hash || payload)

with a genesis prev_hash of 64 ASCII zeros. The payload is hashed as the
exact stored bytes, so any bit flip is detectable by recomputation. The
public interface has no update or delete: appends land on disk (flushed
and fsynced) before append() returns.

An exported bundle is a directory

    runcard.json  events.jsonl  decision.json  version_strip.json
    evidence/<snippet_id>.txt   prompts/<message_id>.txt

that is self-verifying (the chain check needs only bundle contents) and
re-importable for replay.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import threading
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .canon import GENESIS_HASH, canonical_json, sha256_hex, utc_now_iso
from .corpus import CorpusSnapshot
from .errors import ConfigMismatch, SnapshotMismatch, StoreSealed, UnknownItem

AUDIT_SCHEMA_VERSION = 1

_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]+")


def _chain_filename(item_id: str) -> str:
    return _SAFE_NAME.sub("_", item_id) + ".jsonl"


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    prev_hash: str
    event_hash: str
    payload: str  # canonical JSON string
    recorded_at: str

    def payload_dict(self) -> dict:
        return json.loads(self.payload)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "prev_hash": self.prev_hash,
            "event_hash": self.event_hash,
            "payload": self.payload,
            "recorded_at": self.recorded_at,
        }


def event_hash(prev_hash: str, payload: str) -> str:
    return sha256_hex(prev_hash.encode("ascii") + payload.encode("utf-8"))


class AuditStore:
    """Append-only store; one hash chain per item session."""

    def __init__(self, root: str | Path, sealed: bool = False):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sealed = sealed
        self._lock = threading.Lock()
        self._tails: dict[str, tuple[int, str]] = {}  # item_id -> (next_seq, last_hash)

    # -- write path ---------------------------------------------------------

    def append(self, payload: Mapping[str, Any] | str) -> AuditEvent:
        """Chain and persist one event; the payload must carry its item_id."""
        if isinstance(payload, str):
            payload_str = payload
            item_id = json.loads(payload).get("item_id")
        else:
            payload_str = canonical_json(payload)
            item_id = payload.get("item_id")
        if not item_id:
            raise ValueError("audit payload must carry an item_id")
        with self._lock:
            if self._sealed:
                raise StoreSealed("store is sealed read-only")
            seq, prev = self._tail(item_id)
            event = AuditEvent(
                seq=seq,
                prev_hash=prev,
                event_hash=event_hash(prev, payload_str),
                payload=payload_str,
                recorded_at=utc_now_iso(),
            )
            path = self.root / _chain_filename(item_id)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(event.to_dict()) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._tails[item_id] = (seq + 1, event.event_hash)
        return event

    def seal(self) -> None:
        with self._lock:
            self._sealed = True
            self._write_index()

    def _write_index(self) -> None:
        index = {item_id: tail[0] for item_id, tail in sorted(self._tails.items())}
        for item_id in self.item_ids():
            index.setdefault(item_id, len(self.events(item_id)))
        (self.root / "index.json").write_text(canonical_json(index), encoding="utf-8")

    def _tail(self, item_id: str) -> tuple[int, str]:
        cached = self._tails.get(item_id)
        if cached is not None:
            return cached
        events = self.events(item_id)
        tail = (len(events), events[-1].event_hash if events else GENESIS_HASH)
        self._tails[item_id] = tail
        return tail

    # -- read path ----------------------------------------------------------

    def item_ids(self) -> list[str]:
        ids = []
        for path in sorted(self.root.glob("*.jsonl")):
            with path.open(encoding="utf-8") as fh:
                first = fh.readline().strip()
            if not first:
                continue
            try:
                ids.append(json.loads(json.loads(first)["payload"])["item_id"])
            except (json.JSONDecodeError, KeyError):
                ids.append(path.stem)
        return ids

    def events(self, item_id: str) -> list[AuditEvent]:
        path = self.root / _chain_filename(item_id)
        if not path.exists():
            return []
        return read_events(path)


def read_events(path: str | Path) -> list[AuditEvent]:
    events = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            events.append(
                AuditEvent(
                    seq=rec["seq"],
                    prev_hash=rec["prev_hash"],
                    event_hash=rec["event_hash"],
                    payload=rec["payload"],
                    recorded_at=rec.get("recorded_at", ""),
                )
            )
    return events


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    item_id: str | None = None
    broken_seq: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_events(events: Iterable[AuditEvent], item_id: str | None = None) -> VerifyResult:
    """Recompute every hash; report the first sequence index that mismatches."""
    prev = GENESIS_HASH
    expected_seq = 0
    for event in events:
        if (
            event.seq != expected_seq
            or event.prev_hash != prev
            or event.event_hash != event_hash(event.prev_hash, event.payload)
        ):
            return VerifyResult(ok=False, item_id=item_id, broken_seq=expected_seq)
        prev = event.event_hash
        expected_seq += 1
    return VerifyResult(ok=True, item_id=item_id)


def _verify_file(path: Path, item_id: str) -> VerifyResult:
    prev = GENESIS_HASH
    expected_seq = 0
    with path.open(encoding="utf-8", errors="replace") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                event = AuditEvent(
                    seq=rec["seq"],
                    prev_hash=rec["prev_hash"],
                    event_hash=rec["event_hash"],
                    payload=rec["payload"],
                    recorded_at=rec.get("recorded_at", ""),
                )
            except (json.JSONDecodeError, KeyError, TypeError):
                return VerifyResult(ok=False, item_id=item_id, broken_seq=expected_seq)
            if event.seq != expected_seq or event.prev_hash != prev or (
                event.event_hash != event_hash(event.prev_hash, event.payload)
            ):
                return VerifyResult(ok=False, item_id=item_id, broken_seq=expected_seq)
            prev = event.event_hash
            expected_seq += 1
    return VerifyResult(ok=True, item_id=item_id)


def verify_chain(store: AuditStore, item_id: str | None = None) -> VerifyResult:
    """Verify one item's chain, or every chain under the store root."""
    if item_id is not None:
        return _verify_file(store.root / _chain_filename(item_id), item_id)
    for chain_id in store.item_ids():
        result = _verify_file(store.root / _chain_filename(chain_id), chain_id)
        if not result.ok:
            return result
    return VerifyResult(ok=True)


# ---------------------------------------------------------------------------
# Bundle export / import
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditBundle:
    run_card: dict
    events: tuple[AuditEvent, ...]
    decision: dict
    version_strip: dict
    evidence: dict[str, str]  # snippet_id -> text
    prompts: dict[str, str]  # message_id -> prompt text

    @property
    def item_id(self) -> str:
        for event in self.events:
            payload = event.payload_dict()
            if "item_id" in payload:
                return payload["item_id"]
        raise ValueError("bundle has no item events")

    def verify(self) -> VerifyResult:
        return verify_events(self.events, self.item_id)


def export_bundle(
    store: AuditStore,
    item_id: str,
    snapshot: CorpusSnapshot,
    run_card: dict,
    decision_record: dict,
    out_dir: str | Path,
) -> Path:
    events = store.events(item_id)
    if not events:
        raise UnknownItem(item_id)
    out = Path(out_dir)
    (out / "evidence").mkdir(parents=True, exist_ok=True)
    (out / "prompts").mkdir(parents=True, exist_ok=True)

    (out / "runcard.json").write_text(canonical_json(run_card), encoding="utf-8")
    with (out / "events.jsonl").open("w", encoding="utf-8") as fh:
        for event in events:
            fh.write(canonical_json(event.to_dict()) + "\n")
    (out / "decision.json").write_text(canonical_json(decision_record), encoding="utf-8")

    cited: set[str] = set()
    for event in events:
        payload = event.payload_dict()
        for ref in payload.get("citations") or []:
            cited.add(ref["snippet_id"])
        prompt = (payload.get("context") or {}).get("prompt")
        if prompt:
            message_id = payload["provenance"]["message_id"]
            (out / "prompts" / f"{_SAFE_NAME.sub('_', message_id)}.txt").write_text(
                prompt, encoding="utf-8"
            )
    for snippet_id in sorted(cited):
        snippet = snapshot.snippet_by_id(snippet_id)
        if snippet is not None:
            (out / "evidence" / f"{_SAFE_NAME.sub('_', snippet_id)}.txt").write_text(
                snippet.text, encoding="utf-8"
            )

    strip = {
        "model_identifier": dict(run_card.get("model_versions", {})).get("classifier", ""),
        "index_snapshot": run_card.get("snapshot_id", snapshot.snapshot_id),
        "timestamp": utc_now_iso(),
    }
    (out / "version_strip.json").write_text(canonical_json(strip), encoding="utf-8")
    return out


def load_bundle(bundle_dir: str | Path) -> AuditBundle:
    root = Path(bundle_dir)
    events = tuple(read_events(root / "events.jsonl"))
    evidence = {}
    for path in sorted((root / "evidence").glob("*.txt")) if (root / "evidence").is_dir() else []:
        evidence[path.stem] = path.read_text(encoding="utf-8")
    prompts = {}
    for path in sorted((root / "prompts").glob("*.txt")) if (root / "prompts").is_dir() else []:
        prompts[path.stem] = path.read_text(encoding="utf-8")
    return AuditBundle(
        run_card=json.loads((root / "runcard.json").read_text(encoding="utf-8")),
        events=events,
        decision=json.loads((root / "decision.json").read_text(encoding="utf-8")),
        version_strip=json.loads((root / "version_strip.json").read_text(encoding="utf-8")),
        evidence=evidence,
        prompts=prompts,
    )


def archive_bundle(bundle_dir: str | Path) -> bytes:
    """Zip a bundle directory into a downloadable archive."""
    root = Path(bundle_dir)
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
        for path in sorted(root.rglob("*")):
            if path.is_file():
                zf.writestr(str(path.relative_to(root)), path.read_bytes())
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def replay(
    bundle: AuditBundle,
    snapshot: CorpusSnapshot,
    config=None,
    registry=None,
) -> tuple[dict, dict]:
    """Re-run the pipeline from the bundle's run-card and item fields.

    Returns (recomputed decision record, field-by-field diff against the
    recorded decision). Empty diff means the run reproduced exactly.
    """
    from .config import config_from_dict  # local import: audit stays orchestration-free
    from .orchestrator import Pipeline

    run_card = bundle.run_card
    if run_card.get("snapshot_id") != snapshot.snapshot_id:
        raise SnapshotMismatch(
            f"bundle snapshot {run_card.get('snapshot_id')} != provided {snapshot.snapshot_id}"
        )
    embedded = run_card.get("config")
    if embedded is None:
        raise ConfigMismatch("bundle run-card carries no effective config")
    bundle_config = config_from_dict(embedded)
    if bundle_config.config_hash != run_card.get("config_hash"):
        raise ConfigMismatch("run-card config_hash does not match its embedded config")
    if config is not None and config.config_hash != bundle_config.config_hash:
        raise ConfigMismatch(
            "supplied config differs from the bundle's run-card "
            f"({config.config_hash[:12]} != {bundle_config.config_hash[:12]})"
        )

    fields_payload = None
    for event in bundle.events:
        payload = event.payload_dict()
        if payload.get("type") == "SUBMIT":
            fields_payload = payload.get("context") or {}
            break
    if fields_payload is None:
        raise ValueError("bundle has no SUBMIT event to replay from")

    from .agents import ItemFields

    fields = ItemFields(
        manufacturer=fields_payload.get("manufacturer", ""),
        equipment_or_service=fields_payload.get("equipment_or_service", ""),
        model_no=fields_payload.get("model_no", ""),
        description=fields_payload.get("description") or None,
    )

    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        pipeline = Pipeline(snapshot, bundle_config, audit_root=tmp, registry=registry)
        record = pipeline.run_item(fields)

    recorded = bundle.decision
    recomputed = record
    diff: dict[str, dict] = {}
    for key in ("label", "hrp_flag", "risk_level", "confidence", "cited_snippets", "reasoning_steps"):
        old = (recorded.get("decision") or {}).get(key)
        new = (recomputed.get("decision") or {}).get(key)
        if old != new:
            diff[f"decision.{key}"] = {"recorded": old, "recomputed": new}
    for key in ("status",):
        if recorded.get(key) != recomputed.get(key):
            diff[key] = {"recorded": recorded.get(key), "recomputed": recomputed.get(key)}
    old_refs = sorted({c["snippet_id"] for c in recorded.get("citations") or []})
    new_refs = sorted({c["snippet_id"] for c in recomputed.get("citations") or []})
    if old_refs != new_refs:
        diff["citations"] = {"recorded": old_refs, "recomputed": new_refs}
    return recomputed, diff


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "item_id",
    "label",
    "hrp_flag",
    "risk_level",
    "confidence",
    "verdict",
    "status",
    "run_card_id",
    "timestamp",
)


def results_csv(records: Iterable[Mapping[str, Any]]) -> str:
    """Flatten per-item outcome records into the pinned column set."""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for record in records:
        decision = record.get("decision") or {}
        verdict = record.get("verdict") or {}
        writer.writerow(
            {
                "item_id": record.get("item_id", ""),
                "label": decision.get("label", ""),
                "hrp_flag": decision.get("hrp_flag", ""),
                "risk_level": decision.get("risk_level", ""),
                "confidence": decision.get("confidence", ""),
                "verdict": verdict.get("verdict", ""),
                "status": record.get("status", ""),
                "run_card_id": record.get("run_card_id", ""),
                "timestamp": record.get("timestamp", ""),
            }
        )
    return out.getvalue()
