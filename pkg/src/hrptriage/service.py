"""HTTP front door: submit, inspect, feedback, batch, export, verify.

Single items are processed synchronously (desk-scale corpora finish in
well under a second); batches run on a background thread and are polled
via GET /batch/{id}. Every 200 response for an item is backed by audit
events reachable through GET /items/{id}/bundle.

With on_prem configuration nothing in this process opens an outbound
connection; /version exposes that state (on_prem flag) together with the
model identifier, index snapshot id, and config hash. CSV downloads embed
the version strip as a leading "# version_strip: {...}" comment line;
JSON downloads carry it as a top-level field.

Authentication, when configured, is one static bearer token; the token's
subject becomes the reviewer id on feedback.
"""

from __future__ import annotations

import csv
import io
import tempfile
import threading
import uuid
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Query, Request, Response
from pydantic import BaseModel, Field, field_validator

from .agents import Feedback, FeedbackAction, ItemFields
from .audit import archive_bundle, results_csv, verify_chain
from .canon import canonical_json, utc_now_iso
from .config import SCHEMA_VERSION
from .errors import (
    MissingOverrideLabel,
    MissingRationale,
    NotAwaitingHuman,
    UnknownItem,
)
from .labels import ControlList
from .messages import ItemState
from .orchestrator import Pipeline

BATCH_CSV_HEADER = ("manufacturer", "equipment_or_service", "model_no", "description")


class SubmitRequest(BaseModel):
    manufacturer: str
    equipment_or_service: str
    model_no: str
    description: Optional[str] = None
    use_description: bool = True

    @field_validator("manufacturer", "equipment_or_service", "model_no")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("must be non-empty")
        return value

    def to_fields(self) -> ItemFields:
        return ItemFields(
            manufacturer=self.manufacturer,
            equipment_or_service=self.equipment_or_service,
            model_no=self.model_no,
            description=self.description,
        )


class FeedbackRequest(BaseModel):
    action: str
    rationale: str
    override_label: Optional[str] = None
    rating: Optional[int] = Field(default=None, ge=1, le=5)
    policy_ref: Optional[str] = None
    reviewer_id: Optional[str] = None

    @field_validator("action")
    @classmethod
    def _known_action(cls, value: str) -> str:
        if value not in ("ACCEPT", "OVERRIDE"):
            raise ValueError("action must be ACCEPT or OVERRIDE")
        return value


def _version_strip(pipeline: Pipeline) -> dict:
    return {
        "model_identifier": pipeline.model_versions.get("classifier", ""),
        "index_snapshot": pipeline.snapshot.snapshot_id,
        "timestamp": utc_now_iso(),
    }


def _parse_batch_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    fieldnames = tuple(reader.fieldnames or ())
    missing = [name for name in BATCH_CSV_HEADER if name not in fieldnames]
    if missing:
        raise ValueError(f"batch CSV missing columns: {missing}")
    return [dict(row) for row in reader]


def create_app(pipeline: Pipeline | None, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="hrptriage", version="0.1.0")
    app.state.pipeline = pipeline
    app.state.batches: dict[str, dict] = {}
    app.state.batch_lock = threading.Lock()
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def get_pipeline() -> Pipeline:
        if app.state.pipeline is None:
            raise HTTPException(status_code=503, detail="snapshot not loaded")
        return app.state.pipeline

    def authorize(request: Request) -> str:
        """Returns the reviewer subject; rejects bad tokens when auth is on."""
        p = app.state.pipeline
        token = p.config.auth_token if p else ""
        if not token:
            return p.config.token_subject if p else "sme"
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid bearer token")
        return p.config.token_subject

    # -- health / version -----------------------------------------------------

    @app.get("/health")
    def health() -> dict:
        if app.state.pipeline is None:
            return {"status": "degraded", "detail": "snapshot not loaded"}
        return {"status": "ok"}

    @app.get("/version")
    def version(p: Pipeline = Depends(get_pipeline)) -> dict:
        return {
            "model_identifier": p.model_versions.get("classifier", ""),
            "index_snapshot_id": p.snapshot.snapshot_id,
            "config_hash": p.config.config_hash,
            "schema_version": SCHEMA_VERSION,
            "on_prem": p.config.on_prem,
        }

    # -- single item ------------------------------------------------------------

    @app.post("/items")
    def submit_item(
        body: SubmitRequest,
        p: Pipeline = Depends(get_pipeline),
        _subject: str = Depends(authorize),
    ) -> dict:
        record = p.run_item(body.to_fields(), use_description=body.use_description)
        return {"item_id": record["item_id"], "status": record["status"]}

    @app.get("/items/{item_id}")
    def get_item(item_id: str, p: Pipeline = Depends(get_pipeline)) -> dict:
        try:
            return p.result_view(item_id)
        except UnknownItem:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")

    @app.post("/items/{item_id}/feedback")
    def post_feedback(
        item_id: str,
        body: FeedbackRequest,
        p: Pipeline = Depends(get_pipeline),
        subject: str = Depends(authorize),
    ) -> dict:
        feedback = Feedback(
            reviewer_id=body.reviewer_id or subject,
            action=FeedbackAction(body.action),
            rationale=body.rationale,
            override_label=ControlList(body.override_label) if body.override_label else None,
            rating=body.rating,
            policy_ref=body.policy_ref,
        )
        session = p.sessions.get(item_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        try:
            if session.current_state is ItemState.AWAITING_HUMAN:
                p.resume_with_feedback(item_id, feedback)
            elif feedback.action is FeedbackAction.OVERRIDE:
                raise NotAwaitingHuman(
                    f"item {item_id} is {session.current_state.value}; override not allowed"
                )
            else:
                p.log_advisory_feedback(item_id, feedback)
        except (MissingRationale, MissingOverrideLabel, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except NotAwaitingHuman as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return p.result_view(item_id)

    @app.get("/items/{item_id}/bundle")
    def get_bundle(item_id: str, p: Pipeline = Depends(get_pipeline)) -> Response:
        try:
            with tempfile.TemporaryDirectory() as tmp:
                bundle_dir = p.export_bundle(item_id, tmp)
                blob = archive_bundle(bundle_dir)
        except UnknownItem:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        return Response(
            content=blob,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{item_id}-bundle.zip"'},
        )

    # -- batch --------------------------------------------------------------------

    def _start_batch(p: Pipeline, rows: list[dict], parallelism: int) -> str:
        batch_id = f"batch-{uuid.uuid4().hex[:12]}"
        state = {
            "batch_id": batch_id,
            "status": "running",
            "rows": rows,
            "records": [None] * len(rows),
            "created_at": utc_now_iso(),
        }
        with app.state.batch_lock:
            app.state.batches[batch_id] = state

        def work() -> None:
            items = [
                ItemFields(
                    manufacturer=row.get("manufacturer", ""),
                    equipment_or_service=row.get("equipment_or_service", ""),
                    model_no=row.get("model_no", ""),
                    description=row.get("description") or None,
                )
                for row in rows
            ]
            state["records"] = p.run_batch(items, parallelism=parallelism)
            state["status"] = "complete"

        thread = threading.Thread(target=work, name=batch_id, daemon=True)
        state["thread"] = thread
        thread.start()
        return batch_id

    @app.post("/batch")
    async def submit_batch(
        request: Request,
        parallelism: int = Query(default=1, ge=1),
        p: Pipeline = Depends(get_pipeline),
        _subject: str = Depends(authorize),
    ) -> dict:
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        if "text/csv" in content_type:
            try:
                rows = _parse_batch_csv(body.decode("utf-8"))
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        else:
            import json as _json

            try:
                parsed = _json.loads(body.decode("utf-8") or "[]")
            except ValueError:
                raise HTTPException(status_code=422, detail="body must be JSON list or CSV")
            if not isinstance(parsed, list):
                raise HTTPException(status_code=422, detail="JSON batch must be a list")
            rows = [dict(row) for row in parsed]

        row_errors = []
        for i, row in enumerate(rows):
            missing = [
                name
                for name in ("manufacturer", "equipment_or_service", "model_no")
                if not str(row.get(name, "") or "").strip()
            ]
            if missing:
                row_errors.append({"row": i, "missing": missing})
        if row_errors:
            raise HTTPException(status_code=422, detail={"row_errors": row_errors})

        batch_id = _start_batch(p, rows, parallelism)
        return {"batch_id": batch_id, "status": "running", "n_items": len(rows)}

    def _get_batch(batch_id: str) -> dict:
        with app.state.batch_lock:
            state = app.state.batches.get(batch_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown batch {batch_id}")
        return state

    @app.get("/batch/{batch_id}")
    def batch_status(batch_id: str) -> dict:
        state = _get_batch(batch_id)
        items = []
        for i, record in enumerate(state["records"]):
            items.append(
                {
                    "row": i,
                    "item_id": record["item_id"] if record else "",
                    "status": record["status"] if record else "PENDING",
                    "error": record.get("error", "") if record else "",
                }
            )
        return {"batch_id": batch_id, "status": state["status"], "items": items}

    @app.get("/batch/{batch_id}/download")
    def batch_download(
        batch_id: str,
        format: str = Query(default="json", pattern="^(json|csv)$"),
        p: Pipeline = Depends(get_pipeline),
    ) -> Response:
        state = _get_batch(batch_id)
        if state["status"] != "complete":
            raise HTTPException(status_code=409, detail="batch still running")
        records = state["records"]
        strip = _version_strip(p)
        if format == "json":
            payload = {"version_strip": strip, "results": records}
            return Response(content=canonical_json(payload), media_type="application/json")
        body = f"# version_strip: {canonical_json(strip)}\n" + results_csv(records)
        return Response(
            content=body,
            media_type="text/csv",
            headers={"Content-Disposition": f'attachment; filename="{batch_id}.csv"'},
        )

    # -- audit --------------------------------------------------------------------

    @app.get("/audit/verify")
    def audit_verify(p: Pipeline = Depends(get_pipeline)) -> dict:
        result = verify_chain(p.audit)
        return {"ok": result.ok, "item_id": result.item_id, "broken_seq": result.broken_seq}

    return app
