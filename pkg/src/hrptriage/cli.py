"""Command-line front door; each verb is a thin wrapper over one module."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .agents import ItemFields
from .audit import AuditStore, load_bundle, replay, results_csv, verify_chain
from .canon import canonical_json
from .config import load_config
from .corpus import build_snapshot, load_corpus_dir, load_snapshot, save_snapshot
from .errors import TriageError
from .evalharness import evaluate, read_labeled_csv, render_confusion_csv, render_table
from .orchestrator import Pipeline
from .providers import HashingEmbedder
from .retrieval import build_search_index, save_index
from .toolhost import default_registry, serve as serve_tools


@click.group()
def main() -> None:
    """Auditable high-risk-property classification over a policy corpus."""


def _config(config_path: str | None):
    return load_config(config_path) if config_path else load_config()


def _pipeline(snapshot_dir: str, config_path: str | None, audit_dir: str | None) -> Pipeline:
    snapshot = load_snapshot(snapshot_dir)
    config = _config(config_path)
    audit_root = audit_dir or str(Path(snapshot_dir) / "audit")
    return Pipeline(snapshot, config, audit_root=audit_root)


@main.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def ingest(input_dir: str, manifest: str, out_dir: str, config_path: str | None) -> None:
    """Ingest .txt documents per a manifest and write a corpus snapshot."""
    config = _config(config_path)
    documents = load_corpus_dir(input_dir, manifest)
    snapshot = build_snapshot(documents, min_chunk=config.min_chunk, max_chunk=config.max_chunk)
    save_snapshot(snapshot, out_dir)
    click.echo(f"snapshot {snapshot.snapshot_id} with {len(snapshot.snippets)} snippets -> {out_dir}")


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
def index(snapshot_dir: str, config_path: str | None) -> None:
    """Build and persist the lexical and vector indexes beside a snapshot."""
    config = _config(config_path)
    snapshot = load_snapshot(snapshot_dir)
    embedder = HashingEmbedder(config.embed_dim)
    search_index = build_search_index(snapshot, config, embedder)
    save_index(search_index, snapshot_dir)
    click.echo(f"indexed {len(search_index.row_ids)} snippets under {snapshot_dir}")


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--audit-dir", type=click.Path())
@click.option("--manufacturer", "-m", required=True)
@click.option("--equipment", "-e", required=True)
@click.option("--model-no", "-M", required=True)
@click.option("--description", "-d", default=None)
def run(
    snapshot_dir: str,
    config_path: str | None,
    audit_dir: str | None,
    manufacturer: str,
    equipment: str,
    model_no: str,
    description: str | None,
) -> None:
    """Classify a single item and print the outcome record."""
    pipeline = _pipeline(snapshot_dir, config_path, audit_dir)
    record = pipeline.run_item(
        ItemFields(
            manufacturer=manufacturer,
            equipment_or_service=equipment,
            model_no=model_no,
            description=description,
        )
    )
    click.echo(canonical_json(record))


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--audit-dir", type=click.Path())
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path())
@click.option("--format", "out_format", type=click.Choice(["json", "csv"]), default="json")
@click.option("--parallelism", type=int, default=1)
def batch(
    snapshot_dir: str,
    config_path: str | None,
    audit_dir: str | None,
    input_path: str,
    out_path: str | None,
    out_format: str,
    parallelism: int,
) -> None:
    """Run a CSV of items (header: manufacturer,equipment_or_service,model_no,description)."""
    import csv as _csv

    pipeline = _pipeline(snapshot_dir, config_path, audit_dir)
    with open(input_path, newline="", encoding="utf-8") as fh:
        rows = list(_csv.DictReader(fh))
    items = [
        ItemFields(
            manufacturer=row.get("manufacturer", ""),
            equipment_or_service=row.get("equipment_or_service", ""),
            model_no=row.get("model_no", ""),
            description=row.get("description") or None,
        )
        for row in rows
    ]
    records = pipeline.run_batch(items, parallelism=parallelism)
    output = results_csv(records) if out_format == "csv" else canonical_json(records)
    if out_path:
        Path(out_path).write_text(output, encoding="utf-8")
        click.echo(f"{len(records)} results -> {out_path}")
    else:
        click.echo(output)


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--audit-dir", type=click.Path())
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default="report.json", type=click.Path())
@click.option("--score-deferred-as-proposal", is_flag=True, default=False)
@click.option("--parallelism", type=int, default=1)
def eval(
    snapshot_dir: str,
    config_path: str | None,
    audit_dir: str | None,
    input_path: str,
    out_path: str,
    score_deferred_as_proposal: bool,
    parallelism: int,
) -> None:
    """Evaluate a labeled CSV; writes report.json, table.txt, confusion.csv."""
    pipeline = _pipeline(snapshot_dir, config_path, audit_dir)
    items = read_labeled_csv(Path(input_path).read_text(encoding="utf-8"))
    report = evaluate(
        items,
        pipeline,
        score_deferred_as_proposal=score_deferred_as_proposal,
        parallelism=parallelism,
    )
    out = Path(out_path)
    out.write_text(canonical_json(report.to_dict()), encoding="utf-8")
    table = render_table(report)
    out.with_name("table.txt").write_text(table, encoding="utf-8")
    out.with_name("confusion.csv").write_text(render_confusion_csv(report), encoding="utf-8")
    click.echo(table, nl=False)
    click.echo(f"scored {report.n_scored}/{report.n_items} items ({report.n_deferred} deferred)")


@main.command("verify-audit")
@click.option("--audit-dir", "audit_dir", required=True, type=click.Path(exists=True))
def verify_audit(audit_dir: str) -> None:
    """Recompute every chain hash under an audit root."""
    result = verify_chain(AuditStore(audit_dir, sealed=True))
    if result.ok:
        click.echo("ok")
    else:
        click.echo(f"broken: item {result.item_id} seq {result.broken_seq}")
        sys.exit(1)


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--audit-dir", required=True, type=click.Path(exists=True))
@click.option("--item", "item_id", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def export(snapshot_dir: str, audit_dir: str, item_id: str, out_dir: str) -> None:
    """Export one item's audit bundle (runcard, events, evidence, prompts)."""
    from .audit import export_bundle

    snapshot = load_snapshot(snapshot_dir)
    store = AuditStore(audit_dir, sealed=True)
    events = store.events(item_id)
    if not events:
        raise click.ClickException(f"unknown item {item_id}")
    run_card_path = Path(audit_dir) / "runcard.json"
    run_card: dict = (
        json.loads(run_card_path.read_text(encoding="utf-8")) if run_card_path.exists() else {}
    )
    decision_record: dict = {
        "item_id": item_id,
        "status": "",
        "decision": None,
        "verdict": None,
        "citations": [],
        "run_card_id": run_card.get("run_card_id", ""),
    }
    for event in events:
        payload = event.payload_dict()
        decision_record["status"] = payload.get("state", "")
        if payload.get("type") in ("FINAL", "HUMAN_REVIEW_REQUEST"):
            decision_record.update(
                decision=payload.get("decision"),
                verdict=payload.get("validator"),
                citations=payload.get("citations", []),
            )
    export_bundle(store, item_id, snapshot, run_card, decision_record, out_dir)
    click.echo(f"bundle -> {out_dir}")


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
def replay_bundle(snapshot_dir: str, bundle_dir: str, config_path: str | None) -> None:
    """Re-run a bundle against a snapshot and print the decision diff."""
    snapshot = load_snapshot(snapshot_dir)
    bundle = load_bundle(bundle_dir)
    config = load_config(config_path) if config_path else None
    try:
        _record, diff = replay(bundle, snapshot, config=config)
    except TriageError as exc:
        raise click.ClickException(str(exc))
    click.echo(canonical_json({"diff": diff, "reproduced": not diff}))
    if diff:
        sys.exit(1)


@main.command()
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
def toolhost(snapshot_dir: str, config_path: str | None) -> None:
    """Serve the vectorstore and summary tools over stdio (line protocol)."""
    config = _config(config_path)
    snapshot = load_snapshot(snapshot_dir)
    embedder = HashingEmbedder(config.embed_dim)
    search_index = build_search_index(snapshot, config, embedder)
    serve_tools(default_registry(search_index), sys.stdin, sys.stdout)


@main.command("serve")
@click.option("--snapshot", "snapshot_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--audit-dir", type=click.Path())
@click.option("--ui-dir", type=click.Path(exists=True), help="static review-UI bundle to mount at /ui")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve_api(
    snapshot_dir: str,
    config_path: str | None,
    audit_dir: str | None,
    ui_dir: str | None,
    host: str,
    port: int,
) -> None:
    """Serve the HTTP API (and optionally the review UI)."""
    import uvicorn

    from .service import create_app

    pipeline = _pipeline(snapshot_dir, config_path, audit_dir)
    uvicorn.run(create_app(pipeline, ui_dir=ui_dir), host=host, port=port)


if __name__ == "__main__":
    main()
