"""Versioned, immutable policy corpus: ingestion, chunking, snapshots.

Plain-text policy documents are split into sections by heading detection
(regulatory "§ 121.1"-style markers, "Category X" lines, or short
ALL-CAPS lines), then each section is chunked into citable snippets of
MIN_CHUNK..MAX_CHUNK characters with contiguous offsets. Chunking is a
pure function of (text, min_chunk, max_chunk): re-ingesting identical
input yields identical snippet ids and a snapshot digest that can be
recomputed by anyone holding the snippets.

Snapshot directory layout:
    snapshot.json   metadata, documents (with full text), snapshot_id
    snippets.jsonl  one snippet per line, canonical JSON
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

from .canon import canonical_json, digest_value, utc_now_iso
from .errors import DuplicateDocId, EmptyCorpus, EmptyDocument
from .labels import ControlList

SNAPSHOT_SCHEMA_VERSION = 1

_SECTION_MARK = re.compile(r"^\s*§+\s*(\d+(?:\.\d+)*)")
_CATEGORY = re.compile(r"^\s*Category\s+([A-Za-z0-9IVXLCivxlc]+)\b")
_SENTENCE_BOUNDARY = re.compile(r"[.!?][)\"']*\s+|\n")


@dataclass(frozen=True)
class PolicyDocument:
    doc_id: str
    control_list: ControlList
    source_name: str
    version_label: str
    text: str


@dataclass(frozen=True)
class PolicySnippet:
    snippet_id: str
    section_id: str
    doc_id: str
    control_list: ControlList
    text: str
    char_start: int
    char_end: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["control_list"] = self.control_list.value
        return d


@dataclass(frozen=True)
class CorpusSnapshot:
    snapshot_id: str
    created_at: str
    documents: tuple[PolicyDocument, ...]
    snippets: tuple[PolicySnippet, ...]

    def snippet_by_id(self, snippet_id: str) -> PolicySnippet | None:
        return _index_of(self).get(snippet_id)


def _index_of(snapshot: CorpusSnapshot) -> dict[str, PolicySnippet]:
    # cached on first access; snapshot is immutable
    cache = getattr(snapshot, "_by_id", None)
    if cache is None:
        cache = {s.snippet_id: s for s in snapshot.snippets}
        object.__setattr__(snapshot, "_by_id", cache)
    return cache


def normalize_text(raw_text: str) -> str:
    return raw_text.replace("\r\n", "\n").replace("\r", "\n")


def ingest_document(
    raw_text: str,
    doc_id: str,
    control_list: ControlList,
    source_name: str = "",
    version_label: str = "",
) -> PolicyDocument:
    """Normalize line endings and wrap the text; content is never rewritten."""
    text = normalize_text(raw_text)
    if not text.strip():
        raise EmptyDocument(f"document {doc_id!r} is blank")
    return PolicyDocument(
        doc_id=doc_id,
        control_list=ControlList(control_list),
        source_name=source_name,
        version_label=version_label,
        text=text,
    )


def _is_caps_heading(line: str) -> bool:
    stripped = line.strip()
    if not stripped or len(stripped) > 80:
        return False
    letters = [c for c in stripped if c.isalpha()]
    return bool(letters) and all(c.isupper() for c in letters)


def _heading_id(line: str) -> str | None:
    m = _SECTION_MARK.match(line)
    if m:
        return m.group(1)
    m = _CATEGORY.match(line)
    if m:
        return f"category-{m.group(1)}"
    if _is_caps_heading(line):
        slug = re.sub(r"[^a-z0-9]+", "-", line.strip().lower()).strip("-")
        return slug or None
    return None


def split_sections(doc: PolicyDocument) -> list[tuple[str, int, int]]:
    """Partition the document into (section_id, start, end) spans.

    A heading line starts a new section and belongs to it. Text before the
    first heading keeps the doc_id as its section id (also the fallback for
    heading-free documents). Duplicate section ids within one document get
    a ~n occurrence suffix so snippet ids stay unique.
    """
    text = doc.text
    boundaries: list[tuple[int, str]] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        section_id = _heading_id(line)
        if section_id is not None:
            boundaries.append((offset, section_id))
        offset += len(line)

    if not boundaries:
        return [(doc.doc_id, 0, len(text))]

    sections: list[tuple[str, int, int]] = []
    if boundaries[0][0] > 0 and text[: boundaries[0][0]].strip():
        sections.append((doc.doc_id, 0, boundaries[0][0]))
    seen: dict[str, int] = {}
    for i, (start, section_id) in enumerate(boundaries):
        end = boundaries[i + 1][0] if i + 1 < len(boundaries) else len(text)
        n = seen.get(section_id, 0) + 1
        seen[section_id] = n
        if n > 1:
            section_id = f"{section_id}~{n}"
        sections.append((section_id, start, end))
    return sections


def _split_point(chunk: str, min_chunk: int, max_chunk: int) -> int:
    """Largest sentence boundary in [min_chunk, max_chunk], else hard split."""
    best = -1
    for m in _SENTENCE_BOUNDARY.finditer(chunk, 0, max_chunk + 1):
        p = m.end()
        if min_chunk <= p <= max_chunk:
            best = max(best, p)
    return best if best > 0 else max_chunk


def chunk_document(
    doc: PolicyDocument, min_chunk: int = 200, max_chunk: int = 800
) -> list[PolicySnippet]:
    """Chunk each section into snippets whose texts concatenate back exactly.

    Every chunk except the last of a section is min_chunk..max_chunk chars;
    splits prefer sentence boundaries and fall back to a hard cut.
    """
    if min_chunk >= max_chunk:
        raise ValueError("min_chunk must be < max_chunk")
    snippets: list[PolicySnippet] = []
    for section_id, sec_start, sec_end in split_sections(doc):
        section_text = doc.text[sec_start:sec_end]
        if not section_text.strip():
            continue
        pos = 0
        ordinal = 0
        while pos < len(section_text):
            remaining = len(section_text) - pos
            if remaining <= max_chunk:
                cut = remaining
            else:
                cut = _split_point(section_text[pos:], min_chunk, max_chunk)
            start = sec_start + pos
            end = start + cut
            snippets.append(
                PolicySnippet(
                    snippet_id=f"{doc.doc_id}:{section_id}:{ordinal:04d}",
                    section_id=section_id,
                    doc_id=doc.doc_id,
                    control_list=doc.control_list,
                    text=doc.text[start:end],
                    char_start=start,
                    char_end=end,
                )
            )
            pos += cut
            ordinal += 1
    return snippets


def build_snapshot(
    documents: list[PolicyDocument],
    min_chunk: int = 200,
    max_chunk: int = 800,
    created_at: str | None = None,
) -> CorpusSnapshot:
    """Chunk all documents and digest the result into an immutable snapshot.

    snapshot_id = SHA-256 over the snippets sorted by snippet_id, serialized
    as canonical JSON, so identical inputs always produce identical ids.
    """
    if not documents:
        raise EmptyCorpus("snapshot requires at least one document")
    seen: set[str] = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise DuplicateDocId(doc.doc_id)
        seen.add(doc.doc_id)

    snippets: list[PolicySnippet] = []
    for doc in sorted(documents, key=lambda d: d.doc_id):
        snippets.extend(chunk_document(doc, min_chunk, max_chunk))
    snippets.sort(key=lambda s: s.snippet_id)
    snapshot_id = digest_value([s.to_dict() for s in snippets])
    return CorpusSnapshot(
        snapshot_id=snapshot_id,
        created_at=created_at or utc_now_iso(),
        documents=tuple(sorted(documents, key=lambda d: d.doc_id)),
        snippets=tuple(snippets),
    )


def verify_snapshot(snapshot: CorpusSnapshot) -> bool:
    """Recompute the digest over the stored snippets."""
    recomputed = digest_value(
        [s.to_dict() for s in sorted(snapshot.snippets, key=lambda s: s.snippet_id)]
    )
    return recomputed == snapshot.snapshot_id


def save_snapshot(snapshot: CorpusSnapshot, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "snapshot_id": snapshot.snapshot_id,
        "created_at": snapshot.created_at,
        "documents": [
            {
                "doc_id": d.doc_id,
                "control_list": d.control_list.value,
                "source_name": d.source_name,
                "version_label": d.version_label,
                "text": d.text,
            }
            for d in snapshot.documents
        ],
    }
    (out / "snapshot.json").write_text(canonical_json(meta), encoding="utf-8")
    with (out / "snippets.jsonl").open("w", encoding="utf-8") as fh:
        for s in snapshot.snippets:
            fh.write(canonical_json(s.to_dict()) + "\n")
    return out


def load_snapshot(snapshot_dir: str | Path) -> CorpusSnapshot:
    root = Path(snapshot_dir)
    meta = json.loads((root / "snapshot.json").read_text(encoding="utf-8"))
    documents = tuple(
        PolicyDocument(
            doc_id=d["doc_id"],
            control_list=ControlList(d["control_list"]),
            source_name=d.get("source_name", ""),
            version_label=d.get("version_label", ""),
            text=d["text"],
        )
        for d in meta["documents"]
    )
    snippets = []
    with (root / "snippets.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            snippets.append(
                PolicySnippet(
                    snippet_id=rec["snippet_id"],
                    section_id=rec["section_id"],
                    doc_id=rec["doc_id"],
                    control_list=ControlList(rec["control_list"]),
                    text=rec["text"],
                    char_start=rec["char_start"],
                    char_end=rec["char_end"],
                )
            )
    return CorpusSnapshot(
        snapshot_id=meta["snapshot_id"],
        created_at=meta["created_at"],
        documents=documents,
        snippets=tuple(snippets),
    )


def load_corpus_dir(docs_dir: str | Path, manifest_path: str | Path) -> list[PolicyDocument]:
    """Read .txt files per a manifest mapping filename -> doc metadata.

    Manifest format: {"<filename>": {"doc_id": ..., "control_list": ...,
    "version_label": ...}, ...}
    """
    docs_root = Path(docs_dir)
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    documents: list[PolicyDocument] = []
    staged: set[str] = set()
    for filename in sorted(manifest):
        entry = manifest[filename]
        doc_id = entry["doc_id"]
        if doc_id in staged:
            raise DuplicateDocId(doc_id)
        staged.add(doc_id)
        raw = (docs_root / filename).read_text(encoding="utf-8")
        documents.append(
            ingest_document(
                raw,
                doc_id=doc_id,
                control_list=ControlList(entry["control_list"]),
                source_name=entry.get("source_name", filename),
                version_label=entry.get("version_label", ""),
            )
        )
    return documents
