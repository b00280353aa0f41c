"""Hybrid search over a corpus snapshot.

Lexical side is BM25 over an inverted index. Scoring, per query term t
against snippet d:

    score(t, d) = idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d)/avgdl))
    idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

The idf variant is the non-negative one, so scores are always >= 0.
Tokenization: lowercase, split on non-alphanumerics, drop tokens shorter
than 2 characters.

Vector side is exact brute-force cosine over unit-normalized embeddings
(desk-scale corpora; no ANN structures). The two rankings are combined
with reciprocal rank fusion:

    fused(s) = lw * 1/(k_rrf + lexical_rank(s)) + vw * 1/(k_rrf + vector_rank(s))

with a list contributing only when it contains s. rrf_fuse defaults the
weights to 1.0 (the plain formula); hybrid_search passes the configured
query weights.

The citation packer greedily walks the fused ranking and keeps, per
snippet, the sentence window with maximal query-term overlap, stopping at
the character budget or when fused scores drop below the evidence floor.
Every packed span is a byte-exact substring of its snippet.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from math import log
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .canon import canonical_json
from .corpus import CorpusSnapshot, PolicySnippet
from .errors import NoEvidence
from .labels import ControlList

INDEX_SCHEMA_VERSION = 1

_TOKEN = re.compile(r"[0-9a-z]+")
_SENT_BOUNDARY = re.compile(r"[.!?][)\"']*\s+|\n")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class QueryObject:
    field_text: str
    description_text: str | None = None
    use_description: bool = True
    top_k: int = 10
    lexical_weight: float = 0.5
    vector_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if abs(self.lexical_weight + self.vector_weight - 1.0) > 1e-9:
            raise ValueError("lexical_weight + vector_weight must equal 1")

    def effective_text(self) -> str:
        if self.use_description and self.description_text:
            return f"{self.field_text} {self.description_text}"
        return self.field_text

    def to_dict(self) -> dict:
        return {
            "field_text": self.field_text,
            "description_text": self.description_text,
            "use_description": self.use_description,
            "top_k": self.top_k,
            "lexical_weight": self.lexical_weight,
            "vector_weight": self.vector_weight,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "QueryObject":
        return cls(
            field_text=data["field_text"],
            description_text=data.get("description_text"),
            use_description=bool(data.get("use_description", True)),
            top_k=int(data.get("top_k", 10)),
            lexical_weight=float(data.get("lexical_weight", 0.5)),
            vector_weight=float(data.get("vector_weight", 0.5)),
        )


@dataclass(frozen=True)
class RankedSnippet:
    snippet_id: str
    control_list: ControlList
    fused_score: float
    lexical_rank: int | None
    vector_rank: int | None
    text: str
    section_id: str

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "control_list": self.control_list.value,
            "fused_score": self.fused_score,
            "lexical_rank": self.lexical_rank,
            "vector_rank": self.vector_rank,
            "text": self.text,
            "section_id": self.section_id,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RankedSnippet":
        return cls(
            snippet_id=data["snippet_id"],
            control_list=ControlList(data["control_list"]),
            fused_score=float(data["fused_score"]),
            lexical_rank=data.get("lexical_rank"),
            vector_rank=data.get("vector_rank"),
            text=data["text"],
            section_id=data["section_id"],
        )


@dataclass(frozen=True)
class CitationSpan:
    snippet_id: str
    char_start: int  # offsets into the snippet's text
    char_end: int
    verbatim_text: str

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "char_start": self.char_start,
            "char_end": self.char_end,
            "verbatim_text": self.verbatim_text,
        }


@dataclass(frozen=True)
class CitationPack:
    spans: tuple[CitationSpan, ...]
    total_chars: int

    def to_dict(self) -> dict:
        return {
            "spans": [s.to_dict() for s in self.spans],
            "total_chars": self.total_chars,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CitationPack":
        return cls(
            spans=tuple(
                CitationSpan(
                    snippet_id=s["snippet_id"],
                    char_start=s["char_start"],
                    char_end=s["char_end"],
                    verbatim_text=s["verbatim_text"],
                )
                for s in data["spans"]
            ),
            total_chars=data["total_chars"],
        )

    @property
    def snippet_ids(self) -> set[str]:
        return {s.snippet_id for s in self.spans}


EMPTY_PACK = CitationPack(spans=(), total_chars=0)


# ---------------------------------------------------------------------------
# Lexical index
# ---------------------------------------------------------------------------


@dataclass
class LexicalIndex:
    postings: dict[str, dict[str, int]] = field(default_factory=dict)  # term -> {snippet_id: tf}
    doc_lengths: dict[str, int] = field(default_factory=dict)
    k1: float = 1.2
    b: float = 0.75

    @property
    def n_docs(self) -> int:
        return len(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)

    def document_frequency(self, term: str) -> int:
        return len(self.postings.get(term, {}))

    def idf(self, term: str) -> float:
        df = self.document_frequency(term)
        if df == 0:
            return 0.0
        return log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def build_lexical_index(
    snapshot: CorpusSnapshot, k1: float = 1.2, b: float = 0.75
) -> LexicalIndex:
    index = LexicalIndex(k1=k1, b=b)
    for snippet in snapshot.snippets:
        tokens = tokenize(snippet.text)
        index.doc_lengths[snippet.snippet_id] = len(tokens)
        for token in tokens:
            index.postings.setdefault(token, {})
            index.postings[token][snippet.snippet_id] = (
                index.postings[token].get(snippet.snippet_id, 0) + 1
            )
    return index


def bm25_search(index: LexicalIndex, query: str, top_k: int) -> list[tuple[str, float]]:
    """Descending BM25 scores; ties broken by ascending snippet_id."""
    terms = tokenize(query)
    if not terms or index.n_docs == 0 or top_k <= 0:
        return []
    avgdl = index.avgdl
    scores: dict[str, float] = {}
    for term in set(terms):
        qf = terms.count(term)
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        for snippet_id, tf in postings.items():
            dl = index.doc_lengths[snippet_id]
            norm = index.k1 * (1.0 - index.b + index.b * dl / avgdl)
            scores[snippet_id] = scores.get(snippet_id, 0.0) + qf * idf * (
                tf * (index.k1 + 1.0) / (tf + norm)
            )
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_k]


# ---------------------------------------------------------------------------
# Vector search
# ---------------------------------------------------------------------------


def vector_search(
    matrix: np.ndarray, row_ids: list[str], query_vector: np.ndarray, top_k: int
) -> list[tuple[str, float]]:
    """Exact cosine ranking over unit vectors; zero query means no matches."""
    if top_k <= 0 or len(row_ids) == 0:
        return []
    if not np.any(query_vector):
        return []
    scores = matrix @ query_vector.astype(np.float32)
    order = sorted(range(len(row_ids)), key=lambda i: (-float(scores[i]), row_ids[i]))
    return [(row_ids[i], float(scores[i])) for i in order[:top_k]]


# ---------------------------------------------------------------------------
# Reciprocal rank fusion
# ---------------------------------------------------------------------------


def rrf_fuse(
    lexical: Iterable[tuple[str, float]],
    vector: Iterable[tuple[str, float]],
    k_rrf: int = 60,
    lexical_weight: float = 1.0,
    vector_weight: float = 1.0,
    resolver: Callable[[str], PolicySnippet | None] | None = None,
) -> list[RankedSnippet]:
    """Fuse two 1-based rankings: fused = Σ weight/(k_rrf + rank).

    Output is sorted by fused score descending, ties by ascending
    snippet_id. resolver supplies snippet metadata; without one the
    snippets carry empty text and the low-risk list tag.
    """
    lex_ranks: dict[str, int] = {}
    for rank, (snippet_id, _score) in enumerate(lexical, start=1):
        lex_ranks.setdefault(snippet_id, rank)
    vec_ranks: dict[str, int] = {}
    for rank, (snippet_id, _score) in enumerate(vector, start=1):
        vec_ranks.setdefault(snippet_id, rank)

    fused: list[RankedSnippet] = []
    for snippet_id in set(lex_ranks) | set(vec_ranks):
        score = 0.0
        lrank = lex_ranks.get(snippet_id)
        vrank = vec_ranks.get(snippet_id)
        if lrank is not None:
            score += lexical_weight / (k_rrf + lrank)
        if vrank is not None:
            score += vector_weight / (k_rrf + vrank)
        snippet = resolver(snippet_id) if resolver else None
        fused.append(
            RankedSnippet(
                snippet_id=snippet_id,
                control_list=snippet.control_list if snippet else ControlList.EAR99,
                fused_score=score,
                lexical_rank=lrank,
                vector_rank=vrank,
                text=snippet.text if snippet else "",
                section_id=snippet.section_id if snippet else "",
            )
        )
    fused.sort(key=lambda r: (-r.fused_score, r.snippet_id))
    return fused


# ---------------------------------------------------------------------------
# Citation packer
# ---------------------------------------------------------------------------


def sentence_spans(text: str) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _SENT_BOUNDARY.finditer(text):
        end = m.end()
        if end > start:
            spans.append((start, end))
        start = end
    if start < len(text):
        spans.append((start, len(text)))
    return spans or ([(0, len(text))] if text else [])


def _trim(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def _best_window(
    text: str, query_terms: set[str], budget: int
) -> tuple[int, int] | None:
    """Contiguous sentence window maximizing query-term occurrences.

    Overlap counts occurrences (not distinct terms), so a window grows only
    while it keeps adding matching text; ties prefer fewer characters, then
    the earlier start. Returns None when not even a single sentence fits the
    remaining budget.
    """
    best: tuple[int, int, int, int] | None = None  # (-overlap, length, start, end)
    spans = sentence_spans(text)
    for i in range(len(spans)):
        for j in range(i, len(spans)):
            start, end = _trim(text, spans[i][0], spans[j][1])
            length = end - start
            if length > budget:
                break  # windows starting at i only grow with j
            if length == 0:
                continue
            overlap = sum(1 for tok in tokenize(text[start:end]) if tok in query_terms)
            key = (-overlap, length, start, end)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    return best[2], best[3]


def pack_citations(
    ranked: list[RankedSnippet],
    query: QueryObject,
    budget: int = 1200,
    min_score: float = 0.01,
) -> CitationPack:
    """Greedy fused-order selection of verbatim sentence windows.

    Raises NoEvidence when nothing can be selected; the caller decides how
    that propagates (the retrieval agent reports empty citations, the
    validator then refuses to agree).
    """
    query_terms = set(tokenize(query.effective_text()))
    spans: list[CitationSpan] = []
    used = 0
    for item in ranked:
        if item.fused_score < min_score:
            break
        remaining = budget - used
        if remaining <= 0:
            break
        window = _best_window(item.text, query_terms, remaining)
        if window is None:
            break
        start, end = window
        spans.append(
            CitationSpan(
                snippet_id=item.snippet_id,
                char_start=start,
                char_end=end,
                verbatim_text=item.text[start:end],
            )
        )
        used += end - start
    if not spans:
        raise NoEvidence("no citable spans above the evidence floor")
    return CitationPack(spans=tuple(spans), total_chars=used)


# ---------------------------------------------------------------------------
# Search index (snapshot + both indexes)
# ---------------------------------------------------------------------------


class SearchIndex:
    """Immutable pairing of a snapshot with its lexical and vector indexes."""

    def __init__(
        self,
        snapshot: CorpusSnapshot,
        lexical: LexicalIndex,
        matrix: np.ndarray,
        row_ids: list[str],
        embedder,
        k_rrf: int = 60,
    ):
        self.snapshot = snapshot
        self.lexical = lexical
        self.matrix = matrix
        self.row_ids = row_ids
        self.embedder = embedder
        self.k_rrf = k_rrf
        self._by_id = {s.snippet_id: s for s in snapshot.snippets}

    def resolve(self, snippet_id: str) -> PolicySnippet | None:
        return self._by_id.get(snippet_id)


def build_search_index(snapshot: CorpusSnapshot, config, embedder) -> SearchIndex:
    lexical = build_lexical_index(snapshot, k1=config.bm25_k1, b=config.bm25_b)
    row_ids = sorted(s.snippet_id for s in snapshot.snippets)
    by_id = {s.snippet_id: s for s in snapshot.snippets}
    if row_ids:
        matrix = np.stack([embedder.embed(by_id[i].text) for i in row_ids]).astype(np.float32)
    else:
        matrix = np.zeros((0, embedder.dim), dtype=np.float32)
    return SearchIndex(snapshot, lexical, matrix, row_ids, embedder, k_rrf=config.k_rrf)


def hybrid_search(index: SearchIndex, query: QueryObject) -> list[RankedSnippet]:
    text = query.effective_text()
    lexical = bm25_search(index.lexical, text, query.top_k)
    vector = vector_search(index.matrix, index.row_ids, index.embedder.embed(text), query.top_k)
    fused = rrf_fuse(
        lexical,
        vector,
        k_rrf=index.k_rrf,
        lexical_weight=query.lexical_weight,
        vector_weight=query.vector_weight,
        resolver=index.resolve,
    )
    return fused[: query.top_k]


# ---------------------------------------------------------------------------
# Persistence: lexical.json + vectors.bin beside the snapshot
# ---------------------------------------------------------------------------

_VEC_MAGIC = b"HVEC"


def save_index(index: SearchIndex, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lexical_doc = {
        "schema_version": INDEX_SCHEMA_VERSION,
        "snapshot_id": index.snapshot.snapshot_id,
        "k1": index.lexical.k1,
        "b": index.lexical.b,
        "doc_lengths": index.lexical.doc_lengths,
        "postings": index.lexical.postings,
    }
    (out / "lexical.json").write_text(canonical_json(lexical_doc), encoding="utf-8")

    header = canonical_json(
        {
            "schema_version": INDEX_SCHEMA_VERSION,
            "dim": int(index.matrix.shape[1]) if index.matrix.size else index.embedder.dim,
            "count": len(index.row_ids),
            "snippet_ids": index.row_ids,
        }
    ).encode("utf-8")
    with (out / "vectors.bin").open("wb") as fh:
        fh.write(_VEC_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(index.matrix, dtype="<f4").tobytes())
    return out


def load_index(
    index_dir: str | Path, snapshot: CorpusSnapshot, embedder, k_rrf: int = 60
) -> SearchIndex:
    root = Path(index_dir)
    lexical_doc = json.loads((root / "lexical.json").read_text(encoding="utf-8"))
    lexical = LexicalIndex(
        postings={t: dict(p) for t, p in lexical_doc["postings"].items()},
        doc_lengths=dict(lexical_doc["doc_lengths"]),
        k1=lexical_doc["k1"],
        b=lexical_doc["b"],
    )
    with (root / "vectors.bin").open("rb") as fh:
        magic = fh.read(4)
        if magic != _VEC_MAGIC:
            raise ValueError("not a vectors.bin file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        raw = fh.read()
    matrix = np.frombuffer(raw, dtype="<f4").reshape(header["count"], header["dim"]).copy()
    return SearchIndex(snapshot, lexical, matrix, list(header["snippet_ids"]), embedder, k_rrf=k_rrf)
