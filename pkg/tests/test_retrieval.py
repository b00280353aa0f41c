from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrptriage.corpus import build_snapshot, ingest_document
from hrptriage.errors import NoEvidence
from hrptriage.labels import ControlList
from hrptriage.providers import HashingEmbedder
from hrptriage.retrieval import (
    QueryObject,
    RankedSnippet,
    bm25_search,
    build_lexical_index,
    build_search_index,
    hybrid_search,
    load_index,
    pack_citations,
    rrf_fuse,
    save_index,
    sentence_spans,
    tokenize,
    vector_search,
)

from conftest import make_documents


def _single_doc_snapshot(text: str, control_list=ControlList.NRC):
    return build_snapshot([ingest_document(text, "only-doc", control_list)])


def _ranked(snippet_id: str, score: float, text: str, control_list=ControlList.USML):
    return RankedSnippet(
        snippet_id=snippet_id,
        control_list=control_list,
        fused_score=score,
        lexical_rank=1,
        vector_rank=1,
        text=text,
        section_id="s",
    )


# ---------------------------------------------------------------------------
# tokenization
# ---------------------------------------------------------------------------


def test_tokenize_lowercases_splits_and_drops_short():
    assert tokenize("Gas-Centrifuge ROTOR a x9 GC-9!") == ["gas", "centrifuge", "rotor", "x9", "gc"]


# ---------------------------------------------------------------------------
# lexical index / BM25
# ---------------------------------------------------------------------------


def test_document_frequency_counts_snippets(fixture_snapshot):
    index = build_lexical_index(fixture_snapshot)
    # independent count: scan snippet texts directly
    expected = sum(1 for s in fixture_snapshot.snippets if "centrifuge" in tokenize(s.text))
    assert expected == 2
    assert index.document_frequency("centrifuge") == expected


def test_centrifuge_postings_match_hand_count(fixture_snapshot):
    index = build_lexical_index(fixture_snapshot)
    hand = {
        s.snippet_id: tokenize(s.text).count("centrifuge")
        for s in fixture_snapshot.snippets
        if "centrifuge" in tokenize(s.text)
    }
    assert index.postings["centrifuge"] == hand


def test_rebuild_yields_identical_postings(fixture_snapshot):
    a = build_lexical_index(fixture_snapshot)
    b = build_lexical_index(fixture_snapshot)
    assert a.postings == b.postings
    assert a.doc_lengths == b.doc_lengths


def test_bm25_query_without_indexed_terms_is_empty(fixture_snapshot):
    index = build_lexical_index(fixture_snapshot)
    assert bm25_search(index, "zzzz qqqq absent", 10) == []


def test_bm25_single_term_single_doc_hand_oracle():
    # one document, one occurrence of the term:
    #   idf  = ln(1 + (1 - 1 + 0.5) / (1 + 0.5)) = ln(4/3)
    #   norm = k1 * (1 - b + b * dl/avgdl) = k1          (dl == avgdl)
    #   score = idf * 1 * (k1 + 1) / (1 + k1) = ln(4/3)
    snapshot = _single_doc_snapshot("the centrifuge rotor spins in the enrichment hall")
    index = build_lexical_index(snapshot, k1=1.2, b=0.75)
    results = bm25_search(index, "centrifuge", 5)
    assert len(results) == 1
    hand = math.log(4.0 / 3.0)
    assert results[0][1] == pytest.approx(hand, abs=1e-9)
    assert results[0][1] > 0


def test_bm25_monotone_in_term_frequency():
    # equal lengths, tf 3 vs 1
    doc_a = ingest_document("pump pump pump valve seal gasket", "doc-a", ControlList.CCL)
    doc_b = ingest_document("pump valve seal gasket flange bolt", "doc-b", ControlList.CCL)
    snapshot = build_snapshot([doc_a, doc_b])
    index = build_lexical_index(snapshot)
    results = bm25_search(index, "pump", 5)
    assert [r[0].split(":")[0] for r in results] == ["doc-a", "doc-b"]
    assert results[0][1] > results[1][1]


def test_bm25_scores_nonnegative_and_sorted(fixture_snapshot):
    index = build_lexical_index(fixture_snapshot)
    results = bm25_search(index, "thermal imaging camera vacuum office", 50)
    scores = [score for _, score in results]
    assert all(score >= 0 for score in scores)
    assert scores == sorted(scores, reverse=True)


# ---------------------------------------------------------------------------
# embeddings / vector search
# ---------------------------------------------------------------------------


def test_embed_empty_is_zero_vector():
    embedder = HashingEmbedder(256)
    assert not np.any(embedder.embed(""))
    assert not np.any(embedder.embed("   !!! ...")), "no tokens -> zero vector"


def test_embed_deterministic_and_normalized():
    embedder = HashingEmbedder(256)
    a = embedder.embed("gas centrifuge rotor")
    b = embedder.embed("gas centrifuge rotor")
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-6)


def test_embed_cosine_orders_related_above_unrelated():
    embedder = HashingEmbedder(256)
    query = embedder.embed("gas centrifuge rotor")
    related = embedder.embed("centrifuge rotor assembly")
    unrelated = embedder.embed("office chair")
    assert float(query @ related) > float(query @ unrelated)


def test_vector_search_self_similarity_first(fixture_snapshot, fixture_config):
    index = build_search_index(fixture_snapshot, fixture_config, HashingEmbedder(256))
    target = fixture_snapshot.snippets[0]
    query = index.matrix[index.row_ids.index(target.snippet_id)]
    results = vector_search(index.matrix, index.row_ids, query, 3)
    assert results[0][0] == target.snippet_id
    assert results[0][1] == pytest.approx(1.0, abs=1e-6)


def test_vector_search_zero_query_and_clamping(fixture_snapshot, fixture_config):
    index = build_search_index(fixture_snapshot, fixture_config, HashingEmbedder(256))
    zero = np.zeros(256, dtype=np.float32)
    assert vector_search(index.matrix, index.row_ids, zero, 5) == []
    everything = vector_search(index.matrix, index.row_ids, index.matrix[0], 10_000)
    assert len(everything) == len(fixture_snapshot.snippets)


# ---------------------------------------------------------------------------
# reciprocal rank fusion
# ---------------------------------------------------------------------------


def _rrf_oracle(lex_ids, vec_ids, k):
    """Independent brute-force evaluation of the fusion formula."""
    scores: dict[str, float] = {}
    for ids in (lex_ids, vec_ids):
        for rank, snippet_id in enumerate(ids, start=1):
            scores[snippet_id] = scores.get(snippet_id, 0.0) + 1.0 / (k + rank)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def test_rrf_worked_values():
    fused = rrf_fuse([("s1", 9.0)], [("s1", 0.9)], k_rrf=60)
    assert fused[0].fused_score == pytest.approx(1 / 61 + 1 / 61, abs=1e-12)
    assert fused[0].fused_score == pytest.approx(0.032787, abs=1e-6)

    only_lex = rrf_fuse([("a", 2.0), ("b", 1.0)], [], k_rrf=60)
    b = next(r for r in only_lex if r.snippet_id == "b")
    assert b.fused_score == pytest.approx(1 / 62, abs=1e-12)
    assert b.lexical_rank == 2 and b.vector_rank is None


def test_rrf_empty_inputs():
    assert rrf_fuse([], [], k_rrf=60) == []


def test_rrf_matches_bruteforce_oracle_on_random_lists():
    rng = random.Random(7)
    universe = [f"s{i:02d}" for i in range(30)]
    for _ in range(100):
        lex = rng.sample(universe, rng.randint(0, 20))
        vec = rng.sample(universe, rng.randint(0, 20))
        k = rng.choice([10, 60, 100])
        fused = rrf_fuse([(s, 1.0) for s in lex], [(s, 1.0) for s in vec], k_rrf=k)
        got = [(r.snippet_id, r.fused_score) for r in fused]
        assert got == _rrf_oracle(lex, vec, k)


def test_rrf_bounds_and_rank_monotonicity():
    k = 60
    fused = rrf_fuse([("a", 1.0), ("b", 0.5)], [("b", 0.9), ("a", 0.8)], k_rrf=k)
    for r in fused:
        assert 0 < r.fused_score <= 2 / (k + 1)
    # improving a's vector rank from 2 to 1 must not decrease its score
    better = rrf_fuse([("a", 1.0), ("b", 0.5)], [("a", 0.9), ("b", 0.8)], k_rrf=k)
    score = {r.snippet_id: r.fused_score for r in fused}
    improved = {r.snippet_id: r.fused_score for r in better}
    assert improved["a"] >= score["a"]


@settings(max_examples=100, deadline=None)
@given(
    lex=st.lists(st.integers(0, 19), max_size=20, unique=True),
    vec=st.lists(st.integers(0, 19), max_size=20, unique=True),
    k=st.integers(1, 200),
)
def test_rrf_oracle_property(lex, vec, k):
    lex_ids = [f"s{i:02d}" for i in lex]
    vec_ids = [f"s{i:02d}" for i in vec]
    fused = rrf_fuse([(s, 1.0) for s in lex_ids], [(s, 1.0) for s in vec_ids], k_rrf=k)
    assert [(r.snippet_id, r.fused_score) for r in fused] == _rrf_oracle(lex_ids, vec_ids, k)
    for r in fused:
        assert 0 < r.fused_score <= 2 / (k + 1)


def test_rrf_weights_scale_contributions():
    fused = rrf_fuse(
        [("a", 1.0)], [("a", 1.0)], k_rrf=60, lexical_weight=0.5, vector_weight=0.5
    )
    assert fused[0].fused_score == pytest.approx(0.5 / 61 + 0.5 / 61, abs=1e-12)


# ---------------------------------------------------------------------------
# citation packer
# ---------------------------------------------------------------------------


def _query(text: str) -> QueryObject:
    return QueryObject(field_text=text, use_description=False)


def test_pack_empty_ranked_raises_no_evidence():
    with pytest.raises(NoEvidence):
        pack_citations([], _query("anything"), budget=1000)


def test_pack_single_snippet_within_budget():
    text = (
        "The gas centrifuge rotor is controlled. Unrelated filler sentence here. "
        "Another unrelated sentence closes the snippet."
    )
    pack = pack_citations([_ranked("s1", 0.05, text)], _query("gas centrifuge rotor"), budget=1000)
    assert len(pack.spans) == 1
    span = pack.spans[0]
    assert span.verbatim_text == text[span.char_start : span.char_end]
    assert len(span.verbatim_text) <= len(text)
    assert "centrifuge" in span.verbatim_text


def test_pack_respects_budget_and_order():
    text = ("Controlled centrifuge rotor equipment sentence. " * 9).strip()  # ~430 chars
    assert 390 <= len(text) <= 440
    ranked = [_ranked(f"s{i}", 0.05 - i * 0.001, text) for i in range(5)]
    pack = pack_citations(ranked, _query("centrifuge rotor"), budget=1000)
    assert len(pack.spans) <= 3
    assert pack.total_chars <= 1000
    assert pack.total_chars == sum(len(s.verbatim_text) for s in pack.spans)
    ids = [s.snippet_id for s in pack.spans]
    assert ids == sorted(ids, key=lambda i: int(i[1:]))  # fused-score order


def test_pack_skips_below_evidence_floor():
    text = "Controlled centrifuge rotor equipment."
    ranked = [_ranked("hi", 0.05, text), _ranked("lo", 0.001, text)]
    pack = pack_citations(ranked, _query("centrifuge"), budget=1000, min_score=0.01)
    assert [s.snippet_id for s in pack.spans] == ["hi"]
    with pytest.raises(NoEvidence):
        pack_citations([_ranked("lo", 0.001, text)], _query("centrifuge"), budget=1000)


def test_pack_spans_verbatim_on_fixture_corpus(fixture_snapshot, fixture_config):
    index = build_search_index(fixture_snapshot, fixture_config, HashingEmbedder(256))
    query = QueryObject(field_text="gas centrifuge rotor GC-9 Rotordyne", use_description=False)
    ranked = hybrid_search(index, query)
    pack = pack_citations(ranked, query, budget=fixture_config.pack_budget)
    by_id = {s.snippet_id: s for s in fixture_snapshot.snippets}
    for span in pack.spans:
        snippet = by_id[span.snippet_id]
        assert snippet.text[span.char_start : span.char_end] == span.verbatim_text
        assert span.verbatim_text in snippet.text


def test_sentence_spans_cover_text():
    text = "One sentence. Two sentence!\nThree final"
    spans = sentence_spans(text)
    assert "".join(text[a:b] for a, b in spans) == text


# ---------------------------------------------------------------------------
# hybrid search + persistence
# ---------------------------------------------------------------------------


def test_hybrid_search_deterministic(fixture_snapshot, fixture_config):
    index = build_search_index(fixture_snapshot, fixture_config, HashingEmbedder(256))
    query = QueryObject(field_text="automatic rifle AR-500 Acme Arms", use_description=False)
    first = hybrid_search(index, query)
    second = hybrid_search(index, query)
    assert first == second
    assert first[0].control_list is ControlList.USML


def test_index_round_trips_through_disk(fixture_snapshot, fixture_config, tmp_path):
    embedder = HashingEmbedder(256)
    index = build_search_index(fixture_snapshot, fixture_config, embedder)
    save_index(index, tmp_path)
    assert (tmp_path / "lexical.json").exists()
    assert (tmp_path / "vectors.bin").exists()
    loaded = load_index(tmp_path, fixture_snapshot, embedder, k_rrf=fixture_config.k_rrf)
    assert loaded.lexical.postings == index.lexical.postings
    assert np.array_equal(loaded.matrix, index.matrix)
    query = QueryObject(field_text="turbomolecular vacuum pump TVP-2000", use_description=False)
    assert hybrid_search(loaded, query) == hybrid_search(index, query)


def test_query_object_validates_weights_and_top_k():
    with pytest.raises(ValueError):
        QueryObject(field_text="x", lexical_weight=0.7, vector_weight=0.7)
    with pytest.raises(ValueError):
        QueryObject(field_text="x", top_k=-1)
    q = QueryObject(field_text="fields", description_text="desc", use_description=False)
    assert q.effective_text() == "fields"
