"""Exact dense top-k search, Okapi BM25, reciprocal-rank fusion, re-ranking.

All rankings are deterministic total orders: scores sort descending and
ties break by ascending item id. Dense scores are exactly-rounded float64
dot products of unit vectors (see ``riskrank.embedding``), so a full-scan
re-implementation of the same arithmetic reproduces them bit-for-bit.

Persistence writes a directory with ``meta.json`` (counts, dimension, BM25
parameters, item ids), ``vectors.bin`` (magic ``RKV1`` + u32 little-endian
dim + row-major float32 little-endian values, the embedding-cache layout),
and ``postings.jsonl`` (one term per line).
"""

from __future__ import annotations

import json
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .cache import CACHE_MAGIC
from .embedding import exact_norm, tokenize

__all__ = [
    "RankedHit",
    "RankedList",
    "DenseIndex",
    "LexicalIndex",
    "ranked_list_from_scores",
    "validate_ranked_list",
    "build_dense_index",
    "dense_search",
    "build_lexical_index",
    "bm25_term_weight",
    "bm25_score",
    "lexical_search",
    "rrf_fuse",
    "rerank",
    "save_index",
    "load_index",
    "save_run",
    "load_run",
]

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_RRF_K = 60
DEFAULT_RRF_DEPTH = 100


@dataclass(frozen=True)
class RankedHit:
    item_id: str
    score: float
    rank: int  # 1-based


@dataclass(frozen=True)
class RankedList:
    """Ordered retrieval hits for one query."""

    query_id: str
    hits: tuple[RankedHit, ...]

    @property
    def item_ids(self) -> list[str]:
        return [h.item_id for h in self.hits]


def ranked_list_from_scores(
    query_id: str,
    scored: Iterable[tuple[str, float]],
    k: int | None = None,
) -> RankedList:
    """Rank (item_id, score) pairs descending, ties by ascending item id."""
    items = list(scored)
    ids = [item_id for item_id, _ in items]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate item ids in ranking: {dup}")
    items.sort(key=lambda pair: (-pair[1], pair[0]))
    if k is not None:
        items = items[:k]
    hits = tuple(
        RankedHit(item_id=item_id, score=float(score), rank=rank)
        for rank, (item_id, score) in enumerate(items, start=1)
    )
    return RankedList(query_id=query_id, hits=hits)


def validate_ranked_list(ranking: RankedList) -> None:
    """Raise ValueError unless ranks are 1..n, scores non-increasing, ids distinct."""
    ids = ranking.item_ids
    if len(set(ids)) != len(ids):
        raise ValueError(f"ranking for {ranking.query_id!r} repeats item ids")
    for position, hit in enumerate(ranking.hits, start=1):
        if hit.rank != position:
            raise ValueError(
                f"ranking for {ranking.query_id!r}: rank {hit.rank} at position {position}"
            )
    scores = [h.score for h in ranking.hits]
    for a, b in zip(scores, scores[1:]):
        if b > a:
            raise ValueError(
                f"ranking for {ranking.query_id!r}: scores increase ({a} -> {b})"
            )


@dataclass(frozen=True)
class DenseIndex:
    """Item ids plus an (n, dim) float32 matrix of L2-normalized rows."""

    item_ids: tuple[str, ...]
    matrix: np.ndarray
    dim: int

    @property
    def count(self) -> int:
        return len(self.item_ids)


def build_dense_index(
    ids: Sequence[str],
    vectors: Sequence[np.ndarray] | np.ndarray,
    dim: int | None = None,
) -> DenseIndex:
    """Normalize and stack vectors into a searchable index.

    ``dim`` is only needed for an empty index. Duplicate ids and dimension
    mismatches raise ValueError. All-zero vectors are kept as zero rows and
    score 0 against every query.
    """
    rows = [np.asarray(v, dtype=np.float64) for v in vectors]
    if len(ids) != len(rows):
        raise ValueError(f"got {len(ids)} ids but {len(rows)} vectors")
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if list(ids).count(i) > 1})
        raise ValueError(f"duplicate item ids: {dup}")
    if rows:
        dims = {row.shape for row in rows}
        if len(dims) != 1 or rows[0].ndim != 1:
            raise ValueError(f"vectors must share one 1-D shape, got {sorted(dims)}")
        dim = rows[0].shape[0]
    elif dim is None:
        dim = 0
    matrix = np.zeros((len(rows), dim), dtype=np.float32)
    for i, row in enumerate(rows):
        norm = exact_norm(row)
        matrix[i] = (row / norm if norm != 0.0 else row).astype(np.float32)
    return DenseIndex(item_ids=tuple(ids), matrix=matrix, dim=dim)


def dense_search(
    index: DenseIndex,
    query_vec: np.ndarray,
    k: int,
    query_id: str = "",
) -> RankedList:
    """Exact top-k by cosine over the whole index.

    The query is normalized in float64 (a zero query scores 0 everywhere);
    each item's score is the exactly-rounded dot product with its stored
    unit row. Fewer than k items means all items are returned.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if index.count == 0:
        return RankedList(query_id=query_id, hits=())
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query has shape {q.shape}, index dim is {index.dim}")
    norm = exact_norm(q)
    if norm != 0.0:
        q = q / norm
    products = index.matrix.astype(np.float64) * q
    scores = [math.fsum(row) for row in products.tolist()]
    return ranked_list_from_scores(
        query_id, zip(index.item_ids, scores), k=k
    )


@dataclass(frozen=True)
class LexicalIndex:
    """Inverted index with the statistics BM25 needs."""

    item_ids: tuple[str, ...]
    postings: dict[str, tuple[tuple[str, int], ...]]  # term -> ((item_id, tf), ...)
    doc_len: dict[str, int]
    avgdl: float
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def count(self) -> int:
        return len(self.item_ids)


def build_lexical_index(
    ids: Sequence[str],
    texts: Sequence[str],
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> LexicalIndex:
    if len(ids) != len(texts):
        raise ValueError(f"got {len(ids)} ids but {len(texts)} texts")
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if list(ids).count(i) > 1})
        raise ValueError(f"duplicate item ids: {dup}")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_len: dict[str, int] = {}
    for item_id, text in zip(ids, texts):
        tokens = tokenize(text)
        doc_len[item_id] = len(tokens)
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((item_id, tf))
    avgdl = math.fsum(doc_len.values()) / len(doc_len) if doc_len else 0.0
    return LexicalIndex(
        item_ids=tuple(ids),
        postings={term: tuple(entries) for term, entries in postings.items()},
        doc_len=doc_len,
        avgdl=avgdl,
        k1=k1,
        b=b,
    )


def bm25_term_weight(
    tf: int, df: int, doc_len: int, avgdl: float, n_items: int, k1: float, b: float
) -> float:
    """One term's Okapi BM25 contribution with +1-smoothed idf.

    ``idf = ln(1 + (N - df + 0.5) / (df + 0.5))``; a term with tf == 0
    contributes exactly 0.
    """
    if tf == 0:
        return 0.0
    idf = math.log(1.0 + (n_items - df + 0.5) / (df + 0.5))
    length_norm = 1.0 - b + b * (doc_len / avgdl if avgdl > 0 else 0.0)
    return idf * tf * (k1 + 1.0) / (tf + k1 * length_norm)


def bm25_score(index: LexicalIndex, query_terms: Sequence[str], item_id: str) -> float:
    """BM25 score of one item for a bag of query terms.

    Repeated query terms are deduplicated (each distinct term contributes
    once, with the document-side term frequency inside the formula).
    """
    if item_id not in index.doc_len:
        raise ValueError(f"unknown item id {item_id!r}")
    score = 0.0
    for term in sorted(set(query_terms)):
        entries = index.postings.get(term, ())
        tf = 0
        for posting_id, posting_tf in entries:
            if posting_id == item_id:
                tf = posting_tf
                break
        if tf == 0:
            continue
        score += bm25_term_weight(
            tf, len(entries), index.doc_len[item_id], index.avgdl,
            index.count, index.k1, index.b,
        )
    return score


def lexical_search(
    index: LexicalIndex,
    query_text: str,
    k: int,
    query_id: str = "",
) -> RankedList:
    """Top-k items by BM25 for the tokenized query; zero scorers are dropped."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = tokenize(query_text)
    candidates: set[str] = set()
    for term in set(terms):
        candidates.update(item_id for item_id, _ in index.postings.get(term, ()))
    scored = [
        (item_id, bm25_score(index, terms, item_id))
        for item_id in sorted(candidates)
    ]
    return ranked_list_from_scores(
        query_id, [(i, s) for i, s in scored if s > 0.0], k=k
    )


def rrf_fuse(
    lists: Sequence[RankedList],
    k_rrf: int = DEFAULT_RRF_K,
    depth: int = DEFAULT_RRF_DEPTH,
) -> RankedList:
    """Reciprocal-rank fusion: item score = sum of 1 / (k_rrf + rank).

    Only occurrences within ``depth`` of the top of each input list count.
    Input lists must share a query id.
    """
    if not lists:
        raise ValueError("need at least one ranked list to fuse")
    if k_rrf < 1:
        raise ValueError(f"k_rrf must be >= 1, got {k_rrf}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    query_ids = {rl.query_id for rl in lists}
    if len(query_ids) != 1:
        raise ValueError(f"cannot fuse lists with differing query ids: {sorted(query_ids)}")
    fused: dict[str, float] = {}
    for ranking in lists:
        for hit in ranking.hits:
            if hit.rank > depth:
                continue
            fused[hit.item_id] = fused.get(hit.item_id, 0.0) + 1.0 / (k_rrf + hit.rank)
    return ranked_list_from_scores(lists[0].query_id, fused.items())


RerankHook = Callable[[str, RankedList], RankedList]


def rerank(
    hook: RerankHook | None,
    query_text: str,
    candidates: RankedList,
) -> RankedList:
    """Apply a re-ranking hook; None is the identity.

    The hook must return a (possibly rescored) permutation of the candidate
    item set; anything else raises ValueError.
    """
    if hook is None:
        return candidates
    result = hook(query_text, candidates)
    if result.query_id != candidates.query_id:
        raise ValueError(
            f"rerank hook changed query id {candidates.query_id!r} -> {result.query_id!r}"
        )
    if set(result.item_ids) != set(candidates.item_ids):
        raise ValueError(
            "rerank hook must permute the candidate set: "
            f"got {sorted(set(result.item_ids) ^ set(candidates.item_ids))} changed"
        )
    validate_ranked_list(result)
    return result


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_index(
    path: Path | str,
    dense: DenseIndex | None = None,
    lexical: LexicalIndex | None = None,
) -> None:
    """Persist dense and/or lexical indexes into a directory."""
    if dense is None and lexical is None:
        raise ValueError("nothing to save: both indexes are None")
    if dense is not None and lexical is not None and dense.item_ids != lexical.item_ids:
        raise ValueError("dense and lexical indexes list different items")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ids = dense.item_ids if dense is not None else lexical.item_ids  # type: ignore[union-attr]
    meta: dict = {
        "count": len(ids),
        "item_ids": list(ids),
        "has_dense": dense is not None,
        "has_lexical": lexical is not None,
    }
    if dense is not None:
        meta["dim"] = dense.dim
        payload = CACHE_MAGIC + struct.pack("<I", dense.dim)
        payload += np.ascontiguousarray(dense.matrix, dtype="<f4").tobytes()
        (path / "vectors.bin").write_bytes(payload)
    if lexical is not None:
        meta["k1"] = lexical.k1
        meta["b"] = lexical.b
        meta["avgdl"] = lexical.avgdl
        meta["doc_len"] = lexical.doc_len
        with (path / "postings.jsonl").open("w", encoding="utf-8") as handle:
            for term in sorted(lexical.postings):
                entries = [[item_id, tf] for item_id, tf in lexical.postings[term]]
                handle.write(json.dumps({"term": term, "postings": entries}) + "\n")
    (path / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_index(path: Path | str) -> tuple[DenseIndex | None, LexicalIndex | None]:
    """Load whatever ``save_index`` wrote; validates sizes against meta.json."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    ids = tuple(meta["item_ids"])
    dense = None
    lexical = None
    if meta.get("has_dense"):
        raw = (path / "vectors.bin").read_bytes()
        if len(raw) < 8 or raw[:4] != CACHE_MAGIC:
            raise ValueError(f"bad magic in {path / 'vectors.bin'}")
        (dim,) = struct.unpack("<I", raw[4:8])
        expected = 8 + 4 * dim * meta["count"]
        if dim != meta["dim"] or len(raw) != expected:
            raise ValueError(
                f"{path / 'vectors.bin'}: {len(raw)} bytes, expected {expected} "
                f"for {meta['count']} x {meta['dim']}"
            )
        matrix = (
            np.frombuffer(raw[8:], dtype="<f4").reshape(meta["count"], dim).copy()
        )
        dense = DenseIndex(item_ids=ids, matrix=matrix, dim=dim)
    if meta.get("has_lexical"):
        postings: dict[str, tuple[tuple[str, int], ...]] = {}
        with (path / "postings.jsonl").open("r", encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                postings[record["term"]] = tuple(
                    (item_id, int(tf)) for item_id, tf in record["postings"]
                )
        lexical = LexicalIndex(
            item_ids=ids,
            postings=postings,
            doc_len={k: int(v) for k, v in meta["doc_len"].items()},
            avgdl=float(meta["avgdl"]),
            k1=float(meta["k1"]),
            b=float(meta["b"]),
        )
    return dense, lexical


def save_run(path: Path | str, run: Sequence[RankedList]) -> None:
    """Write rankings as run JSONL: one query per line, hits in rank order."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for ranking in run:
            record = {
                "query_id": ranking.query_id,
                "hits": [
                    {"item_id": h.item_id, "score": h.score} for h in ranking.hits
                ],
            }
            handle.write(json.dumps(record) + "\n")


def load_run(path: Path | str) -> list[RankedList]:
    """Read a run JSONL file; ranks are re-derived from hit order."""
    run = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            hits = tuple(
                RankedHit(item_id=h["item_id"], score=float(h["score"]), rank=rank)
                for rank, h in enumerate(record["hits"], start=1)
            )
            ranking = RankedList(query_id=record["query_id"], hits=hits)
            try:
                validate_ranked_list(ranking)
            except ValueError as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
            run.append(ranking)
    return run
