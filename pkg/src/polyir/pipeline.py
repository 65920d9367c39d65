"""Search orchestration: caption-composed queries and BM25-then-dense re-ranking."""

from __future__ import annotations

from dataclasses import dataclass

from polyir.corpus import DEFAULT_TOKENIZER, TokenizerConfig, tokenize
from polyir.embedding import Embedder, embed_query
from polyir.errors import DimensionMismatchError, EmptyInputError
from polyir.lexical import Bm25Params, InvertedIndex, RankedList, bm25_topk, rank_hits
from polyir.polydense import CodeBook, DenseIndex, ScoreMode, dense_topk, scan_index


@dataclass(frozen=True)
class MultimodalQuery:
    question: str
    caption: str = ""

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be non-empty")


def compose_multimodal_query(q: MultimodalQuery) -> str:
    """Question first, then the image caption, separated by one space."""
    if not q.caption:
        return q.question
    return f"{q.question} {q.caption}"


def lexical_multimodal_search(
    q: MultimodalQuery,
    index: InvertedIndex,
    k: int,
    params: Bm25Params = Bm25Params(),
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    query_id: str = "q",
) -> RankedList:
    """Term-based retriever: BM25 over the caption-composed query."""
    return bm25_topk(tokenize(compose_multimodal_query(q), config), index, k, params, query_id)


def caption_dense_search(
    q: MultimodalQuery,
    index: DenseIndex,
    codebook: CodeBook,
    embedder: Embedder,
    k: int,
    mode: ScoreMode | str = ScoreMode.MAXPOOL,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    query_id: str = "q",
) -> RankedList:
    return dense_topk(compose_multimodal_query(q), index, codebook, embedder, k, mode, config, query_id)


def coarse_candidates(
    query_terms: list[str],
    index: InvertedIndex,
    n_coarse: int,
    params: Bm25Params = Bm25Params(),
) -> list[str]:
    """Top ``n_coarse`` documents by BM25 over the whole collection.

    Documents without any query term score 0 and fill remaining slots in
    ascending doc_id order, so the candidate set always has
    ``min(n_coarse, n_docs)`` members.
    """
    hits = bm25_topk(query_terms, index, n_coarse, params).hits if query_terms else []
    if len(hits) < n_coarse:
        seen = {doc_id for doc_id, _ in hits}
        padding = sorted(d for d in index.doc_ids() if d not in seen)
        hits = hits + [(d, 0.0) for d in padding[: n_coarse - len(hits)]]
    return [doc_id for doc_id, _ in hits]


def two_stage_search(
    query: str,
    inv: InvertedIndex,
    dense: DenseIndex,
    codebook: CodeBook,
    embedder: Embedder,
    n_coarse: int,
    k: int,
    params: Bm25Params = Bm25Params(),
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    query_id: str = "q",
) -> RankedList:
    """BM25 picks ``n_coarse`` candidates; max-pool dense scores re-rank them."""
    if not 1 <= k <= n_coarse:
        raise ValueError("need 1 <= k <= n_coarse")
    terms = tokenize(query, config)
    if not terms:
        raise EmptyInputError(f"query {query_id!r} is empty after tokenization")
    if dense.K != codebook.K:
        raise DimensionMismatchError(f"dense index has K={dense.K}, code book K={codebook.K}")
    candidates = coarse_candidates(terms, inv, n_coarse, params)
    q = embed_query(terms, embedder).vector
    hits = scan_index(q, dense, None, ScoreMode.MAXPOOL, subset=candidates)
    return RankedList(query_id, rank_hits(hits, k))
