"""Inverted index with exact BM25 top-k retrieval.

Only document bodies are indexed. Titles and captions reach the lexical
retriever through query composition instead.
"""

from __future__ import annotations

import math
import struct
from bisect import bisect_left
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from polyir._binio import Reader, pack_str
from polyir._parallel import ordered_map
from polyir.corpus import (
    DEFAULT_TOKENIZER,
    CorpusStats,
    Document,
    TokenizerConfig,
    stats_from_token_lists,
    tokenize,
)
from polyir.errors import FileFormatError, UnknownDocumentError

INDEX_MAGIC = b"PIDX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")


@dataclass
class RankedList:
    """Scored retrieval output, best first, ties broken by ascending doc_id."""

    query_id: str
    hits: list[tuple[str, float]]

    @property
    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.hits]


def rank_hits(scores: dict[str, float] | Sequence[tuple[str, float]], k: int | None = None) -> list[tuple[str, float]]:
    items = scores.items() if isinstance(scores, dict) else scores
    ranked = sorted(items, key=lambda hit: (-hit[1], hit[0]))
    return ranked if k is None else ranked[:k]


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    stats: CorpusStats

    def doc_ids(self) -> list[str]:
        return list(self.stats.doc_len)

    def term_freq(self, term: str, doc_id: str) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        i = bisect_left(plist, (doc_id, 0))
        if i < len(plist) and plist[i][0] == doc_id:
            return plist[i][1]
        return 0


def index_token_lists(doc_tokens: Sequence[tuple[str, Sequence[str]]]) -> InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = {}
    for doc_id, terms in doc_tokens:
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((doc_id, tf))
    for plist in postings.values():
        plist.sort()
    postings = dict(sorted(postings.items()))
    return InvertedIndex(postings=postings, stats=stats_from_token_lists(doc_tokens))


def build_inverted_index(
    documents: Sequence[Document],
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    threads: int = 1,
) -> InvertedIndex:
    token_lists = ordered_map(lambda d: tokenize(d.body, config), documents, threads)
    return index_token_lists([(d.doc_id, t) for d, t in zip(documents, token_lists)])


def bm25_idf(df: int, n_docs: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def _term_score(idf: float, tf: int, dl: int, avgdl: float, params: Bm25Params) -> float:
    # Shared by the per-document scorer and the accumulator so both sum identical floats.
    rel_len = dl / avgdl if avgdl > 0 else 0.0
    norm = params.k1 * (1.0 - params.b + params.b * rel_len)
    return idf * (tf * (params.k1 + 1.0)) / (tf + norm)


def bm25_score(
    query_terms: Sequence[str],
    doc_id: str,
    index: InvertedIndex,
    params: Bm25Params = Bm25Params(),
) -> float:
    stats = index.stats
    if doc_id not in stats.doc_len:
        raise UnknownDocumentError(doc_id)
    dl = stats.doc_len[doc_id]
    score = 0.0
    for term in query_terms:
        tf = index.term_freq(term, doc_id)
        if tf:
            score += _term_score(bm25_idf(stats.df(term), stats.n_docs), tf, dl, stats.avg_doc_len, params)
    return score


def bm25_topk(
    query_terms: Sequence[str],
    index: InvertedIndex,
    k: int,
    params: Bm25Params = Bm25Params(),
    query_id: str = "q",
) -> RankedList:
    """Exact top-k over the union of the query terms' posting lists."""
    if k < 1:
        raise ValueError("k must be >= 1")
    stats = index.stats
    acc: dict[str, float] = {}
    for term in query_terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = bm25_idf(len(plist), stats.n_docs)
        for doc_id, tf in plist:
            acc[doc_id] = acc.get(doc_id, 0.0) + _term_score(
                term_idf, tf, stats.doc_len[doc_id], stats.avg_doc_len, params
            )
    return RankedList(query_id, rank_hits(acc, k))


def bm25_search(
    query: str,
    index: InvertedIndex,
    k: int,
    params: Bm25Params = Bm25Params(),
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    query_id: str = "q",
) -> RankedList:
    return bm25_topk(tokenize(query, config), index, k, params, query_id)


# -- persistence -------------------------------------------------------------
#
# Layout (little-endian):
#   magic[4] version:u32
#   n_docs:u32 total_len:u64 then n_docs x (id_len:u32 id doc_len:u32)
#   n_terms:u32 then n_terms x (term_len:u32 term df:u32)
#   per term, df x (doc_index:u32 tf:u32)


def index_to_bytes(index: InvertedIndex) -> bytes:
    stats = index.stats
    doc_ids = list(stats.doc_len)
    position = {doc_id: i for i, doc_id in enumerate(doc_ids)}
    out = [INDEX_MAGIC, struct.pack("<I", INDEX_VERSION)]
    out.append(struct.pack("<IQ", len(doc_ids), sum(stats.doc_len.values())))
    for doc_id in doc_ids:
        out.append(pack_str(doc_id) + struct.pack("<I", stats.doc_len[doc_id]))
    terms = sorted(index.postings)
    out.append(struct.pack("<I", len(terms)))
    for term in terms:
        out.append(pack_str(term) + struct.pack("<I", len(index.postings[term])))
    for term in terms:
        out.append(b"".join(struct.pack("<II", position[d], tf) for d, tf in index.postings[term]))
    return b"".join(out)


def index_from_bytes(data: bytes) -> InvertedIndex:
    r = Reader(data)
    r.check_header(INDEX_MAGIC, INDEX_VERSION)
    n_docs, total_len = r.unpack("<IQ")
    doc_ids: list[str] = []
    doc_len: dict[str, int] = {}
    for _ in range(n_docs):
        doc_id = r.string()
        (doc_len[doc_id],) = r.unpack("<I")
        doc_ids.append(doc_id)
    (n_terms,) = r.unpack("<I")
    header = [(r.string(), r.unpack("<I")[0]) for _ in range(n_terms)]
    postings: dict[str, list[tuple[str, int]]] = {}
    for term, df in header:
        flat = r.unpack(f"<{2 * df}I")
        postings[term] = [(doc_ids[flat[i]], flat[i + 1]) for i in range(0, 2 * df, 2)]
    if not r.at_end():
        raise FileFormatError("trailing bytes after postings")
    if sum(doc_len.values()) != total_len:
        raise FileFormatError("document lengths do not add up to the stored total")
    stats = CorpusStats(
        n_docs=n_docs,
        doc_freq={t: len(p) for t, p in postings.items()},
        avg_doc_len=total_len / n_docs if n_docs else 0.0,
        doc_len=doc_len,
    )
    return InvertedIndex(postings=postings, stats=stats)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    Path(path).write_bytes(index_to_bytes(index))


def load_index(path: str | Path) -> InvertedIndex:
    return index_from_bytes(Path(path).read_bytes())
