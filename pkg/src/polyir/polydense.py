"""Multi-vector dense retrieval with a learned code book.

A context is a matrix ``H`` of token embeddings (n x d). Each of the K code
vectors attends over the tokens and yields one context vector, so a context
is represented by a K x d matrix ``V``. A query is a single vector ``q`` and
is scored against ``V`` either by

* ``query_specific``: softmax-weighted combination of the rows of ``V`` with
  weights ``softmax(V q)``, dotted with ``q``; or
* ``maxpool``: ``max_k V[k] . q``, which keeps every row indexable for plain
  inner-product search.

Training uses in-batch negatives and analytic gradients with respect to the
code book only; token embeddings are fixed.
"""

from __future__ import annotations

import enum
import math
import struct
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from polyir._binio import Reader, pack_str
from polyir._parallel import ordered_map
from polyir.corpus import DEFAULT_TOKENIZER, Document, TokenizerConfig, tokenize
from polyir.embedding import Embedder, QueryVector, TokenEmbeddings, embed_query, embed_tokens, pool_query
from polyir.errors import (
    DimensionMismatchError,
    DuplicateDocumentError,
    EmptyInputError,
    FileFormatError,
)
from polyir.lexical import RankedList, rank_hits

DENSE_MAGIC = b"PDNS"
DENSE_VERSION = 1
CODEBOOK_MAGIC = b"PCBK"
CODEBOOK_VERSION = 1

CONTEXT_LENGTHS = {"short": 128, "long": 256}
INIT_SCALE = 0.1


class ScoreMode(str, enum.Enum):
    MAXPOOL = "maxpool"
    QUERY_SPECIFIC = "query_specific"


@dataclass(frozen=True)
class CodeBook:
    codes: np.ndarray  # (K, d)
    seed: int = 0

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes, dtype=np.float64)
        if codes.ndim != 2 or codes.shape[0] < 1 or codes.shape[1] < 1:
            raise ValueError("code book must be a non-empty K x d matrix")
        if not np.all(np.isfinite(codes)):
            raise ValueError("code book entries must be finite")
        object.__setattr__(self, "codes", codes)

    @property
    def K(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]


def init_codebook(n_codes: int, dim: int, seed: int = 0) -> CodeBook:
    rng = np.random.default_rng(seed)
    return CodeBook(rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_codes, dim)), seed=seed)


def single_vector_codebook(dim: int) -> CodeBook:
    """One all-zero code: uniform attention, i.e. mean pooling of the tokens.

    This is the plain dual-encoder baseline expressed in the same machinery.
    """
    return CodeBook(np.zeros((1, dim)))


@dataclass(frozen=True)
class ContextVectors:
    vectors: np.ndarray  # (K, d)
    attn: np.ndarray  # (K, n), rows sum to 1


@dataclass(frozen=True)
class QuerySpecificRepresentation:
    vector: np.ndarray  # (d,)
    weights: np.ndarray  # (K,)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_dim(a: int, b: int, what: str) -> None:
    if a != b:
        raise DimensionMismatchError(f"{what}: dimension {a} != {b}")


def extract_context_vectors(context: TokenEmbeddings, codebook: CodeBook) -> ContextVectors:
    H = context.vectors
    if H.shape[0] < 1:
        raise EmptyInputError("context has no tokens")
    _check_dim(H.shape[1], codebook.dim, "context vs code book")
    attn = softmax(codebook.codes @ H.T, axis=1)
    return ContextVectors(vectors=attn @ H, attn=attn)


def bag_context_vectors(tokens: Sequence[str], embedder: Embedder, codebook: CodeBook) -> np.ndarray:
    """Context vectors of a token sequence computed from its token bag.

    Attention over a sequence depends only on token proportions, so the
    sequence is reduced to its sorted distinct tokens, with gcd-reduced counts
    entering the logits as log-multiplicities. Contexts with equal proportions,
    including reorderings, then encode to bit-identical vectors and tie
    exactly instead of differing by rounding noise.
    """
    if not tokens:
        raise EmptyInputError("context has no tokens")
    counts = Counter(tokens)
    unique = sorted(counts)
    g = math.gcd(*counts.values())
    H = embed_tokens(unique, embedder).vectors
    _check_dim(H.shape[1], codebook.dim, "context vs code book")
    multiplicity = np.array([counts[t] // g for t in unique], dtype=np.float64)
    return softmax(codebook.codes @ H.T + np.log(multiplicity), axis=1) @ H


def _query_array(v_q: QueryVector | np.ndarray) -> np.ndarray:
    return v_q.vector if isinstance(v_q, QueryVector) else np.asarray(v_q, dtype=np.float64)


def query_specific_score(
    v_q: QueryVector | np.ndarray, cv: ContextVectors
) -> tuple[float, QuerySpecificRepresentation]:
    q = _query_array(v_q)
    _check_dim(q.shape[0], cv.vectors.shape[1], "query vs context")
    weights = softmax(cv.vectors @ q)
    rep = weights @ cv.vectors
    return float(q @ rep), QuerySpecificRepresentation(vector=rep, weights=weights)


def maxpool_score(v_q: QueryVector | np.ndarray, cv: ContextVectors) -> float:
    q = _query_array(v_q)
    _check_dim(q.shape[0], cv.vectors.shape[1], "query vs context")
    return float(np.max(cv.vectors @ q))


def score_context(v_q: QueryVector | np.ndarray, cv: ContextVectors, mode: ScoreMode | str) -> float:
    if ScoreMode(mode) is ScoreMode.MAXPOOL:
        return maxpool_score(v_q, cv)
    return query_specific_score(v_q, cv)[0]


def score_blocks(q: np.ndarray, blocks: np.ndarray, mode: ScoreMode | str) -> np.ndarray:
    """Score one query against stacked context blocks of shape (N, K, d)."""
    dots = blocks @ q  # (N, K)
    if ScoreMode(mode) is ScoreMode.MAXPOOL:
        return dots.max(axis=1)
    w = softmax(dots, axis=1)
    return np.sum(w * dots, axis=1)


# -- dense index --------------------------------------------------------------


@dataclass
class DenseIndex:
    doc_ids: list[str]
    vectors: np.ndarray  # (N, K, d)
    _positions: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.vectors.ndim != 3 or self.vectors.shape[0] != len(self.doc_ids):
            raise DimensionMismatchError("dense index needs one K x d block per document")
        self._positions = {}
        for i, doc_id in enumerate(self.doc_ids):
            if doc_id in self._positions:
                raise DuplicateDocumentError(doc_id)
            self._positions[doc_id] = i

    @property
    def K(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def __len__(self) -> int:
        return len(self.doc_ids)

    def position(self, doc_id: str) -> int:
        return self._positions[doc_id]


def context_tokens(
    document: Document,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    max_context_tokens: int = CONTEXT_LENGTHS["short"],
) -> list[str]:
    return tokenize(document.body, config)[:max_context_tokens]


def build_dense_index(
    documents: Sequence[Document],
    codebook: CodeBook,
    embedder: Embedder,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    max_context_tokens: int = CONTEXT_LENGTHS["short"],
    threads: int = 1,
) -> DenseIndex:
    if not documents:
        raise EmptyInputError("cannot build a dense index from an empty corpus")
    _check_dim(embedder.dim, codebook.dim, "embedder vs code book")

    def encode(doc: Document) -> np.ndarray:
        tokens = context_tokens(doc, config, max_context_tokens)
        if not tokens:
            raise EmptyInputError(f"document {doc.doc_id!r} has no tokens after tokenization")
        return bag_context_vectors(tokens, embedder, codebook)

    blocks = ordered_map(encode, documents, threads)
    return DenseIndex([d.doc_id for d in documents], np.stack(blocks))


def dense_topk(
    query_text: str,
    index: DenseIndex,
    codebook: CodeBook,
    embedder: Embedder,
    k: int,
    mode: ScoreMode | str = ScoreMode.MAXPOOL,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    query_id: str = "q",
    threads: int = 1,
) -> RankedList:
    """Exhaustive scan of ``index``; results ranked by (score desc, doc_id asc)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) and index.K != codebook.K:
        raise DimensionMismatchError(f"index has K={index.K}, code book K={codebook.K}")
    tokens = tokenize(query_text, config)
    if not tokens:
        raise EmptyInputError(f"query {query_id!r} is empty after tokenization")
    q = embed_query(tokens, embedder).vector
    _check_dim(q.shape[0], index.dim, "query vs index")
    return RankedList(query_id, scan_index(q, index, k, mode, threads=threads))


def scan_index(
    q: np.ndarray,
    index: DenseIndex,
    k: int | None,
    mode: ScoreMode | str,
    subset: Sequence[str] | None = None,
    threads: int = 1,
) -> list[tuple[str, float]]:
    if subset is None:
        doc_ids, blocks = index.doc_ids, index.vectors
    else:
        doc_ids = list(subset)
        blocks = index.vectors[[index.position(d) for d in doc_ids]]
    n_chunks = max(1, min(threads, len(doc_ids)))
    bounds = np.linspace(0, len(doc_ids), n_chunks + 1).astype(int)

    def run(chunk: int) -> list[tuple[str, float]]:
        lo, hi = bounds[chunk], bounds[chunk + 1]
        scores = score_blocks(q, blocks[lo:hi], mode)
        return [(doc_ids[lo + i], float(s)) for i, s in enumerate(scores)]

    partials = ordered_map(run, range(n_chunks), threads)
    return rank_hits([hit for part in partials for hit in part], k)


# -- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    n_codes: int = 4
    learning_rate: float = 10.0
    epochs: int = 10
    batch_size: int = 8
    seed: int = 0
    score_mode: ScoreMode = ScoreMode.QUERY_SPECIFIC

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for in-batch negatives")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.n_codes < 1 or self.epochs < 0:
            raise ValueError("n_codes must be >= 1 and epochs >= 0")
        object.__setattr__(self, "score_mode", ScoreMode(self.score_mode))


TrainPair = tuple[TokenEmbeddings, TokenEmbeddings]


def loss_and_grad(
    batch: Sequence[TrainPair],
    codebook: CodeBook,
    mode: ScoreMode | str = ScoreMode.QUERY_SPECIFIC,
) -> tuple[float, np.ndarray]:
    """In-batch negative softmax loss and its exact gradient w.r.t. the codes.

    Query i is scored against every context j in the batch; the loss is the
    mean over i of ``-log softmax_j(s_ij)[i]``. In ``maxpool`` mode the
    subgradient flows through the argmax row (lowest index on ties).
    """
    mode = ScoreMode(mode)
    B = len(batch)
    if B < 2:
        raise EmptyInputError("in-batch negatives need a batch of at least 2 pairs")
    M = codebook.codes
    Q = np.stack([pool_query(q).vector for q, _ in batch])  # (B, d)
    _check_dim(Q.shape[1], codebook.dim, "query vs code book")
    contexts = [c.vectors for _, c in batch]
    attns = []
    dots = []  # dots[j] is (K, B): context j's vectors against every query
    S = np.empty((B, B))
    for j, H in enumerate(contexts):
        _check_dim(H.shape[1], codebook.dim, "context vs code book")
        A = softmax(M @ H.T, axis=1)
        D = (A @ H) @ Q.T
        attns.append(A)
        dots.append(D)
        if mode is ScoreMode.MAXPOOL:
            S[:, j] = D.max(axis=0)
        else:
            S[:, j] = np.sum(softmax(D, axis=0) * D, axis=0)

    row_max = S.max(axis=1, keepdims=True)
    lse = row_max[:, 0] + np.log(np.sum(np.exp(S - row_max), axis=1))
    loss = float(np.mean(lse - np.diag(S)))
    G = (softmax(S, axis=1) - np.eye(B)) / B  # dLoss/dS

    grad = np.zeros_like(M)
    for j, H in enumerate(contexts):
        D, A = dots[j], attns[j]
        if mode is ScoreMode.MAXPOOL:
            coeff = np.zeros_like(D)
            coeff[np.argmax(D, axis=0), np.arange(B)] = 1.0
        else:
            w = softmax(D, axis=0)
            coeff = w * (1.0 + D - np.sum(w * D, axis=0))
        dV = (coeff * G[:, j]) @ Q  # (K, d)
        dA = dV @ H.T
        dZ = A * (dA - np.sum(dA * A, axis=1, keepdims=True))
        grad += dZ @ H
    return loss, grad


def embed_pairs(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
    embedder: Embedder,
    max_context_tokens: int = CONTEXT_LENGTHS["short"],
) -> list[TrainPair]:
    """Embed ``(query_tokens, context_tokens)`` pairs for training."""
    return [
        (embed_tokens(q, embedder), embed_tokens(list(c)[:max_context_tokens], embedder))
        for q, c in pairs
    ]


def train_codebook(
    pairs: Sequence[TrainPair],
    config: TrainConfig,
    init: CodeBook | None = None,
) -> tuple[CodeBook, list[float]]:
    """Plain mini-batch gradient descent on the code book.

    Each epoch shuffles the pairs with a generator seeded from ``config.seed``
    and walks them in batches of ``batch_size``; a trailing batch smaller than
    2 is dropped. The trace holds the mean pre-update batch loss per epoch.
    """
    if len(pairs) < config.batch_size:
        raise EmptyInputError(f"need at least {config.batch_size} pairs, got {len(pairs)}")
    dim = pairs[0][1].dim
    rng = np.random.default_rng(config.seed)
    codebook = init if init is not None else init_codebook(config.n_codes, dim, config.seed)
    codes = codebook.codes.copy()
    trace: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            loss, grad = loss_and_grad([pairs[i] for i in idx], CodeBook(codes), config.score_mode)
            losses.append(loss)
            codes = codes - config.learning_rate * grad
        trace.append(float(np.mean(losses)))
    return CodeBook(codes, seed=codebook.seed), trace


# -- persistence --------------------------------------------------------------
#
# PDNS: magic version:u32 K:u32 d:u32 count:u64, then per entry
#       id_len:u32 id K*d float32.
# PCBK: magic version:u32 K:u32 d:u32 seed:i64, then K*d float64.


def dense_index_to_bytes(index: DenseIndex) -> bytes:
    N, K, d = index.vectors.shape
    parts = [DENSE_MAGIC, struct.pack("<IIIQ", DENSE_VERSION, K, d, N)]
    for doc_id, block in zip(index.doc_ids, index.vectors):
        parts.append(pack_str(doc_id))
        parts.append(np.asarray(block, dtype="<f4").tobytes())
    return b"".join(parts)


def dense_index_from_bytes(data: bytes) -> DenseIndex:
    r = Reader(data)
    r.check_header(DENSE_MAGIC, DENSE_VERSION)
    K, d, N = r.unpack("<IIQ")
    doc_ids = []
    blocks = np.empty((N, K, d), dtype=np.float64)
    for i in range(N):
        doc_ids.append(r.string())
        blocks[i] = np.frombuffer(r.take(4 * K * d), dtype="<f4").reshape(K, d)
    if not r.at_end():
        raise FileFormatError("trailing bytes after dense index")
    return DenseIndex(doc_ids, blocks)


def save_dense_index(index: DenseIndex, path: str | Path) -> None:
    Path(path).write_bytes(dense_index_to_bytes(index))


def load_dense_index(path: str | Path) -> DenseIndex:
    return dense_index_from_bytes(Path(path).read_bytes())


def codebook_to_bytes(codebook: CodeBook) -> bytes:
    K, d = codebook.codes.shape
    header = CODEBOOK_MAGIC + struct.pack("<IIIq", CODEBOOK_VERSION, K, d, codebook.seed)
    return header + np.asarray(codebook.codes, dtype="<f8").tobytes()


def codebook_from_bytes(data: bytes) -> CodeBook:
    r = Reader(data)
    r.check_header(CODEBOOK_MAGIC, CODEBOOK_VERSION)
    K, d, seed = r.unpack("<IIq")
    codes = np.frombuffer(r.take(8 * K * d), dtype="<f8").reshape(K, d).astype(np.float64)
    if not r.at_end():
        raise FileFormatError("trailing bytes after code book")
    return CodeBook(codes, seed=seed)


def save_codebook(codebook: CodeBook, path: str | Path) -> None:
    Path(path).write_bytes(codebook_to_bytes(codebook))


def load_codebook(path: str | Path) -> CodeBook:
    return codebook_from_bytes(Path(path).read_bytes())
