"""Token embeddings for the dense retriever.

:class:`ToyEmbedder` is a seeded stand-in for a pretrained encoder: each token
maps to a fixed unit vector. :class:`TableEmbedder` wraps vectors produced
elsewhere and loaded from a ``PEMB`` file.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from polyir._binio import Reader, pack_str
from polyir.errors import DimensionMismatchError, EmptyInputError, FileFormatError

EMBEDDING_MAGIC = b"PEMB"
EMBEDDING_VERSION = 1

_U64 = (1 << 64) - 1


class Embedder(Protocol):
    dim: int

    def vector(self, token: str) -> np.ndarray: ...


@dataclass(frozen=True)
class ToyEmbedderConfig:
    dim: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


class ToyEmbedder:
    """Deterministic unit-norm token vectors keyed on ``(token, seed, dim)``."""

    def __init__(self, config: ToyEmbedderConfig = ToyEmbedderConfig()):
        self.config = config
        self.dim = config.dim
        self._cache: dict[str, np.ndarray] = {}

    def vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            token_key = int.from_bytes(digest, "little")
            rng = np.random.default_rng([self.config.seed & _U64, token_key])
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            vec.setflags(write=False)
            self._cache[token] = vec
        return vec


class TableEmbedder:
    """Embedder backed by a precomputed token -> vector table.

    Unknown tokens raise ``KeyError`` unless ``fallback`` is given.
    """

    def __init__(self, table: Mapping[str, np.ndarray], fallback: Embedder | None = None):
        dims = {len(v) for v in table.values()}
        if len(dims) > 1:
            raise DimensionMismatchError(f"table mixes dimensions {sorted(dims)}")
        self.dim = dims.pop() if dims else (fallback.dim if fallback else 0)
        if fallback is not None and fallback.dim != self.dim:
            raise DimensionMismatchError("fallback dimension differs from table")
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self._fallback = fallback

    def vector(self, token: str) -> np.ndarray:
        if token in self._table:
            return self._table[token]
        if self._fallback is None:
            raise KeyError(token)
        return self._fallback.vector(token)


@dataclass(frozen=True)
class TokenEmbeddings:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (n, d), row i embeds tokens[i]

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise DimensionMismatchError("one embedding row per token required")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("token embeddings must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class QueryVector:
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def embed_tokens(tokens: Sequence[str], embedder: Embedder) -> TokenEmbeddings:
    if len(tokens) == 0:
        raise EmptyInputError("cannot embed an empty token sequence")
    vectors = np.stack([np.asarray(embedder.vector(t), dtype=np.float64) for t in tokens])
    return TokenEmbeddings(tuple(tokens), vectors)


def pool_query(embeddings: TokenEmbeddings) -> QueryVector:
    return QueryVector(embeddings.vectors.mean(axis=0))


def embed_query(tokens: Sequence[str], embedder: Embedder) -> QueryVector:
    """Mean of the token embedding rows."""
    return pool_query(embed_tokens(tokens, embedder))


def write_embeddings(
    path: str | Path,
    items: Iterable[tuple[str, np.ndarray]],
    dim: int | None = None,
) -> None:
    """Write ``(id, vector)`` items as float32.

    Layout: ``PEMB`` version:u32 dim:u32 count:u64, then per item
    id_len:u32, utf-8 id, dim little-endian float32 values.
    """
    items = list(items)
    dims = {np.asarray(v).shape for _, v in items}
    if len(dims) > 1:
        raise DimensionMismatchError(f"inconsistent vector shapes {sorted(dims)}")
    if items:
        (shape,) = dims
        if len(shape) != 1:
            raise DimensionMismatchError("each item must be a 1-d vector")
        if dim is not None and dim != shape[0]:
            raise DimensionMismatchError(f"vectors have dim {shape[0]}, expected {dim}")
        dim = shape[0]
    dim = dim or 0
    parts = [EMBEDDING_MAGIC, struct.pack("<IIQ", EMBEDDING_VERSION, dim, len(items))]
    for item_id, vec in items:
        parts.append(pack_str(item_id))
        parts.append(np.asarray(vec, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_embeddings(path: str | Path, expected_dim: int | None = None) -> list[tuple[str, np.ndarray]]:
    r = Reader(Path(path).read_bytes())
    r.check_header(EMBEDDING_MAGIC, EMBEDDING_VERSION)
    dim, count = r.unpack("<IQ")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatchError(f"file has dim {dim}, expected {expected_dim}")
    items = []
    for _ in range(count):
        item_id = r.string()
        vec = np.frombuffer(r.take(4 * dim), dtype="<f4").astype(np.float32)
        items.append((item_id, vec))
    if not r.at_end():
        raise FileFormatError("trailing bytes after last embedding")
    return items
