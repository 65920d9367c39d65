"""Corpus records, tokenization and corpus-level term statistics."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from polyir._parallel import ordered_map
from polyir.errors import CorpusFormatError, DuplicateDocumentError

# Runs of letters/digits, optionally joined by single internal hyphens ("il-6").
_TOKEN_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*")


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    caption: str | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.body or not self.body.strip():
            raise ValueError(f"document {self.doc_id!r} has an empty body")


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    stopwords: frozenset[str] = field(default_factory=frozenset)
    min_token_len: int = 1

    def __post_init__(self) -> None:
        if self.min_token_len < 1:
            raise ValueError("min_token_len must be >= 1")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Split ``text`` into terms.

    Steps run in a fixed order: lowercasing, punctuation stripping (every
    non-alphanumeric character except a hyphen between two alphanumerics),
    whitespace splitting, stopword removal, then the minimum-length filter.
    """
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        terms = _TOKEN_RE.findall(text)
    else:
        terms = text.split()
    stop = config.stopwords
    return [t for t in terms if t not in stop and len(t) >= config.min_token_len]


def token_spans(text: str) -> list[tuple[str, int, int]]:
    """Lowercased alphanumeric tokens with their character offsets in ``text``."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class CorpusStats:
    n_docs: int
    doc_freq: Mapping[str, int]
    avg_doc_len: float
    doc_len: Mapping[str, int]

    def df(self, term: str) -> int:
        return self.doc_freq.get(term, 0)


def stats_from_token_lists(doc_tokens: Sequence[tuple[str, Sequence[str]]]) -> CorpusStats:
    """Build :class:`CorpusStats` from ``(doc_id, terms)`` pairs, in the given order."""
    doc_freq: Counter[str] = Counter()
    doc_len: dict[str, int] = {}
    for doc_id, terms in doc_tokens:
        doc_len[doc_id] = len(terms)
        doc_freq.update(set(terms))
    n = len(doc_len)
    avg = sum(doc_len.values()) / n if n else 0.0
    return CorpusStats(
        n_docs=n,
        doc_freq=dict(sorted(doc_freq.items())),
        avg_doc_len=avg,
        doc_len=doc_len,
    )


def compute_stats(
    documents: Sequence[Document],
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    threads: int = 1,
) -> CorpusStats:
    token_lists = ordered_map(lambda d: tokenize(d.body, config), documents, threads)
    return stats_from_token_lists([(d.doc_id, t) for d, t in zip(documents, token_lists)])


def _parse_record(line: str, line_no: int) -> Document:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict):
        raise CorpusFormatError(line_no, "record is not an object")
    for key in ("id", "title", "text"):
        if key not in record:
            raise CorpusFormatError(line_no, f"missing key {key!r}")
    caption = record.get("caption")
    values = [record["id"], record["title"], record["text"]]
    if caption is not None:
        values.append(caption)
    if not all(isinstance(v, str) for v in values):
        raise CorpusFormatError(line_no, "id, title, text and caption must be strings")
    try:
        return Document(str(record["id"]), record["title"], record["text"], caption)
    except ValueError as exc:
        raise CorpusFormatError(line_no, str(exc)) from None


def read_documents(path: str | Path) -> list[Document]:
    """Parse a JSON-lines corpus file, rejecting malformed lines and duplicate ids."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = _parse_record(line, line_no)
            if doc.doc_id in seen:
                raise DuplicateDocumentError(doc.doc_id)
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def load_corpus(
    path: str | Path,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    threads: int = 1,
) -> tuple[list[Document], CorpusStats]:
    docs = read_documents(path)
    return docs, compute_stats(docs, config, threads)


def write_documents(path: str | Path, documents: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in documents:
            record = {"id": doc.doc_id, "title": doc.title, "text": doc.body}
            if doc.caption is not None:
                record["caption"] = doc.caption
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def idf(term: str, stats: CorpusStats) -> float:
    """Smoothed inverse document frequency; finite for unseen terms."""
    return math.log((stats.n_docs + 1) / (stats.df(term) + 1)) + 1.0


def tfidf_weight(term: str, tf: int, stats: CorpusStats) -> float:
    if tf < 0:
        raise ValueError("tf must be non-negative")
    if tf == 0:
        return 0.0
    return tf * idf(term, stats)
