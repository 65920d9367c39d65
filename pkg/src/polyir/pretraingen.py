"""Pretraining pairs for retrieval: expanded-title (ETM) and reduced-sentence (RSM) queries.

Both tasks rank words by TF-IDF against corpus statistics. ETM appends the
top-m keywords of a document to its title; RSM shrinks each sentence of a
document to its m highest-weighted words. Every pair points back at the whole
source document.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from collections.abc import Collection, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from polyir._parallel import ordered_map
from polyir.corpus import DEFAULT_TOKENIZER, CorpusStats, Document, TokenizerConfig, tfidf_weight, tokenize
from polyir.errors import CorpusFormatError, EmptyInputError, MissingTitleError

TASK_ETM = "ETM"
TASK_RSM = "RSM"
TASK_TQG = "TQG"

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.?!]) ")


@dataclass(frozen=True)
class ExtendedTitle:
    title: str
    keywords: tuple[str, ...]

    @property
    def rendered(self) -> str:
        return " ".join([self.title, *self.keywords]) if self.keywords else self.title


@dataclass(frozen=True)
class ReducedSentence:
    source: str
    weights: dict[str, float]  # word type -> normalized weight, first-occurrence order
    reduced: str


@dataclass(frozen=True)
class PretrainPair:
    query: str
    positive_doc_id: str
    task: str

    def to_json(self) -> str:
        record = {"query": self.query, "positive_id": self.positive_doc_id, "task": self.task}
        return json.dumps(record, ensure_ascii=False)


def rank_terms_by_tfidf(counts: Counter[str], stats: CorpusStats) -> list[tuple[str, float]]:
    """Terms by descending TF-IDF weight, ties broken lexicographically."""
    weighted = [(t, tfidf_weight(t, tf, stats)) for t, tf in counts.items()]
    return sorted(weighted, key=lambda tw: (-tw[1], tw[0]))


def extract_keywords(
    doc: Document,
    m: int,
    stats: CorpusStats,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    exclude: Collection[str] = (),
) -> list[str]:
    if m < 1:
        raise ValueError("m must be >= 1")
    terms = tokenize(doc.body, config)
    if not terms:
        raise EmptyInputError(f"document {doc.doc_id!r} has no body tokens")
    counts = Counter(t for t in terms if t not in exclude)
    return [t for t, _ in rank_terms_by_tfidf(counts, stats)[:m]]


def extended_title(
    doc: Document,
    m: int,
    stats: CorpusStats,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> ExtendedTitle:
    if not doc.title.strip():
        raise MissingTitleError(doc.doc_id)
    title_terms = set(tokenize(doc.title, config))
    return ExtendedTitle(doc.title, tuple(extract_keywords(doc, m, stats, config, exclude=title_terms)))


def gen_etm_pairs(
    corpus: Sequence[Document],
    m: int,
    stats: CorpusStats,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    threads: int = 1,
) -> list[PretrainPair]:
    for doc in corpus:
        if not doc.title.strip():
            raise MissingTitleError(doc.doc_id)
    return ordered_map(
        lambda d: PretrainPair(extended_title(d, m, stats, config).rendered, d.doc_id, TASK_ETM),
        corpus,
        threads,
    )


def split_sentences(text: str) -> list[str]:
    normalized = " ".join(text.split())
    return [s for s in _SENTENCE_BOUNDARY.split(normalized) if s]


def reduce_sentence(
    sentence: str,
    m: int,
    stats: CorpusStats,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> ReducedSentence | None:
    """Keep the ``m`` highest-weighted word types, each once, in sentence order.

    Weights are sentence-level TF-IDF scores normalized to sum to one. Returns
    ``None`` for sentences with no tokens.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    terms = tokenize(sentence, config)
    if not terms:
        return None
    counts = Counter(terms)  # insertion order = first occurrence
    raw = {t: tfidf_weight(t, tf, stats) for t, tf in counts.items()}
    total = sum(raw.values())
    weights = {t: w / total for t, w in raw.items()}
    keep = {t for t, _ in sorted(weights.items(), key=lambda tw: (-tw[1], tw[0]))[:m]}
    return ReducedSentence(sentence, weights, " ".join(t for t in counts if t in keep))


def gen_rsm_pairs(
    corpus: Sequence[Document],
    m: int,
    stats: CorpusStats,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    threads: int = 1,
) -> list[PretrainPair]:
    def per_doc(doc: Document) -> list[PretrainPair]:
        pairs = []
        for sentence in split_sentences(doc.body):
            reduced = reduce_sentence(sentence, m, stats, config)
            if reduced is not None:
                pairs.append(PretrainPair(reduced.reduced, doc.doc_id, TASK_RSM))
        return pairs

    return [p for group in ordered_map(per_doc, corpus, threads) for p in group]


def write_pairs(path: str | Path, pairs: Iterable[PretrainPair]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(pair.to_json() + "\n")


def read_pairs(path: str | Path) -> list[dict]:
    """Read pair records; extra fields such as ``positive_text`` are preserved."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict) or "query" not in record or "positive_id" not in record:
                raise CorpusFormatError(line_no, "pair needs 'query' and 'positive_id'")
            records.append(record)
    return records
