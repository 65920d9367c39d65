"""Synthetic multi-topic corpora for exercising the dense retriever.

Each topic owns a disjoint vocabulary whose word vectors scatter around a
random topic centroid. Documents concatenate words from several distinct
topics; queries draw words from a single topic, and every document that
contains that topic is relevant. Long multi-topic contexts are exactly where
a single pooled vector dilutes the signal a query is looking for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from polyir.corpus import Document
from polyir.embedding import TableEmbedder
from polyir.evaluation import mrr
from polyir.polydense import (
    CodeBook,
    ScoreMode,
    TrainConfig,
    build_dense_index,
    dense_topk,
    embed_pairs,
    train_codebook,
)


@dataclass(frozen=True)
class TopicCorpusConfig:
    n_topics: int = 60
    words_per_topic: int = 10
    dim: int = 12
    spread: float = 0.6
    n_docs: int = 200
    topics_per_doc: int = 3
    words_per_doc_topic: int = 6
    n_queries: int = 100
    n_train: int = 400
    query_len: int = 3


@dataclass
class TopicCorpus:
    documents: list[Document]
    embedder: TableEmbedder
    queries: list[tuple[str, str]]  # (query_id, text)
    judgments: dict[str, set[str]]
    train_pairs: list[tuple[list[str], list[str]]]  # (query tokens, context tokens)


def word(topic: int, index: int) -> str:
    return f"t{topic}w{index}"


def make_topic_corpus(seed: int, config: TopicCorpusConfig = TopicCorpusConfig()) -> TopicCorpus:
    rng = np.random.default_rng(seed)
    c = config
    centroids = rng.standard_normal((c.n_topics, c.dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    table = {}
    for t in range(c.n_topics):
        for w in range(c.words_per_topic):
            v = centroids[t] + c.spread * rng.standard_normal(c.dim) / np.sqrt(c.dim)
            table[word(t, w)] = v / np.linalg.norm(v)

    documents = []
    doc_topics: list[set[int]] = []
    doc_tokens: list[list[str]] = []
    for i in range(c.n_docs):
        topics = rng.choice(c.n_topics, size=c.topics_per_doc, replace=False)
        tokens = [word(int(t), int(w)) for t in topics for w in rng.integers(0, c.words_per_topic, c.words_per_doc_topic)]
        documents.append(Document(f"d{i:04d}", f"doc {i}", " ".join(tokens)))
        doc_topics.append({int(t) for t in topics})
        doc_tokens.append(tokens)

    def query_words(topic: int) -> list[str]:
        return [word(topic, int(w)) for w in rng.integers(0, c.words_per_topic, c.query_len)]

    queries, judgments = [], {}
    for j in range(c.n_queries):
        topic = int(rng.integers(c.n_topics))
        qid = f"q{j:04d}"
        queries.append((qid, " ".join(query_words(topic))))
        judgments[qid] = {d.doc_id for d, ts in zip(documents, doc_topics) if topic in ts}
        if not judgments[qid]:
            del judgments[qid]
            queries.pop()

    train_pairs = []
    for _ in range(c.n_train):
        i = int(rng.integers(c.n_docs))
        topic = int(rng.choice(sorted(doc_topics[i])))
        train_pairs.append((query_words(topic), doc_tokens[i]))
    return TopicCorpus(documents, TableEmbedder(table), queries, judgments, train_pairs)


def evaluate_codebook(
    corpus: TopicCorpus,
    codebook: CodeBook,
    mode: ScoreMode | str = ScoreMode.MAXPOOL,
    cutoff: int = 10,
) -> float:
    index = build_dense_index(corpus.documents, codebook, corpus.embedder)
    runs = [dense_topk(text, index, codebook, corpus.embedder, cutoff, mode, query_id=qid) for qid, text in corpus.queries]
    return mrr(runs, corpus.judgments, cutoff)


def train_on_topic_corpus(corpus: TopicCorpus, config: TrainConfig) -> tuple[CodeBook, list[float]]:
    return train_codebook(embed_pairs(corpus.train_pairs, corpus.embedder), config)


def k_ablation(
    seed: int,
    ks: tuple[int, ...] = (1, 4),
    corpus_config: TopicCorpusConfig = TopicCorpusConfig(),
    learning_rate: float = 10.0,
    epochs: int = 30,
    batch_size: int = 16,
) -> dict[int, float]:
    """Train one code book per K with identical seed and schedule; return MRR@10 per K."""
    corpus = make_topic_corpus(seed, corpus_config)
    results = {}
    for k in ks:
        config = TrainConfig(n_codes=k, learning_rate=learning_rate, epochs=epochs, batch_size=batch_size, seed=seed)
        codebook, _ = train_on_topic_corpus(corpus, config)
        results[k] = evaluate_codebook(corpus, codebook)
    return results
