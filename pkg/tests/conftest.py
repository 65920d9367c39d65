import json

import numpy as np
import pytest

from polyir.corpus import Document

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_corpus(rng, n_docs, vocab_size=30, min_len=1, max_len=15):
    vocab = [f"w{i}" for i in range(vocab_size)]
    docs = []
    for i in range(n_docs):
        n = int(rng.integers(min_len, max_len + 1))
        body = " ".join(rng.choice(vocab, size=n))
        docs.append(Document(f"d{i:03d}", f"title {i}", body))
    return docs, vocab


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_docs():
    return [
        Document("d1", "Malaria", "Malaria is caused by parasites. Mosquitoes transmit malaria."),
        Document("d2", "Aspirin", "Aspirin treats fever and pain. Aspirin thins blood."),
        Document("d3", "Milkshake", "A milkshake is a cold drink. Restaurants serve milkshakes."),
    ]


@pytest.fixture
def corpus_file(tmp_path, toy_docs):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [{"id": d.doc_id, "title": d.title, "text": d.body} for d in toy_docs])
    return path
