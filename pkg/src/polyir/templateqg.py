"""Template-based question generation with deterministic components.

Entities in annotated questions are found with a surface-form lexicon and
replaced by typed slots to form templates. A passage is matched to the
template whose source question is most TF-IDF-similar among templates the
passage can fill, and slots are filled with the passage's own entities.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from polyir.corpus import (
    DEFAULT_TOKENIZER,
    CorpusStats,
    Document,
    TokenizerConfig,
    tfidf_weight,
    token_spans,
    tokenize,
)
from polyir.errors import (
    CorpusFormatError,
    NoCandidateError,
    NoTemplateError,
    UnsatisfiableSlotError,
)
from polyir.pretraingen import TASK_TQG, PretrainPair

_SLOT_RE = re.compile(r"\[([^\[\]\s]+)\]")


class EntityLexicon:
    """Surface form -> entity type, matched case-insensitively on token sequences."""

    def __init__(self, entries: Mapping[str, str]):
        self.entries: dict[tuple[str, ...], str] = {}
        for surface, etype in entries.items():
            key = tuple(tok for tok, _, _ in token_spans(surface))
            if not key:
                raise ValueError(f"lexicon surface form {surface!r} has no tokens")
            if not etype:
                raise ValueError(f"lexicon entry {surface!r} has an empty type")
            self.entries[key] = etype
        self.max_len = max((len(k) for k in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_file(cls, path: str | Path) -> EntityLexicon:
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                    raise CorpusFormatError(line_no, "expected 'surface<TAB>TYPE'")
                entries[parts[0].strip()] = parts[1].strip()
        return cls(entries)


@dataclass(frozen=True)
class Mention:
    surface: str  # verbatim text span
    key: tuple[str, ...]
    etype: str
    start: int
    end: int


def find_mentions(text: str, lexicon: EntityLexicon) -> list[Mention]:
    """Longest-match lexicon spans, scanning tokens left to right."""
    spans = token_spans(text)
    mentions = []
    i = 0
    while i < len(spans):
        for length in range(min(lexicon.max_len, len(spans) - i), 0, -1):
            key = tuple(tok for tok, _, _ in spans[i : i + length])
            etype = lexicon.entries.get(key)
            if etype is not None:
                start, end = spans[i][1], spans[i + length - 1][2]
                mentions.append(Mention(text[start:end], key, etype, start, end))
                i += length
                break
        else:
            i += 1
    return mentions


@dataclass(frozen=True)
class Template:
    pattern: str
    slot_types: tuple[str, ...]
    source_question_id: str
    source_terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.pattern or not self.slot_types:
            raise ValueError("a template needs a pattern with at least one slot")
        if len(_SLOT_RE.findall(self.pattern)) != len(self.slot_types):
            raise ValueError(f"pattern {self.pattern!r} does not have {len(self.slot_types)} slots")

    @property
    def template_id(self) -> str:
        return self.source_question_id

    def to_json(self) -> str:
        return json.dumps(
            {
                "pattern": self.pattern,
                "slot_types": list(self.slot_types),
                "source_id": self.source_question_id,
                "source_terms": list(self.source_terms),
            },
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class GeneratedQuestion:
    text: str
    template_id: str
    fillers: tuple[str, ...]


def extract_template(
    question: str,
    lexicon: EntityLexicon,
    question_id: str = "q0",
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> Template:
    if not question.strip():
        raise ValueError("question must be non-empty")
    mentions = find_mentions(question, lexicon)
    if not mentions:
        raise NoTemplateError(f"question {question_id!r} contains no lexicon entity")
    pieces, cursor = [], 0
    for m in mentions:
        pieces.append(question[cursor : m.start])
        pieces.append(f"[{m.etype}]")
        cursor = m.end
    pieces.append(question[cursor:])
    return Template(
        pattern="".join(pieces),
        slot_types=tuple(m.etype for m in mentions),
        source_question_id=question_id,
        source_terms=tuple(sorted(tokenize(question, config))),
    )


def fill_template(template: Template, fillers: Sequence[str]) -> str:
    if len(fillers) != len(template.slot_types):
        raise ValueError("one filler per slot required")
    remaining = iter(zip(template.slot_types, fillers))
    pending = [next(remaining, None)]

    def substitute(match: re.Match) -> str:
        slot = pending[0]
        if slot is None or match.group(1) != slot[0]:
            return match.group(0)
        pending[0] = next(remaining, None)
        return slot[1]

    return _SLOT_RE.sub(substitute, template.pattern)


def _choose_fillers(template: Template, mentions: Sequence[Mention]) -> tuple[str, ...]:
    used: set[tuple[str, tuple[str, ...]]] = set()
    fillers = []
    for slot_type in template.slot_types:
        for m in mentions:
            if m.etype == slot_type and (slot_type, m.key) not in used:
                used.add((slot_type, m.key))
                fillers.append(m.surface)
                break
        else:
            raise UnsatisfiableSlotError(slot_type)
    return tuple(fillers)


def generate_question(template: Template, passage: Document, lexicon: EntityLexicon) -> GeneratedQuestion:
    """Fill each slot with the first unused passage entity of the slot's type."""
    fillers = _choose_fillers(template, find_mentions(passage.body, lexicon))
    return GeneratedQuestion(fill_template(template, fillers), template.template_id, fillers)


def _tfidf_vector(terms: Iterable[str], stats: CorpusStats) -> dict[str, float]:
    return {t: tfidf_weight(t, tf, stats) for t, tf in sorted(Counter(terms).items())}


def cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    dot = sum(w * b[t] for t, w in sorted(a.items()) if t in b)
    na = math.sqrt(sum(w * w for _, w in sorted(a.items())))
    nb = math.sqrt(sum(w * w for _, w in sorted(b.items())))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def select_template(
    passage: Document,
    bank: Sequence[Template],
    stats: CorpusStats,
    lexicon: EntityLexicon,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> Template:
    """Most similar fillable template; ties go to the lowest source question id."""
    if not bank:
        raise ValueError("template bank is empty")
    mentions = find_mentions(passage.body, lexicon)
    passage_vec = _tfidf_vector(tokenize(passage.body, config), stats)
    best: tuple[float, str] | None = None
    chosen = None
    for template in bank:
        try:
            _choose_fillers(template, mentions)
        except UnsatisfiableSlotError:
            continue
        sim = cosine(passage_vec, _tfidf_vector(template.source_terms, stats))
        key = (-sim, template.source_question_id)
        if best is None or key < best:
            best, chosen = key, template
    if chosen is None:
        raise NoCandidateError(f"no template can be filled from passage {passage.doc_id!r}")
    return chosen


def gen_qa_pairs(
    corpus: Sequence[Document],
    bank: Sequence[Template],
    lexicon: EntityLexicon,
    stats: CorpusStats,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> list[PretrainPair]:
    if not bank or not len(lexicon):
        raise ValueError("template bank and lexicon must be non-empty")
    pairs = []
    for doc in corpus:
        try:
            template = select_template(doc, bank, stats, lexicon, config)
        except NoCandidateError:
            continue
        question = generate_question(template, doc, lexicon)
        pairs.append(PretrainPair(question.text, doc.doc_id, TASK_TQG))
    return pairs


def build_template_bank(
    questions: Iterable[tuple[str, str]],
    lexicon: EntityLexicon,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> list[Template]:
    """Templates for every ``(question_id, question)`` with at least one entity."""
    bank = []
    for qid, text in questions:
        try:
            bank.append(extract_template(text, lexicon, qid, config))
        except NoTemplateError:
            continue
    return bank


def write_bank(path: str | Path, bank: Iterable[Template]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for template in bank:
            fh.write(template.to_json() + "\n")


def read_bank(path: str | Path) -> list[Template]:
    bank = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                bank.append(
                    Template(
                        rec["pattern"],
                        tuple(rec["slot_types"]),
                        rec["source_id"],
                        tuple(rec["source_terms"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(line_no, f"bad template record ({exc})") from None
    return bank
