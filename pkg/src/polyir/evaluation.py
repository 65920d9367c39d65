"""MRR, precision@k and recall@k over TREC-style run and qrels files.

Evaluation is strict: a query with judgments but no run contributes zero to
every metric, and the mean is taken over all judged queries.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

from polyir.errors import EmptyInputError, MissingJudgmentsError, RunFormatError
from polyir.lexical import RankedList

DEFAULT_MRR_CUTOFF = 10
DEFAULT_KS = (1, 5, 10, 20, 50, 100)

Judgments = Mapping[str, set[str]]


@dataclass
class MetricsReport:
    mrr: float
    precision_at: dict[int, float]
    recall_at: dict[int, float]
    n_queries: int
    cutoff: int = DEFAULT_MRR_CUTOFF

    def to_text(self) -> str:
        lines = [f"{'metric':<12}{'value':>10}", f"{'queries':<12}{self.n_queries:>10d}"]
        lines.append(f"{f'MRR@{self.cutoff}':<12}{self.mrr:>10.4f}")
        for k in sorted(self.precision_at):
            lines.append(f"{f'P@{k}':<12}{self.precision_at[k]:>10.4f}")
        for k in sorted(self.recall_at):
            lines.append(f"{f'R@{k}':<12}{self.recall_at[k]:>10.4f}")
        return "\n".join(lines) + "\n"


def _runs_by_query(runs: Iterable[RankedList], judgments: Judgments) -> dict[str, list[str]]:
    by_query: dict[str, list[str]] = {}
    for run in runs:
        if run.query_id not in judgments:
            raise MissingJudgmentsError(run.query_id)
        by_query[run.query_id] = run.doc_ids
    return by_query


def reciprocal_rank(doc_ids: Sequence[str], relevant: set[str], cutoff: int) -> float:
    for rank, doc_id in enumerate(doc_ids[:cutoff], start=1):
        if doc_id in relevant:
            return 1.0 / rank
    return 0.0


def mrr(runs: Iterable[RankedList], judgments: Judgments, cutoff: int = DEFAULT_MRR_CUTOFF) -> float:
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    by_query = _runs_by_query(runs, judgments)
    if not judgments:
        return 0.0
    total = sum(reciprocal_rank(by_query.get(qid, []), judgments[qid], cutoff) for qid in sorted(judgments))
    return total / len(judgments)


def precision_recall_at_k(
    runs: Iterable[RankedList],
    judgments: Judgments,
    ks: Iterable[int],
) -> tuple[dict[int, float], dict[int, float]]:
    ks = sorted(set(ks))
    if not ks or ks[0] < 1:
        raise ValueError("ks must be a non-empty set of positive integers")
    by_query = _runs_by_query(runs, judgments)
    precision = {k: 0.0 for k in ks}
    recall = {k: 0.0 for k in ks}
    if not judgments:
        return precision, recall
    for qid in sorted(judgments):
        relevant = judgments[qid]
        ranked = by_query.get(qid, [])
        for k in ks:
            hits = len(relevant.intersection(ranked[:k]))
            precision[k] += hits / k
            recall[k] += hits / len(relevant)
    n = len(judgments)
    return {k: v / n for k, v in precision.items()}, {k: v / n for k, v in recall.items()}


def evaluate(
    runs: Sequence[RankedList],
    judgments: Judgments,
    ks: Iterable[int] = DEFAULT_KS,
    cutoff: int = DEFAULT_MRR_CUTOFF,
) -> MetricsReport:
    precision, recall = precision_recall_at_k(runs, judgments, ks)
    return MetricsReport(
        mrr=mrr(runs, judgments, cutoff),
        precision_at=precision,
        recall_at=recall,
        n_queries=len(judgments),
        cutoff=cutoff,
    )


def evaluate_run(
    run_path: str | Path,
    qrels_path: str | Path,
    ks: Iterable[int] = DEFAULT_KS,
    cutoff: int = DEFAULT_MRR_CUTOFF,
) -> MetricsReport:
    return evaluate(read_run(run_path), read_qrels(qrels_path), ks, cutoff)


# -- file formats -------------------------------------------------------------


def read_qrels(path: str | Path) -> dict[str, set[str]]:
    """Parse ``qid 0 docid rel`` lines; only ``rel > 0`` counts as relevant."""
    judgments: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise RunFormatError(path, line_no, f"expected 4 fields, got {len(fields)}")
            qid, _, doc_id, rel = fields
            try:
                relevance = float(rel)
            except ValueError:
                raise RunFormatError(path, line_no, f"bad relevance {rel!r}") from None
            if relevance > 0:
                judgments.setdefault(qid, set()).add(doc_id)
    return judgments


def read_run(path: str | Path) -> list[RankedList]:
    """Parse ``qid Q0 docid rank score tag`` lines.

    Hits are ordered by the rank column; a repeated doc id keeps its best rank.
    Query order follows first appearance in the file.
    """
    rows: dict[str, list[tuple[int, int, str, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise RunFormatError(path, line_no, f"expected 6 fields, got {len(fields)}")
            qid, _, doc_id, rank, score, _tag = fields
            try:
                rows.setdefault(qid, []).append((int(rank), line_no, doc_id, float(score)))
            except ValueError:
                raise RunFormatError(path, line_no, "rank must be an integer and score a number") from None
    if not rows:
        raise EmptyInputError(f"run file {path} contains no entries")
    runs = []
    for qid, entries in rows.items():
        seen: set[str] = set()
        hits = []
        for _, _, doc_id, score in sorted(entries):
            if doc_id not in seen:
                seen.add(doc_id)
                hits.append((doc_id, score))
        runs.append(RankedList(qid, hits))
    return runs


def format_run_lines(runs: Iterable[RankedList], tag: str = "polyir") -> list[str]:
    lines = []
    for run in runs:
        for rank, (doc_id, score) in enumerate(run.hits, start=1):
            lines.append(f"{run.query_id} Q0 {doc_id} {rank} {float(score)!r} {tag}")
    return lines


def write_run(out: str | Path | TextIO, runs: Iterable[RankedList], tag: str = "polyir") -> None:
    text = "".join(line + "\n" for line in format_run_lines(runs, tag))
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        out.write(text)


def write_qrels(path: str | Path, judgments: Judgments) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid in sorted(judgments):
            for doc_id in sorted(judgments[qid]):
                fh.write(f"{qid} 0 {doc_id} 1\n")
