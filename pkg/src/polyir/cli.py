"""Command-line entry point.

Every subcommand that writes a file also writes ``<file>.manifest``, a sorted
``key=value`` record of the resolved parameters. Re-running with the same
manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from polyir import __version__
from polyir.corpus import TokenizerConfig, compute_stats, read_documents, tokenize
from polyir.embedding import TableEmbedder, ToyEmbedder, ToyEmbedderConfig, read_embeddings
from polyir.errors import PolyIRError
from polyir.evaluation import DEFAULT_KS, DEFAULT_MRR_CUTOFF, evaluate_run, write_run
from polyir.lexical import INDEX_MAGIC, Bm25Params, bm25_topk, build_inverted_index, load_index, save_index
from polyir.pipeline import MultimodalQuery, compose_multimodal_query, two_stage_search
from polyir.polydense import (
    CONTEXT_LENGTHS,
    DENSE_MAGIC,
    ScoreMode,
    TrainConfig,
    build_dense_index,
    dense_topk,
    embed_pairs,
    init_codebook,
    load_codebook,
    load_dense_index,
    save_codebook,
    save_dense_index,
    train_codebook,
)
from polyir.pretraingen import gen_etm_pairs, gen_rsm_pairs, read_pairs, write_pairs
from polyir.templateqg import EntityLexicon, build_template_bank, gen_qa_pairs, write_bank

log = logging.getLogger("polyir")

COMMANDS = ("index", "dense-index", "search", "two-stage", "gen-pretrain", "gen-questions", "train", "eval")


# -- shared option groups -----------------------------------------------------


def _tokenizer_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stopwords", type=Path, help="file with one stopword per line")
    p.add_argument("--min-token-len", type=int, default=1)


def _embedder_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=32, help="toy embedder dimension")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--embeddings", type=Path, help="PEMB token table; toy vectors cover missing tokens")


def _context_args(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--short", dest="context", action="store_const", const="short", help="128-token contexts (default)")
    group.add_argument("--long", dest="context", action="store_const", const="long", help="256-token contexts")
    p.set_defaults(context="short")


def _query_args(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="single query text")
    group.add_argument("--queries", type=Path, help='JSON-lines file with "qid", "question", optional "caption"')
    p.add_argument("--caption", default="", help="image caption appended to --query")
    p.add_argument("--qid", default="q1", help="query id for --query")


def _tokenizer(ns: argparse.Namespace) -> TokenizerConfig:
    stop: frozenset[str] = frozenset()
    if ns.stopwords:
        stop = frozenset(w.strip() for w in ns.stopwords.read_text(encoding="utf-8").split() if w.strip())
    return TokenizerConfig(stopwords=stop, min_token_len=ns.min_token_len)


def _embedder(ns: argparse.Namespace):
    toy = ToyEmbedder(ToyEmbedderConfig(dim=ns.dim, seed=ns.seed))
    if ns.embeddings:
        return TableEmbedder(dict(read_embeddings(ns.embeddings, expected_dim=ns.dim)), fallback=toy)
    return toy


def _queries(ns: argparse.Namespace) -> list[tuple[str, str]]:
    if ns.query is not None:
        return [(ns.qid, compose_multimodal_query(MultimodalQuery(ns.query, ns.caption)))]
    out = []
    with open(ns.queries, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "qid" not in rec or "question" not in rec:
                raise ValueError(f"{ns.queries}, line {line_no}: query record needs 'qid' and 'question'")
            mq = MultimodalQuery(rec["question"], rec.get("caption") or "")
            out.append((str(rec["qid"]), compose_multimodal_query(mq)))
    return out


def _write_manifest(out: Path, ns: argparse.Namespace) -> None:
    params = {k: v for k, v in vars(ns).items() if k not in ("func", "threads", "verbose")}
    params["tool"] = "polyir"
    params["version"] = __version__
    lines = []
    for key in sorted(params):
        value = params[key]
        lines.append(f"{key}={'' if value is None else value}")
    Path(f"{out}.manifest").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _magic(path: Path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)


# -- subcommands --------------------------------------------------------------


def cmd_index(ns: argparse.Namespace) -> None:
    docs = read_documents(ns.corpus)
    save_index(build_inverted_index(docs, _tokenizer(ns), ns.threads), ns.out)
    _write_manifest(ns.out, ns)
    log.info("indexed %d documents into %s", len(docs), ns.out)


def cmd_dense_index(ns: argparse.Namespace) -> None:
    docs = read_documents(ns.corpus)
    codebook = load_codebook(ns.codebook) if ns.codebook else init_codebook(ns.k, ns.dim, ns.seed)
    index = build_dense_index(
        docs, codebook, _embedder(ns), _tokenizer(ns), CONTEXT_LENGTHS[ns.context], ns.threads
    )
    save_dense_index(index, ns.out)
    if not ns.codebook:
        save_codebook(codebook, f"{ns.out}.pcbk")
    _write_manifest(ns.out, ns)


def _emit(ns: argparse.Namespace, runs, tag: str) -> None:
    if ns.out:
        write_run(ns.out, runs, tag)
        _write_manifest(ns.out, ns)
    else:
        write_run(sys.stdout, runs, tag)


def cmd_search(ns: argparse.Namespace) -> None:
    config = _tokenizer(ns)
    magic = _magic(ns.index)
    queries = _queries(ns)
    if magic == INDEX_MAGIC:
        index = load_index(ns.index)
        params = Bm25Params(ns.k1, ns.b)
        runs = [bm25_topk(tokenize(text, config), index, ns.k, params, qid) for qid, text in queries]
        _emit(ns, runs, "bm25")
    elif magic == DENSE_MAGIC:
        if not ns.codebook:
            raise ValueError("dense search needs --codebook")
        index = load_dense_index(ns.index)
        codebook = load_codebook(ns.codebook)
        embedder = _embedder(ns)
        runs = [
            dense_topk(text, index, codebook, embedder, ns.k, ns.mode, config, qid, ns.threads)
            for qid, text in queries
        ]
        _emit(ns, runs, f"dense-{ns.mode}")
    else:
        raise ValueError(f"{ns.index} is neither a lexical nor a dense index")


def cmd_two_stage(ns: argparse.Namespace) -> None:
    config = _tokenizer(ns)
    inv = load_index(ns.index)
    dense = load_dense_index(ns.dense)
    codebook = load_codebook(ns.codebook)
    embedder = _embedder(ns)
    params = Bm25Params(ns.k1, ns.b)
    runs = [
        two_stage_search(text, inv, dense, codebook, embedder, ns.n_coarse, ns.k, params, config, qid)
        for qid, text in _queries(ns)
    ]
    _emit(ns, runs, "two-stage")


def cmd_gen_pretrain(ns: argparse.Namespace) -> None:
    config = _tokenizer(ns)
    docs = read_documents(ns.corpus)
    stats = compute_stats(docs, config, ns.threads)
    generate = gen_etm_pairs if ns.task == "etm" else gen_rsm_pairs
    pairs = generate(docs, ns.m, stats, config, ns.threads)
    write_pairs(ns.out, pairs)
    _write_manifest(ns.out, ns)
    log.info("wrote %d %s pairs to %s", len(pairs), ns.task.upper(), ns.out)


def cmd_gen_questions(ns: argparse.Namespace) -> None:
    config = _tokenizer(ns)
    docs = read_documents(ns.corpus)
    stats = compute_stats(docs, config, ns.threads)
    lexicon = EntityLexicon.from_file(ns.lexicon)
    annotated = []
    with open(ns.questions, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                annotated.append((str(rec["qid"]), rec["question"]))
    bank = build_template_bank(annotated, lexicon, config)
    if ns.bank_out:
        write_bank(ns.bank_out, bank)
        _write_manifest(ns.bank_out, ns)
    write_pairs(ns.out, gen_qa_pairs(docs, bank, lexicon, stats, config))
    _write_manifest(ns.out, ns)


def cmd_train(ns: argparse.Namespace) -> None:
    config = _tokenizer(ns)
    records = read_pairs(ns.pairs)
    bodies = {d.doc_id: d.body for d in read_documents(ns.corpus)} if ns.corpus else {}
    token_pairs = []
    for rec in records:
        text = rec.get("positive_text")
        if text is None:
            if rec["positive_id"] not in bodies:
                raise ValueError(f"pair positive {rec['positive_id']!r} has no text; pass --corpus")
            text = bodies[rec["positive_id"]]
        token_pairs.append((tokenize(rec["query"], config), tokenize(text, config)))
    pairs = embed_pairs(token_pairs, _embedder(ns), CONTEXT_LENGTHS[ns.context])
    train_config = TrainConfig(
        n_codes=ns.k,
        learning_rate=ns.lr,
        epochs=ns.epochs,
        batch_size=ns.batch_size,
        seed=ns.seed,
        score_mode=ns.mode,
    )
    codebook, trace = train_codebook(pairs, train_config)
    save_codebook(codebook, ns.out)
    Path(f"{ns.out}.loss").write_text(
        "".join(f"{epoch} {loss!r}\n" for epoch, loss in enumerate(trace, start=1)), encoding="utf-8"
    )
    _write_manifest(ns.out, ns)


def cmd_eval(ns: argparse.Namespace) -> None:
    ks = sorted({int(k) for k in ns.ks.split(",") if k})
    report = evaluate_run(ns.run, ns.qrels, ks, ns.cutoff)
    text = report.to_text()
    if ns.out:
        Path(ns.out).write_text(text, encoding="utf-8")
        _write_manifest(ns.out, ns)
    else:
        sys.stdout.write(text)


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyir", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"polyir {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, default=1, help="worker bound; never changes outputs")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")

    p = sub.add_parser("index", help="build a BM25 inverted index")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _tokenizer_args(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("dense-index", help="encode a corpus into a multi-vector dense index")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--codebook", type=Path, help="trained code book; otherwise a seeded random one")
    p.add_argument("--k", type=int, default=4, help="number of codes when no --codebook is given")
    _tokenizer_args(p)
    _embedder_args(p)
    _context_args(p)
    p.set_defaults(func=cmd_dense_index)

    p = sub.add_parser("search", help="query a lexical or dense index")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--codebook", type=Path)
    p.add_argument("--mode", choices=[m.value for m in ScoreMode], default=ScoreMode.MAXPOOL.value)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--out", type=Path)
    _query_args(p)
    _tokenizer_args(p)
    _embedder_args(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("two-stage", help="BM25 candidates re-ranked by dense max-pool scores")
    p.add_argument("--index", type=Path, required=True, help="lexical index")
    p.add_argument("--dense", type=Path, required=True, help="dense index")
    p.add_argument("--codebook", type=Path, required=True)
    p.add_argument("--n-coarse", type=int, default=100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--out", type=Path)
    _query_args(p)
    _tokenizer_args(p)
    _embedder_args(p)
    p.set_defaults(func=cmd_two_stage)

    p = sub.add_parser("gen-pretrain", help="generate ETM or RSM pretraining pairs")
    p.add_argument("--task", choices=["etm", "rsm"], required=True)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _tokenizer_args(p)
    p.set_defaults(func=cmd_gen_pretrain)

    p = sub.add_parser("gen-questions", help="template-based question generation")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--questions", type=Path, required=True, help='annotated questions, JSON lines with "qid", "question"')
    p.add_argument("--lexicon", type=Path, required=True, help="surface<TAB>TYPE per line")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--bank-out", type=Path, help="also write the extracted template bank")
    _tokenizer_args(p)
    p.set_defaults(func=cmd_gen_questions)

    p = sub.add_parser("train", help="train a code book with in-batch negatives")
    p.add_argument("--pairs", type=Path, required=True)
    p.add_argument("--corpus", type=Path, help="resolves positive_id when pairs carry no positive_text")
    p.add_argument("--k", type=int, default=TrainConfig.n_codes)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--mode", choices=[m.value for m in ScoreMode], default=ScoreMode.QUERY_SPECIFIC.value)
    p.add_argument("--out", type=Path, default=Path("codebook.pcbk"))
    _tokenizer_args(p)
    _embedder_args(p)
    _context_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="MRR, P@k and R@k of a run file against qrels")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--ks", default=",".join(map(str, DEFAULT_KS)))
    p.add_argument("--cutoff", type=int, default=DEFAULT_MRR_CUTOFF)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        ns.func(ns)
    except (PolyIRError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"polyir {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


run = main


if __name__ == "__main__":
    sys.exit(main())
