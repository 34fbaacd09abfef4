"""Command line entry point: ``divkey {train,extract,eval,inspect-graph,grad-check}``.

Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.
Progress goes to stderr; results go to stdout or the files named by flags.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import autodiff as ad
from .beam import ExtractionConfig, extract_keyphrases, format_extraction
from .corpus import (
    apply_config,
    ingest,
    ingest_record,
    load_checkpoint,
    load_config,
    load_jsonl,
    load_pretrained_embeddings,
    save_checkpoint,
)
from .errors import DivKeyError, EmptyDocument
from .graph import build_graph, format_edge_list
from .metrics import TfidfExtractor, evaluate_corpus
from .model import KeyphraseModel, ModelConfig, build_vocab
from .text import tokenize

log = logging.getLogger("divkey")

# flag dest -> (config key, type)
_TRAIN_FLAGS = {
    "batch_size": int,
    "lr_phase1": float,
    "lr_phase2": float,
    "phase1_steps": int,
    "clip": float,
    "max_epochs": int,
    "max_steps": int,
    "patience": int,
}
_MODEL_FLAGS = {"d_in": int, "d_h": int, "gcn_layers": int, "gru_layers": int, "max_doc_len": int}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker cap for per-document parallelism")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divkey", description="Graph-based diversified keyphrase extraction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a JSONL corpus")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log path (default: stderr)")
    p.add_argument("--embeddings", help="pretrained 'word v1 ... vd' vectors")
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--no-coverage", action="store_true")
    p.add_argument("--no-context", action="store_true")
    for name, kind in {**_TRAIN_FLAGS, **_MODEL_FLAGS}.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    _add_common(p)

    p = sub.add_parser("extract", help="extract ranked keyphrases")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="TSV path (default: stdout)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beam", type=int, default=100)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--top", type=int, default=10)
    _add_common(p)

    p = sub.add_parser("eval", help="score a model or the Tf-Idf baseline")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--baseline", choices=["tfidf"])
    p.add_argument("--input", required=True)
    p.add_argument("--df-corpus", help="JSONL corpus for Tf-Idf document frequencies (default: --input)")
    p.add_argument("--cutoffs", default="5,10")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beam", type=int, default=100)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--json", dest="json_out", help="also write the JSON report here")
    _add_common(p)

    p = sub.add_parser("inspect-graph", help="dump a document's word graph as an edge list")
    p.add_argument("--input", required=True)
    p.add_argument("--doc", type=int, default=0, help="0-based record index")
    _add_common(p)

    p = sub.add_parser("grad-check", help="finite-difference check of the full model gradient")
    p.add_argument("--dims", choices=["small"], default="small")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    _add_common(p)
    return parser


# -- subcommands -----------------------------------------------------------

def cmd_train(args) -> int:
    from .trainer import TrainConfig, new_model, train

    values = load_config(args.config) if args.config else {}
    mcfg = apply_config(ModelConfig(), values)
    tcfg = apply_config(TrainConfig(), values)
    tcfg.seed = args.seed
    for name in _TRAIN_FLAGS:
        if getattr(args, name) is not None:
            setattr(tcfg, name, getattr(args, name))
    for name in _MODEL_FLAGS:
        if getattr(args, name) is not None:
            setattr(mcfg, name, getattr(args, name))
    if args.no_coverage:
        mcfg.use_coverage = False
    if args.no_context:
        mcfg.use_context = False

    train_set = ingest(load_jsonl(args.train), "train", mcfg.max_doc_len)
    valid_set = ingest(load_jsonl(args.valid), "eval", mcfg.max_doc_len) if args.valid else None
    log.info("training on %d documents (%d dropped)", len(train_set), train_set.dropped_docs)

    embeddings = None
    if args.embeddings:
        vocab = build_vocab(d.doc.stems for d in train_set.documents)
        if vocab[0] != "<unk>":
            vocab = ["<unk>"] + vocab
        embeddings, stats = load_pretrained_embeddings(args.embeddings, vocab, np.random.default_rng(args.seed), mcfg.dtype)
        mcfg.d_in = embeddings.shape[1]
        log.info("pretrained vectors cover %.1f%% of stems", 100 * stats.hit_ratio)
    model = new_model(train_set, mcfg, seed=args.seed, embeddings=embeddings)
    model.freeze_embeddings = args.freeze_embeddings

    log_fh = open(args.log, "w", encoding="utf-8") if args.log else sys.stderr
    try:
        checkpoint, _ = train(tcfg, train_set, valid_set, model=model, log_stream=log_fh)
    finally:
        if args.log:
            log_fh.close()
    save_checkpoint(checkpoint, args.out)
    log.info("wrote %s (step %d)", args.out, checkpoint.step)
    return 0


def _extraction_config(args) -> ExtractionConfig:
    return ExtractionConfig(beam_width=args.beam, max_depth=args.depth, alpha=args.alpha, top_m=args.top)


def cmd_extract(args) -> int:
    model = load_checkpoint(args.model).model
    cfg = _extraction_config(args)
    records = load_jsonl(args.input)

    def run(rec):
        try:
            doc = tokenize(rec.text, max_length=model.config.max_doc_len)
        except EmptyDocument as exc:
            return f"{rec.doc_id}\tERROR\t{type(exc).__name__}: {exc}\n", False
        return format_extraction(rec.doc_id, extract_keyphrases(model, doc, cfg)), True

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(run, records))
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for text, ok in results:
            out.write(text)
    finally:
        if args.output:
            out.close()
    failed = sum(not ok for _, ok in results)
    if failed:
        log.warning("%d of %d documents could not be processed", failed, len(results))
    return 0


def cmd_eval(args) -> int:
    try:
        cutoffs = tuple(int(c) for c in args.cutoffs.split(",") if c.strip())
    except ValueError:
        raise SystemExit(_usage_error(f"bad --cutoffs {args.cutoffs!r}"))
    dataset = ingest(load_jsonl(args.input), "eval")
    if args.baseline:
        df_records = load_jsonl(args.df_corpus) if args.df_corpus else None
        if df_records is None:
            corpus = [d.doc for d in dataset.documents]
        else:
            corpus = []
            for rec in df_records:
                try:
                    corpus.append(tokenize(rec.text))
                except EmptyDocument:
                    continue
        extractor = TfidfExtractor(corpus, max_phrases=args.top)
    else:
        from .metrics import ModelExtractor

        extractor = ModelExtractor(load_checkpoint(args.model).model, _extraction_config(args))
    report = evaluate_corpus(extractor, dataset, cutoffs, threads=max(1, args.threads))
    sys.stdout.write(report.to_text())
    sys.stdout.write(report.to_json() + "\n")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def cmd_inspect_graph(args) -> int:
    records = load_jsonl(args.input)
    if not 0 <= args.doc < len(records):
        log.error("--doc %d out of range (0..%d)", args.doc, len(records) - 1)
        return 1
    graph = ingest_record(records[args.doc]).graph
    sys.stdout.write(format_edge_list(graph))
    return 0


def toy_grad_problem(seed: int = 0):
    """64-bit toy model (d_in 8, d_h 12, 2 GCN layers, 2 GRU layers) on a 6-node document.

    A second short document rides in the same batch. Batch norm pools nodes
    across the batch, so with a lone document the document vector collapses
    to the shift parameter and the readout weights get no gradient at all.
    """
    from .corpus import DatasetRecord
    from .trainer import TrainConfig, batch_loss

    item = ingest_record(
        DatasetRecord("toy", "graph pointer networks", "extract diverse graph keyphrases", ["graph pointer", "keyphrases"])
    )
    companion = ingest_record(DatasetRecord("toy-b", "sparse codes", "learn sparse codes fast", ["sparse codes"]))
    cfg = ModelConfig(d_in=8, d_h=12, gcn_layers=2, gru_layers=2, dtype="float64")
    model = KeyphraseModel(cfg, build_vocab([item.doc.stems, companion.doc.stems]), seed=seed)
    rng = np.random.default_rng(seed + 1)
    for p in model.parameters():  # move biases and BN affine off their trivial init
        p.data += 0.1 * rng.standard_normal(p.shape)

    no_dropout = TrainConfig(dropout_embed=0.0, dropout_gcn=0.0)

    def loss():
        return batch_loss(model, [item, companion], train=True, config=no_dropout)

    return model, item, loss


def cmd_grad_check(args) -> int:
    model, item, loss = toy_grad_problem(args.seed)
    log.info("toy document: %d nodes, %d gold phrases", item.graph.node_count, len(item.golds))
    if args.corrupt_backward:
        with ad.corrupted_backward():
            report = ad.grad_check(loss, model.parameters(), rng=np.random.default_rng(args.seed))
    else:
        report = ad.grad_check(loss, model.parameters(), rng=np.random.default_rng(args.seed))
    width = max(len(n) for n in report.per_param)
    for name, err in report.per_param.items():
        print(f"{name:<{width}}  {err:.3e}")
    print(f"max relative error {report.max_error:.3e}")
    return 0 if report.max_error < args.tolerance else 1


_COMMANDS = {
    "train": cmd_train,
    "extract": cmd_extract,
    "eval": cmd_eval,
    "inspect-graph": cmd_inspect_graph,
    "grad-check": cmd_grad_check,
}


def _usage_error(msg: str) -> int:
    print(f"divkey: error: {msg}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    np.random.seed(args.seed)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (DivKeyError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
