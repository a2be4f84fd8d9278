"""Command-line pipeline.

Subcommands: ``preprocess`` (normalize a treebank and build the tag set),
``train`` (fit a model, writing checkpoints and a history CSV), ``parse``
(bracketed trees for word/POS input, with optional model voting), ``eval``
(labeled-bracket scores), ``neighbors`` (phrase nearest neighbors), and
``dump-curves`` (plot a training history).

Exit codes: 0 success, 1 usage error, 2 data error. Every command that
produces an artifact writes a JSON manifest next to it with enough
information to reproduce the run.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .composer import compose_tree, dump_phrase_vectors, read_phrase_dump
from .ensemble_eval import (
    evalb_f1,
    format_report,
    nearest_phrases,
    per_length_csv,
    phrase_records,
    vote_parse,
)
from .errors import GreedyParseError
from .nncore import load_model, save_model
from .trainer import TrainConfig, train, write_history
from .treebank import parse_trees, preprocess, preprocess_corpus, read_trees, write_trees
from .vocab import build_tagset, load_pretrained_embeddings, load_tagset, save_tagset


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the convention here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _write_manifest(path: Path, command: str, config: dict, inputs: dict, outputs: dict) -> None:
    manifest = {
        "tool": "greedyparse",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_sentences(path: Path) -> list[tuple[list[str], list[str]]]:
    """word/POS tokens, one sentence per line; blank lines are skipped."""
    sentences = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        words, pos = [], []
        for token in line.split():
            word, sep, tag = token.rpartition("/")
            if not sep or not word or not tag:
                raise GreedyParseError(
                    f"{path}:{lineno}: token {token!r} is not of the form word/POS"
                )
            words.append(word)
            pos.append(tag)
        sentences.append((words, pos))
    return sentences


# ---------------------------------------------------------------------------
# subcommands


def _cmd_preprocess(args) -> int:
    trees = read_trees(args.treebank)
    if args.merged_labels:
        # dev/test splits apply the training run's counts, not their own
        stats = {}
        for lineno, line in enumerate(
            Path(args.merged_labels).read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            label, _, count = line.partition("\t")
            if not count:
                raise GreedyParseError(
                    f"{args.merged_labels}:{lineno}: expected 'label<TAB>count'"
                )
            stats[label] = int(count)
        processed = [preprocess(t, stats, args.merge_threshold) for t in trees]
        kept = {k: v for k, v in stats.items() if v >= args.merge_threshold}
    else:
        processed, kept = preprocess_corpus(trees, args.merge_threshold)
    tagset = build_tagset(processed, args.min_word_count)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trees(processed, out / "trees.mrg")
    save_tagset(tagset, out / "tagset.txt")
    with open(out / "merged_labels.txt", "w", encoding="utf-8") as handle:
        for label, count in sorted(kept.items()):
            handle.write(f"{label}\t{count}\n")
    _write_manifest(
        out / "manifest.json",
        "preprocess",
        {"merge_threshold": args.merge_threshold, "min_word_count": args.min_word_count},
        {"treebank": str(args.treebank),
         "merged_labels": str(args.merged_labels) if args.merged_labels else None},
        {
            "trees": str(out / "trees.mrg"),
            "tagset": str(out / "tagset.txt"),
            "merged_labels": str(out / "merged_labels.txt"),
        },
    )
    print(f"preprocessed {len(processed)} trees, kept {len(kept)} merged labels")
    return 0


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("expected D,T,H")
    d, t, h = (int(p) for p in parts)
    return d, t, h


def _cmd_train(args) -> int:
    train_trees = read_trees(args.train)
    dev_trees = read_trees(args.dev)
    tagset = load_tagset(args.tagset) if args.tagset else build_tagset(train_trees, args.min_word_count)
    dim_word, dim_tag, hidden = _parse_dims(args.dims)
    cfg = TrainConfig(
        dim_word=dim_word,
        dim_tag=dim_tag,
        hidden=hidden,
        window=args.window,
        max_arity=args.kmax,
        learning_rate=args.lr,
        p_drop=args.dropout,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        precision=args.precision,
        min_word_count=args.min_word_count,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    word_init = None
    if args.embeddings:
        word_init, report = load_pretrained_embeddings(args.embeddings, tagset, dim_word, rng)
        print(
            f"embeddings: loaded {report.loaded}, skipped {report.skipped}, "
            f"default-initialized {report.missing}",
            file=sys.stderr,
        )

    def checkpoint(params, epoch):
        save_model(params, out / f"model_epoch_{epoch:03d}.bin")

    result = train(train_trees, dev_trees, tagset, cfg, rng,
                   word_init=word_init, checkpoint=checkpoint)
    save_model(result.params, out / "model.bin")
    save_tagset(tagset, out / "tagset.txt")
    write_history(result.history, out / "history.csv")
    _write_manifest(
        out / "manifest.json",
        "train",
        {
            "dims": {"D": dim_word, "T": dim_tag, "H": hidden},
            "window": cfg.window,
            "kmax": cfg.max_arity,
            "lr": cfg.learning_rate,
            "dropout": cfg.p_drop,
            "epochs": cfg.max_epochs,
            "patience": cfg.patience,
            "seed": cfg.seed,
            "precision": cfg.precision,
        },
        {
            "train": str(args.train),
            "dev": str(args.dev),
            "tagset": str(args.tagset) if args.tagset else "(built from train)",
            "embeddings": str(args.embeddings) if args.embeddings else None,
        },
        {
            "model": str(out / "model.bin"),
            "tagset": str(out / "tagset.txt"),
            "history": str(out / "history.csv"),
        },
    )
    print(f"best dev F1 {100 * result.best_f1:.2f} at epoch {result.best_epoch}")
    return 0


def _cmd_parse(args) -> int:
    if len(args.model) > 1 and not args.vote:
        raise GreedyParseError("several models given; pass --vote to average them")
    models = [load_model(p) for p in args.model]
    tagset = load_tagset(args.tagset)
    sentences = _read_sentences(Path(args.input))
    started = time.perf_counter()
    if args.jobs > 1 and len(sentences) > 1:
        import multiprocessing

        with multiprocessing.Pool(
            args.jobs, initializer=_init_parse_worker, initargs=(models, tagset)
        ) as pool:
            lines = pool.map(_parse_worker, sentences)
    else:
        lines = [str(vote_parse(w, p, models, tagset)) for w, p in sentences]
    elapsed = time.perf_counter() - started
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _write_manifest(
            Path(args.out + ".manifest.json"),
            "parse",
            {"vote": args.vote, "jobs": args.jobs},
            {"models": [str(m) for m in args.model], "tagset": str(args.tagset),
             "input": str(args.input)},
            {"trees": str(args.out)},
        )
    else:
        sys.stdout.write(text)
    print(f"parsed {len(sentences)} sentences in {elapsed:.2f}s", file=sys.stderr)
    return 0


_PARSE_WORKER_STATE: dict = {}


def _init_parse_worker(models, tagset):
    _PARSE_WORKER_STATE["models"] = models
    _PARSE_WORKER_STATE["tagset"] = tagset


def _parse_worker(sentence):
    words, pos = sentence
    return str(vote_parse(words, pos, _PARSE_WORKER_STATE["models"],
                          _PARSE_WORKER_STATE["tagset"]))


def _cmd_eval(args) -> int:
    gold = read_trees(args.gold)
    pred = read_trees(args.pred)
    report = evalb_f1(gold, pred)
    print(format_report(report))
    if args.length_csv:
        Path(args.length_csv).write_text(per_length_csv(report), encoding="utf-8")
        _write_manifest(
            Path(args.length_csv + ".manifest.json"),
            "eval",
            {},
            {"gold": str(args.gold), "pred": str(args.pred)},
            {"length_csv": str(args.length_csv)},
        )
    return 0


def _cmd_neighbors(args) -> int:
    model = load_model(args.model)
    tagset = load_tagset(args.tagset)
    if args.from_dump:
        with open(args.from_dump, "rb") as handle:
            records = list(read_phrase_dump(handle, model.dim_word))
    else:
        corpus = read_trees(args.corpus)
        records = list(phrase_records(corpus, model, tagset))
    if args.save_dump:
        corpus = read_trees(args.corpus)
        with open(args.save_dump, "wb") as handle:
            count = dump_phrase_vectors(corpus, model, tagset, handle)
        _write_manifest(
            Path(args.save_dump + ".manifest.json"),
            "neighbors",
            {"k": args.k},
            {"model": str(args.model), "tagset": str(args.tagset), "corpus": str(args.corpus)},
            {"dump": str(args.save_dump), "records": count},
        )
    query = args.query.strip()
    if query.startswith("("):
        fragment = parse_trees(query)[0]
        query_text = str(fragment)
        query_vec = compose_tree(fragment, model, tagset, training=False).vec
    else:
        wanted = query.split()
        match = next(
            (
                (text, vec)
                for text, vec in records
                if parse_trees(text)[0].words() == wanted
            ),
            None,
        )
        if match is None:
            raise GreedyParseError(f"phrase {query!r} does not occur in the corpus")
        query_text, query_vec = match
    for text, dist in nearest_phrases(query_text, query_vec, records, args.k):
        print(f"{dist:.6f}\t{text}")
    return 0


def _cmd_dump_curves(args) -> int:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise GreedyParseError(
            "dump-curves needs matplotlib (pip install 'greedyparse[plots]')"
        ) from None
    fig, (ax_nll, ax_f1) = plt.subplots(1, 2, figsize=(10, 4))
    for history_path in args.history:
        epochs, nlls, f1s = [], [], []
        with open(history_path, "r", encoding="utf-8") as handle:
            next(handle)  # header
            for line in handle:
                epoch, nll, f1 = line.rstrip("\n").split(",")
                epochs.append(int(epoch))
                nlls.append(float(nll) if nll else float("nan"))
                f1s.append(float(f1))
        label = Path(history_path).stem
        ax_nll.plot(epochs, nlls, label=label)
        ax_f1.plot(epochs, f1s, label=label)
    ax_nll.set_xlabel("epoch")
    ax_nll.set_ylabel("train NLL")
    ax_f1.set_xlabel("epoch")
    ax_f1.set_ylabel("dev F1 (%)")
    ax_f1.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    _write_manifest(
        Path(args.out + ".manifest.json"),
        "dump-curves",
        {},
        {"history": [str(h) for h in args.history]},
        {"plot": str(args.out)},
    )
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="greedyparse", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"greedyparse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("preprocess", help="normalize a treebank and build the tag set")
    p.add_argument("treebank", help="bracketed treebank file")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--merge-threshold", type=int, default=30,
                   help="keep merged labels occurring at least this often (default 30)")
    p.add_argument("--min-word-count", type=int, default=1)
    p.add_argument("--merged-labels", default=None,
                   help="apply this training-run sidecar's counts instead of "
                        "counting the input (use for dev/test splits)")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train a model on preprocessed treebanks")
    p.add_argument("train", help="preprocessed training treebank")
    p.add_argument("dev", help="preprocessed development treebank")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--tagset", default=None, help="tag set file (default: build from train)")
    p.add_argument("--lr", type=float, default=0.15)
    p.add_argument("--dropout", type=float, default=0.25)
    p.add_argument("--dims", default="200,20,500", help="D,T,H (default 200,20,500)")
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--kmax", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--precision", choices=("float32", "float64"), default="float64")
    p.add_argument("--min-word-count", type=int, default=1)
    p.add_argument("--embeddings", default=None, help="pretrained word embedding text file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("parse", help="parse word/POS sentences into bracketed trees")
    p.add_argument("model", nargs="+", help="model file(s)")
    p.add_argument("--tagset", required=True)
    p.add_argument("--input", required=True, help="one sentence of word/POS tokens per line")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--vote", action="store_true", help="average scores over all models")
    p.add_argument("--jobs", type=int, default=1, help="parse sentences in parallel")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("eval", help="labeled-bracket precision/recall/F1")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--length-csv", default=None, help="write per-length F1 rows here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("neighbors", help="nearest phrases by representation distance")
    p.add_argument("corpus", nargs="?", default=None, help="preprocessed treebank to search")
    p.add_argument("query", help="bracketed fragment or plain phrase text")
    p.add_argument("--model", required=True)
    p.add_argument("--tagset", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--save-dump", default=None, help="also write the phrase-vector dump here")
    p.add_argument("--from-dump", default=None, help="read vectors from a dump instead of composing")
    p.set_defaults(func=_cmd_neighbors)

    p = sub.add_parser("dump-curves", help="plot train NLL and dev F1 from history CSVs")
    p.add_argument("history", nargs="+", help="history.csv file(s)")
    p.add_argument("--out", required=True, help="output image file")
    p.set_defaults(func=_cmd_dump_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "neighbors":
        if args.corpus is None and args.from_dump is None:
            parser.error("neighbors needs a corpus or --from-dump")
        if args.corpus is None and args.save_dump is not None:
            parser.error("--save-dump needs a corpus to compose")
    try:
        return args.func(args)
    except GreedyParseError as exc:
        print(f"greedyparse: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"greedyparse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
