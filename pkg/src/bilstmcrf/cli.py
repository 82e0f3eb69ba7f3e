"""Command-line entry points: synth, embed-train, train, eval, tag."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .data import parse_conll, read_conll, synth_corpus, write_conll
from .evaluation import MetricsReport, extract_chunks, spans_to_tags
from .features import save_embeddings, train_skipgram
from .train import EpochLog, evaluate, load_model, predict, train

logger = logging.getLogger("bilstmcrf")


def cmd_synth(seed: int, sentences: int, out) -> None:
    write_conll(synth_corpus(seed, sentences), out)


def cmd_embed_train(corpus_path, dim: int, epochs: int, seed: int, out_path, window: int = 2,
                    negatives: int = 5, lr: float = 0.025) -> None:
    with open(corpus_path, encoding="utf-8") as fh:
        sentences = [line.split() for line in fh if line.strip()]
    if not sentences:
        raise ValueError(f"{corpus_path}: corpus is empty")
    table = train_skipgram(sentences, dim, epochs, np.random.default_rng(seed), window=window,
                           negatives=negatives, lr=lr)
    save_embeddings(table, out_path)


def cmd_train(config: Config, log_path=None):
    if not config.train or not config.validation:
        raise ValueError("both train and validation corpora are required")
    train_corpus = read_conll(config.train)
    validation = read_conll(config.validation)
    ckpt = Path(config.checkpoint)
    log_path = Path(log_path) if log_path else ckpt.with_name(ckpt.name + ".log")
    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        for line in config.to_text().splitlines():
            log.write(f"# {line}\n")
        log.write("epoch\ttrain_loss\tvalidation_loss\tlr\n")

        def on_epoch(entry: EpochLog):
            log.write(entry.line() + "\n")
            log.flush()

        result = train(config, train_corpus, validation, checkpoint_path=ckpt, on_epoch=on_epoch)
        log.write(f"# best epoch {result.best_epoch} validation_loss {result.best_validation_loss!r}\n")
    return result


def cmd_eval(checkpoint, corpus_path) -> MetricsReport:
    model = load_model(checkpoint)
    return evaluate(model, read_conll(corpus_path))


def cmd_tag(checkpoint, text: str) -> str:
    """Replace (or add) the fourth column of every token line with a predicted tag."""
    corpus = parse_conll(text, allow_missing_ner=True)
    if not corpus.sentences:
        return text
    model = load_model(checkpoint)
    tags = [spans_to_tags(extract_chunks(p), len(p)) for p in predict(model, corpus)]
    flat = iter(t for sent in tags for t in sent)
    out = []
    for line in text.splitlines():
        if not line.strip():
            out.append(line)
            continue
        cols = line.split("\t")
        if len(cols) == 1 or any(not c for c in cols):
            cols = line.split()
        out.append("\t".join(cols[:3] + [next(flat)]))
    return "\n".join(out) + ("\n" if text.endswith("\n") else "")


def _config_args(parser: argparse.ArgumentParser) -> None:
    for f in fields(Config):
        parser.add_argument(f"--{f.name}", f"--{f.name.replace('_', '-')}", dest=f.name,
                            default=None, metavar=f.type.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilstmcrf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic 4-column corpus")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed-train", help="train skip-gram word vectors")
    p.add_argument("--corpus", required=True, help="one sentence per line, space-separated tokens")
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--config", dest="config_file")
    p.add_argument("--log")
    _config_args(p)

    p = sub.add_parser("eval", help="score a checkpoint on a labelled corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("tag", help="predict NER tags for a 3- or 4-column file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(args.seed, args.sentences, args.out)
        elif args.command == "embed-train":
            cmd_embed_train(args.corpus, args.dim, args.epochs, args.seed, args.out,
                            args.window, args.negatives, args.lr)
        elif args.command == "train":
            config = load_config(args.config_file) if args.config_file else Config()
            config.update({f.name: getattr(args, f.name) for f in fields(Config)
                           if getattr(args, f.name) is not None})
            result = cmd_train(config, args.log)
            print(f"best epoch {result.best_epoch}, validation loss {result.best_validation_loss:.6f}")
        elif args.command == "eval":
            report = cmd_eval(args.checkpoint, args.corpus)
            print(report.format())
            print("# counts " + report.to_json())
        elif args.command == "tag":
            with open(args.input, encoding="utf-8") as fh:
                tagged = cmd_tag(args.checkpoint, fh.read())
            if args.output == "-":
                sys.stdout.write(tagged)
            else:
                with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(tagged)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        if args.verbose:
            logger.exception("failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
