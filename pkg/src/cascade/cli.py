"""Command-line interface: reproducible runs driven by a TOML config.

Commands: prepare, train-context, train, eval, predict, export-embeddings.
Every command prints a provenance line (config hash, seed, corpus hash).
Exit codes: 0 success, 1 contract error, 2 I/O error. ``CASCADE_LOG`` sets
the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import RunConfig, corpus_hash, dump_config, load_config
from .corpus import Vocabulary, build_entity_documents, build_vocabulary, load_comments
from .errors import CascadeError, MissingStageError
from .personality import load_essays

logger = logging.getLogger("cascade")

VOCAB_FILE = "vocab.txt"
USER_DOCS_FILE = "user_documents.txt"
FORUM_DOCS_FILE = "forum_documents.txt"
BANK_FILE = "context_bank.ckpt"
MODEL_FILE = "cascade_model.ckpt"
REPORT_FILE = "eval_report.json"
CONFIG_ECHO_FILE = "run_config.toml"


def _require(path: Path, run_first: str) -> Path:
    if not path.exists():
        raise MissingStageError(f"{path} not found; run `cascade {run_first}` first")
    return path


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_train(config: RunConfig):
    if not config.train:
        raise CascadeError("config has no [paths] train file")
    return load_comments(config.train)


def _provenance(config: RunConfig, corpus: str) -> None:
    # stderr so that the JSON/JSONL on stdout stays machine-readable
    print(f"provenance config={config.config_hash()} seed={config.seed} corpus={corpus}",
          file=sys.stderr)


def _write_document_file(path: Path, docs, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            words = " ".join(vocab.index_to_token[i] for i in doc.tokens)
            fh.write(f"{doc.entity_id}\t{words}\n")


def cmd_prepare(config: RunConfig) -> None:
    out = _out_dir(config)
    comments = _load_train(config)
    vocab = build_vocabulary((c.text for c in comments), config.min_count)
    vocab.save(out / VOCAB_FILE)
    user_docs = build_entity_documents(comments, vocab, key="user")
    forum_docs = build_entity_documents(comments, vocab, key="forum")
    _write_document_file(out / USER_DOCS_FILE, user_docs, vocab)
    _write_document_file(out / FORUM_DOCS_FILE, forum_docs, vocab)
    (out / CONFIG_ECHO_FILE).write_text(dump_config(config), encoding="utf-8")
    _provenance(config, corpus_hash([c.id for c in comments]))
    print(f"prepared vocabulary of {len(vocab)} tokens, {len(user_docs)} user documents, "
          f"{len(forum_docs)} forum documents in {out}")


def cmd_train_context(config: RunConfig) -> None:
    out = _out_dir(config)
    comments = _load_train(config)
    vocab = Vocabulary.load(_require(out / VOCAB_FILE, "prepare"))
    if not config.essays:
        raise CascadeError("config has no [paths] essays file")
    essays = load_essays(config.essays)
    bank = pipeline.build_context(comments, essays, config, vocab=vocab)
    bank.save(out / BANK_FILE)
    _provenance(config, bank.corpus_hash)
    print(f"context bank: {len(bank.users)} users ({bank.users.dim}-d, fusion={bank.fusion}), "
          f"{len(bank.forums)} forums ({bank.forums.dim}-d) -> {out / BANK_FILE}")


def cmd_train(config: RunConfig) -> None:
    out = _out_dir(config)
    comments = _load_train(config)
    vocab = Vocabulary.load(_require(out / VOCAB_FILE, "prepare"))
    bank = pipeline.ContextBank.load(_require(out / BANK_FILE, "train-context"))
    model, history = pipeline.train_cascade(bank, vocab, comments, config)
    model.save(out / MODEL_FILE)
    _provenance(config, bank.corpus_hash)
    best = min(h["holdout_loss"] for h in history)
    print(f"trained {len(history)} epochs, best holdout loss {best:.4f} bits "
          f"-> {out / MODEL_FILE}")


def cmd_eval(config: RunConfig) -> None:
    out = _out_dir(config)
    model = pipeline.CascadeModel.load(_require(out / MODEL_FILE, "train"))
    if not config.test:
        raise CascadeError("config has no [paths] test file")
    report = pipeline.evaluate(model, load_comments(config.test))
    _provenance(config, model.bank.corpus_hash)
    payload = json.dumps(report.to_json_dict(), indent=2)
    (out / REPORT_FILE).write_text(payload + "\n", encoding="utf-8")
    print(payload)


def cmd_predict(config: RunConfig, input_path: str, output_path: str | None) -> None:
    out = _out_dir(config)
    model = pipeline.CascadeModel.load(_require(out / MODEL_FILE, "train"))
    comments = load_comments(input_path)
    _provenance(config, model.bank.corpus_hash)
    sink = open(output_path, "w", encoding="utf-8") if output_path else sys.stdout
    try:
        for rec in comments:
            label, probs = pipeline.predict(model, rec)
            sink.write(json.dumps({"id": rec.id, "label": label,
                                   "p_sarcastic": probs[1]}) + "\n")
    finally:
        if output_path:
            sink.close()


def cmd_export_embeddings(config: RunConfig, which: str, output_path: str | None) -> None:
    out = _out_dir(config)
    bank = pipeline.ContextBank.load(_require(out / BANK_FILE, "train-context"))
    table = {"user": bank.users, "forum": bank.forums,
             "stylometric": bank.styl, "personality": bank.pers}[which]
    destination = Path(output_path) if output_path else out / f"{which}_embeddings.txt"
    table.save(destination)
    _provenance(config, bank.corpus_hash)
    print(f"wrote {len(table)} {which} vectors ({table.dim}-d) to {destination}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade",
        description="Contextual sarcasm detection: user/discourse context plus a content CNN.")
    parser.add_argument("--config", metavar="PATH", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int,
                        help="training threads (>1 is non-deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", help="build vocabulary and entity documents")
    sub.add_parser("train-context", help="train user embeddings and discourse vectors")
    sub.add_parser("train", help="train the hybrid classifier")
    sub.add_parser("eval", help="evaluate on the test split")
    predict = sub.add_parser("predict", help="label a JSONL file of comments")
    predict.add_argument("input", help="JSONL comments to classify")
    predict.add_argument("--output", help="write JSONL here instead of stdout")
    export = sub.add_parser("export-embeddings", help="dump a learned table as text")
    export.add_argument("--which", required=True,
                        choices=["user", "forum", "stylometric", "personality"])
    export.add_argument("--output", help="destination path")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("CASCADE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            config = replace(config, **overrides)
        if args.command == "prepare":
            cmd_prepare(config)
        elif args.command == "train-context":
            cmd_train_context(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "predict":
            cmd_predict(config, args.input, args.output)
        elif args.command == "export-embeddings":
            cmd_export_embeddings(config, args.which, args.output)
    except CascadeError as exc:
        logger.debug("contract error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
