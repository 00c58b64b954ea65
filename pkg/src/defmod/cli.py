"""Command-line entry point.

Subcommands: align, split, train, generate, score, inspect.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import tensor as T
from .bleu import format_bleu, score_files
from .config import ConfigError, load_config
from .data import (
    DatasetError,
    align_entries,
    build_vocab,
    entry_to_json,
    load_lexicon,
    parse_dataset,
    serialize_entries,
    split_dataset,
)
from .decoding import beam_decode, greedy_decode, trace_generation
from .layers import load_pretrained_embeddings
from .models import build_model
from .training import TrainedModel, TrainingDiverged, train

log = logging.getLogger("defmod")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="defmod", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("align", help="build entries from definitions + sememe lexicons")
    p.add_argument("--definitions", required=True,
                   help="JSONL of {word, definition} records")
    p.add_argument("--lexicon", required=True, help="JSONL word -> sememe groups")
    p.add_argument("--token-lexicon", default=None,
                   help="lexicon for definition tokens (default: --lexicon)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="word-disjoint train/valid/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="18:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>.train/.valid/.test.jsonl")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--arch", choices=("baseline", "aam", "saam"), default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--valid", default=None)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--embeddings", default=None,
                   help="pretrained text embeddings; freezes the source table")
    p.add_argument("--log", default=None, help="loss log CSV (default <out>/loss.csv)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--no-position", action="store_true")
    p.add_argument("--no-adaptive", action="store_true")
    p.add_argument("--no-sememes", action="store_true")
    p.add_argument("--char-cnn", action="store_true")

    p = sub.add_parser("generate", help="generate definitions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True, help="JSONL of {word, sememes} records")
    p.add_argument("--beam", type=int, default=0, help="beam size (0 = greedy)")
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("score", help="corpus BLEU of candidate vs reference files")
    p.add_argument("--cand", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("inspect", help="emit per-step attention records as JSONL")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(message)s", level=logging.INFO)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (DatasetError, ConfigError, FileNotFoundError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cmd_align(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    token_lexicon = load_lexicon(args.token_lexicon) if args.token_lexicon else lexicon
    definitions = {}
    with open(args.definitions, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                word = obj["word"]
                definition = obj["definition"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise DatasetError(f"{args.definitions}:{lineno}: {exc}") from None
            tokens = definition.split() if isinstance(definition, str) else list(definition)
            definitions.setdefault(word, []).append(tokens)
    entries = align_entries(definitions, lexicon, token_lexicon)
    serialize_entries(entries, args.out)
    log.info("aligned %d entries -> %s", len(entries), args.out)
    return 0


def cmd_split(args) -> int:
    try:
        ratios = tuple(int(r) for r in args.ratios.split(":"))
    except ValueError:
        raise UsageError(f"bad --ratios {args.ratios!r}") from None
    if len(ratios) != 3:
        raise UsageError("--ratios needs three integers like 18:1:1")
    entries = parse_dataset(args.data)
    splits = split_dataset(entries, ratios=ratios, seed=args.seed)
    for name, split in zip(("train", "valid", "test"), splits):
        path = f"{args.out_prefix}.{name}.jsonl"
        serialize_entries(split, path)
        log.info("%s: %d entries", path, len(split))
    return 0


def cmd_train(args) -> int:
    overrides = {
        "arch": args.arch,
        "seed": args.seed,
        "epochs": args.epochs,
        "batch": args.batch,
        "lr": args.lr,
    }
    if args.no_position:
        overrides["use_position"] = False
    if args.no_adaptive:
        overrides["use_adaptive"] = False
    if args.no_sememes:
        overrides["use_sememes"] = False
    if args.char_cnn:
        overrides["use_char_cnn"] = True
    config = load_config(args.config, overrides)

    train_entries = parse_dataset(args.data)
    if not train_entries:
        raise DatasetError(f"no entries in {args.data}")
    valid_entries = parse_dataset(args.valid) if args.valid else None
    src_tokens = ([[e.word] for e in train_entries]
                  + [e.sememes for e in train_entries])
    src_vocab = build_vocab(src_tokens, min_count=1)
    tgt_vocab = build_vocab([e.definition for e in train_entries],
                            min_count=config.min_count)
    char_vocab = (build_vocab([list(e.word) for e in train_entries], min_count=1)
                  if config.use_char_cnn else None)

    src_matrix = None
    freeze = False
    if args.embeddings:
        src_matrix, _ = load_pretrained_embeddings(
            args.embeddings, src_vocab.id_to_token, config.d_model)
        freeze = True

    rng = np.random.default_rng(config.seed)
    model = build_model(config, len(src_vocab), len(tgt_vocab),
                        len(char_vocab) if char_vocab else 0, rng=rng,
                        src_matrix=src_matrix, freeze_embeddings=freeze)
    trained = TrainedModel(model=model, config=config, src_vocab=src_vocab,
                           tgt_vocab=tgt_vocab, char_vocab=char_vocab)

    log_path = args.log or f"{args.out.rstrip('/')}/loss.csv"
    import os
    os.makedirs(os.path.dirname(log_path) or ".", exist_ok=True)
    rows = []
    history = train(trained, train_entries, valid_entries, out_dir=args.out,
                    step_callback=lambda step, loss: rows.append((step, loss)))
    valid_at = dict(history.validations)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("step,train_loss,valid_loss\n")
        for step, loss in rows:
            v = valid_at.get(step)
            fh.write(f"{step},{loss:.6f},{'' if v is None else f'{v:.6f}'}\n")
    if valid_entries is None:
        trained.save(args.out)
    log.info("trained %d steps -> %s", len(rows), args.out)
    return 0


def _read_inputs(path):
    inputs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                inputs.append((obj["word"], list(obj.get("sememes", []))))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return inputs


def _encode_input(trained: TrainedModel, word, sememes):
    word_id = trained.src_vocab.encode(word)
    sememe_ids = trained.src_vocab.encode_all(sememes)
    char_ids = trained.char_vocab.encode_all(word) if trained.char_vocab else []
    return word_id, sememe_ids, char_ids


def cmd_generate(args) -> int:
    trained = TrainedModel.load(args.ckpt)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for word, sememes in _read_inputs(args.input):
            word_id, sememe_ids, char_ids = _encode_input(trained, word, sememes)
            if args.beam and args.beam > 1:
                tokens, _ = beam_decode(trained.model, word_id, sememe_ids, char_ids,
                                        beam=args.beam, max_len=args.max_len,
                                        length_norm=args.length_norm)
            else:
                tokens, _ = greedy_decode(trained.model, word_id, sememe_ids, char_ids,
                                          max_len=args.max_len)
            out.write(" ".join(trained.tgt_vocab.decode_all(tokens)) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_score(args) -> int:
    print(format_bleu(score_files(args.cand, args.ref)))
    return 0


def cmd_inspect(args) -> int:
    trained = TrainedModel.load(args.ckpt)
    if trained.config.arch == "baseline":
        raise UsageError("inspect needs an attention model (aam or saam)")
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for word, sememes in _read_inputs(args.input):
            word_id, sememe_ids, char_ids = _encode_input(trained, word, sememes)
            tokens, records = trace_generation(trained.model, word_id, sememe_ids,
                                               char_ids, max_len=args.max_len)
            token_strs = trained.tgt_vocab.decode_all(tokens)
            for rec in records:
                rec = dict(rec)
                rec["word"] = word
                if rec["t"] < len(token_strs):
                    rec["token"] = token_strs[rec["t"]]
                out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


_COMMANDS = {
    "align": cmd_align,
    "split": cmd_split,
    "train": cmd_train,
    "generate": cmd_generate,
    "score": cmd_score,
    "inspect": cmd_inspect,
}


if __name__ == "__main__":
    sys.exit(main())
