"""Command-line entry point: ``itn <command> [options]``."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Sequence

from . import FORMAT_VERSION, __version__
from .core import Grammar, ITNError, Lexicon, SpokenWrittenPair
from .extract import PatternSet, default_patterns
from .labels import apply_labels, infer_labels_from_trace, infer_labels_search, read_label_file, write_label_file
from .metrics import EVALUATED_KINDS, accuracy, align_tokens, load_stopwords, ngram_overlap, top_ngrams
from .synth import DOMAINS, synth_corpus
from .tagger import FORMAT_VERSION as MODEL_FORMAT_VERSION
from .tagger import TaggerConfig, TaggerModel
from .tokenize import PieceVocab, build_vocab, protected_words
from .training import examples_from_pairs, make_example, pretrain_embeddings, tag, train
from .verbalize import AugmentConfig, AugmentStats, augment_corpus

log = logging.getLogger("itn")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


class _TabFormatter(logging.Formatter):
    def format(self, record):
        return f"{record.levelname.lower()}\t{record.getMessage()}"


def _setup_logging(level: str) -> None:
    root = logging.getLogger("itn")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_TabFormatter())
    root.addHandler(handler)
    root.setLevel(getattr(logging, level.upper()))
    root.propagate = False


# --------------------------------------------------------------------------
# helpers


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


@contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _lines(path: str) -> Iterator[str]:
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    try:
        for line in fh:
            yield line.rstrip("\n")
    finally:
        if fh is not sys.stdin:
            fh.close()


def read_pairs(path: str) -> Iterator[SpokenWrittenPair]:
    for lineno, line in enumerate(_lines(path), 1):
        if not line.strip():
            continue
        try:
            yield SpokenWrittenPair.from_json(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise ITNError(f"{path}:{lineno}: bad pair record ({exc})") from None


def _spoken_text(path: str) -> Iterator[str]:
    """Spoken lines from a pairs file or from plain text."""
    for line in _lines(path):
        if line.lstrip().startswith("{"):
            yield " ".join(json.loads(line)["spoken"])
        elif line.strip():
            yield line


def _resources(args):
    grammar = Grammar.load(args.grammar)
    lexicon = Lexicon.load(args.lexicon)
    return grammar, lexicon


def _labelled(pairs, lexicon, search_only=False):
    for p in pairs:
        if p.trace is not None and not search_only:
            yield p, infer_labels_from_trace(p, lexicon)
            continue
        rows = infer_labels_search(p.spoken, p.written, lexicon)
        if rows is None:
            log.warning("no label derivation for %r", p.written)
            continue
        yield p, rows


# --------------------------------------------------------------------------
# commands


def cmd_augment(args) -> int:
    grammar, _ = _resources(args)
    patterns = PatternSet.load(args.patterns) if args.patterns else default_patterns()
    config = AugmentConfig(args.n, args.cap, args.seed)
    stats = AugmentStats()
    with _open_out(args.out) as out:
        for pair in augment_corpus(_lines(args.input), config, grammar, patterns, stats, args.workers):
            out.write(json.dumps(pair.to_json(), ensure_ascii=False) + "\n")
    summary = stats.to_json()
    if stats.written_entities:
        summary["diversity"] = round(stats.spoken_forms / stats.written_entities, 4)
    log.info("augment: %s", json.dumps(summary, sort_keys=True))
    if args.stats:
        Path(args.stats).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_build_vocab(args) -> int:
    grammar, lexicon = _resources(args)
    corpus = itertools.chain.from_iterable(_spoken_text(p) for p in [args.corpus, *(args.extra or ())])
    vocab = build_vocab(corpus, protected_words(grammar, lexicon), args.size)
    vocab.save(args.out)
    log.info("vocabulary of %d pieces written to %s", len(vocab), args.out)
    return EXIT_OK


def cmd_infer_labels(args) -> int:
    lexicon = Lexicon.load(args.lexicon)
    with _open_out(args.out) as out:
        write_label_file(out, ((p.spoken, rows) for p, rows in
                               _labelled(read_pairs(args.pairs), lexicon, args.search)))
    return EXIT_OK


def cmd_apply_labels(args) -> int:
    lexicon = Lexicon.load(args.lexicon)
    with open(args.labels, encoding="utf-8") as fh, _open_out(args.out) as out:
        for tokens, rows in read_label_file(fh):
            out.write(apply_labels(tokens, rows, lexicon) + "\n")
    return EXIT_OK


def _model_config(args, vocab_size: int) -> TaggerConfig:
    return TaggerConfig(vocab_size=vocab_size, embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
                        layers=args.layers, head_hidden=args.head_hidden, learning_rate=args.learning_rate,
                        epochs=args.epochs, finetune_epochs=args.finetune_epochs,
                        batch_size=args.batch_size, patience=args.patience, seed=args.seed,
                        task_weights=tuple(float(w) for w in args.task_weights.split(",")))


def cmd_train(args) -> int:
    lexicon = Lexicon.load(args.lexicon)
    vocab = PieceVocab.load(args.vocab)
    cfg = _model_config(args, len(vocab))
    pre = examples_from_pairs(read_pairs(args.pretrain), vocab, lexicon) if args.pretrain else []
    fine = []
    if args.finetune:
        fine = [make_example(p.spoken, rows, vocab) for p, rows in _labelled(read_pairs(args.finetune), lexicon)]
    model = TaggerModel.initialize(cfg, vocab)
    if args.general:
        model.params["embed"][...] = pretrain_embeddings(_spoken_text(args.general), vocab, cfg.embed_dim,
                                                         epochs=args.lm_epochs, seed=args.seed)
    history = train(model, pre, fine, cfg)
    size = model.save(args.out)
    log.info("model with %d parameters written to %s (%d bytes)", model.n_params(), args.out, size)
    if args.history:
        Path(args.history).write_text(json.dumps(history, indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_tag(args) -> int:
    lexicon = Lexicon.load(args.lexicon)
    model = TaggerModel.load(args.model)
    flagged = 0
    labels_out = open(args.labels_out, "w", encoding="utf-8") if args.labels_out else None
    try:
        with _open_out(args.out) as out:
            for k, line in enumerate(_lines(args.input)):
                tokens = line.split()
                rows, written, flag = tag(model, tokens, lexicon)
                flagged += flag
                out.write(written + "\n")
                if labels_out:
                    if k:
                        labels_out.write("\n")
                    write_label_file(labels_out, [(tokens, rows)])
    finally:
        if labels_out:
            labels_out.close()
    if flagged:
        log.warning("%d sentences needed label repair", flagged)
    return EXIT_OK


def _evaluation(ref_path: str, hyp_path: str) -> dict:
    def aligned():
        for k, (r, h) in enumerate(itertools.zip_longest(_lines(ref_path), _lines(hyp_path)), 1):
            if r is None or h is None:
                raise ITNError(f"reference and hypothesis line counts differ from line {k}")
            yield align_tokens(r.split(), h.split())
    return accuracy(aligned(), EVALUATED_KINDS)


def cmd_evaluate(args) -> int:
    report = _evaluation(args.ref, args.hyp)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


_GRAM_NAMES = {1: "unigram", 2: "bigram"}


def cmd_analyze_overlap(args) -> int:
    stop = load_stopwords(args.stopwords)
    table = {}
    for n in (int(x) for x in args.n.split(",")):
        if n not in (1, 2):
            raise UsageError("--n takes 1, 2 or 1,2")
        top_a = set(top_ngrams(_lines(args.a), n, args.topk, stop))
        top_b = set(top_ngrams(_lines(args.b), n, args.topk, stop))
        table[_GRAM_NAMES[n]] = {
            "overlap_percent": round(ngram_overlap(_lines(args.a), _lines(args.b), n, args.topk, stop,
                                                   args.jaccard), 4),
            "shared": len(top_a & top_b), "top_a": len(top_a), "top_b": len(top_b),
        }
    text = json.dumps(table, indent=2, sort_keys=True) + "\n"
    with _open_out(args.out) as out:
        out.write(text)
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    if args.size <= 0:
        raise UsageError("--size must be positive")
    with _open_out(args.out) as out:
        for line in synth_corpus(args.domain, args.size, args.seed):
            out.write(line + "\n")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """augment -> vocab -> train -> tag -> evaluate over the configured corpora."""
    base = Path(args.config).resolve().parent if args.config else Path.cwd()
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    def data(name):
        p = Path(name)
        return str(p if p.is_absolute() else base / p)

    common = dict(grammar=args.grammar, lexicon=args.lexicon, seed=args.seed, log_level=args.log_level)
    steps = [
        ("augment", dict(input=data(args.source), out=str(work / "source.pairs.jsonl"), n=args.n, cap=args.cap,
                         patterns=None, workers=args.workers, stats=str(work / "source.stats.json"))),
        ("augment", dict(input=data(args.target_train), out=str(work / "target.pairs.jsonl"), n=1,
                         cap=args.cap, patterns=None, workers=1, stats=None)),
        ("augment", dict(input=data(args.target_test), out=str(work / "test.pairs.jsonl"), n=1,
                         cap=args.cap, patterns=None, workers=1, stats=None)),
        ("build-vocab", dict(corpus=str(work / "source.pairs.jsonl"), size=args.size,
                             extra=[str(work / "target.pairs.jsonl"), data(args.general)],
                             out=str(work / "vocab.tsv"))),
    ]
    for name, extra in steps:
        log.info("pipeline: %s", name)
        COMMANDS[name](argparse.Namespace(**common, **extra))

    test = list(read_pairs(str(work / "test.pairs.jsonl")))
    (work / "test.spoken.txt").write_text("".join(" ".join(p.spoken) + "\n" for p in test), encoding="utf-8")
    (work / "test.ref.txt").write_text("".join(p.written + "\n" for p in test), encoding="utf-8")

    train_args = dict(vars(args))
    train_args.update(pretrain=str(work / "source.pairs.jsonl"), finetune=str(work / "target.pairs.jsonl"),
                      vocab=str(work / "vocab.tsv"), out=str(work / "model.itnf"), general=data(args.general),
                      history=str(work / "history.json"))
    log.info("pipeline: train")
    cmd_train(argparse.Namespace(**train_args))
    log.info("pipeline: tag")
    cmd_tag(argparse.Namespace(model=str(work / "model.itnf"), input=str(work / "test.spoken.txt"),
                               out=str(work / "test.hyp.txt"), labels_out=None, lexicon=args.lexicon))
    log.info("pipeline: evaluate")
    report = {
        "evaluation": _evaluation(str(work / "test.ref.txt"), str(work / "test.hyp.txt")),
        "augment": json.loads((work / "source.stats.json").read_text(encoding="utf-8")),
        "model_bytes": (work / "model.itnf").stat().st_size,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (work / "report.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "augment": cmd_augment,
    "build-vocab": cmd_build_vocab,
    "infer-labels": cmd_infer_labels,
    "apply-labels": cmd_apply_labels,
    "train": cmd_train,
    "tag": cmd_tag,
    "evaluate": cmd_evaluate,
    "analyze-overlap": cmd_analyze_overlap,
    "synth-corpus": cmd_synth_corpus,
    "pipeline": cmd_pipeline,
}


# --------------------------------------------------------------------------
# argument parsing


def _add_resources(p):
    p.add_argument("--grammar", default=None, help="rewrite grammar file (default: shipped rules)")
    p.add_argument("--lexicon", default=None, help="lexicon TSV (default: shipped lexicon)")


def _add_model_flags(p):
    d = TaggerConfig()
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--hidden-dim", type=int, default=d.hidden_dim, help="both directions together")
    p.add_argument("--layers", type=int, default=d.layers)
    p.add_argument("--head-hidden", type=int, default=d.head_hidden)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--epochs", type=int, default=d.epochs, help="pretraining epochs")
    p.add_argument("--finetune-epochs", type=int, default=d.finetune_epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--task-weights", default="1,1,1,1,1")
    p.add_argument("--lm-epochs", type=int, default=3)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itn", description="Inverse text normalization toolkit")
    parser.add_argument("--version", action="store_true", help="print toolkit and format versions")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' file; flags override it")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("augment", parents=[common], help="expand written sentences into spoken/written pairs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--n", type=int, default=8, help="variants per sentence")
    p.add_argument("--cap", type=int, default=64, help="expansions per entity")
    p.add_argument("--patterns")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--stats")
    _add_resources(p)

    p = sub.add_parser("build-vocab", parents=[common], help="learn the piece vocabulary")
    p.add_argument("--corpus", required=True, help="pairs JSONL or spoken text")
    p.add_argument("--extra", action="append", help="more spoken text (repeatable)")
    p.add_argument("--size", type=int, default=4096)
    p.add_argument("--out", required=True)
    _add_resources(p)

    p = sub.add_parser("infer-labels", parents=[common], help="label file from pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out")
    p.add_argument("--search", action="store_true", help="ignore traces and search for derivations")
    _add_resources(p)

    p = sub.add_parser("apply-labels", parents=[common], help="written text from a label file")
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    _add_resources(p)

    p = sub.add_parser("train", parents=[common], help="train the tagger")
    p.add_argument("--pretrain", help="augmented source pairs JSONL")
    p.add_argument("--finetune", help="target pairs JSONL")
    p.add_argument("--general", help="general-domain spoken text for embedding pretraining")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    _add_model_flags(p)
    _add_resources(p)

    p = sub.add_parser("tag", parents=[common], help="convert spoken lines to written form")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--labels-out")
    _add_resources(p)

    p = sub.add_parser("evaluate", parents=[common], help="entity accuracy of hypotheses")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--report")

    p = sub.add_parser("analyze-overlap", parents=[common], help="n-gram vocabulary overlap of two corpora")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--n", default="1,2")
    p.add_argument("--topk", type=int, default=10000)
    p.add_argument("--stopwords")
    p.add_argument("--jaccard", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("synth-corpus", parents=[common], help="template corpus for one domain")
    p.add_argument("--domain", choices=DOMAINS, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out")

    p = sub.add_parser("pipeline", parents=[common], help="augment, vocab, train, tag and evaluate")
    p.add_argument("--source", required=True)
    p.add_argument("--target-train", required=True)
    p.add_argument("--target-test", required=True)
    p.add_argument("--general", required=True)
    p.add_argument("--workdir", default="itn-work")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--cap", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--size", type=int, default=4096, help="vocabulary size")
    _add_model_flags(p)
    _add_resources(p)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse argv with settings from ``--config`` acting as defaults."""
    command = next((a for a in argv if a in COMMANDS), None)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config = pre.parse_known_args(argv)[0].config
    if command and config:
        sub = parser._subparsers._group_actions[0].choices[command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in read_config(config).items():
            action = actions.get(key)
            if action is None or key in ("config", "help"):
                raise UsageError(f"{config}: unknown setting {key!r} for {command}")
            if action.nargs == 0:
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    defaults[key] = action.type(raw)
                except ValueError:
                    raise UsageError(f"{config}: bad value {raw!r} for {key}") from None
            else:
                defaults[key] = [raw] if isinstance(action, argparse._AppendAction) else raw
            if action.required:
                action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if args.version:
        print(f"itn {__version__} (pairs format {FORMAT_VERSION}, model format {MODEL_FORMAT_VERSION})")
        return EXIT_OK
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    _setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser._subparsers._group_actions[0].choices[args.command].print_help(sys.stderr)
        log.error("%s", exc)
        return EXIT_USAGE
    except (ITNError, ValueError, OSError, json.JSONDecodeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
