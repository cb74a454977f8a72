"""Command-line front end: corpus prep, training, scoring, and the
latent-space workbench (sampling, interpolation, attribute transfer,
condition->target generation, code export).

Every subcommand is reproducible from (checkpoint, flags, seed). Exit
codes: 0 success, 2 usage error (bad flags, missing files, requests the
checkpoint cannot satisfy), 1 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import corpus, metrics, trainer, workbench
from .errors import ConfigError, UsageError

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(trainer.ModelConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _write_lines(path, lines):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(line + "\n" for line in lines)
    else:
        for line in lines:
            print(line)


def _cast_override(key, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _CASTS[_FIELD_TYPES[key]](value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def _config_from_args(args):
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set wants key=value, got {item!r}")
        overrides[key.strip()] = _cast_override(key.strip(), value.strip())
    if args.variant:
        overrides["variant"] = args.variant
    if args.steps:
        overrides["max_steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return trainer.ModelConfig.from_file(args.config, overrides)
    return trainer.ModelConfig(**overrides)


def _load_checkpoint(args):
    """Model plus its vocabulary, resolved next to the checkpoint."""
    model = trainer.load_model(args.checkpoint)
    path = getattr(args, "vocab", None) or model.config.vocab_file
    if not path:
        raise UsageError(
            f"{args.checkpoint}: no vocabulary recorded; pass --vocab"
        )
    if not os.path.isabs(path):
        path = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), path)
    vocab = corpus.Vocabulary.load(path)
    if len(vocab) != model.config.vocab_size:
        raise UsageError(
            f"{path}: {len(vocab)} tokens, checkpoint expects {model.config.vocab_size}"
        )
    return model, vocab


def _encode_corpus(path, vocab, config):
    docs, report = corpus.read_documents(path)
    batch = corpus.encode_batch(docs, vocab, config.m_max, config.n_max)
    print(report, file=sys.stderr)
    return batch


def _paired_batches(path, vocab, config):
    """Condition and target batches from a tab-separated pair file."""
    pairs = corpus.load_paired(path)
    n_cond = min(config.n_max, max(len(p.condition[0]) for p in pairs))
    cond = corpus.encode_batch([p.condition for p in pairs], vocab, 1, n_cond)
    target = corpus.encode_batch(
        [p.target for p in pairs], vocab, config.m_max, config.n_max
    )
    return target, cond


# --------------------------------------------------------------- subcommands


def cmd_build_vocab(args):
    lines = []
    for path in args.corpus:
        lines.extend(_read_lines(path))
    vocab = corpus.build_vocab(lines, max_size=args.max_size, min_freq=args.min_freq)
    vocab.save(args.out)
    print(f"{len(vocab)} tokens -> {args.out}", file=sys.stderr)


def cmd_train(args):
    config = _config_from_args(args)
    if args.vocab:
        vocab = corpus.Vocabulary.load(args.vocab)
    elif config.vocab_file:
        vocab = corpus.Vocabulary.load(config.vocab_file)
    else:
        print("no vocabulary given; building one from the corpus", file=sys.stderr)
        vocab = corpus.build_vocab(_read_lines(args.corpus))
    os.makedirs(args.out, exist_ok=True)
    vocab.save(os.path.join(args.out, "vocab.tsv"))
    config = config.replace(vocab_size=len(vocab), vocab_file="vocab.tsv")
    if config.paired:
        batch, cond = _paired_batches(args.corpus, vocab, config)
    else:
        batch, cond = _encode_corpus(args.corpus, vocab, config), None
    state = trainer.train(config, batch, out_dir=args.out, cond=cond)
    print(state.final_report, file=sys.stderr)


def cmd_eval(args):
    model, vocab = _load_checkpoint(args)
    if model.config.paired:
        batch, cond = _paired_batches(args.corpus, vocab, model.config)
    else:
        batch, cond = _encode_corpus(args.corpus, vocab, model.config), None
    print(trainer.evaluate(model, batch, seed=args.seed, cond=cond))


def cmd_metrics(args):
    samples = [line.split() for line in _read_lines(args.samples)]
    references = (
        [line.split() for line in _read_lines(args.references)]
        if args.references
        else None
    )
    report = metrics.metric_report(samples, references)
    _write_lines(args.out, [f"{name}\t{value:.6f}" for name, value in report.items()])


def cmd_sample(args):
    model, vocab = _load_checkpoint(args)
    texts = workbench.sample_unconditional(
        model, vocab, args.count, args.seed, args.sentences, args.max_words
    )
    _write_lines(args.out, texts)


def cmd_interpolate(args):
    model, vocab = _load_checkpoint(args)
    texts = workbench.interpolate(
        model, vocab, args.seed_a, args.seed_b, args.steps,
        args.sentences, args.max_words,
    )
    _write_lines(args.out, texts)


def cmd_transfer(args):
    model, vocab = _load_checkpoint(args)
    pos = workbench.encode_texts(_read_lines(args.positive), vocab, model.config)
    neg = workbench.encode_texts(_read_lines(args.negative), vocab, model.config)
    attribute = workbench.attribute_vector(
        model, pos, neg, stochastic=args.stochastic_codes, seed=args.seed
    )
    texts = [
        workbench.attribute_transfer(
            model, vocab, line, attribute, args.sentences, args.max_words
        )
        for line in _read_lines(args.texts)
    ]
    _write_lines(args.out, texts)


def cmd_generate(args):
    model, vocab = _load_checkpoint(args)
    titles = [args.title] if args.title else _read_lines(args.titles)
    texts = [
        workbench.conditional_generate(
            model, vocab, title, sample=args.sample, seed=args.seed,
            m_gen=args.sentences, n_words=args.max_words,
        )
        for title in titles
    ]
    _write_lines(args.out, texts)


def cmd_export_latents(args):
    model, vocab = _load_checkpoint(args)
    lines = _read_lines(args.corpus)
    labels = None
    if args.labeled:
        labels, texts = [], []
        for line in lines:
            label, sep, text = line.partition("\t")
            if not sep:
                raise UsageError(f"--labeled wants label<TAB>text lines, got {line!r}")
            labels.append(label)
            texts.append(text)
        lines = texts
    batch = workbench.encode_texts(lines, vocab, model.config)
    workbench.export_latents(model, batch, labels, args.out)
    print(f"{batch.size} rows -> {args.out}", file=sys.stderr)


# -------------------------------------------------------------------- parser


def _add_checkpoint_flags(sub, caps=True):
    sub.add_argument("--checkpoint", required=True, help="model checkpoint (.mlv1)")
    sub.add_argument("--vocab", help="vocabulary file (default: recorded in the run)")
    if caps:
        sub.add_argument("--sentences", type=_positive,
                         help="sentence cap per generated paragraph")
        sub.add_argument("--max-words", type=_positive,
                         help="word cap per generated sentence")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mlvae",
        description="Multi-level text VAE: training, scoring, latent workbench.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("build-vocab", help="count tokens and write a vocabulary")
    p.add_argument("corpus", nargs="+", help="text files, one document per line")
    p.add_argument("--out", required=True)
    p.add_argument("--max-size", type=_positive, default=20000)
    p.add_argument("--min-freq", type=_positive, default=1)
    p.set_defaults(func=cmd_build_vocab)

    p = subs.add_parser("train", help="optimize a fresh model on a corpus")
    p.add_argument("corpus", help="training documents (condition<TAB>target when paired)")
    p.add_argument("--out", required=True, help="run directory for checkpoints and logs")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--vocab", help="vocabulary file (default: build from the corpus)")
    p.add_argument("--variant", choices=trainer.VARIANTS)
    p.add_argument("--steps", type=_positive, help="override max_steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config field (repeatable)")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="score a checkpoint on a corpus")
    p.add_argument("corpus")
    _add_checkpoint_flags(p, caps=False)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("metrics", help="diversity/overlap panel for a sample file")
    p.add_argument("samples", help="one text per line")
    p.add_argument("--references", help="reference texts for corpus BLEU")
    p.add_argument("--out", help="write name<TAB>value lines here instead of stdout")
    p.set_defaults(func=cmd_metrics)

    p = subs.add_parser("sample", help="decode prior draws to paragraphs")
    _add_checkpoint_flags(p)
    p.add_argument("--count", type=_positive, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file, one paragraph per line (default stdout)")
    p.set_defaults(func=cmd_sample)

    p = subs.add_parser("interpolate", help="decode the path between two prior samples")
    _add_checkpoint_flags(p)
    p.add_argument("--seed-a", type=int, default=0)
    p.add_argument("--seed-b", type=int, default=1)
    p.add_argument("--steps", type=_positive, default=8,
                   help="intermediate points between the endpoints")
    p.add_argument("--out")
    p.set_defaults(func=cmd_interpolate)

    p = subs.add_parser("transfer", help="move texts along a class-difference vector")
    p.add_argument("texts", help="texts to rewrite, one per line")
    _add_checkpoint_flags(p)
    p.add_argument("--positive", required=True, help="positive-class documents")
    p.add_argument("--negative", required=True, help="negative-class documents")
    p.add_argument("--stochastic-codes", action="store_true",
                   help="sample codes instead of posterior means")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = subs.add_parser("generate", help="condition -> target generation (paired checkpoints)")
    _add_checkpoint_flags(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--title", help="one condition text")
    group.add_argument("--titles", help="file of condition texts, one per line")
    p.add_argument("--sample", action="store_true",
                   help="sample the code instead of using the posterior mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("export-latents", help="write posterior-mean codes as CSV")
    p.add_argument("corpus", help="documents (label<TAB>text with --labeled)")
    _add_checkpoint_flags(p, caps=False)
    p.add_argument("--labeled", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_latents)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (UsageError, ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
