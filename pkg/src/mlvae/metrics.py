"""Diversity and quality measurements over generated text.

Corpus-level BLEU-n scores a candidate against a whole reference set:
geometric mean of modified k-gram precisions for k = 1..n with uniform
weights, no smoothing (any zero precision gives 0), and a brevity penalty
exp(min(0, 1 - r/c)) where r is the closest reference length (ties go to
the shorter length). Self-BLEU scores each sample against all the others.
unique_ngrams and ngram_entropy describe the pooled empirical n-gram
distribution; entropy is in nats.

sentiment_classifier trains a small word-CNN text classifier, used to
check latent attribute arithmetic.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .errors import PreconditionError
from .nd import ops
from .nd.optim import Adam, clip_global_norm
from .nd.params import ParamStore
from .nd.tensor import Tape, backward, reduce_mean


def _ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


class _RefTables:
    """Pooled reference n-gram counts, with leave-one-out support.

    For every gram we keep the largest per-reference count, its owner, and
    the runner-up, so clipping "against everyone but reference i" never
    needs a re-scan.
    """

    def __init__(self, references, n):
        self.lengths = [len(r) for r in references]
        self.tables = []
        for k in range(1, n + 1):
            table = {}
            for i, ref in enumerate(references):
                for g, m in Counter(_ngrams(ref, k)).items():
                    best, owner, second = table.get(g, (0, -1, 0))
                    if m > best:
                        table[g] = (m, i, best)
                    elif m > second:
                        table[g] = (best, owner, m)
            self.tables.append(table)

    def clip(self, k, gram, exclude):
        best, owner, second = self.tables[k - 1].get(gram, (0, -1, 0))
        return second if owner == exclude else best

    def closest_length(self, c, skip_one=None):
        """Reference length nearest to c (ties: shorter), optionally
        ignoring one occurrence of skip_one."""
        best = None
        skipped = False
        for rl in self.lengths:
            if not skipped and rl == skip_one:
                skipped = True
                continue
            if best is None or (abs(rl - c), rl) < (abs(best - c), best):
                best = rl
        return best


def _bleu(candidate, tables, n, exclude=-1, skip_len=None):
    c = len(candidate)
    r = tables.closest_length(c, skip_one=skip_len)
    log_p = 0.0
    for k in range(1, n + 1):
        cand = Counter(_ngrams(candidate, k))
        total = sum(cand.values())
        if total == 0:
            return 0.0
        clipped = sum(min(m, tables.clip(k, g, exclude)) for g, m in cand.items())
        if clipped == 0:
            return 0.0
        log_p += math.log(clipped / total)
    return math.exp(min(0.0, 1.0 - r / c)) * math.exp(log_p / n)


def _check_samples(samples, what):
    if not samples:
        raise PreconditionError(f"{what}: empty sample set")
    for s in samples:
        if not s:
            raise PreconditionError(f"{what}: empty text in sample set")


def bleu_n(candidate, references, n):
    """BLEU-n of one candidate against a reference set; in [0, 1]."""
    if n < 1:
        raise PreconditionError(f"bleu_n: order must be >= 1, got {n}")
    if not candidate:
        raise PreconditionError("bleu_n: empty candidate")
    _check_samples(references, "bleu_n references")
    return _bleu(list(candidate), _RefTables(references, n), n)


def corpus_bleu(samples, references, n):
    """Mean BLEU-n of each sample against the full reference set."""
    _check_samples(samples, "corpus_bleu samples")
    _check_samples(references, "corpus_bleu references")
    if n < 1:
        raise PreconditionError(f"corpus_bleu: order must be >= 1, got {n}")
    tables = _RefTables(references, n)
    return sum(_bleu(list(s), tables, n) for s in samples) / len(samples)


def self_bleu(samples, n):
    """Mean BLEU-n of each sample against all the others; lower = more diverse."""
    _check_samples(samples, "self_bleu")
    if len(samples) < 2:
        raise PreconditionError("self_bleu: need at least 2 samples")
    if n < 1:
        raise PreconditionError(f"self_bleu: order must be >= 1, got {n}")
    tables = _RefTables(samples, n)
    scores = [
        _bleu(list(s), tables, n, exclude=i, skip_len=len(s))
        for i, s in enumerate(samples)
    ]
    return sum(scores) / len(scores)


def _pooled_counts(samples, n, what):
    _check_samples(samples, what)
    if n < 1:
        raise PreconditionError(f"{what}: order must be >= 1, got {n}")
    counts = Counter()
    for s in samples:
        counts.update(_ngrams(list(s), n))
    if not counts:
        raise PreconditionError(f"{what}: no {n}-grams in the sample set")
    return counts


def unique_ngrams(samples, n):
    """Percentage of distinct n-gram types among all n-gram occurrences."""
    counts = _pooled_counts(samples, n, "unique_ngrams")
    return 100.0 * len(counts) / sum(counts.values())


def ngram_entropy(samples, n):
    """Entropy (nats) of the pooled empirical n-gram distribution."""
    counts = _pooled_counts(samples, n, "ngram_entropy")
    total = sum(counts.values())
    return -sum((m / total) * math.log(m / total) for m in counts.values())


def metric_report(samples, references=None, bleu_orders=(2, 3, 4), entropy_orders=(2,)):
    """Named scalar map of the standard diversity panel.

    B-n needs `references`; sB-n needs >= 2 samples; uniq-n/Etp-n orders
    with no n-grams in the pool are skipped rather than raised.
    """
    _check_samples(samples, "metric_report")
    report = {}
    if references is not None:
        for n in bleu_orders:
            report[f"B-{n}"] = corpus_bleu(samples, references, n)
    if len(samples) >= 2:
        for n in bleu_orders:
            report[f"sB-{n}"] = self_bleu(samples, n)
    for n in bleu_orders:
        if any(len(s) >= n for s in samples):
            report[f"uniq-{n}"] = unique_ngrams(samples, n)
    for n in entropy_orders:
        if any(len(s) >= n for s in samples):
            report[f"Etp-{n}"] = ngram_entropy(samples, n)
    return report


def sentiment_classifier(
    train,
    test,
    *,
    d_emb=16,
    n_filters=16,
    widths=(2, 3),
    steps=200,
    lr=0.05,
    batch_size=32,
    seed=0,
):
    """Train a word-CNN classifier on (tokens, label) pairs.

    Returns (classify, accuracy): classify maps a token sequence to a
    label, accuracy is measured on `test`. Deterministic for a fixed seed.
    """
    if not train or not test:
        raise PreconditionError("sentiment_classifier: empty train or test set")
    labels = sorted({lab for _, lab in train})
    if len(labels) < 2:
        raise PreconditionError(f"sentiment_classifier: need >= 2 labels, got {labels}")
    label_ix = {lab: i for i, lab in enumerate(labels)}
    vocab = {}
    for toks, _ in train:
        for t in toks:
            vocab.setdefault(t, len(vocab) + 1)  # 0 is the unknown/pad id

    rng = np.random.default_rng(seed)
    store = ParamStore(dtype=np.float64)
    emb = store.weight("clf.emb", (len(vocab) + 1, d_emb), rng)
    conv = ops.ConvMax(store, "clf.sent", d_emb, widths, n_filters, rng)
    head = ops.Linear(store, "clf.out", conv.d_out, len(labels), rng)
    adam = Adam(store, lr=lr)

    def pack(texts):
        L = max(max((len(t) for t in texts), default=1), max(widths), 1)
        ids = np.zeros((len(texts), L), dtype=np.int64)
        lengths = np.ones(len(texts), dtype=np.int64)
        for i, t in enumerate(texts):
            ids[i, : len(t)] = [vocab.get(tok, 0) for tok in t]
            lengths[i] = max(len(t), 1)
        return ids, lengths

    def logits(ids, lengths):
        return head(conv(ops.embed(emb, ids), lengths))

    ids, lengths = pack([toks for toks, _ in train])
    y = np.array([label_ix[lab] for _, lab in train], dtype=np.int64)
    for _ in range(steps):
        pick = rng.permutation(len(y))[:batch_size]
        with Tape():
            losses = ops.softmax_xent(logits(ids[pick], lengths[pick]), y[pick])
            backward(reduce_mean(losses))
        clip_global_norm(store, 5.0)
        adam.step()

    def classify(tokens):
        one_ids, one_len = pack([list(tokens)])
        return labels[int(np.argmax(logits(one_ids, one_len).data[0]))]

    correct = sum(classify(toks) == lab for toks, lab in test)
    return classify, correct / len(test)
