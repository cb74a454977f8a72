"""Text ingestion: segmentation, vocabulary, padded hierarchical batches.

Documents are one per line, pre-tokenized by whitespace. A document is a
list of sentences; a sentence is a list of tokens closed by the _END
marker. Encoding packs a list of documents into a fixed [B x M x N] cube
of ids with PAD fill plus the masks and lengths the models consume.
"""

from __future__ import annotations

import sys
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusError

PAD, UNK, END = 0, 1, 2
PAD_TOKEN, UNK_TOKEN, END_TOKEN = "_PAD", "UNK", "_END"
RESERVED = (PAD_TOKEN, UNK_TOKEN, END_TOKEN)
SENTENCE_ENDERS = frozenset({".", "!", "?"})


class Vocabulary:
    """Token <-> id bijection with PAD = 0, UNK = 1, END = 2 reserved."""

    def __init__(self, tokens):
        self.id_to_token = list(RESERVED) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise CorpusError("vocabulary tokens are not unique")

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, token):
        return self.token_to_id.get(token, UNK)

    def decode(self, token_id):
        return self.id_to_token[token_id]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for i, t in enumerate(self.id_to_token):
                f.write(f"{t}\t{i}\n")

    @classmethod
    def load(cls, path):
        pairs = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, _, ident = line.rpartition("\t")
                pairs.append((token, int(ident)))
        if [i for _, i in pairs] != list(range(len(pairs))) or len(pairs) < len(RESERVED):
            raise CorpusError(f"{path}: vocabulary ids are not contiguous from 0")
        tokens = [t for t, _ in pairs]
        if tuple(tokens[:3]) != RESERVED:
            raise CorpusError(f"{path}: reserved ids 0-2 must be {RESERVED}")
        return cls(tokens[3:])


def segment(raw_line):
    """Split a whitespace-tokenized line into END-terminated sentences.

    Sentences break after the terminal punctuation tokens . ! ? (the
    punctuation stays as the sentence-final word); a trailing fragment
    becomes the last sentence. Returns None for a line with no tokens
    (callers skip it with a warning).
    """
    tokens = raw_line.split()
    if not tokens:
        return None
    sentences = []
    current = []
    for tok in tokens:
        current.append(tok)
        if tok in SENTENCE_ENDERS:
            sentences.append(current + [END_TOKEN])
            current = []
    if current:
        sentences.append(current + [END_TOKEN])
    return sentences


def build_vocab(lines, max_size=20000, min_freq=1):
    """Most-frequent tokens win; ties break lexicographically."""
    if max_size <= len(RESERVED):
        raise CorpusError(f"max_size must exceed {len(RESERVED)}")
    counts = Counter()
    for line in lines:
        counts.update(t for t in line.split() if t not in RESERVED)
    if not counts:
        raise CorpusError("no tokens: cannot build a vocabulary from an empty stream")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [t for t, c in ranked if c >= min_freq][: max_size - len(RESERVED)]
    return Vocabulary(kept)


@dataclass
class IngestReport:
    """Counters for silent fixes applied while reading a corpus."""

    docs_read: int = 0
    docs_skipped: int = 0
    sentences_dropped: int = 0
    words_truncated: int = 0

    def __str__(self):
        return (
            f"ingest: {self.docs_read} documents, {self.docs_skipped} skipped, "
            f"{self.sentences_dropped} sentences dropped, "
            f"{self.words_truncated} words truncated"
        )


@dataclass
class PaddedBatch:
    """Fixed-size [B x M x N] view of a document list.

    mask is 1.0 exactly on real tokens (END included); lengths hold the
    per-sentence token counts (END included, 0 for padding slots).
    """

    tokens: np.ndarray  # (B, M, N) int64
    sent_counts: np.ndarray  # (B,) int64
    lengths: np.ndarray  # (B, M) int64
    mask: np.ndarray  # (B, M, N) float32

    @property
    def size(self):
        return self.tokens.shape[0]

    def take(self, indices):
        return PaddedBatch(
            tokens=self.tokens[indices],
            sent_counts=self.sent_counts[indices],
            lengths=self.lengths[indices],
            mask=self.mask[indices],
        )


def encode_batch(paragraphs, vocab, m_max, n_max, report=None):
    """Pack segmented documents into a PaddedBatch, truncating to fit.

    Sentences beyond m_max are dropped; words beyond n_max - 1 are cut and
    END forced as the final token. Truncations are tallied on `report`.
    """
    if report is None:
        report = IngestReport()
    B = len(paragraphs)
    if B == 0:
        raise CorpusError("encode_batch: empty document list")
    tokens = np.zeros((B, m_max, n_max), dtype=np.int64)
    lengths = np.zeros((B, m_max), dtype=np.int64)
    sent_counts = np.zeros(B, dtype=np.int64)
    for b, sentences in enumerate(paragraphs):
        if not sentences:
            raise CorpusError(f"encode_batch: document {b} has no sentences")
        if len(sentences) > m_max:
            report.sentences_dropped += len(sentences) - m_max
            sentences = sentences[:m_max]
        sent_counts[b] = len(sentences)
        for m, sent in enumerate(sentences):
            ids = [vocab.encode(t) for t in sent]
            if len(ids) > n_max:
                report.words_truncated += len(ids) - n_max
                ids = ids[: n_max - 1] + [END]
            tokens[b, m, : len(ids)] = ids
            lengths[b, m] = len(ids)
    mask = (np.arange(n_max)[None, None, :] < lengths[:, :, None]).astype(np.float32)
    return PaddedBatch(tokens=tokens, sent_counts=sent_counts, lengths=lengths, mask=mask)


def read_documents(path, report=None):
    """Segment a one-document-per-line file, skipping blank lines."""
    if report is None:
        report = IngestReport()
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            sentences = segment(line)
            if sentences is None:
                report.docs_skipped += 1
                print(f"{path}:{lineno}: empty line skipped", file=sys.stderr)
                continue
            report.docs_read += 1
            docs.append(sentences)
    if not docs:
        raise CorpusError(f"{path}: no usable documents")
    return docs, report


@dataclass
class PairedExample:
    """A one-sentence condition (e.g. a title) and its target document."""

    condition: list = field(default_factory=list)  # [[tokens..., _END]]
    target: list = field(default_factory=list)


def load_paired(path):
    """Read tab-separated condition<TAB>target lines."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cond, tab, rest = line.partition("\t")
            target = segment(rest) if tab else None
            if not tab or not cond.split() or target is None:
                print(f"{path}:{lineno}: malformed paired line skipped", file=sys.stderr)
                continue
            out.append(PairedExample(condition=[cond.split() + [END_TOKEN]], target=target))
    if not out:
        raise CorpusError(f"{path}: no usable paired examples")
    return out


def split_heldout(n_docs, fraction, seed):
    """Seeded disjoint (train, heldout) index split; heldout gets the
    rounded fraction but never the whole corpus."""
    if not 0.0 <= fraction < 1.0:
        raise CorpusError(f"heldout fraction must be in [0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(n_docs)
    k = min(int(round(n_docs * fraction)), n_docs - 1)
    return np.sort(order[k:]), np.sort(order[:k])
