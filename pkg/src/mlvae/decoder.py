"""Generative networks: the plan-vector two-level decoder and the flat
baseline decoder, with teacher-forced losses and greedy decoding.

The two-level decoder runs a sentence LSTM whose hidden states (plan
vectors) each condition a word LSTM. In the latent variants the sentence
LSTM reads z at every step and starts from an MLP of z; in the ml-LM
variant it reads the previous sentence's final word hidden state and
starts from zeros. Word-level input is always [previous-token embedding;
plan vector]; position 0 uses a learned start embedding. The flat decoder
is one word LSTM over the concatenated paragraph, optionally initialized
from z.

Training losses are mask-weighted sums per document over a PaddedBatch;
generation is greedy argmax (ties to the lowest id, PAD excluded).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import END, PAD
from .errors import PreconditionError
from .nd import ops
from .nd.tensor import Tensor, concat, mul, reduce_sum, relu, reshape

STOP_END = "end"
STOP_LENGTH = "length"
ENDED_EMPTY = "empty_sentence"
ENDED_CAP = "sentence_cap"


@dataclass
class DecodedParagraph:
    sentences: list  # token-id lists, each ending with END unless cut
    stop_reasons: list  # per sentence: "end" | "length"
    ended_by: str  # "empty_sentence" | "sentence_cap"

    def token_lists(self, strip_end=True):
        if strip_end:
            return [[t for t in s if t != END] for s in self.sentences]
        return [list(s) for s in self.sentences]


def _start_rows(start, n):
    """Broadcast the learned start embedding to n rows with summed grads."""
    ones = Tensor(np.ones((n, 1), dtype=start.data.dtype))
    return mul(ones, reshape(start, (1, start.data.shape[0])))


def _last_set(mask):
    """Per row, one past the last masked position (0 for all-zero rows).

    The teacher-forced loop must run through every position the mask keeps,
    even when earlier positions are masked out (the mask need not be a
    prefix); for ordinary padded rows this is just the length.
    """
    has = mask > 0
    any_row = has.any(axis=1)
    last = mask.shape[1] - np.argmax(has[:, ::-1], axis=1)
    return np.where(any_row, last, 0).astype(np.int64)


class MultiLevelDecoder:
    """Sentence-level planner + word-level emitter ("dec.sent.*", "dec.word.*")."""

    def __init__(self, store, vocab_size, d_emb, d_plan, d_word, rng, z_dim=None):
        self.vocab_size = vocab_size
        self.d_emb = d_emb
        self.d_plan = d_plan
        self.d_word = d_word
        self.z_dim = z_dim
        if z_dim is not None:
            self.sent_init = ops.Linear(store, "dec.sent.init", z_dim, d_plan, rng)
            sent_in = z_dim
        else:
            self.sent_init = None
            sent_in = d_word
        self.sent_cell = ops.LSTMCell(store, "dec.sent.cell", sent_in, d_plan, rng)
        self.word_init = ops.Linear(store, "dec.word.init", d_plan, d_word, rng)
        self.word_cell = ops.LSTMCell(store, "dec.word.cell", d_emb + d_plan, d_word, rng)
        self.out = ops.Linear(store, "dec.word.out", d_word, vocab_size, rng)
        self.start = store.weight("dec.word.start", (d_emb,), rng)

    # -- sentence level

    def _sent_state(self, z):
        h = relu(self.sent_init(z))
        c = Tensor(np.zeros_like(h.data))
        return h, c

    def plan_vectors(self, z, m):
        """The m sentence-LSTM hidden states driven by z at every step."""
        if m < 1:
            raise PreconditionError(f"plan_vectors: need m >= 1, got {m}")
        h, c = self._sent_state(z)
        plans = []
        for _ in range(m):
            h, c = self.sent_cell.step(z, h, c)
            plans.append(h)
        return plans

    # -- word level

    def word_nll(self, plan, sentence, mask, emb_W):
        """Teacher-forced summed cross-entropy of one sentence (spec entry)."""
        sentence = np.asarray(sentence)
        if sentence.size == 0:
            raise PreconditionError("word_nll: empty sentence")
        plans = reshape(plan, (1, self.d_plan))
        losses, _ = self._word_rows(
            plans, sentence[None, :], np.asarray(mask, dtype=np.float64)[None, :], emb_W
        )
        return reshape(losses, ())

    def _word_rows(self, plans, rows, mask, emb_W, want_final=False):
        """Per-row summed NLL for (R, N) token rows under (R, d_plan) plans.

        mask zeroes padded positions. With want_final, also returns the
        hidden state at each row's last real step (zeros for empty rows).
        """
        R, N = rows.shape
        dtype = emb_W.data.dtype
        h = relu(self.word_init(plans))
        c = Tensor(np.zeros((R, self.d_word), dtype=dtype))
        total = Tensor(np.zeros(R, dtype=dtype))
        final = Tensor(np.zeros((R, self.d_word), dtype=dtype)) if want_final else None
        lengths = _last_set(mask)
        n_steps = int(lengths.max(initial=0))
        for i in range(n_steps):
            if i == 0:
                prev = _start_rows(self.start, R)
            else:
                prev = ops.embed(emb_W, rows[:, i - 1])
            x = concat([prev, plans], axis=1)
            h, c = self.word_cell.step(x, h, c)
            logits = self.out(h)
            step_loss = ops.softmax_xent(logits, rows[:, i])
            total = total + step_loss * Tensor(mask[:, i].astype(dtype))
            if want_final:
                ind = (lengths - 1 == i).astype(dtype)
                final = final + h * Tensor(ind[:, None])
        return total, final

    # -- paragraph level

    def batch_nll(self, z, batch, emb_W):
        """Per-document summed NLL (B,) for the latent variants; z is (B, d_z)."""
        B, M, N = batch.tokens.shape
        h, c = self._sent_state(z)
        plans = []
        for _ in range(M):
            h, c = self.sent_cell.step(z, h, c)
            plans.append(h)
        plans_flat = reshape(concat(plans, axis=1), (B * M, self.d_plan))
        rows = batch.tokens.reshape(B * M, N)
        mask = batch.mask.reshape(B * M, N)
        losses, _ = self._word_rows(plans_flat, rows, mask, emb_W)
        return reduce_sum(reshape(losses, (B, M)), axis=1)

    def batch_nll_lm(self, batch, emb_W):
        """Per-document summed NLL (B,) for ml-LM: sentence state chains
        through each sentence's final word hidden."""
        B, M, N = batch.tokens.shape
        dtype = emb_W.data.dtype
        h = Tensor(np.zeros((B, self.d_plan), dtype=dtype))
        c = Tensor(np.zeros((B, self.d_plan), dtype=dtype))
        prev_final = Tensor(np.zeros((B, self.d_word), dtype=dtype))
        total = Tensor(np.zeros(B, dtype=dtype))
        for t in range(M):
            h, c = self.sent_cell.step(prev_final, h, c)
            losses, prev_final = self._word_rows(
                h, batch.tokens[:, t, :], batch.mask[:, t, :], emb_W, want_final=True
            )
            total = total + losses
        return total

    def paragraph_nll(self, z, batch, emb_W):
        """Summed NLL of the first document of a PaddedBatch."""
        one = batch.take(np.array([0]))
        losses = self.batch_nll(reshape(z, (1, self.z_dim)), one, emb_W)
        return reshape(losses, ())

    # -- generation

    def _greedy_tokens(self, plan_data, n_max, emb_W):
        dtype = emb_W.data.dtype
        Wi = self.word_init.W.data
        bi = self.word_init.b.data
        h = np.maximum(plan_data @ Wi.T + bi, 0).astype(dtype)
        c = np.zeros_like(h)
        prev = self.start.data
        ids = []
        from .nd import kernels

        Wc = self.word_cell.W.data
        bc = self.word_cell.b.data
        d_in = self.d_emb + self.d_plan
        for i in range(n_max):
            x = np.concatenate([prev, plan_data])
            zrow = (x @ Wc[:, :d_in].T + h @ Wc[:, d_in:].T + bc)[None, :]
            h2, c2, _, _ = kernels.lstm_gates_forward(
                np.ascontiguousarray(zrow.astype(dtype)), c[None, :]
            )
            h, c = h2[0], c2[0]
            logits = h @ self.out.W.data.T + self.out.b.data
            logits[PAD] = -np.inf
            tid = int(np.argmax(logits))
            ids.append(tid)
            if tid == END:
                return ids, STOP_END, h
            prev = emb_W.data[tid]
        return ids, STOP_LENGTH, h

    def greedy_decode_sentence(self, plan, n_max, emb_W):
        """Greedy word decoding from one plan vector; stops at END or n_max."""
        if n_max < 1:
            raise PreconditionError("greedy_decode_sentence: n_max must be >= 1")
        data = plan.data if isinstance(plan, Tensor) else np.asarray(plan)
        ids, reason, _ = self._greedy_tokens(data, n_max, emb_W)
        return ids, reason

    def decode_paragraph(self, z, m_gen, n_max, emb_W):
        """Latent-variant generation: plan, decode, stop on an empty sentence."""
        if m_gen < 1:
            raise PreconditionError("decode_paragraph: m_gen must be >= 1")
        zd = z.data if isinstance(z, Tensor) else np.asarray(z)
        zt = Tensor(zd)
        h, c = self._sent_state(zt)
        sentences, reasons = [], []
        for _ in range(m_gen):
            h, c = self.sent_cell.step(zt, h, c)
            ids, reason, _ = self._greedy_tokens(h.data, n_max, emb_W)
            if ids == [END]:
                return DecodedParagraph(sentences, reasons, ENDED_EMPTY)
            sentences.append(ids)
            reasons.append(reason)
        return DecodedParagraph(sentences, reasons, ENDED_CAP)

    def decode_paragraph_lm(self, m_gen, n_max, emb_W):
        """ml-LM generation: the sentence state chains final word hiddens."""
        if m_gen < 1:
            raise PreconditionError("decode_paragraph_lm: m_gen must be >= 1")
        dtype = emb_W.data.dtype
        h = Tensor(np.zeros(self.d_plan, dtype=dtype))
        c = Tensor(np.zeros(self.d_plan, dtype=dtype))
        prev_final = Tensor(np.zeros(self.d_word, dtype=dtype))
        sentences, reasons = [], []
        for _ in range(m_gen):
            h, c = self.sent_cell.step(prev_final, h, c)
            ids, reason, final_h = self._greedy_tokens(h.data, n_max, emb_W)
            if ids == [END]:
                return DecodedParagraph(sentences, reasons, ENDED_EMPTY)
            sentences.append(ids)
            reasons.append(reason)
            prev_final = Tensor(final_h)
        return DecodedParagraph(sentences, reasons, ENDED_CAP)


class FlatDecoder:
    """One word LSTM over the whole paragraph stream ("dec.flat.*")."""

    def __init__(self, store, vocab_size, d_emb, d_hidden, rng, z_dim=None):
        self.vocab_size = vocab_size
        self.d_emb = d_emb
        self.d_hidden = d_hidden
        self.z_dim = z_dim
        self.init = (
            ops.Linear(store, "dec.flat.init", z_dim, d_hidden, rng)
            if z_dim is not None
            else None
        )
        self.cell = ops.LSTMCell(store, "dec.flat.cell", d_emb, d_hidden, rng)
        self.out = ops.Linear(store, "dec.flat.out", d_hidden, vocab_size, rng)
        self.start = store.weight("dec.flat.start", (d_emb,), rng)

    def _init_state(self, z, rows, dtype):
        if z is not None:
            if self.init is None:
                raise PreconditionError("flat decoder was built without a latent path")
            h = relu(self.init(z))
        else:
            h = Tensor(np.zeros((rows, self.d_hidden), dtype=dtype))
        c = Tensor(np.zeros((rows, self.d_hidden), dtype=dtype))
        return h, c

    def stream_nll(self, z, streams, mask, emb_W):
        """Per-document summed NLL (B,) over flattened token streams."""
        B, L = streams.shape
        dtype = emb_W.data.dtype
        h, c = self._init_state(z, B, dtype)
        total = Tensor(np.zeros(B, dtype=dtype))
        n_steps = int(_last_set(mask).max(initial=0))
        for i in range(n_steps):
            if i == 0:
                prev = _start_rows(self.start, B)
            else:
                prev = ops.embed(emb_W, streams[:, i - 1])
            h, c = self.cell.step(prev, h, c)
            step_loss = ops.softmax_xent(self.out(h), streams[:, i])
            total = total + step_loss * Tensor(mask[:, i].astype(dtype))
        return total

    def flat_nll(self, z, stream, emb_W):
        """Summed NLL of one nonempty token stream (spec entry point)."""
        stream = np.asarray(stream)
        if stream.size == 0:
            raise PreconditionError("flat_nll: empty stream")
        zt = None if z is None else reshape(z, (1, self.z_dim))
        losses = self.stream_nll(
            zt, stream[None, :], np.ones((1, stream.size), dtype=np.float64), emb_W
        )
        return reshape(losses, ())

    def decode_stream(self, z, m_gen, n_max, emb_W):
        """Greedy generation split into sentences at END tokens.

        Stops at m_gen sentences, an empty ([END]-only) sentence, or
        m_gen * n_max tokens total.
        """
        if m_gen < 1:
            raise PreconditionError("decode_stream: m_gen must be >= 1")
        from .nd import kernels

        dtype = emb_W.data.dtype
        if z is not None:
            zd = z.data if isinstance(z, Tensor) else np.asarray(z)
            h = np.maximum(zd @ self.init.W.data.T + self.init.b.data, 0).astype(dtype)
        else:
            h = np.zeros(self.d_hidden, dtype=dtype)
        c = np.zeros_like(h)
        prev = self.start.data
        Wc = self.cell.W.data
        bc = self.cell.b.data
        sentences, reasons = [], []
        current = []
        for _ in range(m_gen * n_max):
            zrow = (prev @ Wc[:, : self.d_emb].T + h @ Wc[:, self.d_emb :].T + bc)[None, :]
            h2, c2, _, _ = kernels.lstm_gates_forward(
                np.ascontiguousarray(zrow.astype(dtype)), c[None, :]
            )
            h, c = h2[0], c2[0]
            logits = h @ self.out.W.data.T + self.out.b.data
            logits[PAD] = -np.inf
            tid = int(np.argmax(logits))
            current.append(tid)
            prev = emb_W.data[tid]
            if tid == END:
                if current == [END]:
                    return DecodedParagraph(sentences, reasons, ENDED_EMPTY)
                sentences.append(current)
                reasons.append(STOP_END)
                current = []
                if len(sentences) == m_gen:
                    return DecodedParagraph(sentences, reasons, ENDED_CAP)
            elif len(current) == n_max:
                sentences.append(current)
                reasons.append(STOP_LENGTH)
                current = []
                if len(sentences) == m_gen:
                    return DecodedParagraph(sentences, reasons, ENDED_CAP)
        if current:
            sentences.append(current)
            reasons.append(STOP_LENGTH)
        return DecodedParagraph(sentences, reasons, ENDED_CAP)


def flatten_batch(batch):
    """Pack a PaddedBatch into left-aligned (B, L) streams plus a mask.

    Real tokens of each document (sentence ENDs kept) are concatenated in
    order; L is the longest stream in the batch.
    """
    B = batch.tokens.shape[0]
    per_doc = [batch.tokens[b][batch.mask[b] > 0] for b in range(B)]
    L = max(len(s) for s in per_doc)
    streams = np.zeros((B, L), dtype=np.int64)
    mask = np.zeros((B, L), dtype=np.float32)
    for b, s in enumerate(per_doc):
        streams[b, : len(s)] = s
        mask[b, : len(s)] = 1.0
    return streams, mask
