"""Latent-space experiments on a trained checkpoint.

Unconditional sampling, linear interpolation between prior samples,
attribute-vector arithmetic (class-mean difference of posterior codes),
condition->target generation for paired checkpoints, and posterior-code
export. Everything here is deterministic given (checkpoint, flags, seed);
generation is greedy and parameters are never modified.

All operations act on the bottom latent: for the two-variable hierarchy
that is z1, with z2 drawn first and z1 from the learned conditional prior.
"""

from __future__ import annotations

import numpy as np

from . import latent
from .corpus import END_TOKEN, encode_batch, segment
from .errors import UsageError
from .nd.tensor import Tensor

__all__ = [
    "sample_unconditional",
    "interpolation_codes",
    "interpolate",
    "attribute_vector",
    "attribute_transfer",
    "conditional_generate",
    "export_latents",
    "encode_texts",
    "decode_latent",
]


def _require_latent(model):
    if not model.has_latent:
        raise UsageError(
            f"{model.config.variant} checkpoint has no latent space; train a VAE variant"
        )


def encode_texts(lines, vocab, config):
    """Pack raw text lines into a PaddedBatch under the model's caps."""
    paragraphs = []
    for i, line in enumerate(lines):
        sentences = segment(line)
        if sentences is None:
            raise UsageError(f"text {i} is empty")
        paragraphs.append(sentences)
    return encode_batch(paragraphs, vocab, config.m_max, config.n_max)


def _bottom_posterior(model, batch):
    q = model.posteriors(batch)
    return q[0] if model.two_level else q


def _prior_codes(model, rng, k):
    """k samples of the bottom latent from the model's prior."""
    d = model.config.d_z
    if model.two_level:
        z2 = rng.standard_normal((k, d))
        p = model.prior(Tensor(np.asarray(z2, dtype=model.config.dtype)))
        return latent.sample(p, rng.standard_normal((k, d))).data.astype(np.float64)
    return rng.standard_normal((k, d))


def decode_latent(model, vocab, code, m_gen=None, n_words=None):
    """Greedy-decode one latent code to a paragraph string.

    Caps default to the checkpoint's recorded generation length (the
    training-corpus median sentence count, else m_max) and n_max words.
    """
    z = np.asarray(code, dtype=model.config.dtype)
    cfg = model.config
    if m_gen is None:
        m_gen = cfg.m_gen if cfg.m_gen >= 1 else cfg.m_max
    if n_words is None:
        n_words = cfg.n_max
    if cfg.variant.startswith("flat"):
        para = model.dec.decode_stream(z, m_gen, n_words, model.emb)
    else:
        para = model.dec.decode_paragraph(z, m_gen, n_words, model.emb)
    return " ".join(" ".join(vocab.decode(i) for i in sent) for sent in para.token_lists())


def sample_unconditional(model, vocab, count, seed, m_gen=None, n_words=None):
    """Decode `count` prior draws; same seed, same texts."""
    _require_latent(model)
    if count < 1:
        raise UsageError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return [
        decode_latent(model, vocab, z, m_gen, n_words)
        for z in _prior_codes(model, rng, count)
    ]


def interpolation_codes(a, b, steps):
    """steps+2 codes on the segment from a to b: a + t*(b-a), t = i/(steps+1)."""
    if steps < 1:
        raise UsageError(f"steps must be >= 1, got {steps}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.stack([a + (i / (steps + 1)) * (b - a) for i in range(steps + 2)])


def interpolate(model, vocab, seed_a, seed_b, steps, m_gen=None, n_words=None):
    """Decode the linear path between two prior samples, endpoints included."""
    _require_latent(model)
    a = _prior_codes(model, np.random.default_rng(seed_a), 1)[0]
    b = _prior_codes(model, np.random.default_rng(seed_b), 1)[0]
    return [
        decode_latent(model, vocab, z, m_gen, n_words)
        for z in interpolation_codes(a, b, steps)
    ]


def attribute_vector(model, pos_batch, neg_batch, stochastic=False, seed=0):
    """Difference of class-mean bottom-latent codes (positive minus negative).

    Codes are posterior means; `stochastic` draws one sample per document
    instead (higher-variance estimate).
    """
    _require_latent(model)
    if pos_batch.size == 0 or neg_batch.size == 0:
        raise UsageError("attribute_vector: both classes need at least one document")
    rng = np.random.default_rng(seed)

    def codes(batch):
        q = _bottom_posterior(model, batch)
        if stochastic:
            return latent.sample(q, rng.standard_normal(q.mean.data.shape)).data
        return q.mean.data

    return np.asarray(codes(pos_batch).mean(axis=0) - codes(neg_batch).mean(axis=0))


def attribute_transfer(model, vocab, text, attribute, m_gen=None, n_words=None):
    """Re-decode `text` after adding `attribute` to its posterior-mean code."""
    _require_latent(model)
    batch = encode_texts([text], vocab, model.config)
    code = _bottom_posterior(model, batch).mean.data[0] + np.asarray(attribute)
    return decode_latent(model, vocab, code, m_gen, n_words)


def conditional_generate(model, vocab, title, sample=False, seed=0, m_gen=None, n_words=None):
    """Generate a target text from a one-sentence condition.

    Uses the posterior mean of the condition by default; `sample` draws one
    code with the given seed instead.
    """
    if not model.config.paired:
        raise UsageError("checkpoint was not trained in paired condition->target mode")
    _require_latent(model)
    tokens = title.split()
    if not tokens:
        raise UsageError("empty condition text")
    cond = encode_batch([[tokens + [END_TOKEN]]], vocab, 1, len(tokens) + 1)
    q = _bottom_posterior(model, cond)
    if sample:
        rng = np.random.default_rng(seed)
        code = latent.sample(q, rng.standard_normal(q.mean.data.shape)).data[0]
    else:
        code = q.mean.data[0]
    return decode_latent(model, vocab, code, m_gen, n_words)


def export_latents(model, batch, labels, path):
    """Write one CSV row per document: label, then the posterior-mean code."""
    _require_latent(model)
    if labels is None:
        labels = [""] * batch.size
    if len(labels) != batch.size:
        raise UsageError(f"got {len(labels)} labels for {batch.size} documents")
    means = _bottom_posterior(model, batch).mean.data
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(labels, means):
            fh.write(",".join([str(label)] + [format(v, ".17g") for v in row]) + "\n")
