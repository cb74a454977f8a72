"""Hierarchical CNN inference network.

Embedded sentences go through a bank of sentence-level conv+maxpool
filters; the resulting sentence vectors feed a paragraph-level bank whose
pooled output is the paragraph feature. Linear heads on that feature give
the Gaussian posterior parameters: one pair for the single-latent models,
and for the two-level model a direct pair for z1 plus a two-layer ReLU
path for z2. The sentence/paragraph CNNs are shared by both paths.
"""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError
from .latent import LOG_VAR_RANGE, GaussianParams
from .nd import ops
from .nd.tensor import Tensor, clamp, relu, reshape

SENT_WIDTHS = (3, 4, 5)
PARA_WIDTHS = (2, 3)


class HierEncoder:
    """Sentence CNN -> paragraph CNN -> posterior heads (names "enc.*")."""

    def __init__(self, store, d_emb, rng, *, two_level,
                 sent_filters=64, para_filters=128, d_z=32,
                 sent_widths=SENT_WIDTHS, para_widths=PARA_WIDTHS):
        self.sent = ops.ConvMax(store, "enc.sent", d_emb, sent_widths, sent_filters, rng)
        self.d_s = self.sent.d_out
        self.para = ops.ConvMax(store, "enc.para", self.d_s, para_widths, para_filters, rng)
        self.d_f = self.para.d_out
        self.two_level = two_level
        if two_level:
            self.q1_mean = ops.Linear(store, "enc.q1.mean", self.d_f, d_z, rng)
            self.q1_logvar = ops.Linear(store, "enc.q1.logvar", self.d_f, d_z, rng)
            self.q2_h1 = ops.Linear(store, "enc.q2.h1", self.d_f, self.d_f, rng)
            self.q2_h2 = ops.Linear(store, "enc.q2.h2", self.d_f, self.d_f, rng)
            self.q2_mean = ops.Linear(store, "enc.q2.mean", self.d_f, d_z, rng)
            self.q2_logvar = ops.Linear(store, "enc.q2.logvar", self.d_f, d_z, rng)
        else:
            self.q_mean = ops.Linear(store, "enc.q.mean", self.d_f, d_z, rng)
            self.q_logvar = ops.Linear(store, "enc.q.logvar", self.d_f, d_z, rng)

    # -- spec-level single-item entry points

    def encode_sentence(self, embedded, mask):
        """Pool one embedded sentence (L, d_emb); mask marks real rows."""
        n = int(np.asarray(mask).sum())
        if n < 1:
            raise PreconditionError("encode_sentence: fully masked sentence")
        return self.sent(embedded, lengths=np.array([n]))

    def encode_paragraph(self, sentence_vectors, count):
        """Pool a (M, d_s) stack of sentence vectors down to the feature."""
        if count < 1:
            raise PreconditionError("encode_paragraph: no sentences")
        return self.para(sentence_vectors, lengths=np.array([int(count)]))

    def posterior_single(self, feature):
        return GaussianParams(
            self.q_mean(feature),
            clamp(self.q_logvar(feature), -LOG_VAR_RANGE, LOG_VAR_RANGE),
        )

    def posterior_pair(self, feature):
        q1 = GaussianParams(
            self.q1_mean(feature),
            clamp(self.q1_logvar(feature), -LOG_VAR_RANGE, LOG_VAR_RANGE),
        )
        h = relu(self.q2_h1(feature))
        h = relu(self.q2_h2(h))
        q2 = GaussianParams(
            self.q2_mean(h),
            clamp(self.q2_logvar(h), -LOG_VAR_RANGE, LOG_VAR_RANGE),
        )
        return q1, q2

    # -- batched path used by training and evaluation

    def feature_batch(self, emb_cube, lengths, sent_counts):
        """(B, M, N, d_emb) embedded cube -> (B, d_f) paragraph features.

        lengths (B, M) may contain zeros for padding slots; those rows are
        pooled with a clamped length and zeroed by the sentence mask so
        neither values nor gradients leak out of real sentences.
        """
        B, M, N, D = emb_cube.data.shape
        flat = reshape(emb_cube, (B * M, N, D))
        clamped = np.maximum(lengths.reshape(-1), 1)
        sv = self.sent(flat, lengths=clamped)
        smask = (lengths.reshape(-1) > 0).astype(emb_cube.data.dtype)
        sv = sv * Tensor(smask[:, None])
        sv = reshape(sv, (B, M, self.d_s))
        return self.para(sv, lengths=np.maximum(sent_counts, 1))

    def posteriors(self, emb_cube, lengths, sent_counts):
        feature = self.feature_batch(emb_cube, lengths, sent_counts)
        if self.two_level:
            return self.posterior_pair(feature)
        return self.posterior_single(feature)
