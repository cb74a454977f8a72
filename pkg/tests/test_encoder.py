import numpy as np
import numpy.testing as npt
import pytest

from mlvae import corpus
from mlvae.encoder import HierEncoder
from mlvae.errors import PreconditionError
from mlvae.latent import kl_standard
from mlvae.nd import ParamStore, Tensor, grad_check, ops
from mlvae.nd.tensor import concat, reduce_sum, reshape, square


def make_enc(two_level, d_emb=3, sent_filters=2, para_filters=2, d_z=2, seed=0,
             sent_widths=(2, 3), para_widths=(2,)):
    store = ParamStore(dtype=np.float64)
    rng = np.random.default_rng(seed)
    enc = HierEncoder(
        store, d_emb, rng, two_level=two_level,
        sent_filters=sent_filters, para_filters=para_filters, d_z=d_z,
        sent_widths=sent_widths, para_widths=para_widths,
    )
    emb = store.weight("emb.W", (9, d_emb), rng)
    return store, enc, emb


def make_batch(docs, m_max, n_max):
    B = len(docs)
    tokens = np.zeros((B, m_max, n_max), dtype=np.int64)
    lengths = np.zeros((B, m_max), dtype=np.int64)
    counts = np.zeros(B, dtype=np.int64)
    for b, sents in enumerate(docs):
        counts[b] = len(sents)
        for m, s in enumerate(sents):
            tokens[b, m, : len(s)] = s
            lengths[b, m] = len(s)
    mask = (np.arange(n_max)[None, None, :] < lengths[:, :, None]).astype(np.float32)
    return corpus.PaddedBatch(tokens=tokens, sent_counts=counts, lengths=lengths, mask=mask)


# ------------------------------------------------------------ sentence level


def test_encode_sentence_matches_manual_convolution():
    store, enc, _ = make_enc(False, d_emb=2, sent_filters=1, sent_widths=(2,))
    W = enc.sent.filters[0][1]
    b = enc.sent.filters[0][2]
    W.data[...] = [[0.3, -0.2, 0.5, 0.1]]
    b.data[...] = [0.05]
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    out = enc.encode_sentence(Tensor(x), np.array([1.0, 1.0]))
    # one width-2 window over two tokens: relu(w . [x0; x1] + b)
    expected = max(0.3 * 1 - 0.2 * 2 + 0.5 * 0.5 + 0.1 * -1 + 0.05, 0.0)
    npt.assert_allclose(out.data, [expected], rtol=1e-15)


def test_encode_sentence_rejects_fully_masked_input():
    store, enc, _ = make_enc(False)
    with pytest.raises(PreconditionError):
        enc.encode_sentence(Tensor(np.zeros((4, 3))), np.zeros(4))


def test_encode_paragraph_single_sentence_and_count_precondition():
    store, enc, _ = make_enc(False)
    sv = Tensor(np.random.default_rng(0).normal(size=(1, enc.d_s)))
    out = enc.encode_paragraph(sv, 1)
    assert out.data.shape == (enc.d_f,)
    with pytest.raises(PreconditionError):
        enc.encode_paragraph(sv, 0)


def test_encode_paragraph_order_sensitive_but_pad_insensitive():
    store, enc, _ = make_enc(False, seed=5)
    rng = np.random.default_rng(1)
    sv = rng.normal(size=(3, enc.d_s))
    base = enc.encode_paragraph(Tensor(sv), 3).data
    swapped = enc.encode_paragraph(Tensor(sv[[1, 0, 2]]), 3).data
    assert not np.allclose(base, swapped)  # width-2 windows see order
    padded = sv.copy()
    padded[2] = 999.0  # only the first two rows are real
    two_a = enc.encode_paragraph(Tensor(sv), 2).data
    two_b = enc.encode_paragraph(Tensor(padded), 2).data
    npt.assert_array_equal(two_a, two_b)


# ------------------------------------------------------------ posterior heads


def test_posterior_single_zero_heads_and_clamp():
    store, enc, _ = make_enc(False)
    enc.q_mean.W.data[...] = 0.0
    enc.q_mean.b.data[...] = 0.0
    enc.q_logvar.W.data[...] = 0.0
    enc.q_logvar.b.data[...] = 0.0
    q = enc.posterior_single(Tensor(np.zeros(enc.d_f)))
    npt.assert_array_equal(q.mean.data, np.zeros(2))
    npt.assert_array_equal(q.log_var.data, np.zeros(2))
    enc.q_logvar.b.data[...] = [20.0, -20.0]
    q = enc.posterior_single(Tensor(np.zeros(enc.d_f)))
    npt.assert_array_equal(q.log_var.data, [8.0, -8.0])


def test_posterior_pair_zero_heads_give_standard_normal():
    store, enc, _ = make_enc(True)
    for name in store.names():
        if name.startswith("enc.q"):
            store[name].data[...] = 0.0
    q1, q2 = enc.posterior_pair(Tensor(np.ones(enc.d_f)))
    for q in (q1, q2):
        npt.assert_array_equal(q.mean.data, np.zeros(2))
        npt.assert_array_equal(q.log_var.data, np.zeros(2))


def test_posterior_pair_q1_independent_of_q2_path():
    store, enc, _ = make_enc(True, seed=7)
    feature = Tensor(np.random.default_rng(2).normal(size=enc.d_f))
    q1_before, q2_before = enc.posterior_pair(feature)
    enc.q2_h1.W.data[...] += 0.5
    enc.q2_mean.b.data[...] += 1.0
    q1_after, q2_after = enc.posterior_pair(feature)
    npt.assert_array_equal(q1_before.mean.data, q1_after.mean.data)
    npt.assert_array_equal(q1_before.log_var.data, q1_after.log_var.data)
    assert not np.allclose(q2_before.mean.data, q2_after.mean.data)


def test_shared_cnn_feeds_both_posteriors():
    store, enc, emb = make_enc(True, seed=9)
    rng = np.random.default_rng(109)
    for name in store.names():
        t = store[name]
        t.data[...] = rng.uniform(-0.6, 0.6, t.data.shape)
    batch = make_batch([[[3, 4, 5], [6, 7]]], m_max=2, n_max=4)
    cube = ops.embed(emb, batch.tokens)
    q1a, q2a = enc.posteriors(cube, batch.lengths, batch.sent_counts)
    enc.sent.filters[0][1].data[...] += 0.3  # sentence-level CNN weights
    cube = ops.embed(emb, batch.tokens)
    q1b, q2b = enc.posteriors(cube, batch.lengths, batch.sent_counts)
    assert not np.allclose(q1a.mean.data, q1b.mean.data)
    assert not np.allclose(q2a.mean.data, q2b.mean.data)


# ------------------------------------------------------------ batched path


def test_posteriors_invariant_to_pad_content():
    for two_level in (False, True):
        store, enc, emb = make_enc(two_level, seed=11)
        docs = [[[3, 4, 5], [6, 7]], [[8]]]
        batch = make_batch(docs, m_max=3, n_max=4)
        junk = corpus.PaddedBatch(
            tokens=batch.tokens.copy(), sent_counts=batch.sent_counts,
            lengths=batch.lengths, mask=batch.mask,
        )
        junk.tokens[junk.mask == 0] = 5  # rewrite every PAD position
        out_a = enc.posteriors(ops.embed(emb, batch.tokens), batch.lengths, batch.sent_counts)
        out_b = enc.posteriors(ops.embed(emb, junk.tokens), junk.lengths, junk.sent_counts)
        qs_a = out_a if two_level else (out_a,)
        qs_b = out_b if two_level else (out_b,)
        for qa, qb in zip(qs_a, qs_b):
            npt.assert_array_equal(qa.mean.data, qb.mean.data)
            npt.assert_array_equal(qa.log_var.data, qb.log_var.data)


def test_batched_posteriors_match_single_document_pipeline():
    store, enc, emb = make_enc(True, seed=13)
    docs = [[[3, 4, 5], [6, 7]], [[8]], [[4, 4], [5], [6, 7, 8]]]
    batch = make_batch(docs, m_max=3, n_max=4)
    q1, q2 = enc.posteriors(ops.embed(emb, batch.tokens), batch.lengths, batch.sent_counts)
    for b, sents in enumerate(docs):
        svs = []
        for m, s in enumerate(sents):
            row = ops.embed(emb, batch.tokens[b, m])
            sv = enc.encode_sentence(row, batch.mask[b, m])
            svs.append(reshape(sv, (1, enc.d_s)))
        feature = enc.encode_paragraph(concat(svs, axis=0), len(sents))
        s1, s2 = enc.posterior_pair(feature)
        npt.assert_allclose(q1.mean.data[b], s1.mean.data, rtol=1e-12, atol=1e-14)
        npt.assert_allclose(q2.log_var.data[b], s2.log_var.data, rtol=1e-12, atol=1e-14)


def test_log_var_outputs_always_clamped():
    store, enc, emb = make_enc(True, seed=15)
    enc.q1_logvar.b.data[...] = 100.0
    enc.q2_logvar.b.data[...] = -100.0
    batch = make_batch([[[3, 4]]], m_max=1, n_max=3)
    q1, q2 = enc.posteriors(ops.embed(emb, batch.tokens), batch.lengths, batch.sent_counts)
    assert np.all(q1.log_var.data == 8.0)
    assert np.all(q2.log_var.data == -8.0)


def test_encoder_gradients_pass_finite_differences():
    store, enc, emb = make_enc(True, seed=17)
    rng = np.random.default_rng(117)
    for name in store.names():
        t = store[name]
        t.data[...] = rng.uniform(-0.6, 0.6, t.data.shape)
    batch = make_batch([[[3, 4, 5], [6, 7]], [[8, 4]]], m_max=2, n_max=4)

    def build():
        q1, q2 = enc.posteriors(
            ops.embed(emb, batch.tokens), batch.lengths, batch.sent_counts
        )
        loss = reduce_sum(square(q1.mean)) + reduce_sum(square(q2.mean))
        return loss + reduce_sum(kl_standard(q1)) + reduce_sum(kl_standard(q2))

    report = grad_check(build, store, eps=1e-5, tol=1e-4)
    assert report.passed(), str(report)
