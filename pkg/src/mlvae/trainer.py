"""Model assembly, training, and evaluation for the five variants.

Variants: flat-LM and ml-LM are plain language models (flat and two-level
decoders); flat-VAE and ml-VAE-S add a single latent variable with a
standard-normal prior; ml-VAE-D uses the two-variable hierarchy with a
learned conditional prior, decoding from the bottom latent only.

The objective is mean-per-document [reconstruction NLL + beta * KL] with a
linear annealing ramp on beta. Evaluation reports exact NLL for the LM
variants and a single-sample upper bound for the others, with perplexity
normalized per real token (END counted, PAD not).
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from . import latent
from .corpus import split_heldout
from .decoder import FlatDecoder, MultiLevelDecoder, flatten_batch
from .encoder import HierEncoder
from .errors import ConfigError, CorpusError, NumericError
from .nd import checkpoint as ckpt
from .nd import ops
from .nd.optim import Adam, clip_global_norm
from .nd.params import ParamStore
from .nd.tensor import Tape, Tensor, backward, reduce_mean, scale

VARIANTS = ("flat-LM", "ml-LM", "flat-VAE", "ml-VAE-S", "ml-VAE-D")
LATENT_VARIANTS = ("flat-VAE", "ml-VAE-S", "ml-VAE-D")
LOG_COLUMNS = ("step", "recon", "kl", "beta", "ppl")


@dataclass
class ModelConfig:
    """Everything needed to rebuild a model and reproduce a run."""

    variant: str = "ml-VAE-D"
    vocab_size: int = 0
    vocab_file: str = ""
    d_emb: int = 128
    d_plan: int = 256
    d_word: int = 256
    d_z: int = 32
    sent_filters: int = 64
    para_filters: int = 128
    prior_hidden: int = 64
    m_max: int = 10
    n_max: int = 25
    m_gen: int = 0  # sentences per generated paragraph; 0: corpus median, set by train()
    batch_size: int = 32
    max_steps: int = 10000
    anneal_start: int = 0
    anneal_end: int = 10000
    lr: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0
    precision: str = "f32"
    eval_every: int = 500
    checkpoint_every: int = 5000
    heldout_fraction: float = 0.1
    paired: int = 0  # nonzero: posteriors come from a separate condition text

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.paired and self.variant not in LATENT_VARIANTS:
            raise ConfigError(f"paired training needs an encoder; {self.variant} has none")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.anneal_start > self.anneal_end or self.anneal_start < 0:
            raise ConfigError(
                f"bad annealing schedule ({self.anneal_start}, {self.anneal_end})"
            )
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must cover the reserved ids, got {self.vocab_size}")
        for name in (
            "d_emb", "d_plan", "d_word", "d_z", "sent_filters", "para_filters",
            "prior_hidden", "m_max", "n_max", "batch_size", "max_steps",
            "eval_every", "checkpoint_every",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.m_gen < 0:
            raise ConfigError(f"m_gen must be >= 0 (0 = corpus median), got {self.m_gen}")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ConfigError("lr and clip_norm must be positive")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ConfigError(f"heldout_fraction in [0, 1) required, got {self.heldout_fraction}")
        return self

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for f in dataclasses.fields(self):
                fh.write(f"{f.name} = {getattr(self, f.name)}\n")

    @classmethod
    def from_file(cls, path, overrides=None):
        """Parse flat "key = value" lines; `overrides` wins over the file."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        casts = {"int": int, "float": float, "str": str}
        kw = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or key not in types:
                    raise ConfigError(f"{path}:{lineno}: bad config line {raw.strip()!r}")
                kw[key] = casts[types[key]](value.strip())
        if overrides:
            kw.update(overrides)
        return cls(**kw)


def anneal(step, schedule):
    """KL weight: 0 before s0, linear to 1 at s1, 1 afterward."""
    s0, s1 = schedule
    if s0 > s1:
        raise ConfigError(f"annealing schedule must have s0 <= s1, got {schedule}")
    if step >= s1:
        return 1.0
    if step <= s0:
        return 0.0
    return (step - s0) / (s1 - s0)


class Model:
    """A variant's parameter store plus its wired-up networks."""

    def __init__(self, config, rng=None):
        config.validate()
        self.config = config
        if rng is None:
            rng = np.random.default_rng([config.seed, 0])
        self.store = ParamStore(dtype=config.dtype)
        self.emb = self.store.weight("emb.W", (config.vocab_size, config.d_emb), rng)
        self.encoder = None
        self.prior = None
        if self.has_latent:
            self.encoder = HierEncoder(
                self.store, config.d_emb, rng,
                two_level=self.two_level,
                sent_filters=config.sent_filters,
                para_filters=config.para_filters,
                d_z=config.d_z,
            )
        if self.two_level:
            self.prior = latent.PriorNet(
                self.store, config.d_z, config.d_z, config.prior_hidden, rng
            )
        z_dim = config.d_z if self.has_latent else None
        if config.variant.startswith("flat"):
            self.dec = FlatDecoder(
                self.store, config.vocab_size, config.d_emb, config.d_word, rng, z_dim=z_dim
            )
        else:
            self.dec = MultiLevelDecoder(
                self.store, config.vocab_size, config.d_emb,
                config.d_plan, config.d_word, rng, z_dim=z_dim,
            )

    @property
    def has_latent(self):
        return self.config.variant in LATENT_VARIANTS

    @property
    def two_level(self):
        return self.config.variant == "ml-VAE-D"

    def posteriors(self, batch):
        cube = ops.embed(self.emb, batch.tokens)
        return self.encoder.posteriors(cube, batch.lengths, batch.sent_counts)

    def save(self, path):
        ckpt.save(path, self.store)
        self.config.to_file(sidecar_path(path))


def sidecar_path(ckpt_path):
    stem, _ = os.path.splitext(ckpt_path)
    return stem + ".cfg"


def load_model(ckpt_path, overrides=None):
    """Rebuild a Model from a checkpoint plus its sidecar config."""
    config = ModelConfig.from_file(sidecar_path(ckpt_path), overrides)
    model = Model(config)
    ckpt.load_into(model.store, ckpt_path)
    return model


def _recon_vec(model, batch, z):
    """Per-document summed reconstruction NLL (B,); z is None for LMs."""
    variant = model.config.variant
    if variant == "flat-LM":
        streams, smask = flatten_batch(batch)
        return model.dec.stream_nll(None, streams, smask, model.emb)
    if variant == "ml-LM":
        return model.dec.batch_nll_lm(batch, model.emb)
    if variant == "flat-VAE":
        streams, smask = flatten_batch(batch)
        return model.dec.stream_nll(z, streams, smask, model.emb)
    return model.dec.batch_nll(z, batch, model.emb)


def _forward(model, batch, rng, cond=None):
    """Shared forward pass: posterior sampling, per-doc recon and KL vectors.

    With `cond` set the posteriors are inferred from the condition batch
    while reconstruction still targets `batch` (condition -> target mode).
    """
    B = batch.size
    dt = model.config.dtype
    if not model.has_latent:
        recon = _recon_vec(model, batch, None)
        return recon, Tensor(np.zeros(B, dtype=dt))
    source = batch if cond is None else cond
    d_z = model.config.d_z
    if model.two_level:
        q1, q2 = model.posteriors(source)
        z2 = latent.sample(q2, rng.standard_normal((B, d_z)))
        z1 = latent.sample(q1, rng.standard_normal((B, d_z)))
        kl, _, _ = latent.joint_kl(model.prior, q1, q2, z2)
        recon = _recon_vec(model, batch, z1)
    else:
        q = model.posteriors(source)
        z = latent.sample(q, rng.standard_normal((B, d_z)))
        kl = latent.kl_standard(q)
        recon = _recon_vec(model, batch, z)
    return recon, kl


def loss_step(model, batch, beta, rng, cond=None):
    """One objective evaluation: (reconstruction, kl, objective) scalar tensors.

    reconstruction and kl are per-document means; objective is
    reconstruction + beta * kl (the annealed bound being minimized).
    """
    recon_vec, kl_vec = _forward(model, batch, rng, cond)
    recon = reduce_mean(recon_vec)
    kl = reduce_mean(kl_vec)
    if model.has_latent and beta != 0.0:
        objective = recon + scale(kl, beta)
    else:
        objective = recon
    return recon, kl, objective


@dataclass
class EvalReport:
    """Held-out NLL/KL/PPL; `bound` marks single-sample upper bounds."""

    nll: float  # per-document average (includes KL when bound is set)
    kl: float  # per-document average
    ppl: float  # exp(total NLL / total tokens)
    recon_ppl: float  # exp(total reconstruction NLL / total tokens)
    tokens: int
    docs: int
    bound: bool

    def __str__(self):
        tag = "<=" if self.bound else "="
        return (
            f"nll {tag} {self.nll:.4f}  kl = {self.kl:.4f}  ppl {tag} {self.ppl:.4f}"
            f"  ({self.docs} docs, {self.tokens} tokens)"
        )


def evaluate(model, batch, seed=0, batch_size=64, cond=None):
    """Score a frozen model on a split; deterministic for a given seed."""
    if batch.size == 0:
        raise CorpusError("evaluate: empty split")
    rng = np.random.default_rng(seed)
    recon_sum = 0.0
    kl_sum = 0.0
    for lo in range(0, batch.size, batch_size):
        idx = np.arange(lo, min(lo + batch_size, batch.size))
        sub = batch.take(idx)
        recon_vec, kl_vec = _forward(model, sub, rng, None if cond is None else cond.take(idx))
        recon_sum += float(recon_vec.data.sum())
        kl_sum += float(kl_vec.data.sum())
    tokens = int(batch.mask.sum())
    docs = batch.size
    total = recon_sum + kl_sum
    return EvalReport(
        nll=total / docs,
        kl=kl_sum / docs,
        ppl=float(np.exp(total / tokens)),
        recon_ppl=float(np.exp(recon_sum / tokens)),
        tokens=tokens,
        docs=docs,
        bound=model.has_latent,
    )


@dataclass
class TrainState:
    """Everything the training loop threads from step to step."""

    model: Model
    adam: Adam
    step: int = 0
    noise_rng: np.random.Generator = None
    history: list = field(default_factory=list)  # (step, recon, kl, beta, objective)
    avg_recon: float = float("nan")
    avg_kl: float = float("nan")
    final_report: EvalReport = None


def _minibatches(n, batch_size, rng):
    """Endless stream of seeded-shuffle minibatch index arrays."""
    while True:
        perm = rng.permutation(n)
        for lo in range(0, n, batch_size):
            yield perm[lo : lo + batch_size]


def train(config, batch, out_dir=None, log=print, cond=None):
    """Optimize a fresh model on `batch`; returns the final TrainState.

    Writes a tab-separated log line per eval interval and, when out_dir is
    given, periodic checkpoints plus a sidecar config next to each. In
    paired mode `cond` supplies the condition batch, index-aligned with
    `batch`.
    """
    config.validate()
    if batch.size == 0:
        raise CorpusError("train: empty corpus")
    if bool(config.paired) != (cond is not None):
        raise ConfigError("cond batch must be given exactly when config.paired is set")
    if cond is not None and cond.size != batch.size:
        raise CorpusError(f"condition/target size mismatch: {cond.size} != {batch.size}")
    if config.m_gen < 1:  # record the corpus-median sentence count for generation
        config = config.replace(m_gen=int(float(np.median(batch.sent_counts)) + 0.5))
    model = Model(config)
    train_idx, held_idx = split_heldout(batch.size, config.heldout_fraction, config.seed)
    train_split = batch.take(np.asarray(train_idx))
    # with fraction 0 the held-out split is empty: score on the training set
    eval_split = batch.take(np.asarray(held_idx)) if len(held_idx) else train_split
    train_cond = eval_cond = None
    if cond is not None:
        train_cond = cond.take(np.asarray(train_idx))
        eval_cond = cond.take(np.asarray(held_idx)) if len(held_idx) else train_cond
    state = TrainState(
        model=model,
        adam=Adam(model.store, lr=config.lr),
        noise_rng=np.random.default_rng([config.seed, 2]),
    )
    shuffle_rng = np.random.default_rng([config.seed, 1])
    batches = _minibatches(train_split.size, config.batch_size, shuffle_rng)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    log("\t".join(LOG_COLUMNS))
    int_recon = int_kl = 0.0
    int_n = 0
    while state.step < config.max_steps:
        state.step += 1
        beta = anneal(state.step, (config.anneal_start, config.anneal_end))
        ids = next(batches)
        sub = train_split.take(ids)
        sub_cond = None if train_cond is None else train_cond.take(ids)
        with Tape():
            recon_t, kl_t, obj_t = loss_step(model, sub, beta, state.noise_rng, sub_cond)
            recon = float(recon_t.data)
            kl = float(kl_t.data)
            objective = recon + beta * kl
            if not np.isfinite(objective):
                raise NumericError(f"non-finite training loss at step {state.step}")
            backward(obj_t)
        clip_global_norm(model.store, config.clip_norm)
        state.adam.step()
        state.history.append((state.step, recon, kl, beta, objective))
        int_recon += recon
        int_kl += kl
        int_n += 1
        if state.step % config.eval_every == 0 or state.step == config.max_steps:
            report = evaluate(model, eval_split, seed=[config.seed, 3, state.step], cond=eval_cond)
            state.avg_recon = int_recon / int_n
            state.avg_kl = int_kl / int_n
            log(
                f"{state.step}\t{state.avg_recon:.6f}\t{state.avg_kl:.6f}"
                f"\t{beta:.6f}\t{report.ppl:.6f}"
            )
            state.final_report = report
            int_recon = int_kl = 0.0
            int_n = 0
        if out_dir and (
            state.step % config.checkpoint_every == 0 or state.step == config.max_steps
        ):
            model.save(os.path.join(out_dir, f"ckpt_{state.step:08d}.mlv1"))
    if state.final_report is None:
        state.final_report = evaluate(model, eval_split, seed=[config.seed, 3, state.step], cond=eval_cond)
    if out_dir:
        model.save(os.path.join(out_dir, "ckpt_final.mlv1"))
    return state
