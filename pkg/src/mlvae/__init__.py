"""Multi-level VAE for paragraphs: models, training, metrics, workbench."""

from .corpus import (
    PaddedBatch,
    Vocabulary,
    build_vocab,
    encode_batch,
    load_paired,
    read_documents,
    segment,
)
from .metrics import (
    corpus_bleu,
    metric_report,
    ngram_entropy,
    self_bleu,
    sentiment_classifier,
    unique_ngrams,
)
from .trainer import EvalReport, Model, ModelConfig, evaluate, load_model, train
from .workbench import (
    attribute_transfer,
    attribute_vector,
    conditional_generate,
    export_latents,
    interpolate,
    sample_unconditional,
)

__version__ = "0.1.0"

__all__ = [
    "PaddedBatch",
    "Vocabulary",
    "build_vocab",
    "encode_batch",
    "load_paired",
    "read_documents",
    "segment",
    "corpus_bleu",
    "metric_report",
    "ngram_entropy",
    "self_bleu",
    "sentiment_classifier",
    "unique_ngrams",
    "EvalReport",
    "Model",
    "ModelConfig",
    "evaluate",
    "load_model",
    "train",
    "attribute_transfer",
    "attribute_vector",
    "conditional_generate",
    "export_latents",
    "interpolate",
    "sample_unconditional",
    "__version__",
]
