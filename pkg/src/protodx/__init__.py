"""Prototype-distance diagnosis prediction with label-wise attention."""

from .corpus import (
    Corpus,
    Document,
    SyntheticSpec,
    Vocabulary,
    build_vocab,
    compute_tfidf,
    generate_synthetic,
    informative_tokens,
    load_corpus,
    save_corpus,
    split,
    tokenize,
)
from .encoder import EncoderConfig, encode, encode_backward, grad_check
from .estimator import LabelwisePrototypeClassifier
from .explain import (
    FaithfulnessReport,
    PrototypeExemplar,
    Saliency,
    faithfulness,
    retrieve_exemplars,
    saliency,
    top_attended_words,
)
from .checkpoint import load_model, save_model
from .metrics import MetricReport, bucketed_macro, evaluate_scores, micro_roc_auc, pr_auc, roc_auc
from .model import (
    LINEAR_LABELWISE,
    LINEAR_PLAIN,
    PROTO_LABELWISE,
    PROTO_PLAIN,
    VARIANTS,
    PredictionResult,
    ProtoModel,
    bce_loss,
    forward,
    label_attention,
    predict_label,
)
from .training import TrainConfig, TrainStats, train

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "Document",
    "SyntheticSpec",
    "Vocabulary",
    "build_vocab",
    "compute_tfidf",
    "generate_synthetic",
    "informative_tokens",
    "load_corpus",
    "save_corpus",
    "split",
    "tokenize",
    "EncoderConfig",
    "encode",
    "encode_backward",
    "grad_check",
    "LabelwisePrototypeClassifier",
    "FaithfulnessReport",
    "PrototypeExemplar",
    "Saliency",
    "faithfulness",
    "retrieve_exemplars",
    "saliency",
    "top_attended_words",
    "load_model",
    "save_model",
    "MetricReport",
    "bucketed_macro",
    "evaluate_scores",
    "micro_roc_auc",
    "pr_auc",
    "roc_auc",
    "PROTO_LABELWISE",
    "PROTO_PLAIN",
    "LINEAR_LABELWISE",
    "LINEAR_PLAIN",
    "VARIANTS",
    "PredictionResult",
    "ProtoModel",
    "bce_loss",
    "forward",
    "label_attention",
    "predict_label",
    "TrainConfig",
    "TrainStats",
    "train",
]
