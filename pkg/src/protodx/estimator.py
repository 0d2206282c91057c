"""Scikit-learn style estimator facade over the training loop.

``LabelwisePrototypeClassifier`` follows the fit/predict_proba convention with
``get_params``/``set_params`` so it composes with common tooling. Inputs
are either a prepared :class:`~protodx.corpus.Corpus` or raw
``(texts, label_sets)`` pairs.
"""

from __future__ import annotations

import inspect

import numpy as np

from .corpus import Corpus, make_corpus
from .encoder import EncoderConfig
from .errors import InputError
from .model import PROTO_LABELWISE, VARIANTS, predict_matrix
from .training import TrainConfig, train


def check_text_labels(texts, labels) -> list[dict]:
    """Validate raw (texts, label_sets) input and build corpus records."""
    if labels is None:
        raise InputError("y label sets are required when X is a list of texts")
    texts = list(texts)
    labels = list(labels)
    if len(texts) != len(labels):
        raise InputError(f"got {len(texts)} texts but {len(labels)} label sets")
    records = []
    for i, (text, labs) in enumerate(zip(texts, labels)):
        if not isinstance(text, str) or not text.strip():
            raise InputError(f"text {i} is empty or not a string")
        records.append(
            {
                "id": f"d{i:05d}",
                "patient_id": f"p{i:05d}",
                "text": text,
                "labels": [str(x) for x in labs],
            }
        )
    return records


def check_is_fitted(estimator) -> None:
    if getattr(estimator, "model_", None) is None:
        raise InputError("this estimator is not fitted yet; call fit first")


class LabelwisePrototypeClassifier:
    """Multi-label classifier scoring labels by distance to learned
    per-label prototypes over attention-pooled token vectors.

    Probabilities of prototype variants are sigma(-distance) and therefore
    bounded by 0.5; use them as ranking scores.
    """

    def __init__(
        self,
        variant: str = PROTO_LABELWISE,
        embed_dim: int = 64,
        context_blocks: int = 1,
        attention_heads: int = 4,
        ff_dim: int | None = None,
        output_dim: int = 32,
        max_len: int = 512,
        total_steps: int = 500,
        batch_size: int = 10,
        lr_encoder: float = 5e-5,
        lr_head: float = 5e-3,
        weight_decay: float = 0.01,
        warmup_steps: int | None = None,
        proto_mean_init: bool = True,
        attention_tfidf_init: bool = False,
        tfidf_threshold: float = 0.05,
        eval_every: int = 50,
        seed: int = 0,
    ):
        self.variant = variant
        self.embed_dim = embed_dim
        self.context_blocks = context_blocks
        self.attention_heads = attention_heads
        self.ff_dim = ff_dim
        self.output_dim = output_dim
        self.max_len = max_len
        self.total_steps = total_steps
        self.batch_size = batch_size
        self.lr_encoder = lr_encoder
        self.lr_head = lr_head
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.proto_mean_init = proto_mean_init
        self.attention_tfidf_init = attention_tfidf_init
        self.tfidf_threshold = tfidf_threshold
        self.eval_every = eval_every
        self.seed = seed

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "LabelwisePrototypeClassifier":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise InputError(f"invalid parameter {key!r} for LabelwisePrototypeClassifier")
            setattr(self, key, value)
        return self

    def _as_corpus(self, X, y=None, vocab=None, label_vocab=None) -> Corpus:
        if isinstance(X, Corpus):
            if y is not None:
                raise InputError("pass labels inside the Corpus, not as y")
            return X
        records = check_text_labels(X, y)
        return make_corpus(records, vocab=vocab, label_vocab=label_vocab, max_len=self.max_len)

    def fit(self, X, y=None, validation=None):
        """Train on a Corpus (y=None) or on (texts, label_sets).

        ``validation`` may be a second Corpus; by default the training
        corpus doubles as validation (overfit-style checkpointing).
        """
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}")
        corpus = self._as_corpus(X, y)
        if len(corpus) == 0:
            raise InputError("training corpus is empty")
        val = validation if validation is not None else corpus

        encoder = EncoderConfig(
            vocab_size=len(corpus.vocab),
            embed_dim=self.embed_dim,
            context_blocks=self.context_blocks,
            attention_heads=self.attention_heads,
            ff_dim=self.ff_dim,
            output_dim=self.output_dim,
            max_len=self.max_len,
        )
        config = TrainConfig(
            total_steps=self.total_steps,
            batch_size=self.batch_size,
            lr_encoder=self.lr_encoder,
            lr_head=self.lr_head,
            weight_decay=self.weight_decay,
            warmup_steps=self.warmup_steps,
            seed=self.seed,
            proto_mean_init=self.proto_mean_init,
            attention_tfidf_init=self.attention_tfidf_init,
            h=self.tfidf_threshold,
            eval_every=self.eval_every,
        )
        self.model_, self.stats_ = train(corpus, val, config, self.variant, encoder)
        self.classes_ = np.array(corpus.label_vocab, dtype=object)
        return self

    def _encode_texts(self, X) -> Corpus:
        check_is_fitted(self)
        if isinstance(X, Corpus):
            return X
        records = [
            {"id": f"q{i:05d}", "patient_id": f"q{i:05d}", "text": t, "labels": []}
            for i, t in enumerate(X)
        ]
        return make_corpus(
            records,
            vocab=self.model_.vocab,
            label_vocab=list(self.model_.label_vocab),
            max_len=self.model_.config.max_len,
        )

    def predict_proba(self, X) -> np.ndarray:
        """(n_samples, n_labels) probability matrix."""
        corpus = self._encode_texts(X)
        return predict_matrix(self.model_, corpus)

    def decision_function(self, X) -> np.ndarray:
        """Ranking scores: negative distance for prototype variants,
        affine score for linear variants."""
        check_is_fitted(self)
        from .model import forward_doc, is_proto

        corpus = self._encode_texts(X)
        out = np.empty((len(corpus), self.model_.n_labels), dtype=np.float64)
        for i, doc in enumerate(corpus.documents):
            scores = forward_doc(self.model_, doc.tokens, want_cache=False).scores
            out[i] = -scores if is_proto(self.variant) else scores
        return out

    def rank_labels(self, X, top_k: int = 5) -> list[list[tuple[str, float]]]:
        """Per sample, the top_k (label, probability) pairs by descending
        probability, ties broken by label id."""
        probs = self.predict_proba(X)
        results = []
        for row in probs:
            order = sorted(range(len(row)), key=lambda c: (-row[c], c))[:top_k]
            results.append([(str(self.classes_[c]), float(row[c])) for c in order])
        return results
