"""Training loop: adaptive moments with decoupled weight decay, linear
warmup/decay schedule, two learning-rate groups (encoder vs. newly
initialized head vectors), and the two initialization schemes for
prototypes (class means) and attention vectors (TF-IDF informative
tokens).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import MASK_ID, PAD_ID, Corpus, compute_tfidf, informative_tokens
from .encoder import EncoderConfig, encode, init_encoder_params
from .errors import ConfigError, NumericError
from .metrics import evaluate_scores
from .model import (
    ProtoModel,
    batch_loss_and_grads,
    bce_loss,
    is_labelwise,
    is_proto,
    predict_matrix,
    PROTO_LABELWISE,
    VARIANTS,
)

# embedding rows that never receive data-driven updates
FROZEN_EMBED_ROWS = (PAD_ID, MASK_ID)


@dataclass
class TrainConfig:
    total_steps: int = 500
    batch_size: int = 10
    lr_encoder: float = 5e-5
    lr_head: float = 5e-3  # applies to attention, prototypes and the reduction layer
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int | None = None  # default: 5% of total_steps
    seed: int = 0
    proto_mean_init: bool = True
    attention_tfidf_init: bool = False
    proto_init_use_pooled: bool = False
    h: float = 0.05
    eval_every: int = 50
    convergence_loss_threshold: float | None = None  # mean per-(doc,label) val loss

    def __post_init__(self):
        if self.lr_encoder <= 0 or self.lr_head <= 0:
            raise ConfigError("learning rates must be positive")
        if self.total_steps < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("total_steps, batch_size and eval_every must be sensible")
        if self.warmup_steps is not None and self.warmup_steps > self.total_steps:
            raise ConfigError("warmup_steps cannot exceed total_steps")

    @property
    def effective_warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, round(0.05 * self.total_steps))

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**data)


def lr_scale(step: int, total: int, warmup: int) -> float:
    """Linear warmup to 1 then linear decay to 0; step is 1-based."""
    if step <= warmup:
        return step / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


class AdamW:
    """Adaptive moment estimation with decoupled weight decay.

    Decay is applied to every trainable tensor each step regardless of its
    gradient, so prototype/attention rows untouched by a batch still decay.
    Frozen embedding rows (PAD, MASK) are restored after each step.
    """

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        self.config = config
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    @staticmethod
    def group_lr(name: str, config: TrainConfig) -> float:
        if name == "embed" or name.startswith("block"):
            return config.lr_encoder
        return config.lr_head

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             scale: float) -> None:
        cfg = self.config
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        frozen = params["embed"][list(FROZEN_EMBED_ROWS)].copy()
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            lr = self.group_lr(name, cfg) * scale
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            p *= 1.0 - lr * cfg.weight_decay  # decay the pre-update value
            p -= lr * update
        params["embed"][list(FROZEN_EMBED_ROWS)] = frozen


@dataclass
class TrainStats:
    variant: str
    n_train_docs: int
    n_labels: int
    step_losses: list[float] = field(default_factory=list)
    val_steps: list[int] = field(default_factory=list)
    val_loss_per_term: list[float] = field(default_factory=list)
    val_macro_roc_auc: list[float | None] = field(default_factory=list)
    steps_to_convergence: int | None = None
    best_step: int | None = None
    best_val_macro_roc_auc: float | None = None
    attention_coverage: dict | None = None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _encode_all(corpus: Corpus, params, config) -> list[np.ndarray]:
    return [
        encode(doc.tokens, params, config, want_cache=False).g for doc in corpus.documents
    ]


def init_attention(
    train: Corpus,
    tfidf,
    h: float,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    rng: np.random.Generator,
    encoded: list[np.ndarray] | None = None,
) -> tuple[np.ndarray, dict]:
    """TF-IDF attention initialization.

    w_c starts as the mean of the encoder outputs of every occurrence of
    an informative token (tfidf > h) inside label c's positive documents.
    Labels with no informative occurrences fall back to a random vector
    and are flagged in the coverage report.
    """
    D = config.output_dim
    if encoded is None:
        encoded = _encode_all(train, params, config)
    W = np.zeros((train.n_labels, D), dtype=config.dtype)
    coverage: dict[str, dict] = {}
    for c, name in enumerate(train.label_vocab):
        tokens = informative_tokens(c, tfidf, h)
        rows = []
        for doc, g in zip(train.documents, encoded):
            if c not in doc.labels:
                continue
            for j, t in enumerate(doc.tokens):
                if t in tokens:
                    rows.append(g[j])
        fallback = not rows
        if fallback:
            W[c] = rng.normal(0.0, 1.0 / math.sqrt(D), size=D).astype(config.dtype)
        else:
            W[c] = np.mean(rows, axis=0, dtype=np.float64).astype(config.dtype)
        coverage[name] = {
            "informative_tokens": len(tokens),
            "occurrences": len(rows),
            "fallback": fallback,
        }
    return W, coverage


def init_prototypes(
    train: Corpus,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    variant: str,
    rng: np.random.Generator,
    use_pooled: bool = False,
    encoded: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Mean-of-class prototype initialization.

    u_c starts as the mean of the pooled document vectors of label c's
    positive training documents (label-wise attended vectors for
    label-wise variants unless use_pooled). Labels without positives get
    a zero-mean Gaussian vector of scale 0.01.
    """
    D = config.output_dim
    if encoded is None:
        encoded = _encode_all(train, params, config)
    attended = is_labelwise(variant) and not use_pooled
    sums = np.zeros((train.n_labels, D), dtype=np.float64)
    counts = np.zeros(train.n_labels, dtype=np.int64)
    for doc, g in zip(train.documents, encoded):
        if not doc.labels:
            continue
        if attended:
            W = params["attn.W"]
            z = g @ W.T
            z = z - z.max(axis=0, keepdims=True)
            e = np.exp(z)
            S = e / e.sum(axis=0, keepdims=True)
            V = S.T @ g
            for c in doc.labels:
                sums[c] += V[c]
                counts[c] += 1
        else:
            v = g.mean(axis=0)
            for c in doc.labels:
                sums[c] += v
                counts[c] += 1
    U = np.zeros((train.n_labels, D), dtype=config.dtype)
    for c in range(train.n_labels):
        if counts[c] > 0:
            U[c] = (sums[c] / counts[c]).astype(config.dtype)
        else:
            U[c] = rng.normal(0.0, 0.01, size=D).astype(config.dtype)
    return U


def init_model(
    train: Corpus,
    config: EncoderConfig,
    variant: str,
    train_config: TrainConfig,
    warm_start: dict[str, np.ndarray] | None = None,
) -> tuple[ProtoModel, dict | None]:
    """Build a freshly initialized model; returns attention coverage when
    the TF-IDF initialization ran.

    Warm-start tensors overlay the fresh encoder before the attention and
    prototype initializations run, so those schemes see the warm state.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if config.vocab_size != len(train.vocab):
        raise ConfigError(
            f"encoder vocab_size {config.vocab_size} != corpus vocabulary {len(train.vocab)}"
        )
    warm = dict(warm_start or {})
    ss = np.random.SeedSequence(train_config.seed)
    enc_rng, head_rng, attn_rng, proto_rng = (
        np.random.default_rng(s) for s in ss.spawn(4)
    )
    params = init_encoder_params(config, enc_rng)
    for name in list(warm):
        if name in params:
            if warm[name].shape != params[name].shape:
                raise ConfigError(f"warm-start tensor {name} has shape {warm[name].shape}")
            params[name] = warm.pop(name).astype(config.dtype).copy()
    D = config.output_dim
    C = train.n_labels
    dt = config.dtype

    def from_warm(name, shape) -> np.ndarray | None:
        if name not in warm:
            return None
        if warm[name].shape != shape:
            raise ConfigError(f"warm-start tensor {name} has shape {warm[name].shape}")
        return warm.pop(name).astype(dt).copy()

    coverage = None
    encoded_cache: list[np.ndarray] | None = None
    if is_labelwise(variant):
        W = from_warm("attn.W", (C, D))
        if W is not None:
            params["attn.W"] = W
        elif train_config.attention_tfidf_init:
            tfidf = compute_tfidf(train)
            encoded_cache = _encode_all(train, params, config)
            W, coverage = init_attention(
                train, tfidf, train_config.h, params, config, attn_rng, encoded_cache
            )
            params["attn.W"] = W
        else:
            params["attn.W"] = head_rng.normal(0.0, 1.0 / math.sqrt(D), size=(C, D)).astype(dt)
    if is_proto(variant):
        U = from_warm("proto.U", (C, D))
        if U is not None:
            params["proto.U"] = U
        elif train_config.proto_mean_init:
            params["proto.U"] = init_prototypes(
                train,
                params,
                config,
                variant,
                proto_rng,
                use_pooled=train_config.proto_init_use_pooled,
                encoded=encoded_cache,
            )
        else:
            params["proto.U"] = head_rng.normal(0.0, 1.0 / math.sqrt(D), size=(C, D)).astype(dt)
    else:
        bound = 1.0 / math.sqrt(D)
        A = from_warm("head.weight", (C, D))
        bvec = from_warm("head.bias", (C,))
        params["head.weight"] = (
            A if A is not None else head_rng.uniform(-bound, bound, size=(C, D)).astype(dt)
        )
        params["head.bias"] = bvec if bvec is not None else np.zeros(C, dtype=dt)
    if warm:
        raise ConfigError(f"warm-start tensors not used by this model: {sorted(warm)}")

    model = ProtoModel(
        config=config,
        variant=variant,
        params=params,
        label_vocab=train.label_vocab,
        vocab=train.vocab,
    )
    return model, coverage


def _check_patient_disjoint(train: Corpus, val: Corpus) -> None:
    a, b = train.patient_ids(), val.patient_ids()
    if a == b:
        return  # identical sets mark a deliberate overfit diagnostic run
    inter = a & b
    if inter:
        raise ConfigError(
            f"train/val share {len(inter)} patients (e.g. {sorted(inter)[:3]})"
        )


def validation_metrics(model: ProtoModel, val: Corpus) -> tuple[float, float | None]:
    """(mean per-term validation loss, macro ROC AUC or None)."""
    probs = predict_matrix(model, val)
    y = val.label_matrix()
    loss = bce_loss(probs, y) / probs.size
    report = evaluate_scores(probs, y, val.label_vocab)
    return loss, report.roc_auc_macro


def train(
    train_corpus: Corpus,
    val_corpus: Corpus,
    config: TrainConfig,
    variant: str = PROTO_LABELWISE,
    encoder_config: EncoderConfig | None = None,
    warm_start: dict[str, np.ndarray] | None = None,
) -> tuple[ProtoModel, TrainStats]:
    """Mini-batch gradient descent on the summed BCE objective.

    Deterministic given config.seed: batch order comes from a seeded
    permutation per epoch and gradients accumulate in document-id order.
    The returned model carries the parameters of the step with the best
    validation macro ROC AUC (ties keep the earlier step).

    ``warm_start`` replaces freshly initialized tensors (same name and
    shape) with copies from an earlier model, e.g. to re-learn prototypes
    on top of a trained encoder; tensors absent from it, such as a
    prototype matrix under a different init flag, keep their fresh values.
    """
    if len(train_corpus) == 0:
        raise ConfigError("training corpus is empty")
    _check_patient_disjoint(train_corpus, val_corpus)
    if encoder_config is None:
        encoder_config = EncoderConfig(vocab_size=len(train_corpus.vocab))

    model, coverage = init_model(
        train_corpus, encoder_config, variant, config, warm_start=warm_start
    )
    stats = TrainStats(
        variant=variant,
        n_train_docs=len(train_corpus),
        n_labels=train_corpus.n_labels,
        attention_coverage=coverage,
    )
    if config.total_steps == 0:
        return model, stats

    optimizer = AdamW(model.params, config)
    batch_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(5)[4])
    y_all = train_corpus.label_matrix()
    docs = train_corpus.documents
    warmup = config.effective_warmup

    best_params: dict[str, np.ndarray] | None = None
    best_auc = -np.inf
    step = 0
    order: list[int] = []
    pos = 0
    while step < config.total_steps:
        if pos >= len(order):
            order = list(batch_rng.permutation(len(docs)))
            pos = 0
        batch_idx = order[pos : pos + config.batch_size]
        pos += config.batch_size
        step += 1

        batch_docs = [docs[i] for i in batch_idx]
        batch_y = y_all[batch_idx]
        loss, grads = batch_loss_and_grads(model, batch_docs, batch_y)
        if not np.isfinite(loss):
            raise NumericError(
                f"non-finite loss at step {step}",
                step=step,
                batch_ids=[d.id for d in batch_docs],
            )
        stats.step_losses.append(loss)
        optimizer.step(model.params, grads, lr_scale(step, config.total_steps, warmup))

        if step % config.eval_every == 0 or step == config.total_steps:
            val_loss, val_auc = validation_metrics(model, val_corpus)
            stats.val_steps.append(step)
            stats.val_loss_per_term.append(val_loss)
            stats.val_macro_roc_auc.append(val_auc)
            if (
                stats.steps_to_convergence is None
                and config.convergence_loss_threshold is not None
                and val_loss < config.convergence_loss_threshold
            ):
                stats.steps_to_convergence = step
            # ties keep the later step: loss keeps improving after the
            # ranking saturates
            if val_auc is not None and val_auc >= best_auc:
                best_auc = val_auc
                best_params = copy.deepcopy(model.params)
                stats.best_step = step
                stats.best_val_macro_roc_auc = val_auc

    if best_params is not None:
        model.params = best_params
    return model, stats
