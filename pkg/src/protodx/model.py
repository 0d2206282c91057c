"""Prototype-distance classification over label-wise attention pooling.

A document's token matrix g is pooled into one vector per label, either
through a learned per-label attention vector (label-wise variants) or by
uniform mean pooling (plain variants). Proto variants score a label by
the Euclidean distance of the pooled vector to a learned prototype,
mapped through a sigmoid of the negative distance; linear variants use a
per-label affine score instead. Note that sigma(-d) with d >= 0 means
proto probabilities never exceed 0.5; ranking is unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Document, Vocabulary
from .encoder import (
    EncodedDocument,
    EncoderConfig,
    encode,
    encode_backward,
    zero_grads,
)
from .errors import InputError

PROTO_LABELWISE = "proto_labelwise"
PROTO_PLAIN = "proto_plain"
LINEAR_LABELWISE = "linear_labelwise"
LINEAR_PLAIN = "linear_plain"
VARIANTS = (PROTO_LABELWISE, PROTO_PLAIN, LINEAR_LABELWISE, LINEAR_PLAIN)

PROB_CLAMP = 1e-7


def is_proto(variant: str) -> bool:
    return variant in (PROTO_LABELWISE, PROTO_PLAIN)


def is_labelwise(variant: str) -> bool:
    return variant in (PROTO_LABELWISE, LINEAR_LABELWISE)


def head_param_names(variant: str) -> list[str]:
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}")
    names = []
    if is_labelwise(variant):
        names.append("attn.W")
    if is_proto(variant):
        names.append("proto.U")
    else:
        names += ["head.weight", "head.bias"]
    return names


@dataclass
class ProtoModel:
    config: EncoderConfig
    variant: str
    params: dict[str, np.ndarray]
    label_vocab: tuple[str, ...]
    vocab: Vocabulary
    model_hash: str | None = None

    @property
    def n_labels(self) -> int:
        return len(self.label_vocab)

    def encode_text(self, text: str) -> list[int]:
        from .corpus import tokenize

        toks = tokenize(text)[: self.config.max_len]
        return self.vocab.encode(toks)


@dataclass
class PredictionResult:
    """Per-label distance (affine score for linear variants), probability
    and, for label-wise variants, the attention row over tokens."""

    distances: np.ndarray
    probabilities: np.ndarray
    attention: np.ndarray | None


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=z.dtype)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def label_attention(g: np.ndarray, w_c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Softmax attention of one label over token rows.

    s_j = softmax_j(g_j . w_c) with max subtraction; v = sum_j s_j g_j.
    """
    if g.ndim != 2 or len(g) == 0:
        raise InputError("g must be a non-empty (n_tokens, D) matrix")
    z = g @ w_c
    z = z - z.max()
    e = np.exp(z)
    s = e / e.sum()
    return s, s @ g


def predict_label(v: np.ndarray, u: np.ndarray) -> tuple[float, float]:
    """Euclidean distance to the prototype and sigma(-d)."""
    if v.shape != u.shape:
        raise InputError("pooled vector and prototype dimensions differ")
    d = float(np.linalg.norm(v - u))
    e = np.exp(-d)
    return d, float(e / (1.0 + e))


def bce_loss(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Summed binary cross entropy with probabilities clamped to
    [1e-7, 1 - 1e-7]; summation runs over every (document, label) term."""
    yh = np.clip(np.asarray(y_hat, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(-(y * np.log(yh) + (1.0 - y) * np.log1p(-yh)).sum())


def _column_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass
class DocForward:
    """Cached forward state of one document under one model."""

    encoded: EncodedDocument
    attention: np.ndarray | None  # (n_tokens, C) columns on the simplex
    pooled: np.ndarray  # (C, D) label-wise, or (D,) for plain variants
    scores: np.ndarray  # (C,) distances d_c, or affine scores z_c
    probabilities: np.ndarray  # (C,)


def forward_doc(model: ProtoModel, tokens, want_cache: bool = True) -> DocForward:
    encoded = encode(tokens, model.params, model.config, want_cache=want_cache)
    g = encoded.g

    if is_labelwise(model.variant):
        W = model.params["attn.W"]
        S = _column_softmax(g @ W.T)  # (n, C)
        pooled = S.T @ g  # (C, D)
    else:
        S = None
        pooled = g.mean(axis=0)  # (D,)

    if is_proto(model.variant):
        U = model.params["proto.U"]
        diff = pooled - U if S is not None else pooled[None, :] - U
        d = np.sqrt((diff * diff).sum(axis=1))
        e = np.exp(-d)
        probs = e / (1.0 + e)
        scores = d
    else:
        A, b = model.params["head.weight"], model.params["head.bias"]
        if S is not None:
            scores = (A * pooled).sum(axis=1) + b
        else:
            scores = A @ pooled + b
        probs = stable_sigmoid(scores)

    return DocForward(
        encoded=encoded, attention=S, pooled=pooled, scores=scores, probabilities=probs
    )


def forward(doc: Document, model: ProtoModel) -> PredictionResult:
    """Public per-document prediction."""
    fwd = forward_doc(model, doc.tokens, want_cache=False)
    return PredictionResult(
        distances=fwd.scores.copy(),
        probabilities=fwd.probabilities.copy(),
        attention=fwd.attention.T.copy() if fwd.attention is not None else None,
    )


def predict_matrix(model: ProtoModel, corpus: Corpus) -> np.ndarray:
    """(n_docs, n_labels) probability matrix."""
    out = np.empty((len(corpus), model.n_labels), dtype=np.float64)
    for i, doc in enumerate(corpus.documents):
        out[i] = forward_doc(model, doc.tokens, want_cache=False).probabilities
    return out


def _clamp_mask(probs: np.ndarray) -> np.ndarray:
    # the BCE clamp flattens the loss outside this band, so the exact
    # gradient there is zero
    return (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)


def _labelwise_pool_backward(g, W, S, dV):
    """Backward of V = S^T g with S = column softmax of g W^T.

    Returns (dg, dW) given upstream dV of shape (C, D).
    """
    dg = S @ dV  # direct path through the weighted sum
    dS = g @ dV.T  # (n, C)
    col = (S * dS).sum(axis=0, keepdims=True)
    dZ = S * (dS - col)
    dW = dZ.T @ g
    dg = dg + dZ @ W
    return dg, dW


def backward_doc(
    model: ProtoModel,
    fwd: DocForward,
    y_row: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate gradients of the summed BCE for one document."""
    params = model.params
    dtype = model.config.dtype
    y = y_row.astype(dtype)
    probs = fwd.probabilities.astype(dtype)
    mask = _clamp_mask(probs)

    if is_proto(model.variant):
        U = params["proto.U"]
        # dL/dd_c = y - yhat inside the clamp band
        ddist = np.where(mask, y - probs, 0.0).astype(dtype)
        if fwd.attention is not None:
            diff = fwd.pooled - U
        else:
            diff = fwd.pooled[None, :] - U
        safe = np.where(fwd.scores > 1e-12, fwd.scores, 1.0)
        unit = diff / safe[:, None]
        unit[fwd.scores <= 1e-12] = 0.0
        dV = ddist[:, None] * unit
        grads["proto.U"] += -dV
    else:
        dz = np.where(mask, probs - y, 0.0).astype(dtype)
        A = params["head.weight"]
        if fwd.attention is not None:
            grads["head.weight"] += dz[:, None] * fwd.pooled
        else:
            grads["head.weight"] += np.outer(dz, fwd.pooled)
        grads["head.bias"] += dz
        dV = dz[:, None] * A

    g = fwd.encoded.g
    if fwd.attention is not None:
        dg, dW = _labelwise_pool_backward(g, params["attn.W"], fwd.attention, dV)
        grads["attn.W"] += dW
    else:
        dg = np.broadcast_to(dV.sum(axis=0) / len(g), g.shape).astype(dtype)

    encode_backward(fwd.encoded, np.ascontiguousarray(dg), params, model.config, grads)


def batch_loss_and_grads(
    model: ProtoModel, docs: list[Document], y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed loss and gradients over a batch, accumulated in document-id
    order for deterministic reduction."""
    grads = zero_grads(model.params)
    total = 0.0
    order = sorted(range(len(docs)), key=lambda i: docs[i].id)
    for i in order:
        fwd = forward_doc(model, docs[i].tokens)
        total += bce_loss(fwd.probabilities, y[i])
        backward_doc(model, fwd, y[i], grads)
    return total, grads
