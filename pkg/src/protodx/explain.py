"""Token saliency, prototypical/atypical exemplar retrieval, the
faithfulness-by-masking protocol and most-attended-word aggregation.

Saliency methods score every token of a (document, label) pair:
``proto_attention`` returns the model's own attention row, ``occlusion``
the positive part of the probability drop when a token is replaced by
MASK, ``gradient`` the L2 norm of the probability's gradient with respect
to the token's embedded input, ``input_x_gradient`` the absolute dot
product of that gradient with the token's embedding row, and
``random_control`` seeded uniform noise.

Faithfulness masks the most salient share q of tokens for
q = 0.1 .. 1.0, re-evaluates macro ROC AUC over a label subset at each
threshold, and averages; lower means the highlighted tokens carried the
prediction.
"""

from __future__ import annotations

import html
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import MASK_ID, Corpus, Document
from .encoder import encode_backward, zero_grads
from .errors import InputError
from .metrics import roc_auc
from .model import (
    DocForward,
    ProtoModel,
    forward_doc,
    is_labelwise,
    is_proto,
    _labelwise_pool_backward,
)

SALIENCY_METHODS = (
    "proto_attention",
    "occlusion",
    "gradient",
    "input_x_gradient",
    "random_control",
)

FAITHFULNESS_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass
class Saliency:
    method: str
    label: int
    scores: np.ndarray  # non-negative, one per token


@dataclass
class PrototypeExemplar:
    doc_id: str
    distance: float
    attention: np.ndarray | None
    top_spans: list[tuple[int, int]]


@dataclass
class FaithfulnessReport:
    method: str
    labels: list[str]
    thresholds: tuple[float, ...]
    macro_roc_auc: list[float]
    score: float
    reference_macro_roc_auc: float

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "labels": self.labels,
            "thresholds": list(self.thresholds),
            "macro_roc_auc": self.macro_roc_auc,
            "score": self.score,
            "reference_macro_roc_auc": self.reference_macro_roc_auc,
        }


def _prob_gradient_wrt_inputs(model: ProtoModel, fwd: DocForward, label: int) -> np.ndarray:
    """d yhat_label / d x0 for one document (x0 = embedding + position rows)."""
    g = fwd.encoded.g
    params = model.params
    if is_proto(model.variant):
        d = float(fwd.scores[label])
        prob = float(fwd.probabilities[label])
        dprob_dd = -prob * (1.0 - prob)
        if fwd.attention is not None:
            diff = fwd.pooled[label] - params["proto.U"][label]
        else:
            diff = fwd.pooled - params["proto.U"][label]
        unit = diff / d if d > 1e-12 else np.zeros_like(diff)
        dv = dprob_dd * unit
    else:
        prob = float(fwd.probabilities[label])
        dz = prob * (1.0 - prob)
        dv = dz * params["head.weight"][label]

    if fwd.attention is not None:
        dV = np.zeros_like(fwd.pooled)
        dV[label] = dv
        dg, _ = _labelwise_pool_backward(g, params["attn.W"], fwd.attention, dV)
    else:
        dg = np.broadcast_to(dv / len(g), g.shape)

    grads = zero_grads(params)
    _, dx0 = encode_backward(
        fwd.encoded, np.ascontiguousarray(dg), params, model.config, grads
    )
    return dx0


def saliency(
    model: ProtoModel,
    doc: Document,
    label: int,
    method: str,
    rng: np.random.Generator | None = None,
) -> Saliency:
    if method not in SALIENCY_METHODS:
        raise InputError(f"unknown saliency method {method!r}")
    if not 0 <= label < model.n_labels:
        raise InputError(f"label {label} out of range")
    tokens = np.asarray(doc.tokens, dtype=np.int64)
    n = len(tokens)

    if method == "proto_attention":
        if not is_labelwise(model.variant):
            raise InputError("proto_attention requires a label-wise variant")
        fwd = forward_doc(model, tokens, want_cache=False)
        scores = fwd.attention[:, label].astype(np.float64)
    elif method == "occlusion":
        base = forward_doc(model, tokens, want_cache=False).probabilities[label]
        scores = np.zeros(n, dtype=np.float64)
        for j in range(n):
            masked = tokens.copy()
            masked[j] = MASK_ID
            xy = forward_doc(model, masked, want_cache=False).probabilities[label]
            scores[j] = max(0.0, float(base - xy))
    elif method in ("gradient", "input_x_gradient"):
        fwd = forward_doc(model, tokens, want_cache=True)
        dx0 = _prob_gradient_wrt_inputs(model, fwd, label)
        if method == "gradient":
            scores = np.linalg.norm(dx0.astype(np.float64), axis=1)
        else:
            emb = model.params["embed"][tokens].astype(np.float64)
            scores = np.abs((emb * dx0.astype(np.float64)).sum(axis=1))
    else:  # random_control
        if rng is None:
            rng = np.random.default_rng(0)
        scores = rng.uniform(size=n)

    if not np.all(np.isfinite(scores)):
        raise InputError(f"non-finite saliency scores from method {method}")
    return Saliency(method=method, label=label, scores=scores)


def masking_order(scores: np.ndarray) -> np.ndarray:
    """Token positions sorted by saliency descending, earlier position first
    on ties."""
    n = len(scores)
    return np.array(sorted(range(n), key=lambda j: (-scores[j], j)), dtype=np.int64)


def merge_spans(positions) -> list[tuple[int, int]]:
    """Merge sorted token positions into [start, end) spans."""
    spans: list[tuple[int, int]] = []
    for p in sorted(positions):
        if spans and p == spans[-1][1]:
            spans[-1] = (spans[-1][0], p + 1)
        else:
            spans.append((p, p + 1))
    return spans


def top_attention_spans(attention: np.ndarray, n_tokens: int = 5) -> list[tuple[int, int]]:
    order = masking_order(np.asarray(attention, dtype=np.float64))
    return merge_spans(order[: min(n_tokens, len(order))].tolist())


def _pooled_for_label(model: ProtoModel, fwd: DocForward, label: int) -> np.ndarray:
    return fwd.pooled[label] if fwd.attention is not None else fwd.pooled


def rank_exemplar_candidates(
    candidates: list[tuple[str, float]], k: int, mode: str
) -> list[tuple[str, float]]:
    """Shared ranking rule: distance ascending (typical) or descending
    (atypical), ties broken by document id ascending."""
    if mode == "typical":
        ranked = sorted(candidates, key=lambda c: (c[1], c[0]))
    elif mode == "atypical":
        ranked = sorted(candidates, key=lambda c: (-c[1], c[0]))
    else:
        raise InputError(f"unknown exemplar mode {mode!r}")
    return ranked[:k]


def retrieve_exemplars(
    model: ProtoModel,
    train: Corpus,
    label: int,
    k: int,
    mode: str = "typical",
    span_tokens: int = 5,
    include_negatives: bool = False,
) -> list[PrototypeExemplar]:
    """Training documents whose label-wise vector is closest to (typical)
    or furthest from (atypical) the label's prototype."""
    if not is_proto(model.variant):
        raise InputError("exemplar retrieval requires a prototype variant")
    if not 0 <= label < model.n_labels:
        raise InputError(f"label {label} out of range")

    entries: dict[str, tuple[float, np.ndarray | None]] = {}
    candidates: list[tuple[str, float]] = []
    for doc in train.documents:
        if not include_negatives and label not in doc.labels:
            continue
        fwd = forward_doc(model, doc.tokens, want_cache=False)
        dist = float(fwd.scores[label])
        att = fwd.attention[:, label].copy() if fwd.attention is not None else None
        entries[doc.id] = (dist, att)
        candidates.append((doc.id, dist))

    if not candidates:
        warnings.warn(f"label {model.label_vocab[label]!r} has no positive documents")
        return []

    out = []
    for doc_id, dist in rank_exemplar_candidates(candidates, k, mode):
        att = entries[doc_id][1]
        spans = top_attention_spans(att, span_tokens) if att is not None else []
        out.append(
            PrototypeExemplar(doc_id=doc_id, distance=dist, attention=att, top_spans=spans)
        )
    return out


def faithfulness(
    model: ProtoModel,
    eval_corpus: Corpus,
    labels: list[int],
    method: str,
    seed: int = 0,
) -> FaithfulnessReport:
    """Performance-vs-masking curve for one saliency method.

    At each threshold q the ceil(q * n_tokens) most salient tokens of each
    (document, label) pair are replaced by MASK (ties resolved toward
    earlier positions) and macro ROC AUC over the label subset is
    recomputed; the scalar score is the mean over the ten thresholds.
    """
    y = eval_corpus.label_matrix()
    kept: list[int] = []
    for c in labels:
        if not 0 <= c < model.n_labels:
            raise InputError(f"label {c} out of range")
        pos = int(y[:, c].sum())
        if pos == 0 or pos == len(eval_corpus):
            warnings.warn(
                f"label {model.label_vocab[c]!r} is degenerate in the eval corpus; excluded"
            )
            continue
        kept.append(c)
    if not kept:
        raise InputError("no non-degenerate labels to evaluate")

    rng = np.random.default_rng(seed)
    docs = eval_corpus.documents

    # saliency and masking order once per (document, label); thresholds
    # reuse them
    orders: dict[tuple[int, int], np.ndarray] = {}
    for i, doc in enumerate(docs):
        for c in kept:
            sal = saliency(model, doc, c, method, rng=rng)
            orders[(i, c)] = masking_order(sal.scores)

    reference = np.empty((len(docs), len(kept)), dtype=np.float64)
    for i, doc in enumerate(docs):
        probs = forward_doc(model, doc.tokens, want_cache=False).probabilities
        reference[i] = probs[kept]
    ref_macro = float(np.mean([roc_auc(reference[:, j], y[:, c]) for j, c in enumerate(kept)]))

    curve: list[float] = []
    for q in FAITHFULNESS_THRESHOLDS:
        scores = np.empty((len(docs), len(kept)), dtype=np.float64)
        for i, doc in enumerate(docs):
            tokens = np.asarray(doc.tokens, dtype=np.int64)
            n_mask = math.ceil(q * len(tokens))
            for j, c in enumerate(kept):
                masked = tokens.copy()
                masked[orders[(i, c)][:n_mask]] = MASK_ID
                scores[i, j] = forward_doc(model, masked, want_cache=False).probabilities[c]
        curve.append(
            float(np.mean([roc_auc(scores[:, j], y[:, c]) for j, c in enumerate(kept)]))
        )

    return FaithfulnessReport(
        method=method,
        labels=[model.label_vocab[c] for c in kept],
        thresholds=FAITHFULNESS_THRESHOLDS,
        macro_roc_auc=curve,
        score=float(np.mean(curve)),
        reference_macro_roc_auc=ref_macro,
    )


def top_attended_words(
    model: ProtoModel, corpus: Corpus, label: int, m: int
) -> list[tuple[str, float]]:
    """Token strings ranked by total attention mass over the label's
    positive documents."""
    if not is_labelwise(model.variant):
        raise InputError("top_attended_words requires a label-wise variant")
    if not 0 <= label < model.n_labels:
        raise InputError(f"label {label} out of range")
    mass: dict[str, float] = {}
    for doc in corpus.documents:
        if label not in doc.labels:
            continue
        fwd = forward_doc(model, doc.tokens, want_cache=False)
        att = fwd.attention[:, label]
        for j, t in enumerate(doc.tokens):
            word = model.vocab.decode_id(t)
            mass[word] = mass.get(word, 0.0) + float(att[j])
    ranked = sorted(mass.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:m]


# ---------------------------------------------------------------------------
# Explanation reports
# ---------------------------------------------------------------------------

REPORT_SCHEMA = {
    "type": "object",
    "required": ["doc_id", "model_hash", "labels"],
    "properties": {
        "doc_id": {"type": "string"},
        "model_hash": {"type": ["string", "null"]},
        "labels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "probability", "distance", "token_scores", "exemplars"],
                "properties": {
                    "label": {"type": "string"},
                    "probability": {"type": "number"},
                    "distance": {"type": "number"},
                    "token_scores": {"type": "array", "items": {"type": "number"}},
                    "exemplars": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["doc_id", "distance", "top_spans"],
                            "properties": {
                                "doc_id": {"type": "string"},
                                "distance": {"type": "number"},
                                "top_spans": {
                                    "type": "array",
                                    "items": {
                                        "type": "array",
                                        "items": {"type": "integer"},
                                        "minItems": 2,
                                        "maxItems": 2,
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
    },
}


def render_report(
    doc: Document,
    model: ProtoModel,
    labels: list[int],
    exemplars: dict[int, list[PrototypeExemplar]] | None = None,
    corpus_vocab=None,
) -> dict:
    """Machine-readable explanation report for one document.

    When the document's source vocabulary is supplied it must match the
    model's, otherwise the token ids silently mean different strings.
    """
    if corpus_vocab is not None and corpus_vocab != model.vocab:
        raise InputError("document vocabulary does not match the model vocabulary")
    fwd = forward_doc(model, doc.tokens, want_cache=False)
    entries = []
    for c in labels:
        if fwd.attention is not None:
            token_scores = [float(v) for v in fwd.attention[:, c]]
        else:
            token_scores = [1.0 / len(doc.tokens)] * len(doc.tokens)
        ex = (exemplars or {}).get(c, [])
        entries.append(
            {
                "label": model.label_vocab[c],
                "probability": float(fwd.probabilities[c]),
                "distance": float(fwd.scores[c]),
                "token_scores": token_scores,
                "exemplars": [
                    {
                        "doc_id": e.doc_id,
                        "distance": e.distance,
                        "top_spans": [[int(a), int(b)] for a, b in e.top_spans],
                    }
                    for e in ex
                ],
            }
        )
    return {"doc_id": doc.id, "model_hash": model.model_hash, "labels": entries}


_HTML_PAGE = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Explanation {doc_id}</title>
<style>
body {{ font-family: sans-serif; margin: 1.5em; }}
.note span {{ padding: 1px 2px; border-radius: 3px; }}
.label-block {{ border: 1px solid #ccc; margin: 1em 0; padding: 0.8em; }}
.exemplar {{ background: #f6f6f6; margin: 0.4em 0; padding: 0.4em; }}
.dist {{ color: #666; font-size: 0.9em; }}
</style></head>
<body>
<h1>Document {doc_id}</h1>
{blocks}
</body></html>
"""


def render_report_html(report: dict, tokens: list[str], exemplar_tokens: dict[str, list[str]] | None = None) -> str:
    """Self-contained HTML rendering of a report: one highlight block per
    label plus one panel per exemplar."""
    blocks = []
    for entry in report["labels"]:
        scores = entry["token_scores"]
        top = max(scores) if scores else 1.0
        words = []
        for tok, s in zip(tokens, scores):
            alpha = 0.0 if top <= 0 else max(0.0, min(1.0, s / top))
            words.append(
                f'<span style="background: rgba(255,165,0,{alpha:.3f})">{html.escape(tok)}</span>'
            )
        panels = []
        for ex in entry["exemplars"]:
            ex_toks = (exemplar_tokens or {}).get(ex["doc_id"])
            if ex_toks:
                parts = [
                    html.escape(" ".join(ex_toks[a:b])) for a, b in ex["top_spans"]
                ]
                body = " &hellip; ".join(parts)
            else:
                body = ", ".join(f"[{a},{b})" for a, b in ex["top_spans"])
            panels.append(
                f'<div class="exemplar"><b>{html.escape(ex["doc_id"])}</b> '
                f'<span class="dist">distance {ex["distance"]:.4f}</span><br>{body}</div>'
            )
        blocks.append(
            f'<div class="label-block"><h2>{html.escape(entry["label"])}</h2>'
            f'<p>probability {entry["probability"]:.4f}, distance {entry["distance"]:.4f}</p>'
            f'<p class="note">{" ".join(words)}</p>'
            f"{''.join(panels)}</div>"
        )
    return _HTML_PAGE.format(doc_id=html.escape(report["doc_id"]), blocks="\n".join(blocks))
