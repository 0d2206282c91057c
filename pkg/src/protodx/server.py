"""Read-only HTTP JSON inference service over a loaded checkpoint.

Endpoints: POST /predict, GET /prototypes/{label}, GET /labels and
GET /health. Errors are JSON bodies {"error": ..., "code": ...}. All
state is immutable after startup; the exemplar index is precomputed from
the training corpus so prototype lookups never re-encode it.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .corpus import Corpus
from .explain import rank_exemplar_candidates, top_attention_spans
from .metrics import evaluate_scores
from .model import ProtoModel, forward_doc, is_proto, predict_matrix


@dataclass
class ExemplarEntry:
    doc_id: str
    distance: float
    top_spans: list[tuple[int, int]]
    tokens: list[str]


@dataclass
class ServiceState:
    model: ProtoModel
    label_train_freq: list[int]
    exemplar_index: dict[int, list[ExemplarEntry]]  # per label, unsorted candidates
    val_roc_auc: dict[str, float | None]
    model_hash: str | None


def build_state(
    model: ProtoModel,
    train_corpus: Corpus | None,
    val_corpus: Corpus | None = None,
    span_tokens: int = 5,
) -> ServiceState:
    """Precompute the exemplar index and label metadata at startup."""
    index: dict[int, list[ExemplarEntry]] = {c: [] for c in range(model.n_labels)}
    freq = [0] * model.n_labels
    if train_corpus is not None:
        if tuple(train_corpus.label_vocab) != tuple(model.label_vocab):
            raise ValueError("training corpus label vocabulary does not match the checkpoint")
        for doc in train_corpus.documents:
            if not doc.labels:
                continue
            fwd = forward_doc(model, doc.tokens, want_cache=False)
            tokens = model.vocab.decode(doc.tokens)
            for c in doc.labels:
                freq[c] += 1
                if is_proto(model.variant):
                    spans = (
                        top_attention_spans(fwd.attention[:, c], span_tokens)
                        if fwd.attention is not None
                        else []
                    )
                    index[c].append(
                        ExemplarEntry(
                            doc_id=doc.id,
                            distance=float(fwd.scores[c]),
                            top_spans=spans,
                            tokens=tokens,
                        )
                    )

    val_auc: dict[str, float | None] = {}
    if val_corpus is not None:
        report = evaluate_scores(
            predict_matrix(model, val_corpus), val_corpus.label_matrix(), model.label_vocab
        )
        val_auc = {name: vals["roc_auc"] for name, vals in report.per_label.items()}

    return ServiceState(
        model=model,
        label_train_freq=freq,
        exemplar_index=index,
        val_roc_auc=val_auc,
        model_hash=model.model_hash,
    )


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "code": code})


def create_app(state: ServiceState, allow_origin: str | None = None) -> FastAPI:
    app = FastAPI(title="protodx", docs_url=None, redoc_url=None)

    if allow_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[allow_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    model = state.model

    @app.get("/health")
    def health():
        return {"model_hash": state.model_hash, "n_labels": model.n_labels}

    @app.get("/labels")
    def labels():
        return {
            "labels": [
                {
                    "id": c,
                    "name": name,
                    "train_frequency": state.label_train_freq[c],
                    "val_roc_auc": state.val_roc_auc.get(name),
                }
                for c, name in enumerate(model.label_vocab)
            ]
        }

    @app.post("/predict")
    async def predict(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_json", "request body must be a JSON object")
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            return _error(400, "bad_request", "expected {text: string, top_k?: int}")
        top_k = body.get("top_k", 5)
        if not isinstance(top_k, int) or top_k < 1:
            return _error(400, "bad_top_k", "top_k must be an integer >= 1")
        token_ids = model.encode_text(body["text"])
        if not token_ids:
            return _error(400, "empty_text", "text contains no tokens")

        fwd = forward_doc(model, token_ids, want_cache=False)
        probs = fwd.probabilities
        order = sorted(range(model.n_labels), key=lambda c: (-probs[c], c))[:top_k]
        entries = []
        for c in order:
            scores = (
                [float(v) for v in fwd.attention[:, c]]
                if fwd.attention is not None
                else [1.0 / len(token_ids)] * len(token_ids)
            )
            entries.append(
                {
                    "label": model.label_vocab[c],
                    "probability": float(probs[c]),
                    "distance": float(fwd.scores[c]),
                    "token_scores": scores,
                }
            )
        return {"labels": entries, "tokens": model.vocab.decode(token_ids)}

    @app.get("/prototypes/{label}")
    def prototypes(label: str, k: int = 3, mode: str = "typical"):
        if label not in model.label_vocab:
            return _error(404, "unknown_label", f"label {label!r} is not in the vocabulary")
        if mode not in ("typical", "atypical"):
            return _error(400, "bad_mode", "mode must be 'typical' or 'atypical'")
        if k < 1:
            return _error(400, "bad_k", "k must be >= 1")
        c = model.label_vocab.index(label)
        entries = {e.doc_id: e for e in state.exemplar_index.get(c, [])}
        ranked = rank_exemplar_candidates(
            [(e.doc_id, e.distance) for e in entries.values()], k, mode
        )
        return {
            "label": label,
            "mode": mode,
            "exemplars": [
                {
                    "doc_id": doc_id,
                    "distance": dist,
                    "top_spans": [[int(a), int(b)] for a, b in entries[doc_id].top_spans],
                    "tokens": entries[doc_id].tokens,
                }
                for doc_id, dist in ranked
            ],
        }

    return app
