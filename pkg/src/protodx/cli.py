"""Command-line entry point.

Subcommands: gen-data, train, eval, explain, faithfulness, serve. Every
run derives all randomness from --seed, writes a manifest of its resolved
configuration under --out, and follows the exit-code contract 0 = ok,
1 = validation error, 2 = runtime/numeric error. PROTODX_THREADS caps
worker parallelism (the current implementation is single-threaded, which
trivially respects any cap).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_model, save_model
from .corpus import (
    SyntheticSpec,
    generate_synthetic,
    load_corpus,
    load_label_vocab,
    save_corpus,
    save_label_vocab,
    split,
)
from .errors import NumericError, ProtodxError
from .explain import (
    SALIENCY_METHODS,
    faithfulness,
    render_report,
    render_report_html,
    retrieve_exemplars,
)
from .metrics import evaluate_scores
from .model import VARIANTS, is_proto, predict_matrix
from .presets import PRESETS, get_preset
from .training import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="protodx", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic benchmark corpus")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(PRESETS))
    group.add_argument("--spec", type=Path, help="JSON file with SyntheticSpec fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", dest="train_path", type=Path, required=True)
    p.add_argument("--val", dest="val_path", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS, default="proto_labelwise")
    p.add_argument("--preset", choices=sorted(PRESETS), help="take defaults from a preset")
    p.add_argument("--dim", type=int, help="output dimensionality D")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--blocks", type=int, choices=(0, 1, 2))
    p.add_argument("--heads", type=int)
    p.add_argument("--attn-init", choices=("on", "off"))
    p.add_argument("--proto-init", choices=("on", "off"))
    p.add_argument("--h", type=float, help="TF-IDF threshold for attention init")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-encoder", type=float)
    p.add_argument("--lr-head", type=float)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--labels", type=Path, help="fixed label vocabulary file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--buckets", type=Path, metavar="TRAIN_CORPUS",
                   help="training corpus for frequency-bucketed macro scores")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("explain", help="explain predictions for one document")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--doc-id", required=True)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--exemplars", type=int, default=2)
    p.add_argument("--train-corpus", type=Path, help="exemplar candidate pool")
    p.add_argument("--format", choices=("json", "html"), default="json")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("faithfulness", help="run the masking-faithfulness protocol")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--labels", required=True, help="comma-separated label names")
    p.add_argument("--method", choices=SALIENCY_METHODS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.add_argument("--train-corpus", type=Path, help="exemplar index source")
    p.add_argument("--val-corpus", type=Path, help="bundle per-label validation ROC AUC")
    p.add_argument("--allow-origin", help="CORS origin for the companion UI")

    return parser


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_manifest(out: Path, command: str, args: argparse.Namespace) -> None:
    resolved = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "command"
    }
    _write_json(out / "manifest.json", {
        "command": command,
        "resolved": resolved,
        "version": __version__,
    })


def _load_model_corpus(model_path: Path, corpus_path: Path):
    model = load_model(model_path)
    corpus = load_corpus(
        corpus_path,
        vocab=model.vocab,
        label_vocab=list(model.label_vocab),
        max_len=model.config.max_len,
    )
    return model, corpus


def _cmd_gen_data(args) -> int:
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.preset:
        preset = get_preset(args.preset).with_seed(args.seed)
        spec, ratios = preset.synthetic, preset.ratios
    else:
        spec_json = json.loads(args.spec.read_text(encoding="utf-8"))
        spec_json["seed"] = args.seed
        spec = SyntheticSpec.from_json(spec_json)
        ratios = (0.8, 0.1, 0.1)

    corpus, truth = generate_synthetic(spec)
    if ratios[1] == 0.0 and ratios[2] == 0.0:
        parts = (corpus, corpus, corpus)  # overfit preset: one shared corpus
    else:
        parts = split(corpus, ratios, seed=args.seed)
    for name, part in zip(("train", "val", "test"), parts):
        save_corpus(part, out / f"{name}.jsonl")
    save_label_vocab(corpus.label_vocab, out / "labels.txt")
    _write_json(out / "truth.json", truth)
    _write_manifest(out, "gen-data", args)
    return 0


def _cmd_train(args) -> int:
    out: Path = args.out
    preset = get_preset(args.preset) if args.preset else None
    base = preset.train if preset else TrainConfig()

    label_vocab = None
    if args.labels:
        label_vocab = load_label_vocab(args.labels)
    else:
        sibling = args.train_path.parent / "labels.txt"
        if sibling.exists():
            label_vocab = load_label_vocab(sibling)

    train_corpus = load_corpus(args.train_path, label_vocab=label_vocab)
    val_corpus = load_corpus(
        args.val_path, vocab=train_corpus.vocab, label_vocab=list(train_corpus.label_vocab)
    )

    def pick(flag, fallback):
        return flag if flag is not None else fallback

    config = TrainConfig(
        total_steps=pick(args.steps, base.total_steps),
        batch_size=pick(args.batch_size, base.batch_size),
        lr_encoder=pick(args.lr_encoder, base.lr_encoder),
        lr_head=pick(args.lr_head, base.lr_head),
        weight_decay=base.weight_decay,
        warmup_steps=base.warmup_steps,
        seed=args.seed,
        proto_mean_init=(
            args.proto_init == "on" if args.proto_init else base.proto_mean_init
        ),
        attention_tfidf_init=(
            args.attn_init == "on" if args.attn_init else base.attention_tfidf_init
        ),
        h=pick(args.h, base.h),
        eval_every=pick(args.eval_every, base.eval_every),
        convergence_loss_threshold=base.convergence_loss_threshold,
    )

    from .encoder import EncoderConfig

    if preset:
        encoder = preset.encoder_config(len(train_corpus.vocab))
        enc_kwargs = encoder.to_json()
    else:
        enc_kwargs = EncoderConfig(vocab_size=len(train_corpus.vocab)).to_json()
    if args.embed_dim:
        enc_kwargs["embed_dim"] = args.embed_dim
        enc_kwargs["ff_dim"] = None
    if args.dim:
        enc_kwargs["output_dim"] = args.dim
    if args.blocks is not None:
        enc_kwargs["context_blocks"] = args.blocks
    if args.heads:
        enc_kwargs["attention_heads"] = args.heads
    encoder = EncoderConfig(**enc_kwargs)

    model, stats = train(train_corpus, val_corpus, config, args.variant, encoder)
    save_model(model, out / "checkpoint")
    _write_json(out / "stats.json", stats.to_json())
    _write_json(out / "train_config.json", config.to_json())
    _write_manifest(out, "train", args)
    return 0


def _cmd_eval(args) -> int:
    model, corpus = _load_model_corpus(args.model, args.corpus)
    freq = None
    if args.buckets:
        train_corpus = load_corpus(
            args.buckets, vocab=model.vocab, label_vocab=list(model.label_vocab)
        )
        freq = train_corpus.label_train_freq
    report = evaluate_scores(
        predict_matrix(model, corpus), corpus.label_matrix(), model.label_vocab, freq
    )
    payload = report.to_json()
    if args.out:
        _write_json(args.out / "metrics.json", payload)
        _write_manifest(args.out, "eval", args)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _cmd_explain(args) -> int:
    model, corpus = _load_model_corpus(args.model, args.corpus)
    try:
        doc = corpus.by_id(args.doc_id)
    except KeyError:
        raise ProtodxError(f"document {args.doc_id!r} not found in the corpus")

    from .model import forward_doc

    fwd = forward_doc(model, doc.tokens, want_cache=False)
    order = sorted(range(model.n_labels), key=lambda c: (-fwd.probabilities[c], c))
    top = order[: args.top_k]

    exemplars = {}
    exemplar_tokens: dict[str, list[str]] = {}
    if args.train_corpus and is_proto(model.variant):
        pool = load_corpus(
            args.train_corpus, vocab=model.vocab, label_vocab=list(model.label_vocab)
        )
        for c in top:
            exemplars[c] = retrieve_exemplars(model, pool, c, args.exemplars)
            for e in exemplars[c]:
                exemplar_tokens[e.doc_id] = model.vocab.decode(pool.by_id(e.doc_id).tokens)

    report = render_report(doc, model, top, exemplars, corpus_vocab=corpus.vocab)
    if args.format == "html":
        rendered = render_report_html(report, model.vocab.decode(doc.tokens), exemplar_tokens)
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "report.html").write_text(rendered, encoding="utf-8")
            _write_manifest(args.out, "explain", args)
        else:
            print(rendered)
    else:
        if args.out:
            _write_json(args.out / "report.json", report)
            _write_manifest(args.out, "explain", args)
        else:
            print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _cmd_faithfulness(args) -> int:
    model, corpus = _load_model_corpus(args.model, args.corpus)
    names = [s.strip() for s in args.labels.split(",") if s.strip()]
    unknown = [n for n in names if n not in model.label_vocab]
    if unknown:
        raise ProtodxError(f"unknown labels: {unknown}")
    ids = [model.label_vocab.index(n) for n in names]
    report = faithfulness(model, corpus, ids, args.method, seed=args.seed)
    _write_json(args.out / "faithfulness.json", report.to_json())
    _write_manifest(args.out, "faithfulness", args)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import build_state, create_app

    model = load_model(args.model)
    train_corpus = None
    if args.train_corpus:
        train_corpus = load_corpus(
            args.train_corpus, vocab=model.vocab, label_vocab=list(model.label_vocab)
        )
    val_corpus = None
    if args.val_corpus:
        val_corpus = load_corpus(
            args.val_corpus, vocab=model.vocab, label_vocab=list(model.label_vocab)
        )
    state = build_state(model, train_corpus, val_corpus)
    app = create_app(state, allow_origin=args.allow_origin)
    host, _, port = args.addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "faithfulness": _cmd_faithfulness,
    "serve": _cmd_serve,
}


def run(argv: list[str] | None = None) -> int:
    if os.environ.get("PROTODX_THREADS"):
        try:
            if int(os.environ["PROTODX_THREADS"]) < 1:
                print("PROTODX_THREADS must be >= 1", file=sys.stderr)
                return 1
        except ValueError:
            print("PROTODX_THREADS must be an integer", file=sys.stderr)
            return 1

    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        out = getattr(args, "out", None)
        if out:
            _write_json(
                Path(out) / "diagnostics.json",
                {"error": str(exc), "step": exc.step, "batch_ids": exc.batch_ids},
            )
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except ProtodxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
