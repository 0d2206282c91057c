"""Checkpoint directory format.

``model.json`` holds format_version, the encoder configuration, variant,
label vocabulary, a sha256 of vocab.txt and a tensor manifest mapping
name -> {offset, shape, dtype}. ``tensors.bin`` is the little-endian
IEEE-754 f32 concatenation of the tensors in manifest order and
``vocab.txt`` lists one token per line in id order (reserved markers
first). Loading verifies every size and hash and round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .corpus import N_RESERVED, RESERVED_TOKENS, Vocabulary
from .encoder import EncoderConfig, encoder_param_names
from .errors import CheckpointError
from .model import ProtoModel, head_param_names

FORMAT_VERSION = 1


def _vocab_bytes(vocab: Vocabulary) -> bytes:
    return ("\n".join(vocab.tokens()) + "\n").encode("utf-8")


def vocabulary_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256(_vocab_bytes(vocab)).hexdigest()


def model_param_order(model: ProtoModel) -> list[str]:
    return encoder_param_names(model.config) + head_param_names(model.variant)


def save_model(model: ProtoModel, directory) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)

    order = model_param_order(model)
    manifest: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name in order:
        tensor = np.ascontiguousarray(model.params[name], dtype="<f4")
        raw = tensor.tobytes()
        manifest[name] = {
            "offset": offset,
            "shape": list(tensor.shape),
            "dtype": "f32",
        }
        blobs.append(raw)
        offset += len(raw)

    vocab_raw = _vocab_bytes(model.vocab)
    encoder_json = model.config.to_json()
    encoder_json["precision"] = "f32"  # tensors.bin is f32 by format
    meta = {
        "format_version": FORMAT_VERSION,
        "encoder": encoder_json,
        "variant": model.variant,
        "label_vocab": list(model.label_vocab),
        "vocab_sha256": hashlib.sha256(vocab_raw).hexdigest(),
        "manifest": manifest,
    }
    (path / "vocab.txt").write_bytes(vocab_raw)
    (path / "tensors.bin").write_bytes(b"".join(blobs))
    (path / "model.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def checkpoint_hash(directory) -> str:
    """sha256 over model.json and tensors.bin, identifying the checkpoint."""
    path = Path(directory)
    h = hashlib.sha256()
    h.update((path / "model.json").read_bytes())
    h.update((path / "tensors.bin").read_bytes())
    return h.hexdigest()


def load_model(directory) -> ProtoModel:
    path = Path(directory)
    meta_path = path / "model.json"
    if not meta_path.exists():
        raise CheckpointError(f"{meta_path} not found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))

    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"format_version mismatch: expected {FORMAT_VERSION}, got {meta.get('format_version')}"
        )

    vocab_raw = (path / "vocab.txt").read_bytes()
    if hashlib.sha256(vocab_raw).hexdigest() != meta["vocab_sha256"]:
        raise CheckpointError("vocab_sha256 mismatch: vocab.txt does not match model.json")
    lines = vocab_raw.decode("utf-8").splitlines()
    if tuple(lines[:N_RESERVED]) != RESERVED_TOKENS:
        raise CheckpointError("vocab.txt does not start with the reserved markers")
    vocab = Vocabulary(lines[N_RESERVED:])

    config = EncoderConfig.from_json(meta["encoder"])
    if config.vocab_size != len(vocab):
        raise CheckpointError(
            f"vocab_size mismatch: encoder expects {config.vocab_size}, vocab.txt has {len(vocab)}"
        )

    variant = meta["variant"]
    label_vocab = tuple(meta["label_vocab"])
    expected = encoder_param_names(config) + head_param_names(variant)
    manifest = meta["manifest"]
    if sorted(manifest) != sorted(expected):
        raise CheckpointError("manifest mismatch: tensor names do not match the configuration")

    raw = (path / "tensors.bin").read_bytes()
    params: dict[str, np.ndarray] = {}
    for name in expected:
        entry = manifest[name]
        if entry["dtype"] != "f32":
            raise CheckpointError(f"tensor {name}: unsupported dtype {entry['dtype']}")
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        end = start + 4 * count
        if end > len(raw):
            raise CheckpointError(
                f"tensor {name}: size mismatch (needs bytes [{start},{end}), file has {len(raw)})"
            )
        params[name] = np.frombuffer(raw[start:end], dtype="<f4").reshape(shape).copy()

    for head_name in ("attn.W", "proto.U", "head.weight"):
        if head_name in params and params[head_name].shape[0] != len(label_vocab):
            raise CheckpointError(
                f"label count mismatch: {head_name} has {params[head_name].shape[0]} rows "
                f"but label_vocab lists {len(label_vocab)}"
            )

    return ProtoModel(
        config=config,
        variant=variant,
        params=params,
        label_vocab=label_vocab,
        vocab=vocab,
        model_hash=checkpoint_hash(path),
    )
