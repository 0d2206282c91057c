import json
from dataclasses import replace

import numpy as np
import pytest

from protodx.checkpoint import checkpoint_hash, load_model, save_model
from protodx.corpus import generate_synthetic
from protodx.errors import CheckpointError
from protodx.model import forward_doc
from protodx.presets import get_preset
from protodx.training import train


@pytest.fixture(scope="module")
def trained():
    preset = get_preset("overfit").with_seed(0)
    corpus, _ = generate_synthetic(preset.synthetic)
    tc = replace(preset.train, total_steps=40, eval_every=20, seed=1)
    model, _ = train(corpus, corpus, tc, "proto_labelwise", preset.encoder_config(len(corpus.vocab)))
    return corpus, model


class TestRoundTrip:
    def test_params_bit_identical(self, trained, tmp_path):
        _, model = trained
        save_model(model, tmp_path / "ckpt")
        loaded = load_model(tmp_path / "ckpt")
        assert set(loaded.params) == set(model.params)
        for name in model.params:
            assert loaded.params[name].tobytes() == model.params[name].tobytes()
        assert loaded.label_vocab == model.label_vocab
        assert loaded.variant == model.variant
        assert loaded.vocab == model.vocab
        assert loaded.model_hash == checkpoint_hash(tmp_path / "ckpt")

    def test_forward_outputs_bit_identical_on_random_docs(self, trained, tmp_path):
        corpus, model = trained
        save_model(model, tmp_path / "ckpt")
        loaded = load_model(tmp_path / "ckpt")
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 20))
            tokens = rng.integers(0, len(corpus.vocab), size=n)
            a = forward_doc(model, tokens, want_cache=False).probabilities
            b = forward_doc(loaded, tokens, want_cache=False).probabilities
            assert a.tobytes() == b.tobytes()

    def test_save_is_deterministic(self, trained, tmp_path):
        _, model = trained
        save_model(model, tmp_path / "a")
        save_model(model, tmp_path / "b")
        for name in ("model.json", "tensors.bin", "vocab.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestValidation:
    def test_truncated_tensors_detected(self, trained, tmp_path):
        _, model = trained
        save_model(model, tmp_path / "ckpt")
        blob = (tmp_path / "ckpt" / "tensors.bin").read_bytes()
        (tmp_path / "ckpt" / "tensors.bin").write_bytes(blob[:-16])
        with pytest.raises(CheckpointError, match="size mismatch"):
            load_model(tmp_path / "ckpt")

    def test_label_count_mismatch_detected(self, trained, tmp_path):
        _, model = trained
        save_model(model, tmp_path / "ckpt")
        meta = json.loads((tmp_path / "ckpt" / "model.json").read_text())
        meta["label_vocab"] = meta["label_vocab"][:-1]
        (tmp_path / "ckpt" / "model.json").write_text(json.dumps(meta))
        with pytest.raises(CheckpointError, match="label count"):
            load_model(tmp_path / "ckpt")

    def test_version_mismatch_detected(self, trained, tmp_path):
        _, model = trained
        save_model(model, tmp_path / "ckpt")
        meta = json.loads((tmp_path / "ckpt" / "model.json").read_text())
        meta["format_version"] = 99
        (tmp_path / "ckpt" / "model.json").write_text(json.dumps(meta))
        with pytest.raises(CheckpointError, match="format_version"):
            load_model(tmp_path / "ckpt")

    def test_vocab_hash_mismatch_detected(self, trained, tmp_path):
        _, model = trained
        save_model(model, tmp_path / "ckpt")
        vocab_file = tmp_path / "ckpt" / "vocab.txt"
        vocab_file.write_bytes(vocab_file.read_bytes() + b"intruder\n")
        with pytest.raises(CheckpointError, match="vocab_sha256"):
            load_model(tmp_path / "ckpt")

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "nope")
