import pytest

from protodx.corpus import generate_synthetic, split
from protodx.presets import get_preset
from protodx.training import train


@pytest.fixture(scope="session")
def desk_bundle():
    """The desk benchmark trained once per session: corpus splits, planted
    truth and a proto_labelwise model under the preset's default flags."""
    preset = get_preset("desk").with_seed(0)
    corpus, truth = generate_synthetic(preset.synthetic)
    tr, va, te = split(corpus, preset.ratios, seed=0)
    model, stats = train(
        tr, va, preset.train, "proto_labelwise", preset.encoder_config(len(corpus.vocab))
    )
    return {
        "preset": preset,
        "truth": truth,
        "train": tr,
        "val": va,
        "test": te,
        "model": model,
        "stats": stats,
    }
