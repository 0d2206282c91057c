"""Bundled synthetic-benchmark presets.

Each preset pins a corpus spec, split ratios, encoder dimensions and a
training configuration so benchmark runs are one command. ``overfit`` is
a 32-document memorization check (train, val and test are the same
corpus), ``desk`` the standard synthetic benchmark and ``rare-labels`` a
heavier-tailed corpus where most labels have under ten positives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .corpus import SyntheticSpec
from .encoder import EncoderConfig
from .errors import ConfigError
from .training import TrainConfig


@dataclass(frozen=True)
class Preset:
    name: str
    synthetic: SyntheticSpec
    ratios: tuple[float, float, float]
    train: TrainConfig
    embed_dim: int
    context_blocks: int
    attention_heads: int
    output_dim: int
    designated_labels: tuple[str, ...] = ()

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            embed_dim=self.embed_dim,
            context_blocks=self.context_blocks,
            attention_heads=self.attention_heads,
            output_dim=self.output_dim,
            max_len=max(self.synthetic.tokens_per_doc, 16),
        )

    def with_seed(self, seed: int) -> "Preset":
        return replace(
            self,
            synthetic=replace(self.synthetic, seed=seed),
            train=replace(self.train, seed=seed),
        )


_OVERFIT = Preset(
    name="overfit",
    synthetic=SyntheticSpec(
        n_labels=4,
        n_docs=32,
        tokens_per_doc=24,
        noise_vocab_size=64,
        zipf_exponent=1.2,
        indicative_tokens_per_label=6,
        mean_labels_per_doc=0.25,
        seed=0,
    ),
    ratios=(1.0, 0.0, 0.0),
    train=TrainConfig(
        total_steps=500,
        batch_size=8,
        lr_encoder=1e-3,
        lr_head=2e-2,
        eval_every=50,
    ),
    embed_dim=32,
    context_blocks=1,
    attention_heads=4,
    output_dim=16,
)

_DESK = Preset(
    name="desk",
    synthetic=SyntheticSpec(
        n_labels=50,
        n_docs=2000,
        tokens_per_doc=50,
        noise_vocab_size=500,
        zipf_exponent=1.2,
        indicative_tokens_per_label=8,
        mean_labels_per_doc=3.0,
        docs_per_patient=2,
        seed=0,
    ),
    ratios=(0.8, 0.1, 0.1),
    train=TrainConfig(
        total_steps=2500,
        batch_size=10,
        lr_encoder=2e-3,
        lr_head=2e-2,
        eval_every=250,
        convergence_loss_threshold=0.12,
    ),
    embed_dim=64,
    context_blocks=1,
    attention_heads=4,
    output_dim=32,
    designated_labels=("L000", "L001", "L002"),
)

_RARE = Preset(
    name="rare-labels",
    synthetic=SyntheticSpec(
        n_labels=40,
        n_docs=900,
        tokens_per_doc=40,
        noise_vocab_size=400,
        zipf_exponent=1.7,
        indicative_tokens_per_label=6,
        mean_labels_per_doc=2.0,
        seed=0,
    ),
    ratios=(0.7, 0.1, 0.2),
    train=TrainConfig(
        total_steps=1200,
        batch_size=10,
        lr_encoder=2e-3,
        lr_head=2e-2,
        eval_every=200,
    ),
    embed_dim=48,
    context_blocks=1,
    attention_heads=4,
    output_dim=24,
)

PRESETS = {p.name: p for p in (_OVERFIT, _DESK, _RARE)}


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]
