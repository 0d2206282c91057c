import math

import numpy as np
import pytest

from protodx.encoder import (
    EncodedDocument,
    EncoderConfig,
    encode,
    encode_backward,
    encoder_param_names,
    finite_difference_error,
    gelu,
    grad_check,
    init_encoder_params,
    position_table,
    quadratic_probe,
    zero_grads,
)
from protodx.errors import ConfigError, InputError, NumericError


def small_config(precision="f64", blocks=1, vocab=20):
    return EncoderConfig(
        vocab_size=vocab,
        embed_dim=8,
        context_blocks=blocks,
        attention_heads=2,
        ff_dim=16,
        output_dim=4,
        max_len=16,
        precision=precision,
    )


def reference_forward(tokens, params, config):
    """Independent re-derivation of the forward pass with explicit loops.

    Kept deliberately naive (per-position, per-head scalars) so it shares
    no code path with the implementation under test.
    """
    E = config.embed_dim
    H = config.attention_heads
    dh = E // H
    n = len(tokens)

    # embeddings + sinusoidal positions
    x = np.zeros((n, E), dtype=np.float64)
    for j, t in enumerate(tokens):
        for i in range(E):
            if i % 2 == 0:
                p = math.sin(j / (10000.0 ** (i / E)))
            else:
                p = math.cos(j / (10000.0 ** ((i - 1) / E)))
            x[j, i] = float(params["embed"][t, i]) + p

    def layer_norm(row, gain, bias):
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        return gain * (row - mu) / math.sqrt(var + 1e-5) + bias

    def gelu_scalar(v):
        c = math.sqrt(2.0 / math.pi)
        return 0.5 * v * (1.0 + math.tanh(c * (v + 0.044715 * v**3)))

    for b in range(config.context_blocks):
        p = lambda s: np.asarray(params[f"block{b}.{s}"], dtype=np.float64)  # noqa: E731
        a_in = np.stack([layer_norm(x[j], p("ln1.gain"), p("ln1.bias")) for j in range(n)])
        q = a_in @ p("wq")
        k = a_in @ p("wk")
        v = a_in @ p("wv")
        heads_out = np.zeros((n, E))
        for h in range(H):
            sl = slice(h * dh, (h + 1) * dh)
            for j in range(n):
                logits = np.array(
                    [np.dot(q[j, sl], k[m, sl]) / math.sqrt(dh) for m in range(n)]
                )
                w = np.exp(logits - logits.max())
                w /= w.sum()
                for m in range(n):
                    heads_out[j, sl] += w[m] * v[m, sl]
        x_mid = x + heads_out @ p("wo")
        f_in = np.stack([layer_norm(x_mid[j], p("ln2.gain"), p("ln2.bias")) for j in range(n)])
        u1 = f_in @ p("ff1.weight") + p("ff1.bias")
        a1 = np.vectorize(gelu_scalar)(u1)
        x = x_mid + a1 @ p("ff2.weight") + p("ff2.bias")

    return x @ np.asarray(params["reduce.weight"], dtype=np.float64) + np.asarray(
        params["reduce.bias"], dtype=np.float64
    )


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            EncoderConfig(vocab_size=10, embed_dim=10, attention_heads=4)

    def test_block_count(self):
        with pytest.raises(ConfigError):
            EncoderConfig(vocab_size=10, context_blocks=3)

    def test_default_ff_dim(self):
        cfg = EncoderConfig(vocab_size=10, embed_dim=16, attention_heads=2)
        assert cfg.ff_dim == 64

    def test_round_trip_json(self):
        cfg = small_config()
        assert EncoderConfig.from_json(cfg.to_json()) == cfg


class TestForward:
    def test_zero_params_affine_degenerate(self):
        cfg = small_config(blocks=0)
        params = init_encoder_params(cfg, np.random.default_rng(0))
        params["embed"][:] = 0.0
        params["reduce.weight"][:] = 0.0
        params["reduce.bias"][:] = [1.0, -2.0, 0.5, 3.0]
        out = encode([4, 5, 6], params, cfg)
        assert np.allclose(out.g, np.tile([1.0, -2.0, 0.5, 3.0], (3, 1)))

    def test_single_token_attention_is_one(self):
        cfg = small_config(blocks=1)
        params = init_encoder_params(cfg, np.random.default_rng(1))
        out = encode([5], params, cfg)
        probs = out.cache["blocks"][0]["probs"]
        assert probs.shape == (2, 1, 1)
        assert np.allclose(probs, 1.0)

    def test_matches_independent_reference(self):
        rng = np.random.default_rng(7)
        for blocks in (0, 1, 2):
            cfg = small_config(blocks=blocks)
            params = init_encoder_params(cfg, rng)
            tokens = [3, 9, 3, 14]
            ours = encode(tokens, params, cfg).g
            theirs = reference_forward(tokens, params, cfg)
            assert np.max(np.abs(ours - theirs)) < 1e-10

    def test_input_validation(self):
        cfg = small_config()
        params = init_encoder_params(cfg, np.random.default_rng(0))
        with pytest.raises(InputError):
            encode([], params, cfg)
        with pytest.raises(InputError):
            encode([cfg.vocab_size], params, cfg)
        with pytest.raises(InputError):
            encode(list(range(17)), params, cfg)

    def test_attention_rows_sum_to_one(self):
        for precision, tol in (("f32", 1e-6), ("f64", 1e-12)):
            cfg = small_config(precision=precision)
            params = init_encoder_params(cfg, np.random.default_rng(3))
            out = encode([1, 4, 9, 2, 7], params, cfg)
            probs = out.cache["blocks"][0]["probs"]
            assert np.max(np.abs(probs.sum(axis=-1) - 1.0)) < tol

    def test_forward_determinism_bit_identical(self):
        cfg = small_config(precision="f32")
        params = init_encoder_params(cfg, np.random.default_rng(4))
        a = encode([1, 2, 3], params, cfg).g
        b = encode([1, 2, 3], params, cfg).g
        assert a.tobytes() == b.tobytes()

    def test_swapping_identical_tokens_is_identity(self):
        cfg = small_config(blocks=0)
        params = init_encoder_params(cfg, np.random.default_rng(5))
        tokens = [7, 3, 7, 5]
        swapped = [7, 3, 7, 5]  # positions 0 and 2 hold the same token
        a = encode(tokens, params, cfg).g
        b = encode(swapped, params, cfg).g
        assert np.array_equal(a, b)

    def test_position_table_interleaves_sin_cos(self):
        cfg = small_config()
        table = position_table(cfg, 3)
        assert table[0, 0] == 0.0 and table[0, 1] == 1.0
        assert table[2, 0] == pytest.approx(math.sin(2.0), abs=1e-12)

    def test_gelu_reference_values(self):
        c = math.sqrt(2.0 / math.pi)
        for x in (-2.0, -0.5, 0.0, 0.3, 1.0, 4.0):
            expected = 0.5 * x * (1.0 + math.tanh(c * (x + 0.044715 * x**3)))
            assert gelu(np.array([x]))[0] == pytest.approx(expected, abs=1e-12)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        cfg = small_config()
        params = init_encoder_params(cfg, np.random.default_rng(6))
        out = encode([1, 2, 3], params, cfg)
        grads, dx0 = encode_backward(out, np.zeros_like(out.g), params, cfg)
        assert all(np.all(g == 0) for g in grads.values())
        assert np.all(dx0 == 0)

    def test_linear_case_embedding_gradient_accumulates(self):
        cfg = EncoderConfig(
            vocab_size=10, embed_dim=4, context_blocks=0, attention_heads=1,
            output_dim=4, max_len=8, precision="f64",
        )
        params = init_encoder_params(cfg, np.random.default_rng(7))
        params["reduce.weight"] = np.eye(4)
        params["reduce.bias"][:] = 0.0
        tokens = [3, 5, 3]
        out = encode(tokens, params, cfg)
        upstream = np.arange(12, dtype=np.float64).reshape(3, 4)
        grads, _ = encode_backward(out, upstream, params, cfg)
        assert np.allclose(grads["embed"][3], upstream[0] + upstream[2])
        assert np.allclose(grads["embed"][5], upstream[1])

    def test_shape_mismatch_rejected(self):
        cfg = small_config()
        params = init_encoder_params(cfg, np.random.default_rng(8))
        out = encode([1, 2], params, cfg)
        with pytest.raises(InputError):
            encode_backward(out, np.zeros((3, 4)), params, cfg)

    def test_backward_without_cache_rejected(self):
        cfg = small_config()
        params = init_encoder_params(cfg, np.random.default_rng(8))
        out = encode([1, 2], params, cfg, want_cache=False)
        with pytest.raises(InputError):
            encode_backward(out, np.zeros((2, 4)), params, cfg)


class TestGradCheck:
    def test_linear_only_model_is_exact(self):
        cfg = small_config(blocks=0)
        params = init_encoder_params(cfg, np.random.default_rng(9))
        err = grad_check(params, cfg, [1, 5, 9], n_samples=60, seed=0)
        assert err < 1e-9

    def test_full_model_passes(self):
        cfg = small_config(blocks=1)
        params = init_encoder_params(cfg, np.random.default_rng(10))
        err = grad_check(params, cfg, [2, 4, 6, 8, 1, 3], n_samples=40, seed=0)
        assert err < 1e-4

    def test_requires_f64(self):
        cfg = small_config(precision="f32")
        params = init_encoder_params(cfg, np.random.default_rng(11))
        with pytest.raises(ConfigError):
            grad_check(params, cfg, [1, 2])

    def test_many_seeds_stay_below_tolerance(self):
        worst = 0.0
        for seed in range(20):
            cfg = small_config(blocks=1)
            params = init_encoder_params(cfg, np.random.default_rng(seed))
            worst = max(
                worst, grad_check(params, cfg, [1, 2, 3, 4], n_samples=12, seed=seed)
            )
        assert worst < 1e-4

    def test_corrupted_gradient_detected(self):
        # the relative-error formula |a-n|/(|a|+|n|) is bounded by 1, so a
        # sign flip reports an error near 1, far above the tolerance
        cfg = small_config(blocks=0)
        params = init_encoder_params(cfg, np.random.default_rng(12))
        tokens = [1, 2, 3]

        def loss_fn(ps):
            return quadratic_probe(encode(tokens, ps, cfg, want_cache=False).g)[0]

        out = encode(tokens, params, cfg)
        grads, _ = encode_backward(out, out.g.copy(), params, cfg)
        grads = {k: -v for k, v in grads.items()}  # deliberate sign flip
        err = finite_difference_error(loss_fn, params, grads, n_samples=20, seed=0)
        assert err > 0.9

    def test_non_finite_gradient_raises(self):
        cfg = small_config(blocks=0)
        params = init_encoder_params(cfg, np.random.default_rng(13))
        grads = zero_grads(params)
        grads["embed"][0, 0] = np.nan
        with pytest.raises(NumericError):
            finite_difference_error(lambda p: 0.0, params, grads, n_samples=5)


def test_param_name_order_is_stable():
    cfg = small_config(blocks=2)
    names = encoder_param_names(cfg)
    assert names[0] == "embed"
    assert names[-2:] == ["reduce.weight", "reduce.bias"]
    assert names.index("block0.wq") < names.index("block1.wq")
    params = init_encoder_params(cfg, np.random.default_rng(0))
    assert list(params) == names
