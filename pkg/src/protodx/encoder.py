"""Trainable contextual token encoder with exact analytic backprop.

Architecture: token embeddings plus fixed sinusoidal positions, zero or
more pre-layernorm self-attention blocks (residual multi-head attention,
then a residual GELU feed-forward), and an affine reduction layer mapping
the embedding width E down to the working width D. Forward passes cache
every intermediate needed for the backward pass; gradients are exact,
including through layer normalization and softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InputError, NumericError

LN_EPS = 1e-5
# tanh-approximation GELU; constants pinned so runs agree bit-for-bit
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass
class EncoderConfig:
    vocab_size: int
    embed_dim: int = 64
    context_blocks: int = 1
    attention_heads: int = 4
    ff_dim: int | None = None
    output_dim: int = 32
    max_len: int = 512
    precision: str = "f32"

    def __post_init__(self):
        if self.ff_dim is None:
            self.ff_dim = 4 * self.embed_dim
        if self.vocab_size < 3:
            raise ConfigError("vocab_size must cover the reserved ids")
        if self.embed_dim % self.attention_heads != 0:
            raise ConfigError("embed_dim must be divisible by attention_heads")
        if self.embed_dim % 2 != 0:
            raise ConfigError("embed_dim must be even (sinusoidal position table)")
        if self.context_blocks not in (0, 1, 2):
            raise ConfigError("context_blocks must be 0, 1 or 2")
        if self.max_len < 1 or self.output_dim < 1:
            raise ConfigError("max_len and output_dim must be positive")
        if self.precision not in ("f32", "f64"):
            raise ConfigError("precision must be 'f32' or 'f64'")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "context_blocks": self.context_blocks,
            "attention_heads": self.attention_heads,
            "ff_dim": self.ff_dim,
            "output_dim": self.output_dim,
            "max_len": self.max_len,
            "precision": self.precision,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


def encoder_param_names(config: EncoderConfig) -> list[str]:
    """Canonical parameter order, used by the optimizer and checkpoints."""
    names = ["embed"]
    for b in range(config.context_blocks):
        names += [
            f"block{b}.ln1.gain",
            f"block{b}.ln1.bias",
            f"block{b}.wq",
            f"block{b}.wk",
            f"block{b}.wv",
            f"block{b}.wo",
            f"block{b}.ln2.gain",
            f"block{b}.ln2.bias",
            f"block{b}.ff1.weight",
            f"block{b}.ff1.bias",
            f"block{b}.ff2.weight",
            f"block{b}.ff2.bias",
        ]
    names += ["reduce.weight", "reduce.bias"]
    return names


def init_encoder_params(config: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Zero-mean uniform with scale 1/sqrt(fan_in); LN gain 1, biases 0."""
    E, F, D, V = config.embed_dim, config.ff_dim, config.output_dim, config.vocab_size
    dt = config.dtype

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dt)

    params: dict[str, np.ndarray] = {"embed": uniform((V, E), E)}
    for b in range(config.context_blocks):
        params[f"block{b}.ln1.gain"] = np.ones(E, dtype=dt)
        params[f"block{b}.ln1.bias"] = np.zeros(E, dtype=dt)
        params[f"block{b}.wq"] = uniform((E, E), E)
        params[f"block{b}.wk"] = uniform((E, E), E)
        params[f"block{b}.wv"] = uniform((E, E), E)
        params[f"block{b}.wo"] = uniform((E, E), E)
        params[f"block{b}.ln2.gain"] = np.ones(E, dtype=dt)
        params[f"block{b}.ln2.bias"] = np.zeros(E, dtype=dt)
        params[f"block{b}.ff1.weight"] = uniform((E, F), E)
        params[f"block{b}.ff1.bias"] = np.zeros(F, dtype=dt)
        params[f"block{b}.ff2.weight"] = uniform((F, E), F)
        params[f"block{b}.ff2.bias"] = np.zeros(E, dtype=dt)
    params["reduce.weight"] = uniform((E, D), E)
    params["reduce.bias"] = np.zeros(D, dtype=dt)
    return {name: params[name] for name in encoder_param_names(config)}


@lru_cache(maxsize=8)
def _position_table(max_len: int, embed_dim: int, precision: str) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    dims = np.arange(0, embed_dim, 2, dtype=np.float64)
    inv_freq = np.power(10000.0, -dims / embed_dim)
    table = np.empty((max_len, embed_dim), dtype=np.float64)
    table[:, 0::2] = np.sin(pos * inv_freq)
    table[:, 1::2] = np.cos(pos * inv_freq)
    out = table.astype(np.float32 if precision == "f32" else np.float64)
    out.setflags(write=False)
    return out


def position_table(config: EncoderConfig, n: int) -> np.ndarray:
    return _position_table(config.max_len, config.embed_dim, config.precision)[:n]


def gelu(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


def _layer_norm(x, gain, bias):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * rstd
    return xhat * gain + bias, (xhat, rstd)


def _layer_norm_backward(dy, gain, cache):
    xhat, rstd = cache
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = rstd * (dxhat - m1 - xhat * m2)
    return dx, dgain, dbias


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class EncodedDocument:
    """Token matrix g (n_tokens x D) plus intermediates for backward."""

    g: np.ndarray
    cache: dict | None


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, e = x.shape
    return x.reshape(n, heads, e // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def encode(
    tokens,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    want_cache: bool = True,
) -> EncodedDocument:
    """g_j = Reduce(Block^n(Embed(token_j) + Pos_j))."""
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or len(ids) == 0:
        raise InputError("token sequence must be non-empty and 1-d")
    if len(ids) > config.max_len:
        raise InputError(f"sequence length {len(ids)} exceeds max_len {config.max_len}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InputError("token id outside the vocabulary range")

    H = config.attention_heads
    scale = 1.0 / math.sqrt(config.embed_dim // H)

    x = params["embed"][ids] + position_table(config, len(ids))
    cache: dict | None = {"tokens": ids, "x0": x, "blocks": []} if want_cache else None

    for b in range(config.context_blocks):
        p = lambda suffix: params[f"block{b}.{suffix}"]  # noqa: E731
        a_in, ln1_cache = _layer_norm(x, p("ln1.gain"), p("ln1.bias"))
        q = _split_heads(a_in @ p("wq"), H)
        k = _split_heads(a_in @ p("wk"), H)
        v = _split_heads(a_in @ p("wv"), H)
        probs = _softmax_rows((q @ k.transpose(0, 2, 1)) * scale)
        heads = _merge_heads(probs @ v)
        x_mid = x + heads @ p("wo")

        f_in, ln2_cache = _layer_norm(x_mid, p("ln2.gain"), p("ln2.bias"))
        u1 = f_in @ p("ff1.weight") + p("ff1.bias")
        a1 = gelu(u1)
        x_out = x_mid + a1 @ p("ff2.weight") + p("ff2.bias")

        if cache is not None:
            cache["blocks"].append(
                {
                    "x_in": x,
                    "ln1": ln1_cache,
                    "a_in": a_in,
                    "q": q,
                    "k": k,
                    "v": v,
                    "probs": probs,
                    "heads": heads,
                    "x_mid": x_mid,
                    "ln2": ln2_cache,
                    "f_in": f_in,
                    "u1": u1,
                    "a1": a1,
                }
            )
        x = x_out

    g = x @ params["reduce.weight"] + params["reduce.bias"]
    if cache is not None:
        cache["x_final"] = x
    return EncodedDocument(g=g, cache=cache)


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in params.items()}


def encode_backward(
    encoded: EncodedDocument,
    upstream: np.ndarray,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    grads: dict[str, np.ndarray] | None = None,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Accumulate exact parameter gradients for one encoded document.

    Returns (grads, d_x0) where d_x0 is the gradient with respect to the
    embedded input rows (embedding + position), used by saliency methods.
    Embedding-row gradients accumulate over repeated token ids.
    """
    cache = encoded.cache
    if cache is None:
        raise InputError("encode() was called without want_cache")
    if upstream.shape != encoded.g.shape:
        raise InputError(f"upstream shape {upstream.shape} does not match g {encoded.g.shape}")
    if grads is None:
        grads = zero_grads(params)

    H = config.attention_heads
    scale = 1.0 / math.sqrt(config.embed_dim // H)

    grads["reduce.weight"] += cache["x_final"].T @ upstream
    grads["reduce.bias"] += upstream.sum(axis=0)
    dx = upstream @ params["reduce.weight"].T

    for b in reversed(range(config.context_blocks)):
        blk = cache["blocks"][b]
        p = lambda suffix: params[f"block{b}.{suffix}"]  # noqa: E731
        gname = lambda suffix: f"block{b}.{suffix}"  # noqa: E731

        # feed-forward branch
        grads[gname("ff2.weight")] += blk["a1"].T @ dx
        grads[gname("ff2.bias")] += dx.sum(axis=0)
        du1 = (dx @ p("ff2.weight").T) * gelu_grad(blk["u1"])
        grads[gname("ff1.weight")] += blk["f_in"].T @ du1
        grads[gname("ff1.bias")] += du1.sum(axis=0)
        d_fin = du1 @ p("ff1.weight").T
        dx_ln2, dg2, db2 = _layer_norm_backward(d_fin, p("ln2.gain"), blk["ln2"])
        grads[gname("ln2.gain")] += dg2
        grads[gname("ln2.bias")] += db2
        dx_mid = dx + dx_ln2

        # attention branch
        grads[gname("wo")] += blk["heads"].T @ dx_mid
        dctx = _split_heads(dx_mid @ p("wo").T, H)
        probs = blk["probs"]
        dprobs = dctx @ blk["v"].transpose(0, 2, 1)
        dv = probs.transpose(0, 2, 1) @ dctx
        dscores = probs * (dprobs - (probs * dprobs).sum(axis=-1, keepdims=True))
        dq = (dscores @ blk["k"]) * scale
        dk = (dscores.transpose(0, 2, 1) @ blk["q"]) * scale

        dq, dk, dv = (_merge_heads(t) for t in (dq, dk, dv))
        a_in = blk["a_in"]
        grads[gname("wq")] += a_in.T @ dq
        grads[gname("wk")] += a_in.T @ dk
        grads[gname("wv")] += a_in.T @ dv
        da_in = dq @ p("wq").T + dk @ p("wk").T + dv @ p("wv").T
        dx_ln1, dg1, db1 = _layer_norm_backward(da_in, p("ln1.gain"), blk["ln1"])
        grads[gname("ln1.gain")] += dg1
        grads[gname("ln1.bias")] += db1
        dx = dx_mid + dx_ln1

    np.add.at(grads["embed"], cache["tokens"], dx)
    return grads, dx


def quadratic_probe(g: np.ndarray) -> tuple[float, np.ndarray]:
    """Default probe loss 0.5 * sum(g^2) with its gradient."""
    return 0.5 * float((g * g).sum()), g.copy()


def grad_check(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    probe_doc,
    loss_probe=quadratic_probe,
    n_samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Per tensor, at most ``n_samples`` randomly chosen coordinates are
    perturbed. The error is |a - n| / max(1e-8, |a| + |n|); note this is
    bounded by 1, so a sign-flipped gradient reports an error near 1.
    """
    if config.precision != "f64":
        raise ConfigError("grad_check requires f64 precision")

    def loss_of(ps) -> float:
        value, _ = loss_probe(encode(probe_doc, ps, config, want_cache=False).g)
        return value

    encoded = encode(probe_doc, params, config)
    loss, upstream = loss_probe(encoded.g)
    if not np.isfinite(loss):
        raise NumericError("probe loss is not finite")
    grads, _ = encode_backward(encoded, upstream, params, config)
    return finite_difference_error(loss_of, params, grads, n_samples, step, seed)


def finite_difference_error(
    loss_fn,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    n_samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Compare analytic grads against central differences of loss_fn."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.reshape(-1)
        gflat = grads[name].reshape(-1)
        if not np.all(np.isfinite(gflat)):
            raise NumericError(f"non-finite analytic gradient in {name}")
        size = flat.size
        idx = np.arange(size) if size <= n_samples else rng.choice(size, n_samples, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn(params)
            flat[i] = orig - step
            down = loss_fn(params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {name}")
            analytic = gflat[i]
            err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst
