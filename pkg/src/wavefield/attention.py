"""Forward-only toy transformer encoder: multi-head self-attention, add & normalize,
position-wise feedforward. Parameters are random and fixed by a seed."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadHeadCount, NonPositiveParameter, ShapeMismatch

NORM_EPS = 1e-12


@dataclass
class TokenSequence:
    vectors: np.ndarray  # (L, d)
    positional: bool = True

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        L, d = self.vectors.shape
        if L < 1 or d < 1:
            raise ShapeMismatch("sequence needs L >= 1 and d >= 1")
        if not np.all(np.isfinite(self.vectors)):
            raise ShapeMismatch("token vectors must be finite")

    @property
    def length(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def inputs(self) -> np.ndarray:
        if self.positional:
            return self.vectors + sinusoidal_positions(self.length, self.dim)
        return self.vectors


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention_weights(queries, keys, scale: float | None = None) -> np.ndarray:
    """Row-stochastic map ``softmax(Q K^T * scale)``; scale defaults to 1/sqrt(d_k)."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    k = np.atleast_2d(np.asarray(keys, dtype=float))
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch(f"query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[-1])
    return softmax(q @ k.T * scale, axis=-1)


def layer_norm(x: np.ndarray) -> np.ndarray:
    """Per-position standardization with unit gain and zero bias."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + NORM_EPS)


@dataclass
class LayerParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    n_heads: int = 1

    @property
    def d_model(self) -> int:
        return self.wq.shape[0]


@dataclass
class EncoderParams:
    layers: list = field(default_factory=list)
    seed: int | None = None

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def init_layer(d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator) -> LayerParams:
    if n_heads < 1 or d_model % n_heads:
        raise BadHeadCount(f"d_model={d_model} not divisible by n_heads={n_heads}")
    s = 1.0 / np.sqrt(d_model)
    return LayerParams(
        wq=rng.normal(0, s, (d_model, d_model)),
        wk=rng.normal(0, s, (d_model, d_model)),
        wv=rng.normal(0, s, (d_model, d_model)),
        wo=rng.normal(0, s, (d_model, d_model)),
        w1=rng.normal(0, s, (d_model, d_ff)),
        b1=np.zeros(d_ff),
        w2=rng.normal(0, 1.0 / np.sqrt(d_ff), (d_ff, d_model)),
        b2=np.zeros(d_model),
        n_heads=n_heads,
    )


def init_params(d_model: int = 16, n_heads: int = 2, d_ff: int = 32, n_layers: int = 2,
                seed: int = 0) -> EncoderParams:
    if n_layers < 1:
        raise NonPositiveParameter("n_layers must be >= 1")
    rng = np.random.default_rng(seed)
    return EncoderParams([init_layer(d_model, n_heads, d_ff, rng) for _ in range(n_layers)], seed)


def multi_head_attention(x: np.ndarray, p: LayerParams, return_weights: bool = False):
    L, d = x.shape
    if d != p.d_model:
        raise ShapeMismatch(f"token dim {d} != d_model {p.d_model}")
    if p.n_heads < 1 or d % p.n_heads:
        raise BadHeadCount(f"d_model={d} not divisible by n_heads={p.n_heads}")
    dh = d // p.n_heads
    q, k, v = x @ p.wq, x @ p.wk, x @ p.wv
    heads, maps = [], []
    for h in range(p.n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        a = attention_weights(q[:, sl], k[:, sl])
        maps.append(a)
        heads.append(a @ v[:, sl])
    out = np.concatenate(heads, axis=1) @ p.wo
    return (out, maps) if return_weights else out


def encoder_layer(seq, params: LayerParams) -> TokenSequence:
    """Attention and feedforward sublayers, each wrapped in add & normalize."""
    if not isinstance(seq, TokenSequence):
        seq = TokenSequence(seq, positional=False)
    x = seq.inputs()
    x = layer_norm(x + multi_head_attention(x, params))
    ff = np.maximum(x @ params.w1 + params.b1, 0.0) @ params.w2 + params.b2
    x = layer_norm(x + ff)
    return TokenSequence(x, positional=False)


def encode_sequence(seq, n_layers: int, params: EncoderParams, pooling: str = "mean") -> np.ndarray:
    """Stack ``n_layers`` encoder layers and pool the positions into one vector."""
    if n_layers < 1:
        raise NonPositiveParameter("n_layers must be >= 1")
    if n_layers > params.n_layers:
        raise ShapeMismatch(f"requested {n_layers} layers, params hold {params.n_layers}")
    if not isinstance(seq, TokenSequence):
        seq = TokenSequence(seq)
    for layer in params.layers[:n_layers]:
        seq = encoder_layer(seq, layer)
    if pooling == "mean":
        return seq.vectors.mean(axis=0)
    if pooling == "last":
        return seq.vectors[-1].copy()
    raise ValueError(f"unknown pooling {pooling!r}")
