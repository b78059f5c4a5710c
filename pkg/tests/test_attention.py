import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavefield.attention import (LayerParams, TokenSequence, attention_weights, encode_sequence,
                                 encoder_layer, init_params, layer_norm, multi_head_attention)
from wavefield.errors import BadHeadCount, ShapeMismatch


def loop_attention(q, k, scale):
    L, M = q.shape[0], k.shape[0]
    out = np.zeros((L, M))
    for i in range(L):
        logits = [scale * sum(q[i, a] * k[j, a] for a in range(q.shape[1])) for j in range(M)]
        top = max(logits)
        ex = [math.exp(v - top) for v in logits]
        out[i] = [e / sum(ex) for e in ex]
    return out


def test_single_token_map():
    assert np.array_equal(attention_weights(np.ones((1, 3)), np.ones((1, 3))), [[1.0]])


def test_identical_keys_give_uniform_rows():
    rng = np.random.default_rng(0)
    a = attention_weights(rng.standard_normal((4, 6)), np.tile(rng.standard_normal(6), (5, 1)))
    np.testing.assert_allclose(a, 0.2, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), L=st.integers(1, 8), d=st.integers(1, 6))
def test_weights_row_stochastic_and_match_loops(seed, L, d):
    rng = np.random.default_rng(seed)
    q, k = rng.standard_normal((L, d)) * 3, rng.standard_normal((L, d)) * 3
    a = attention_weights(q, k)
    assert np.all(a >= 0)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(a, loop_attention(q, k, 1 / math.sqrt(d)), atol=1e-12)


def test_weights_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        attention_weights(np.ones((2, 3)), np.ones((2, 4)))


def test_zeroed_value_and_feedforward_give_normalized_input():
    params = init_params(8, 2, 16, 1, seed=3).layers[0]
    params.wv[:] = 0
    params.w1[:] = 0
    params.w2[:] = 0
    x = np.random.default_rng(1).standard_normal((5, 8))
    out = encoder_layer(TokenSequence(x, positional=False), params).vectors
    np.testing.assert_allclose(out, layer_norm(x), atol=1e-9)
    ref = (x - x.mean(1, keepdims=True)) / x.std(1, keepdims=True)
    np.testing.assert_allclose(out, ref, atol=1e-9)


def test_bad_head_count():
    p = init_params(8, 2, 16, 1, seed=0).layers[0]
    bad = LayerParams(p.wq, p.wk, p.wv, p.wo, p.w1, p.b1, p.w2, p.b2, n_heads=3)
    with pytest.raises(BadHeadCount):
        encoder_layer(np.ones((2, 8)), bad)
    with pytest.raises(BadHeadCount):
        init_params(8, 3)
    with pytest.raises(ShapeMismatch):
        encoder_layer(np.ones((2, 6)), p)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), L=st.integers(2, 9))
def test_permutation_equivariance_without_positions(seed, L):
    rng = np.random.default_rng(seed)
    params = init_params(16, 4, 32, 3, seed=seed)
    x = rng.standard_normal((L, 16))
    perm = rng.permutation(L)
    seq = TokenSequence(x, positional=False)
    out = seq
    out_p = TokenSequence(x[perm], positional=False)
    for layer in params.layers:
        out, out_p = encoder_layer(out, layer), encoder_layer(out_p, layer)
    np.testing.assert_allclose(out_p.vectors, out.vectors[perm], atol=1e-9)
    pooled = encode_sequence(seq, 3, params)
    np.testing.assert_allclose(encode_sequence(TokenSequence(x[perm], False), 3, params), pooled,
                               atol=1e-9)


def test_positions_break_equivariance():
    rng = np.random.default_rng(8)
    params = init_params(16, 2, 32, 1, seed=8)
    x = rng.standard_normal((6, 16))
    perm = np.array([5, 0, 3, 1, 4, 2])
    a = encoder_layer(TokenSequence(x, positional=True), params.layers[0]).vectors
    b = encoder_layer(TokenSequence(x[perm], positional=True), params.layers[0]).vectors
    assert np.max(np.abs(b - a[perm])) > 1e-3


def test_heads_are_row_stochastic_and_match_loops():
    p = init_params(8, 2, 16, 1, seed=2).layers[0]
    x = np.random.default_rng(2).standard_normal((4, 8))
    _, maps = multi_head_attention(x, p, return_weights=True)
    q, k = x @ p.wq, x @ p.wk
    for h, m in enumerate(maps):
        sl = slice(4 * h, 4 * h + 4)
        np.testing.assert_allclose(m, loop_attention(q[:, sl], k[:, sl], 0.5), atol=1e-12)


def test_single_token_mean_pooling():
    params = init_params(16, 2, 32, 2, seed=1)
    seq = TokenSequence(np.random.default_rng(0).standard_normal((1, 16)))
    x = seq
    for layer in params.layers:
        x = encoder_layer(x, layer)
    np.testing.assert_array_equal(encode_sequence(seq, 2, params), x.vectors[0])


def test_encoding_is_deterministic():
    x = np.random.default_rng(4).standard_normal((7, 16))
    a = encode_sequence(TokenSequence(x), 2, init_params(seed=9))
    b = encode_sequence(TokenSequence(x), 2, init_params(seed=9))
    assert np.array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), layers=st.integers(1, 4), mag=st.floats(1.0, 1e3))
def test_shapes_preserved_and_outputs_finite(seed, layers, mag):
    rng = np.random.default_rng(seed)
    params = init_params(16, 2, 32, layers, seed=seed)
    x = rng.uniform(-mag, mag, (5, 16))
    seq = TokenSequence(x)
    for layer in params.layers:
        seq = encoder_layer(seq, layer)
        assert seq.vectors.shape == (5, 16)
        assert np.all(np.isfinite(seq.vectors))
    assert np.all(np.isfinite(encode_sequence(TokenSequence(x), layers, params, "last")))
