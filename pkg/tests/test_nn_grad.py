"""Analytic gradients vs central finite differences for every op and layer.

Relative error uses |a - f| / max(1, |a|, |f|) with h = 1e-5; tolerance
1e-6 for primitives, 1e-6 for layers (float64 throughout).
"""

import numpy as np
import pytest

from avdiar.models import ResSEBlock
from avdiar.nn import ParameterStore, Tape, Tensor
from avdiar.nn import tensor as tt
from avdiar.nn.layers import (ConformerBlock, ConvModule, FeedForward,
                              LayerNorm, Linear, MultiHeadAttention,
                              SqueezeExcite, TransformerBlock)

_H = 1e-5
_TOL = 1e-6


def _rel_err(ana: np.ndarray, num: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(ana), np.abs(num)))
    return float((np.abs(ana - num) / scale).max())


def check_grads(build, arrays, tol=_TOL):
    """build(list of Tensors) -> scalar Tensor; FD-checks every input."""
    tensors = [Tensor(a) for a in arrays]
    with Tape() as tape:
        grads = tape.backward(build(tensors))

    for i, t in enumerate(tensors):
        ana = grads.get_or_zeros(t)
        num = np.zeros_like(arrays[i])
        flat_num = num.reshape(-1)
        flat_x = t.data.reshape(-1)
        for j in range(flat_x.size):
            orig = flat_x[j]
            flat_x[j] = orig + _H
            fp = build(tensors).item()
            flat_x[j] = orig - _H
            fm = build(tensors).item()
            flat_x[j] = orig
            flat_num[j] = (fp - fm) / (2 * _H)
        err = _rel_err(ana, num)
        assert err < tol, f"input {i}: rel err {err:.3e}"


def _proj(out: Tensor, w: np.ndarray) -> Tensor:
    # Fixed random projection makes the scalar sensitive to every output.
    return tt.reduce_sum(tt.mul(out, Tensor(w)))


_RNG = np.random.default_rng(42)


def _rand(*shape):
    return _RNG.standard_normal(shape)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


class TestPrimitiveGrads:
    def test_add_broadcast(self):
        w = _rand(3, 4)
        check_grads(lambda ts: _proj(tt.add(ts[0], ts[1]), w),
                    [_rand(3, 4), _rand(4)])

    def test_sub_mul(self):
        w = _rand(3, 4)
        check_grads(
            lambda ts: _proj(tt.mul(tt.sub(ts[0], ts[1]), ts[2]), w),
            [_rand(3, 4), _rand(3, 4), _rand(4)])

    def test_matmul_2d(self):
        w = _rand(3, 2)
        check_grads(lambda ts: _proj(tt.matmul(ts[0], ts[1]), w),
                    [_rand(3, 4), _rand(4, 2)])

    def test_matmul_batched(self):
        w = _rand(2, 3, 2)
        check_grads(lambda ts: _proj(tt.matmul(ts[0], ts[1]), w),
                    [_rand(2, 3, 4), _rand(2, 4, 2)])

    def test_reshape_transpose_concat(self):
        w = _rand(4, 6)

        def build(ts):
            a = tt.transpose(ts[0], (1, 0))          # (4, 3)
            b = tt.reshape(ts[1], (4, 3))
            return _proj(tt.concat([a, b], axis=1), w)

        check_grads(build, [_rand(3, 4), _rand(12)])

    def test_repeat_and_tile(self):
        w1 = _rand(6, 3)
        w2 = _rand(5, 4)
        check_grads(lambda ts: _proj(tt.repeat_frames(ts[0], 2), w1),
                    [_rand(3, 3)])
        check_grads(lambda ts: _proj(tt.tile_rows(ts[0], 5), w2),
                    [_rand(4)])

    def test_reductions(self):
        check_grads(lambda ts: tt.reduce_sum(ts[0]), [_rand(3, 5)])
        check_grads(lambda ts: tt.reduce_mean(ts[0]), [_rand(3, 5)])
        w = _rand(5)
        check_grads(lambda ts: _proj(tt.reduce_sum(ts[0], axis=0), w),
                    [_rand(3, 5)])
        check_grads(lambda ts: _proj(tt.reduce_mean(ts[0], axis=0), w),
                    [_rand(3, 5)])

    def test_activations(self):
        # Keep relu inputs away from the kink.
        x = _rand(4, 5)
        x = np.where(np.abs(x) < 0.1, x + 0.3, x)
        w = _rand(4, 5)
        check_grads(lambda ts: _proj(tt.relu(ts[0]), w), [x.copy()])
        check_grads(lambda ts: _proj(tt.sigmoid(ts[0]), w), [_rand(4, 5)])
        check_grads(lambda ts: _proj(tt.swish(ts[0]), w), [_rand(4, 5)])

    def test_log_and_clamp_interior(self):
        w = _rand(3, 3)
        check_grads(lambda ts: _proj(tt.log(ts[0]), w),
                    [np.abs(_rand(3, 3)) + 0.5])
        check_grads(lambda ts: _proj(tt.clamp(ts[0], -2.0, 2.0), w),
                    [_rand(3, 3) * 0.5])

    def test_softmax(self):
        w = _rand(4, 6)
        check_grads(lambda ts: _proj(tt.softmax(ts[0]), w), [_rand(4, 6)])

    def test_layer_norm(self):
        w = _rand(4, 6)
        check_grads(
            lambda ts: _proj(tt.layer_norm(ts[0], ts[1], ts[2]), w),
            [_rand(4, 6), np.abs(_rand(6)) + 0.5, _rand(6)])

    def test_depthwise_conv(self):
        w = _rand(7, 3)
        check_grads(lambda ts: _proj(tt.depthwise_conv1d(ts[0], ts[1]), w),
                    [_rand(7, 3), _rand(5, 3)])

    def test_mean_std_pool(self):
        w = _rand(8)
        check_grads(lambda ts: _proj(tt.mean_std_pool(ts[0]), w),
                    [_rand(9, 4)])

    def test_l2_normalize(self):
        w = _rand(6)
        check_grads(lambda ts: _proj(tt.l2_normalize(ts[0]), w),
                    [_rand(6) + 0.1])

    def test_cross_entropy(self):
        labels = np.array([0, 2, 1])
        check_grads(lambda ts: tt.cross_entropy(ts[0], labels),
                    [_rand(3, 4)])


# ---------------------------------------------------------------------------
# Layers (parameters checked through the store)
# ---------------------------------------------------------------------------


def check_module_grads(make_forward, store: ParameterStore, x: np.ndarray,
                       tol=_TOL):
    """FD-check the input and every store parameter of a module."""
    x_t = Tensor(x)
    forward = make_forward(x_t)
    with Tape() as tape:
        grads = tape.backward(forward())

    tensors = [("input", x_t)] + list(store.items())
    for name, t in tensors:
        ana = grads.get_or_zeros(t)
        num = np.zeros_like(t.data)
        flat_num = num.reshape(-1)
        flat_x = t.data.reshape(-1)
        for j in range(flat_x.size):
            orig = flat_x[j]
            flat_x[j] = orig + _H
            fp = forward().item()
            flat_x[j] = orig - _H
            fm = forward().item()
            flat_x[j] = orig
            flat_num[j] = (fp - fm) / (2 * _H)
        err = _rel_err(ana, num)
        assert err < tol, f"{name}: rel err {err:.3e}"


class TestLayerGrads:
    def test_linear(self):
        store = ParameterStore(0)
        layer = Linear(store, "fc", 3, 2)
        w = _rand(4, 2)
        check_module_grads(
            lambda x: lambda: _proj(layer(x), w), store, _rand(4, 3))

    def test_feed_forward(self):
        store = ParameterStore(1)
        layer = FeedForward(store, "ffn", 4, 6, activation="swish")
        w = _rand(3, 4)
        check_module_grads(
            lambda x: lambda: _proj(layer(x), w), store, _rand(3, 4))

    def test_multi_head_attention(self):
        store = ParameterStore(2)
        mha = MultiHeadAttention(store, "mha", 4, 2)
        w = _rand(5, 4)
        check_module_grads(
            lambda x: lambda: _proj(mha(x, x, x), w), store, _rand(5, 4))

    def test_squeeze_excite(self):
        store = ParameterStore(3)
        se = SqueezeExcite(store, "se", 4, 2)
        w = _rand(6, 4)
        check_module_grads(
            lambda x: lambda: _proj(se(x), w), store, _rand(6, 4))

    def test_conv_module(self):
        store = ParameterStore(4)
        conv = ConvModule(store, "conv", 4, 3)
        w = _rand(6, 4)
        check_module_grads(
            lambda x: lambda: _proj(conv(x), w), store, _rand(6, 4))

    def test_transformer_block(self):
        store = ParameterStore(5)
        block = TransformerBlock(store, "blk", 4, 2, 8)
        w = _rand(5, 4)
        check_module_grads(
            lambda x: lambda: _proj(block(x), w), store, _rand(5, 4))

    def test_conformer_block(self):
        store = ParameterStore(6)
        block = ConformerBlock(store, "blk", 4, 2, 8, 3)
        w = _rand(5, 4)
        check_module_grads(
            lambda x: lambda: _proj(block(x), w), store, _rand(5, 4))

    def test_res_se_block(self):
        store = ParameterStore(7)
        block = ResSEBlock(store, "res", 5, 4, se_channels=2, kernel=3,
                           activation=tt.swish)
        w = _rand(6, 4)
        # swish keeps the whole path smooth, so the default tol holds
        check_module_grads(
            lambda x: lambda: _proj(block(x), w), store, _rand(6, 5))

    def test_layer_norm_module(self):
        store = ParameterStore(8)
        ln = LayerNorm(store, "ln", 4)
        w = _rand(3, 4)
        check_module_grads(
            lambda x: lambda: _proj(ln(x), w), store, _rand(3, 4))
