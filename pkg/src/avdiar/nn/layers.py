"""Reusable blocks assembled from tensor primitives.

Every block registers its weights in a shared :class:`ParameterStore`
under a dotted prefix, so subsystems can be frozen or transferred by
prefix alone.  Blocks are plain callables over :class:`Tensor` values.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import tensor as tt
from .params import ParameterStore
from .tensor import Tensor


class Linear:
    """Affine map; accepts a vector or a (T, D_in) sequence."""

    def __init__(self, store: ParameterStore, prefix: str, d_in: int, d_out: int):
        self.d_in = d_in
        self.d_out = d_out
        self.weight = store.add(f"{prefix}.weight", (d_in, d_out),
                                fan_in=d_in, fan_out=d_out)
        self.bias = store.add(f"{prefix}.bias", (d_out,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 1:
            y = tt.matmul(tt.reshape(x, (1, self.d_in)), self.weight)
            return tt.reshape(tt.add(y, self.bias), (self.d_out,))
        return tt.add(tt.matmul(x, self.weight), self.bias)


class LayerNorm:
    def __init__(self, store: ParameterStore, prefix: str, dim: int):
        self.gamma = store.add(f"{prefix}.gamma", (dim,), init="ones")
        self.beta = store.add(f"{prefix}.beta", (dim,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return tt.layer_norm(x, self.gamma, self.beta)


_ACTIVATIONS = {"relu": tt.relu, "swish": tt.swish, "sigmoid": tt.sigmoid}


class FeedForward:
    """Two linear maps around a pointwise nonlinearity."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 hidden: int, activation: str = "relu"):
        self.fc1 = Linear(store, f"{prefix}.fc1", dim, hidden)
        self.fc2 = Linear(store, f"{prefix}.fc2", hidden, dim)
        self.act = _ACTIVATIONS[activation]

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.act(self.fc1(x)))


class MultiHeadAttention:
    """Scaled dot-product attention with h heads at a common model dim.

    The most recent attention weights are kept on ``last_attention``
    as an (h, T_q, T_k) array for inspection.
    """

    def __init__(self, store: ParameterStore, prefix: str, dim: int, heads: int):
        if dim % heads != 0:
            raise ConfigError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(store, f"{prefix}.wq", dim, dim)
        self.wk = Linear(store, f"{prefix}.wk", dim, dim)
        self.wv = Linear(store, f"{prefix}.wv", dim, dim)
        self.wo = Linear(store, f"{prefix}.wo", dim, dim)
        self.last_attention: np.ndarray | None = None

    def _split(self, x: Tensor, t: int) -> Tensor:
        return tt.transpose(tt.reshape(x, (t, self.heads, self.head_dim)), (1, 0, 2))

    def __call__(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        tq, tk = q.shape[0], k.shape[0]
        if k.shape[0] != v.shape[0]:
            raise ValueError(f"key/value length mismatch {k.shape} vs {v.shape}")
        qh = self._split(self.wq(q), tq)
        kh = self._split(self.wk(k), tk)
        vh = self._split(self.wv(v), tk)
        scores = tt.mul_const(tt.matmul(qh, tt.transpose(kh, (0, 2, 1))),
                              1.0 / np.sqrt(self.head_dim))
        attn = tt.softmax(scores, axis=-1)
        self.last_attention = attn.data
        ctx = tt.matmul(attn, vh)
        merged = tt.reshape(tt.transpose(ctx, (1, 0, 2)), (tq, self.dim))
        return self.wo(merged)


class SqueezeExcite:
    """Gate channels by a sigmoid bottleneck over the temporal mean."""

    def __init__(self, store: ParameterStore, prefix: str, channels: int,
                 se_channels: int):
        self.fc1 = Linear(store, f"{prefix}.fc1", channels, se_channels)
        self.fc2 = Linear(store, f"{prefix}.fc2", se_channels, channels)

    def __call__(self, x: Tensor) -> Tensor:
        gate = tt.sigmoid(self.fc2(tt.relu(self.fc1(tt.reduce_mean(x, axis=0)))))
        return tt.mul(x, gate)


class TransformerBlock:
    """Pre-norm self-attention block: attention then feed-forward."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 heads: int, ffn_dim: int):
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", dim)
        self.mha = MultiHeadAttention(store, f"{prefix}.mha", dim, heads)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", dim)
        self.ffn = FeedForward(store, f"{prefix}.ffn", dim, ffn_dim)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        x = tt.add(x, self.mha(h, h, h))
        return tt.add(x, self.ffn(self.ln2(x)))


class ConvModule:
    """Pointwise, depthwise temporal, pointwise convolution sandwich."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int, kernel: int):
        if kernel % 2 == 0:
            raise ConfigError(f"conv kernel must be odd, got {kernel}")
        self.pw1 = Linear(store, f"{prefix}.pw1", dim, dim)
        self.depthwise = store.add(f"{prefix}.depthwise", (kernel, dim),
                                   fan_in=kernel, fan_out=kernel)
        self.pw2 = Linear(store, f"{prefix}.pw2", dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        h = tt.swish(self.pw1(x))
        h = tt.swish(tt.depthwise_conv1d(h, self.depthwise))
        return self.pw2(h)


class ConformerBlock:
    """Macaron block: half-FFN, self-attention, conv module, half-FFN."""

    def __init__(self, store: ParameterStore, prefix: str, dim: int,
                 heads: int, ffn_dim: int, conv_kernel: int):
        self.ln_ff1 = LayerNorm(store, f"{prefix}.ln_ff1", dim)
        self.ff1 = FeedForward(store, f"{prefix}.ff1", dim, ffn_dim, "swish")
        self.ln_mha = LayerNorm(store, f"{prefix}.ln_mha", dim)
        self.mha = MultiHeadAttention(store, f"{prefix}.mha", dim, heads)
        self.ln_conv = LayerNorm(store, f"{prefix}.ln_conv", dim)
        self.conv = ConvModule(store, f"{prefix}.conv", dim, conv_kernel)
        self.ln_ff2 = LayerNorm(store, f"{prefix}.ln_ff2", dim)
        self.ff2 = FeedForward(store, f"{prefix}.ff2", dim, ffn_dim, "swish")
        self.ln_out = LayerNorm(store, f"{prefix}.ln_out", dim)

    def __call__(self, x: Tensor) -> Tensor:
        x = tt.add(x, tt.mul_const(self.ff1(self.ln_ff1(x)), 0.5))
        h = self.ln_mha(x)
        x = tt.add(x, self.mha(h, h, h))
        x = tt.add(x, self.conv(self.ln_conv(x)))
        x = tt.add(x, tt.mul_const(self.ff2(self.ln_ff2(x)), 0.5))
        return self.ln_out(x)
