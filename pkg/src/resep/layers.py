"""Network building blocks: strided 1-d conv / transposed conv, linear,
layer norm, PReLU, sinusoidal positions, multi-head self-attention and the
pre-norm Transformer encoder layer.

Layers own their parameter tensors and are pure functions of
(input, parameters) at call time; initialization is deterministic given the
numpy Generator passed to the constructor (uniform fan-in scaling for
weights, zeros for biases).
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as tt
from .tensor import Tensor


class ConfigError(ValueError):
    """Invalid layer/model hyperparameters."""


def _uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Module:
    """Minimal parameter-container base: children discovered by attribute."""

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            path = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((path, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(path))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{path}{i}"))
        return out


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, dtype=np.float64, bias=True):
        self.weight = _uniform(rng, (in_dim, out_dim), in_dim, dtype)
        self.bias = _zeros((out_dim,), dtype) if bias else None

    def __call__(self, x):
        y = tt.matmul(x, self.weight)
        if self.bias is not None:
            y = tt.broadcast_add(y, self.bias)
        return y

    def named_parameters(self, prefix=""):
        out = [((f"{prefix}.weight" if prefix else "weight"), self.weight)]
        if self.bias is not None:
            out.append(((f"{prefix}.bias" if prefix else "bias"), self.bias))
        return out


class Conv1d(Module):
    """Mono strided convolution: (T,) -> (T', F) with T' = (T-K)//S + 1."""

    def __init__(self, filters, kernel_size, stride, rng, dtype=np.float64, bias=True):
        if filters < 1:
            raise ConfigError(f"filters must be >= 1, got {filters}")
        if not kernel_size >= stride >= 1:
            raise ConfigError(
                f"need kernel_size >= stride >= 1, got K={kernel_size}, S={stride}"
            )
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        self.weight = _uniform(rng, (filters, 1, kernel_size), kernel_size, dtype)
        self.bias = _zeros((filters,), dtype) if bias else None

    def output_length(self, T):
        return (T - self.kernel_size) // self.stride + 1

    def __call__(self, x):
        if x.ndim != 1:
            raise tt.ShapeError(f"conv1d expects a 1-d signal, got shape {x.shape}")
        if x.shape[0] < self.kernel_size:
            raise tt.ShapeError(
                f"input length {x.shape[0]} shorter than kernel {self.kernel_size}"
            )
        frames = tt.gather_windows(
            tt.reshape(x, (x.shape[0], 1)), self.kernel_size, self.stride
        )  # (T', K, 1)
        frames = tt.reshape(frames, (frames.shape[0], self.kernel_size))
        w = tt.permute(tt.reshape(self.weight, (self.filters, self.kernel_size)), (1, 0))
        y = tt.matmul(frames, w)
        if self.bias is not None:
            y = tt.broadcast_add(y, self.bias)
        return y

    def named_parameters(self, prefix=""):
        out = [((f"{prefix}.weight" if prefix else "weight"), self.weight)]
        if self.bias is not None:
            out.append(((f"{prefix}.bias" if prefix else "bias"), self.bias))
        return out


class ConvTranspose1d(Module):
    """(T', F) -> (T,) with T = (T'-1)*S + K; overlap-add of weighted kernels."""

    def __init__(self, filters, kernel_size, stride, rng, dtype=np.float64):
        if not kernel_size >= stride >= 1:
            raise ConfigError(
                f"need kernel_size >= stride >= 1, got K={kernel_size}, S={stride}"
            )
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        self.weight = _uniform(rng, (filters, 1, kernel_size), filters, dtype)

    def output_length(self, Tp):
        return (Tp - 1) * self.stride + self.kernel_size

    def __call__(self, y):
        if y.ndim != 2 or y.shape[1] != self.filters:
            raise tt.ShapeError(
                f"conv1d_transpose expects (T', {self.filters}), got {y.shape}"
            )
        w = tt.reshape(self.weight, (self.filters, self.kernel_size))
        frames = tt.matmul(y, w)  # (T', K)
        frames = tt.reshape(frames, (frames.shape[0], self.kernel_size, 1))
        out = tt.scatter_windows(frames, self.stride, self.output_length(y.shape[0]))
        return tt.reshape(out, (out.shape[0],))


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float64, eps=1e-5):
        self.eps = eps
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = _zeros((dim,), dtype)

    def __call__(self, x):
        return tt.layer_norm(x, self.gamma, self.beta, self.eps)


class PReLU(Module):
    def __init__(self, dtype=np.float64, init=0.25):
        self.slope = Tensor(np.asarray(init, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return tt.prelu(x, self.slope)


def positional_encoding(L, F, dtype=np.float64) -> Tensor:
    """Fixed sinusoidal table (L, F), sin/cos interleaved, 10000^(2i/F) wavelengths."""
    if L < 1:
        raise ConfigError(f"positional encoding needs L >= 1, got {L}")
    if F % 2 != 0:
        raise ConfigError(f"positional encoding needs even F, got {F}")
    pos = np.arange(L, dtype=np.float64)[:, None]
    i = np.arange(F // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / F)
    pe = np.empty((L, F), dtype=dtype)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return Tensor(pe)


def causal_mask(L, dtype=np.float64):
    """(L, L) additive mask: 0 on/below the diagonal, -inf strictly above."""
    m = np.zeros((L, L), dtype=dtype)
    m[np.triu_indices(L, k=1)] = -np.inf
    return Tensor(m)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over the second-to-last axis.

    Accepts (L, F) or batched (B, L, F); the optional causal flag masks
    strictly-future positions (the diagonal stays visible).
    """

    def __init__(self, model_dim, heads, rng, dtype=np.float64):
        if heads < 1:
            raise ConfigError(f"heads must be >= 1, got {heads}")
        if model_dim % heads != 0:
            raise ConfigError(f"model_dim {model_dim} not divisible by heads {heads}")
        self.model_dim = model_dim
        self.heads = heads
        self.head_dim = model_dim // heads
        self.q_proj = Linear(model_dim, model_dim, rng, dtype)
        self.k_proj = Linear(model_dim, model_dim, rng, dtype)
        self.v_proj = Linear(model_dim, model_dim, rng, dtype)
        self.out_proj = Linear(model_dim, model_dim, rng, dtype)

    def _split(self, x, L):
        # (..., L, F) -> (..., H, L, dh)
        if x.ndim == 2:
            return tt.permute(tt.reshape(x, (L, self.heads, self.head_dim)), (1, 0, 2))
        B = x.shape[0]
        return tt.permute(
            tt.reshape(x, (B, L, self.heads, self.head_dim)), (0, 2, 1, 3)
        )

    def _merge(self, x, L):
        if x.ndim == 3:
            return tt.reshape(tt.permute(x, (1, 0, 2)), (L, self.model_dim))
        B = x.shape[0]
        return tt.reshape(tt.permute(x, (0, 2, 1, 3)), (B, L, self.model_dim))

    def __call__(self, x, causal=False):
        if x.ndim not in (2, 3) or x.shape[-1] != self.model_dim:
            raise tt.ShapeError(
                f"attention expects (..., L, {self.model_dim}), got {x.shape}"
            )
        L = x.shape[-2]
        q = self._split(self.q_proj(x), L)
        k = self._split(self.k_proj(x), L)
        v = self._split(self.v_proj(x), L)
        scores = tt.mul(
            tt.matmul(q, tt.permute(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
            1.0 / math.sqrt(self.head_dim),
        )
        if causal:
            scores = tt.broadcast_add(scores, causal_mask(L, x.dtype))
        attn = tt.softmax(scores, axis=-1)
        out = self._merge(tt.matmul(attn, v), L)
        return self.out_proj(out)


class TransformerLayer(Module):
    """Pre-norm residual encoder layer: x + Attn(LN(x)), then + FF(LN(.))."""

    def __init__(self, model_dim, heads, d_ff, rng, dtype=np.float64):
        if d_ff < 1:
            raise ConfigError(f"d_ff must be >= 1, got {d_ff}")
        self.norm1 = LayerNorm(model_dim, dtype)
        self.attn = MultiHeadAttention(model_dim, heads, rng, dtype)
        self.norm2 = LayerNorm(model_dim, dtype)
        self.ff1 = Linear(model_dim, d_ff, rng, dtype)
        self.ff2 = Linear(d_ff, model_dim, rng, dtype)

    def __call__(self, x, causal=False):
        h = tt.add(x, self.attn(self.norm1(x), causal=causal))
        return tt.add(h, self.ff2(tt.relu(self.ff1(self.norm2(h)))))


class TransformerStack(Module):
    """Stack of encoder layers with a fixed positional table at the input."""

    def __init__(self, num_layers, model_dim, heads, d_ff, rng, dtype=np.float64):
        self.model_dim = model_dim
        self.layers = [
            TransformerLayer(model_dim, heads, d_ff, rng, dtype)
            for _ in range(num_layers)
        ]

    def __call__(self, x, causal=False):
        L = x.shape[-2]
        x = tt.broadcast_add(x, positional_encoding(L, self.model_dim, x.dtype))
        for layer in self.layers:
            x = layer(x, causal=causal)
        return x
