"""Shared test utilities: independent oracles and gradient checking."""

import numpy as np

from resep import tensor as tt


def matmul_oracle(a, b):
    """Element-by-element triple loop, deliberately naive."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def conv1d_oracle(x, weight, bias, K, S):
    """Explicit sliding-window dot products. weight: (F, 1, K)."""
    Tp = (len(x) - K) // S + 1
    F = weight.shape[0]
    out = np.zeros((Tp, F))
    for t in range(Tp):
        window = x[t * S : t * S + K]
        for f in range(F):
            out[t, f] = float(np.dot(window, weight[f, 0])) + bias[f]
    return out


def attention_oracle(x, layer):
    """Non-causal single-sequence attention computed step by step."""
    H, dh = layer.heads, layer.head_dim
    W = {k: getattr(layer, f"{k}_proj") for k in ("q", "k", "v", "out")}
    q = x @ W["q"].weight.data + W["q"].bias.data
    k = x @ W["k"].weight.data + W["k"].bias.data
    v = x @ W["v"].weight.data + W["v"].bias.data
    L = x.shape[0]
    out = np.zeros_like(x)
    for h in range(H):
        sl = slice(h * dh, (h + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn = e / e.sum(axis=1, keepdims=True)
        out[:, sl] = attn @ v[:, sl]
    return out @ W["out"].weight.data + W["out"].bias.data


def numeric_grad(f, param, eps=1e-5):
    """Central finite differences of scalar f() w.r.t. every element."""
    flat = param.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        grad[i] = (fp - fm) / (2 * eps)
    return grad.reshape(param.shape)


def check_grad(build_loss, params, rtol, eps=1e-5, noise_floor=1e-5):
    """Compare tape gradients of build_loss() against central differences.

    Returns the worst relative error over all parameters (matrix norm
    scale, so isolated tiny entries don't dominate). ``noise_floor`` keeps
    exactly-zero analytic gradients (e.g. parameters the loss is invariant
    to) from being compared against pure finite-difference rounding noise.
    """
    with tt.GradientTape() as tape:
        loss = build_loss()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        assert p.grad is not None, "parameter missed by backward"
        num = numeric_grad(lambda: build_loss().item(), p, eps)
        denom = max(
            np.linalg.norm(num.reshape(-1)),
            np.linalg.norm(p.grad.reshape(-1)),
            noise_floor,
        )
        rel = np.linalg.norm((num - p.grad).reshape(-1)) / denom
        worst = max(worst, rel)
        assert rel < rtol, f"gradient mismatch: rel error {rel:.3e} >= {rtol}"
    return worst
