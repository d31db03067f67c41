"""Pure-numpy sliding-window kernels (used when the compiled core is absent)."""

import numpy as np


def gather_windows(x, K, S, out):
    # K strided reads instead of Nw python iterations; Nw >> K in practice.
    Nw = out.shape[0]
    for k in range(K):
        out[:, k, :] = x[k : k + (Nw - 1) * S + 1 : S, :]


def scatter_windows(windows, S, out):
    Nw = windows.shape[0]
    K = windows.shape[1]
    for k in range(K):
        out[k : k + (Nw - 1) * S + 1 : S, :] += windows[:, k, :]
