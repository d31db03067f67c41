"""Sliding-window kernel dispatch.

The compiled Cython core is preferred when it built successfully; otherwise
the numpy fallback is used. Set RESEP_KERNELS=python|compiled to force a
backend (``compiled`` raises if the extension is unavailable).
"""

import os

import numpy as np

from . import _fallback

_requested = os.environ.get("RESEP_KERNELS", "auto")
if _requested not in ("auto", "compiled", "python"):
    raise RuntimeError(
        f"RESEP_KERNELS must be auto, compiled or python, got {_requested!r}"
    )

BACKEND = "python"
_impl = _fallback
if _requested != "python":
    try:
        from . import _core

        _impl = _core
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise


def num_windows(T, K, S):
    """Number of full length-K windows at stride S in a length-T signal."""
    if T < K:
        return 0
    return (T - K) // S + 1


def gather_windows(x, K, S):
    """(T, F) -> (Nw, K, F) copy of all full sliding windows."""
    x = np.ascontiguousarray(x)
    Nw = num_windows(x.shape[0], K, S)
    out = np.empty((Nw, K, x.shape[1]), dtype=x.dtype)
    if Nw:
        _impl.gather_windows(x, K, S, out)
    return out


def scatter_windows(windows, S, T):
    """(Nw, K, F) -> (T, F) overlap-add; adjoint of gather_windows."""
    windows = np.ascontiguousarray(windows)
    Nw, K, F = windows.shape
    if Nw and (Nw - 1) * S + K > T:
        raise ValueError(f"windows ({Nw}x{K}, stride {S}) overrun length {T}")
    out = np.zeros((T, F), dtype=windows.dtype)
    if Nw:
        _impl.scatter_windows(windows, S, out)
    return out
