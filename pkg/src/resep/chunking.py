"""Chunking of latent sequences and its exact inverse.

Non-overlapping chunks for the summary-based model, 50%-overlap chunks for
the overlapped baseline. Both pad with zeros at the tail only, and
``reconstruct(chunk(h)) == h`` (bit-exact without overlap, to rounding with
overlap, where doubly-covered frames are averaged with 1/2 weights).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .tensor import Tensor


@dataclass
class ChunkedLatent:
    """Chunked view of a (T', F) latent: data laid out as (C, Nc, F)."""

    data: Tensor
    chunk_size: int
    overlap_ratio: float
    original_length: int
    pad_length: int

    @property
    def num_chunks(self):
        return self.data.shape[1]

    @property
    def hop(self):
        return self.chunk_size if self.overlap_ratio == 0.0 else self.chunk_size // 2

    def _check(self):
        C = self.chunk_size
        if self.data.ndim != 3 or self.data.shape[0] != C:
            raise tt.ShapeError(
                f"chunk data must be ({C}, Nc, F), got {self.data.shape}"
            )
        Nc = self.num_chunks
        covered = (Nc - 1) * self.hop + C
        if self.original_length + self.pad_length != covered:
            raise tt.ShapeError(
                f"metadata inconsistent: T'={self.original_length} + pad={self.pad_length}"
                f" != covered {covered} for Nc={Nc}, C={C}, overlap={self.overlap_ratio}"
            )


def chunk(h: Tensor, C: int, overlap_ratio: float = 0.0) -> ChunkedLatent:
    """Split a (T', F) latent into chunks of C frames.

    overlap_ratio 0 gives ceil(T'/C) disjoint chunks; 0.5 gives hop C/2
    sliding chunks (C must be even). Zero padding goes at the tail only.
    """
    if h.ndim != 2:
        raise tt.ShapeError(f"chunk expects (T', F), got {h.shape}")
    if C < 1:
        raise ValueError(f"chunk size must be >= 1, got {C}")
    if overlap_ratio not in (0.0, 0.5):
        raise ValueError(f"overlap_ratio must be 0 or 0.5, got {overlap_ratio}")
    Tp = h.shape[0]
    if overlap_ratio == 0.0:
        Nc = math.ceil(Tp / C)
        pad = Nc * C - Tp
        padded = tt.pad_tail(h, pad, axis=0)
        data = tt.permute(tt.reshape(padded, (Nc, C, h.shape[1])), (1, 0, 2))
    else:
        if C % 2 != 0:
            raise ValueError(f"50% overlap requires an even chunk size, got {C}")
        hop = C // 2
        Nc = math.ceil(max(Tp - C, 0) / hop) + 1
        pad = (Nc - 1) * hop + C - Tp
        padded = tt.pad_tail(h, pad, axis=0)
        data = tt.permute(tt.gather_windows(padded, C, hop), (1, 0, 2))
    return ChunkedLatent(data, C, overlap_ratio, Tp, pad)


def overlap_add_weights(C: int, Nc: int, dtype=np.float64) -> np.ndarray:
    """(Nc, C) inversion weights for 50% overlap: 1/2 where frames are
    doubly covered, 1 at the uncovered borders."""
    hop = C // 2
    w = np.full((Nc, C), 0.5, dtype=dtype)
    w[0, :hop] = 1.0
    w[Nc - 1, hop:] = 1.0
    if Nc == 1:
        w[:] = 1.0
    return w


def reconstruct(ch: ChunkedLatent, data: Tensor | None = None) -> Tensor:
    """Undo chunking back to (T', F), trimming the tail padding.

    ``data`` may override the stored tensor (same (C, Nc, F) shape), which
    lets per-source mask tensors reuse one chunking's metadata.
    """
    if data is not None:
        ch = ChunkedLatent(
            data, ch.chunk_size, ch.overlap_ratio, ch.original_length, ch.pad_length
        )
    ch._check()
    C, Nc, F = ch.data.shape
    Tp = ch.original_length
    windows = tt.permute(ch.data, (1, 0, 2))  # (Nc, C, F)
    if ch.overlap_ratio == 0.0:
        flat = tt.reshape(windows, (Nc * C, F))
        return flat[:Tp]
    w = overlap_add_weights(C, Nc, ch.data.dtype)
    weights = Tensor(np.broadcast_to(w[:, :, None], (Nc, C, F)).copy())
    weighted = tt.mul(windows, weights)
    full = tt.scatter_windows(weighted, ch.hop, (Nc - 1) * ch.hop + C)
    return full[:Tp]
