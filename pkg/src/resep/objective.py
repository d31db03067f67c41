"""Scale-invariant SNR, simple SDR, improvement metrics and the
permutation-invariant loss.

All metric math runs through the tensor ops so the loss is differentiable.
The SDR here is the plain energy ratio 10*log10(||t||^2 / ||t - e||^2),
not the BSS-eval decomposition; numbers from it are not comparable to
toolchains that fit distortion filters.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .tensor import Tensor

EPS = 1e-8
CLAMP_DB = 30.0
_LOG10 = float(np.log(10.0))


class DegenerateTargetError(ValueError):
    """Target is all-zero after mean removal; SI-SNR is undefined."""


def _check_pair(est, target, name):
    if est.ndim != 1 or target.ndim != 1 or est.shape != target.shape:
        raise tt.ShapeError(
            f"{name} expects equal-length 1-d signals, got {est.shape} and {target.shape}"
        )
    if est.shape[0] < 2:
        raise tt.ShapeError(f"{name} needs at least 2 samples, got {est.shape[0]}")


def _zero_mean(x):
    return tt.sub(x, tt.reduce_mean(x))


def si_snr(est: Tensor, target: Tensor, clamp: bool = False) -> Tensor:
    """SI-SNR in dB (0-d tensor).

    Both signals are mean-removed; the estimate is scored against its
    projection onto the target. With ``clamp`` (training mode) the value is
    limited to +-30 dB, which also zeroes gradients in the saturated
    regime.
    """
    _check_pair(est, target, "si_snr")
    e = _zero_mean(est)
    t = _zero_mean(target)
    if not np.any(t.data):
        raise DegenerateTargetError("target is zero after mean removal")
    dot = tt.sum_(tt.mul(e, t))
    t_energy = tt.add(tt.sum_(tt.mul(t, t)), EPS)
    s_t = tt.mul(tt.div(dot, t_energy), t)
    noise = tt.sub(e, s_t)
    ratio = tt.div(
        tt.sum_(tt.mul(s_t, s_t)), tt.add(tt.sum_(tt.mul(noise, noise)), EPS)
    )
    value = tt.mul(tt.log(ratio), 10.0 / _LOG10)
    if clamp:
        value = tt.clamp(value, -CLAMP_DB, CLAMP_DB)
    return value


def sdr(est: Tensor, target: Tensor) -> Tensor:
    """Plain (non-scale-invariant) energy-ratio SDR in dB."""
    _check_pair(est, target, "sdr")
    diff = tt.sub(target, est)
    ratio = tt.div(
        tt.sum_(tt.mul(target, target)), tt.add(tt.sum_(tt.mul(diff, diff)), EPS)
    )
    return tt.mul(tt.log(ratio), 10.0 / _LOG10)


def si_snr_improvement(est, target, mixture) -> float:
    """si_snr(est, target) - si_snr(mixture, target), unclamped, in dB."""
    return si_snr(est, target).item() - si_snr(mixture, target).item()


def sdr_improvement(est, target, mixture) -> float:
    return sdr(est, target).item() - sdr(mixture, target).item()


@dataclass
class PitResult:
    loss: Tensor  # 0-d, negative best mean SI-SNR (clamped per source)
    best_permutation: tuple  # best_permutation[i] = target index for estimate i
    per_source_si_snr: list  # dB under the best assignment


def pit_loss(ests, targets) -> PitResult:
    """Exhaustive permutation-invariant SI-SNR loss.

    Searches all Ns! estimate-to-target assignments and returns the one
    with the highest mean SI-SNR; the loss stays differentiable through
    the selected assignment.
    """
    ests = list(ests)
    targets = list(targets)
    if len(ests) != len(targets) or not ests:
        raise tt.ShapeError(
            f"pit_loss needs matching non-empty source lists, got {len(ests)} and {len(targets)}"
        )
    Ns = len(ests)
    scores = [[si_snr(e, t, clamp=True) for t in targets] for e in ests]
    best_perm = None
    best_mean = -np.inf
    for perm in itertools.permutations(range(Ns)):
        mean = sum(scores[i][perm[i]].item() for i in range(Ns)) / Ns
        if mean > best_mean:
            best_mean = mean
            best_perm = perm
    chosen = scores[0][best_perm[0]]
    for i in range(1, Ns):
        chosen = tt.add(chosen, scores[i][best_perm[i]])
    loss = tt.mul(chosen, -1.0 / Ns)
    return PitResult(
        loss=loss,
        best_permutation=best_perm,
        per_source_si_snr=[scores[i][best_perm[i]].item() for i in range(Ns)],
    )
