"""Chunked-attention time-domain source separation at desk scale."""

from .chunking import ChunkedLatent, chunk, reconstruct
from .model import ModelConfig, SeparationModel, SeparationResult
from .objective import pit_loss, si_snr, si_snr_improvement
from .tensor import GradientTape, Tensor, backward

__all__ = [
    "ChunkedLatent",
    "GradientTape",
    "ModelConfig",
    "SeparationModel",
    "SeparationResult",
    "Tensor",
    "backward",
    "chunk",
    "pit_loss",
    "reconstruct",
    "si_snr",
    "si_snr_improvement",
]

__version__ = "0.1.0"
