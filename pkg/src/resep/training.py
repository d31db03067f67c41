"""Toy trainer: Adam on the permutation-invariant SI-SNR loss over
dynamically-mixed synthetic sources.

Desk-scale on purpose: fixed learning rate (optional linear warmup), a few
hundred steps, held-out evaluation on a frozen seed set. Data generation
can run one thread ahead of the optimizer through a bounded queue.
"""

from __future__ import annotations

import math
import os
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from . import objective
from .data import MixSpec, dynamic_mix, generate_sources
from .model import ModelConfig, SeparationModel, save_checkpoint
from .tensor import GradientTape

METRICS_HEADER = "step,train_loss,eval_si_snri_db"

_EVAL_SEED_BASE = 10_000_000  # disjoint from any sane training seed stream


class NumericsError(RuntimeError):
    """Non-finite loss; message carries the diagnostic dump."""


@dataclass
class TrainerSettings:
    steps: int = 400
    batch_size: int = 1
    learning_rate: float = 1e-3
    warmup_steps: int = 0
    seed: int = 0
    eval_every: int = 50
    eval_examples: int = 5
    prefetch: int = 0  # bounded-queue capacity; 0 = generate synchronously


class Adam:
    """Adaptive-moment gradient descent (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, (_, p) in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            p.data -= lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)
            p.grad = None

    def grad_norms(self):
        return {
            name: float(np.sqrt((p.grad**2).sum())) if p.grad is not None else 0.0
            for name, p in self.params
        }


def _example_stream(mix_spec: MixSpec, seed: int):
    """Deterministic endless stream of fresh dynamically-mixed examples."""
    rng = np.random.default_rng(seed)
    while True:
        utt_seed = int(rng.integers(0, 2**31))
        sources = generate_sources(mix_spec, seed=utt_seed)
        yield dynamic_mix(sources, mix_spec, rng)


def _prefetched(gen, capacity):
    q = queue.Queue(maxsize=capacity)

    def worker():
        for item in gen:
            q.put(item)

    threading.Thread(target=worker, daemon=True).start()
    while True:
        yield q.get()


def evaluate(model: SeparationModel, mix_spec: MixSpec, num_examples: int) -> float:
    """Mean SI-SNR improvement (dB) over the frozen held-out seed set."""
    scores = []
    for i in range(num_examples):
        seed = _EVAL_SEED_BASE + i
        sources = generate_sources(mix_spec, seed=seed)
        ex = dynamic_mix(sources, mix_spec, np.random.default_rng(seed))
        result = model.separate(ex.mixture)
        pit = objective.pit_loss(result.sources, ex.sources)
        for est_idx, tgt_idx in enumerate(pit.best_permutation):
            scores.append(
                objective.si_snr_improvement(
                    result.sources[est_idx], ex.sources[tgt_idx], ex.mixture
                )
            )
    return float(np.mean(scores))


def train_toy(
    model_config: ModelConfig,
    mix_spec: MixSpec,
    settings: TrainerSettings,
    out_dir: str,
    log=print,
):
    """Train from scratch, log metrics CSV, write a checkpoint.

    Returns (model, history) where history is the list of
    (step, train_loss, eval_si_snri_db) rows that went into the CSV.
    """
    os.makedirs(out_dir, exist_ok=True)
    model = SeparationModel(model_config, seed=settings.seed)
    opt = Adam(model.named_parameters(), settings.learning_rate)
    stream = _example_stream(mix_spec, settings.seed)
    if settings.prefetch > 0:
        stream = _prefetched(stream, settings.prefetch)

    history = []
    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w") as metrics:
        metrics.write(METRICS_HEADER + "\n")
        for step in range(1, settings.steps + 1):
            with GradientTape() as tape:
                loss = None
                for _ in range(settings.batch_size):
                    ex = next(stream)
                    result = model.separate(ex.mixture)
                    pit = objective.pit_loss(result.sources, ex.sources)
                    loss = pit.loss if loss is None else loss + pit.loss
                if settings.batch_size > 1:
                    loss = loss * (1.0 / settings.batch_size)
            loss_value = loss.item()
            tape.backward(loss)
            if not math.isfinite(loss_value):
                raise NumericsError(
                    f"non-finite loss {loss_value} at step {step}; "
                    f"grad norms: {opt.grad_norms()}"
                )
            lr = settings.learning_rate
            if settings.warmup_steps > 0 and step <= settings.warmup_steps:
                lr *= step / settings.warmup_steps
            opt.step(lr)
            if step % settings.eval_every == 0 or step == settings.steps:
                score = evaluate(model, mix_spec, settings.eval_examples)
                history.append((step, loss_value, score))
                metrics.write(f"{step},{loss_value!r},{score!r}\n")
                metrics.flush()
                log(f"step {step}: loss {loss_value:.3f}  held-out SI-SNRi {score:.2f} dB")

    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    save_checkpoint(ckpt_path, model)
    return model, history
