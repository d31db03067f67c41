"""Static cost accounting and the runtime scaling benchmark.

MAC counts are analytic and cover multiplies in matmuls/convs only
(softmax, layer norm and activations are excluded, matching the usual
GMACs convention for this model family); the tally agrees with the
instrumented counter in the tensor module on executed forwards.

The benchmark measures forward-only wall time (median of repeated runs
after a warmup) and the deterministic peak tensor allocation reported by
the instrumented allocator, then emits CSV rows
``variant,length_s,wall_time_s,peak_mem_bytes,params,macs``.
"""

from __future__ import annotations

import hashlib
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as tt
from .model import ModelConfig, SeparationModel
from .tensor import Tensor

CSV_HEADER = "variant,length_s,wall_time_s,peak_mem_bytes,params,macs"

SUBMODULES = ("encoder", "intra1", "memory_or_inter", "intra2", "projections", "decoder")


@dataclass
class CostReport:
    config: ModelConfig
    input_length_s: float
    sample_rate: int
    total_params: int
    total_macs: int
    param_breakdown: dict
    mac_breakdown: dict

    @property
    def macs_per_second(self):
        return self.total_macs / self.input_length_s

    def check_sums(self):
        assert self.total_params == sum(self.param_breakdown.values())
        assert self.total_macs == sum(self.mac_breakdown.values())


def _frames_and_chunks(cfg: ModelConfig, T: int):
    Tp = math.ceil((T - cfg.kernel_size) / cfg.stride) + 1
    C = cfg.chunk_size
    if cfg.overlap_ratio == 0.0:
        Nc = math.ceil(Tp / C)
    else:
        Nc = math.ceil(max(Tp - C, 0) / (C // 2)) + 1
    return Tp, Nc


def _stack_macs(layers, batch, L, F, d_ff):
    attn = 2 * L * L * F + 4 * L * F * F
    ff = 2 * L * F * d_ff
    return layers * batch * (attn + ff)


def _param_group(name):
    if name.startswith("encoder"):
        return "encoder"
    if name.startswith("decoder"):
        return "decoder"
    if ".intra1" in name or ".intra." in name:
        return "intra1"
    if ".memory" in name or ".inter" in name:
        return "memory_or_inter"
    if ".intra2" in name:
        return "intra2"
    return "projections"  # mask projection + PReLU


def count_costs(config: ModelConfig, input_length_s: float, sample_rate: int = 8000) -> CostReport:
    """Analytic parameter and MAC accounting for one forward pass."""
    cfg = config
    T = int(round(input_length_s * sample_rate))
    if T < cfg.kernel_size:
        raise ValueError(f"input of {input_length_s}s is shorter than the encoder kernel")
    Tp, Nc = _frames_and_chunks(cfg, T)
    F = cfg.encoder_filters
    C = cfg.chunk_size
    K = cfg.kernel_size
    Ns = cfg.num_sources

    macs = dict.fromkeys(SUBMODULES, 0)
    macs["encoder"] = Tp * F * K
    macs["decoder"] = Ns * Tp * F * K
    macs["projections"] = C * Nc * F * (Ns * F)
    if cfg.variant == "re_sepformer":
        intra = _stack_macs(cfg.intra_layers, Nc, C, F, cfg.d_ff_intra)
        macs["intra1"] = cfg.num_blocks * intra
        macs["intra2"] = cfg.num_blocks * intra
        macs["memory_or_inter"] = cfg.num_blocks * _stack_macs(
            cfg.memory_layers, 1, Nc, F, cfg.d_ff_memory
        )
    else:
        macs["intra1"] = cfg.num_blocks * _stack_macs(
            cfg.intra_layers, Nc, C, F, cfg.d_ff_intra
        )
        macs["memory_or_inter"] = cfg.num_blocks * _stack_macs(
            cfg.memory_layers, C, Nc, F, cfg.d_ff_memory
        )

    params = dict.fromkeys(SUBMODULES, 0)
    for name, p in SeparationModel(cfg, seed=0).named_parameters():
        params[_param_group(name)] += p.size

    report = CostReport(
        config=cfg,
        input_length_s=input_length_s,
        sample_rate=sample_rate,
        total_params=sum(params.values()),
        total_macs=sum(macs.values()),
        param_breakdown=params,
        mac_breakdown=macs,
    )
    report.check_sums()
    return report


def format_cost_report(report: CostReport) -> str:
    lines = [
        f"variant: {report.config.variant}  (input {report.input_length_s:g}s @ {report.sample_rate} Hz)",
        f"{'submodule':<16}{'params':>12}{'MACs':>16}",
    ]
    for name in SUBMODULES:
        lines.append(
            f"{name:<16}{report.param_breakdown[name]:>12}{report.mac_breakdown[name]:>16}"
        )
    lines.append(f"{'total':<16}{report.total_params:>12}{report.total_macs:>16}")
    lines.append(
        f"total params: {report.total_params/1e6:.2f}M   GMACs/s: {report.macs_per_second/1e9:.2f}"
    )
    lines.append("(MAC counts cover matmul/conv multiplies only; norms, softmax and activations excluded)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# runtime benchmark


@dataclass
class BenchRecord:
    variant: str
    input_length_s: float
    wall_time_s: float  # median of the measured runs; NaN when oom
    peak_memory_bytes: int
    params: int
    macs: int
    config_hash: str = field(default="", compare=False)
    oom: bool = False


def config_hash(cfg: ModelConfig) -> str:
    return hashlib.sha256(json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()[:12]


def run_bench(
    variants,
    length_grid_s,
    precision="float32",
    repetitions=5,
    sample_rate=8000,
    seed=0,
):
    """Forward-only timing/memory grid.

    ``variants`` maps name -> ModelConfig. Each grid point gets a fresh
    random input, one warmup run, then ``repetitions`` timed runs; the
    median wall time and the allocator high-water mark are recorded.
    Out-of-memory at a point produces an explicit OOM row instead of a
    crash.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    dtype = np.dtype(precision)
    records = []
    for name, cfg in variants.items():
        model = SeparationModel(cfg, seed=seed, dtype=dtype)
        chash = config_hash(cfg)
        for length_s in length_grid_s:
            if length_s <= 0:
                raise ValueError(f"bench lengths must be positive, got {length_s}")
            T = int(round(length_s * sample_rate))
            report = count_costs(cfg, length_s, sample_rate)
            rng = np.random.default_rng(seed + 1)
            x = Tensor(rng.standard_normal(T).astype(dtype))
            try:
                model.separate(x)  # warmup
                times = []
                tt.reset_peak_memory()
                for _ in range(repetitions):
                    t0 = time.perf_counter()
                    model.separate(x)
                    times.append(time.perf_counter() - t0)
                records.append(
                    BenchRecord(
                        variant=name,
                        input_length_s=float(length_s),
                        wall_time_s=statistics.median(times),
                        peak_memory_bytes=tt.peak_memory_bytes(),
                        params=report.total_params,
                        macs=report.total_macs,
                        config_hash=chash,
                    )
                )
            except MemoryError:
                records.append(
                    BenchRecord(
                        variant=name,
                        input_length_s=float(length_s),
                        wall_time_s=float("nan"),
                        peak_memory_bytes=0,
                        params=report.total_params,
                        macs=report.total_macs,
                        config_hash=chash,
                        oom=True,
                    )
                )
    return records


def write_bench_csv(records, fh) -> None:
    if isinstance(fh, str):
        with open(fh, "w") as f:
            return write_bench_csv(records, f)
    fh.write(CSV_HEADER + "\n")
    for r in records:
        wall = "OOM" if r.oom else f"{r.wall_time_s!r}"
        fh.write(
            f"{r.variant},{r.input_length_s!r},{wall},{r.peak_memory_bytes},{r.params},{r.macs}\n"
        )


def read_bench_csv(fh):
    if isinstance(fh, str):
        with open(fh) as f:
            return read_bench_csv(f)
    lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"bench CSV must start with header {CSV_HEADER!r}")
    records = []
    for ln in lines[1:]:
        variant, length_s, wall, peak, params, macs = ln.split(",")
        oom = wall == "OOM"
        records.append(
            BenchRecord(
                variant=variant,
                input_length_s=float(length_s),
                wall_time_s=float("nan") if oom else float(wall),
                peak_memory_bytes=int(peak),
                params=int(params),
                macs=int(macs),
                oom=oom,
            )
        )
    return records
