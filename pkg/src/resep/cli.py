"""Command-line entry point.

Subcommands: train-toy, separate, count, bench. Every command is
deterministic given (config, seed). Exit codes: 0 success, 1 usage or
config error, 2 runtime numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import analysis
from .config import RunConfig, RunConfigError, apply_overrides, load_run_config
from .data import WavFormatError, wav_read, wav_write
from .layers import ConfigError
from .model import CheckpointError, ModelConfig, restore_model
from .training import NumericsError, train_toy

PUBLISHED_PARAMS_M = 8.0
PARAMS_TOLERANCE = 0.20
DEFAULT_COUNT_LENGTH_S = 60.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise RunConfigError(message)


def _load_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig()
    overrides = list(args.set or [])
    if getattr(args, "variant", None):
        overrides.append(f"model.variant={args.variant}")
        if getattr(args, "overlap", None) is None:
            # re-derive the variant's default overlap instead of keeping the
            # one resolved for the previous variant
            overrides.append("model.overlap_ratio=null")
    if getattr(args, "overlap", None) is not None:
        overrides.append(f"model.overlap_ratio={args.overlap}")
    if overrides:
        config = apply_overrides(config, overrides)
    out_dir = os.environ.get("RESEP_OUT_DIR")
    if out_dir and not any(o.startswith("output_dir=") for o in overrides):
        config = dataclasses.replace(config, output_dir=out_dir)
    return config


def cmd_train_toy(args) -> int:
    config = _load_config(args)
    model, history = train_toy(config.model, config.mix, config.trainer, config.output_dir)
    if history:
        print(f"final held-out SI-SNRi: {history[-1][2]:.2f} dB")
    print(f"checkpoint: {os.path.join(config.output_dir, 'checkpoint.bin')}")
    print(f"metrics: {os.path.join(config.output_dir, 'metrics.csv')}")
    return 0


def cmd_separate(args) -> int:
    model = restore_model(args.checkpoint)
    x, rate = wav_read(args.in_wav)
    result = model.separate(x)
    for k, src in enumerate(result.sources, start=1):
        path = f"{args.out_prefix}_{k}.wav"
        meta = wav_write(path, src, rate)
        note = f" ({meta['clipped']} samples clipped)" if meta["clipped"] else ""
        print(f"wrote {path}: {src.shape[0]} samples @ {rate} Hz{note}")
    return 0


def cmd_count(args) -> int:
    config = _load_config(args)
    report = analysis.count_costs(config.model, args.length_s)
    print(analysis.format_cost_report(report))
    if config.model == ModelConfig():
        lo = PUBLISHED_PARAMS_M * (1 - PARAMS_TOLERANCE)
        hi = PUBLISHED_PARAMS_M * (1 + PARAMS_TOLERANCE)
        actual = report.total_params / 1e6
        status = "inside" if lo <= actual <= hi else "OUTSIDE"
        print(
            f"reference band: {PUBLISHED_PARAMS_M:.1f}M +-{PARAMS_TOLERANCE:.0%} "
            f"[{lo:.2f}M, {hi:.2f}M]; this config: {actual:.2f}M ({status})"
        )
    if config.model.variant == "sepformer_baseline":
        other = dataclasses.replace(
            config.model,
            overlap_ratio=0.5 if config.model.overlap_ratio == 0.0 else 0.0,
        )
        other_report = analysis.count_costs(other, args.length_s)
        r50 = report if config.model.overlap_ratio == 0.5 else other_report
        r0 = other_report if config.model.overlap_ratio == 0.5 else report
        print(
            f"overlap-0.5 / overlap-0 MACs ratio: {r50.total_macs / r0.total_macs:.2f}"
        )
    return 0


def cmd_bench(args) -> int:
    config = _load_config(args)
    base = config.model
    variants = {
        "re_sepformer": dataclasses.replace(base, variant="re_sepformer", overlap_ratio=0.0),
        "sepformer_baseline": dataclasses.replace(
            base, variant="sepformer_baseline", overlap_ratio=0.5
        ),
    }
    if args.variant:
        variants = {args.variant: variants[args.variant]}
    lengths = [float(s) for s in args.lengths.split(",")]
    records = analysis.run_bench(
        variants,
        lengths,
        precision=args.precision,
        repetitions=args.repetitions,
        seed=config.trainer.seed,
    )
    analysis.write_bench_csv(records, sys.stdout)
    if args.out:
        analysis.write_bench_csv(records, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="resep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("config", nargs=None if config_required else "?", help="JSON run config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--variant", choices=("re_sepformer", "sepformer_baseline"))
        p.add_argument("--overlap", type=float, choices=(0.0, 0.5))

    p = sub.add_parser("train-toy", help="train a small model on synthetic mixtures")
    add_common(p)
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("separate", help="separate a WAV file with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("in_wav")
    p.add_argument("out_prefix")
    p.set_defaults(fn=cmd_separate)

    p = sub.add_parser("count", help="print the analytic parameter/MACs report")
    add_common(p, config_required=False)
    p.add_argument("--length-s", type=float, default=DEFAULT_COUNT_LENGTH_S)
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("bench", help="run the memory/latency scaling benchmark")
    add_common(p, config_required=False)
    p.add_argument("--lengths", default="4,16,64", help="comma-separated seconds grid")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--precision", choices=("float32", "float64"), default="float32")
    p.add_argument("--out", help="also write the CSV to this path")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (RunConfigError, ConfigError, CheckpointError, WavFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericsError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
