import io
import math

import numpy as np
import pytest

from resep import tensor as tt
from resep.analysis import (
    CSV_HEADER,
    SUBMODULES,
    BenchRecord,
    count_costs,
    format_cost_report,
    read_bench_csv,
    run_bench,
    write_bench_csv,
)
from resep.model import ModelConfig, SeparationModel, parameter_count
from resep.tensor import Tensor

TINY = dict(
    encoder_filters=8,
    kernel_size=4,
    stride=2,
    chunk_size=4,
    heads=2,
    intra_layers=1,
    memory_layers=1,
    d_ff_intra=16,
    d_ff_memory=16,
)


class TestCountCosts:
    def test_breakdown_sums_to_totals(self):
        report = count_costs(ModelConfig(**TINY), 0.05)
        report.check_sums()
        assert set(report.mac_breakdown) == set(SUBMODULES)

    def test_params_agree_with_model_enumeration(self):
        cfg = ModelConfig(**TINY)
        assert count_costs(cfg, 0.05).total_params == parameter_count(cfg)

    def test_hand_counted_encoder_macs(self):
        cfg = ModelConfig(**TINY)
        T = 400
        Tp = math.ceil((T - 4) / 2) + 1
        report = count_costs(cfg, T / 8000)
        assert report.mac_breakdown["encoder"] == Tp * 8 * 4
        assert report.mac_breakdown["decoder"] == 2 * Tp * 8 * 4

    @pytest.mark.parametrize("variant,overlap", [("re_sepformer", 0.0), ("sepformer_baseline", 0.5)])
    def test_instrumented_forward_matches_analytic(self, variant, overlap):
        cfg = ModelConfig(variant=variant, overlap_ratio=overlap, **TINY)
        model = SeparationModel(cfg, seed=0)
        T = 300
        x = Tensor(np.random.default_rng(0).standard_normal(T))
        with tt.mac_counting() as meter:
            model.separate(x)
        analytic = count_costs(cfg, T / 8000).total_macs
        assert meter.macs == analytic

    def test_summary_variant_cheaper_than_overlapped(self):
        base = dict(TINY, chunk_size=6)
        re_cfg = ModelConfig(variant="re_sepformer", **base)
        b50 = ModelConfig(variant="sepformer_baseline", **base)
        assert count_costs(re_cfg, 4.0).total_macs < count_costs(b50, 4.0).total_macs

    def test_overlapped_cost_grows_faster_with_length(self):
        """Cross-chunk attention is quadratic in the number of chunks and the
        overlapped baseline pays it at every intra-chunk index, so its
        per-second cost must grow faster with input length than the
        summary model's."""
        base = dict(TINY, chunk_size=50)

        def growth(variant):
            cfg = ModelConfig(variant=variant, **base)
            return count_costs(cfg, 32.0).macs_per_second / count_costs(cfg, 2.0).macs_per_second

        assert growth("sepformer_baseline") > 1.5 * growth("re_sepformer")

    def test_report_formatting(self):
        text = format_cost_report(count_costs(ModelConfig(**TINY), 0.1))
        assert "total params" in text and "GMACs/s" in text
        for name in SUBMODULES:
            assert name in text

    def test_too_short_input_rejected(self):
        with pytest.raises(ValueError):
            count_costs(ModelConfig(**TINY), 0.0001)


class TestBench:
    BENCH = dict(
        encoder_filters=8,
        kernel_size=4,
        stride=2,
        chunk_size=8,
        heads=2,
        intra_layers=1,
        memory_layers=1,
        d_ff_intra=16,
        d_ff_memory=16,
    )

    def test_grid_and_record_fields(self):
        variants = {
            "a": ModelConfig(variant="re_sepformer", **self.BENCH),
            "b": ModelConfig(variant="sepformer_baseline", **self.BENCH),
        }
        records = run_bench(variants, [0.05, 0.1], repetitions=2)
        assert len(records) == 4
        for r in records:
            assert r.variant in variants
            assert r.wall_time_s > 0 and not r.oom
            assert r.peak_memory_bytes > 0
            assert r.macs == count_costs(variants[r.variant], r.input_length_s).total_macs

    def test_csv_round_trip(self):
        records = [
            BenchRecord("a", 4.0, 0.125, 1000, 10, 20),
            BenchRecord("b", 64.0, float("nan"), 0, 10, 99, oom=True),
        ]
        buf = io.StringIO()
        write_bench_csv(records, buf)
        text = buf.getvalue()
        assert text.splitlines()[0] == CSV_HEADER
        assert "OOM" in text
        back = read_bench_csv(io.StringIO(text))
        assert back[0].wall_time_s == 0.125
        assert back[1].oom and math.isnan(back[1].wall_time_s)

    def test_csv_header_validated(self):
        with pytest.raises(ValueError):
            read_bench_csv(io.StringIO("wrong,header\n"))

    def test_invalid_arguments(self):
        cfg = {"a": ModelConfig(**self.BENCH)}
        with pytest.raises(ValueError):
            run_bench(cfg, [0.05], repetitions=0)
        with pytest.raises(ValueError):
            run_bench(cfg, [-1.0])
