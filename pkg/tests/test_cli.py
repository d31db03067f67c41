import json

import numpy as np
import pytest

from resep.cli import main
from resep.data import wav_read, wav_write

MICRO = {
    "model": {
        "encoder_filters": 8,
        "kernel_size": 4,
        "stride": 2,
        "chunk_size": 4,
        "heads": 2,
        "intra_layers": 1,
        "memory_layers": 1,
        "d_ff_intra": 16,
        "d_ff_memory": 16,
    },
    "mix": {"duration": 0.05},
    "trainer": {"steps": 2, "eval_every": 2, "eval_examples": 1},
}


@pytest.fixture
def micro_config(tmp_path):
    path = tmp_path / "micro.json"
    doc = dict(MICRO)
    doc["output_dir"] = str(tmp_path / "out")
    path.write_text(json.dumps(doc))
    return str(path)


class TestCount:
    def test_default_config_reports_reference_band(self, capsys):
        assert main(["count"]) == 0
        out = capsys.readouterr().out
        assert "reference band" in out
        assert "7.95M" in out
        assert "inside" in out

    def test_micro_config(self, micro_config, capsys):
        assert main(["count", micro_config, "--length-s", "1"]) == 0
        out = capsys.readouterr().out
        assert "total params" in out
        assert "reference band" not in out  # non-default config, no band line

    def test_baseline_variant_prints_overlap_ratio(self, capsys):
        assert main(["count", "--variant", "sepformer_baseline"]) == 0
        out = capsys.readouterr().out
        assert "overlap-0.5 / overlap-0 MACs ratio" in out

    def test_unknown_config_key_exits_1(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"model": {"bogus": 1}}')
        assert main(["count", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_config_file_exits_1(self, capsys):
        assert main(["count", "/nonexistent/config.json"]) == 1

    def test_bad_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_set_override(self, micro_config, capsys):
        assert main(["count", micro_config, "--set", "model.encoder_filters=16"]) == 0
        base = capsys.readouterr().out
        assert main(["count", micro_config]) == 0
        smaller = capsys.readouterr().out
        assert base != smaller


class TestTrainAndSeparate:
    def test_full_round_trip(self, micro_config, tmp_path, capsys):
        assert main(["train-toy", micro_config]) == 0
        out = capsys.readouterr().out
        assert "checkpoint:" in out and "metrics:" in out
        ckpt = tmp_path / "out" / "checkpoint.bin"
        assert ckpt.exists()
        assert (tmp_path / "out" / "metrics.csv").exists()

        wav = tmp_path / "mix.wav"
        wav_write(str(wav), 0.1 * np.sin(np.arange(400) / 5.0), 8000)
        prefix = str(tmp_path / "sep")
        assert main(["separate", str(ckpt), str(wav), prefix]) == 0
        for k in (1, 2):
            est, rate = wav_read(f"{prefix}_{k}.wav")
            assert rate == 8000
            assert est.shape == (400,)

    def test_separate_with_bad_checkpoint_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"garbage")
        wav = tmp_path / "m.wav"
        wav_write(str(wav), np.zeros(100), 8000)
        assert main(["separate", str(bad), str(wav), str(tmp_path / "o")]) == 1
        assert "error:" in capsys.readouterr().err


class TestBench:
    def test_csv_output(self, micro_config, tmp_path, capsys):
        out_csv = tmp_path / "bench.csv"
        code = main(
            [
                "bench",
                micro_config,
                "--lengths",
                "0.05,0.1",
                "--repetitions",
                "1",
                "--out",
                str(out_csv),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        lines = [ln for ln in stdout.splitlines() if ln]
        assert lines[0] == "variant,length_s,wall_time_s,peak_mem_bytes,params,macs"
        assert len(lines) == 5  # two variants x two lengths
        variants = {ln.split(",")[0] for ln in lines[1:]}
        assert variants == {"re_sepformer", "sepformer_baseline"}
        assert out_csv.read_text().splitlines()[0] == lines[0]

    def test_single_variant_filter(self, micro_config, capsys):
        code = main(
            ["bench", micro_config, "--lengths", "0.05", "--repetitions", "1",
             "--variant", "re_sepformer"]
        )
        assert code == 0
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln]
        assert len(lines) == 2
        assert lines[1].startswith("re_sepformer,")


def test_out_dir_env_override(micro_config, tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("RESEP_OUT_DIR", str(target))
    assert main(["train-toy", micro_config]) == 0
    assert (target / "checkpoint.bin").exists()
