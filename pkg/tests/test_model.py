import numpy as np
import pytest

from resep import tensor as tt
from resep.layers import ConfigError
from resep.model import (
    CheckpointError,
    ModelConfig,
    SeparationModel,
    load_checkpoint,
    load_state,
    parameter_count,
    restore_model,
    save_checkpoint,
)
from resep.tensor import Tensor

from helpers import check_grad

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


def tiny_config(**kw):
    merged = dict(TINY)
    merged.update(kw)
    return ModelConfig(**merged)


class TestModelConfig:
    def test_defaults_are_published_setting(self):
        cfg = ModelConfig()
        assert (cfg.encoder_filters, cfg.kernel_size, cfg.stride) == (128, 16, 8)
        assert (cfg.chunk_size, cfg.num_sources, cfg.heads) == (150, 2, 8)
        assert (cfg.intra_layers, cfg.memory_layers) == (8, 8)
        assert cfg.overlap_ratio == 0.0

    def test_baseline_variant_defaults_to_overlap(self):
        cfg = ModelConfig(variant="sepformer_baseline")
        assert cfg.overlap_ratio == 0.5

    def test_explicit_overlap_respected(self):
        cfg = ModelConfig(variant="sepformer_baseline", overlap_ratio=0.0)
        assert cfg.overlap_ratio == 0.0

    def test_invalid_variant(self):
        with pytest.raises(ConfigError):
            ModelConfig(variant="other")

    def test_heads_must_divide_filters(self):
        with pytest.raises(ConfigError):
            ModelConfig(encoder_filters=100, heads=8)

    def test_odd_chunk_with_overlap_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(chunk_size=151, variant="sepformer_baseline")


class TestParameterCounts:
    # Frozen from an independent hand count of each layer's weight shapes:
    # per transformer layer 4F(F+1) attention + F*d+d + d*F+F feed-forward
    # + 4F norm parameters; encoder F(K+1); decoder FK; mask head F(2F+1)+1.
    def test_summary_model_default(self):
        assert parameter_count(ModelConfig()) == 7_953_793

    def test_overlapped_baseline_default(self):
        assert parameter_count(ModelConfig.sepformer_default()) == 25_412_353

    def test_overlapped_baseline_light(self):
        assert parameter_count(ModelConfig.sepformer_light()) == 6_381_953

    def test_count_matches_enumeration(self):
        cfg = tiny_config()
        model = SeparationModel(cfg)
        total = sum(p.size for _, p in model.named_parameters())
        assert parameter_count(cfg) == total

    def test_named_parameters_unique(self):
        names = [n for n, _ in SeparationModel(tiny_config(num_blocks=2)).named_parameters()]
        assert len(names) == len(set(names))


class TestForward:
    @pytest.mark.parametrize("variant", ["re_sepformer", "sepformer_baseline"])
    def test_output_shapes_and_masks(self, variant):
        cfg = tiny_config(variant=variant)
        model = SeparationModel(cfg, seed=1)
        T = 61  # deliberately not frame-aligned
        x = Tensor(np.random.default_rng(2).standard_normal(T))
        result = model.separate(x)
        assert len(result.sources) == cfg.num_sources
        for src in result.sources:
            assert src.shape == (T,)
        Tp = result.masks.shape[0]
        assert result.masks.shape == (Tp, cfg.num_sources, cfg.encoder_filters)
        assert np.all(result.masks.data >= 0.0)

    def test_deterministic_given_seed(self):
        cfg = tiny_config()
        x = np.random.default_rng(3).standard_normal(50)
        a = SeparationModel(cfg, seed=7).separate(Tensor(x)).sources[0].data
        b = SeparationModel(cfg, seed=7).separate(Tensor(x)).sources[0].data
        assert np.array_equal(a, b)
        c = SeparationModel(cfg, seed=8).separate(Tensor(x)).sources[0].data
        assert not np.array_equal(a, c)

    def test_too_short_input_rejected(self):
        model = SeparationModel(tiny_config())
        with pytest.raises(tt.ShapeError):
            model.separate(Tensor(np.zeros(2)))

    def test_end_to_end_gradients(self):
        cfg = tiny_config(intra_layers=1, memory_layers=1, d_ff_intra=8, d_ff_memory=8)
        model = SeparationModel(cfg, seed=4)
        x = Tensor(np.random.default_rng(5).standard_normal(24))
        w = np.random.default_rng(6).standard_normal(24)
        # spot-check a few parameters from different depths (full FD over
        # every weight would be minutes of runtime for no extra signal)
        picked = dict(model.named_parameters())
        subset = [
            picked["encoder.bias"],
            picked["decoder.weight"],
            picked["prelu.slope"],
            picked["mask_proj.bias"],
            picked["block0.memory.layers0.attn.q_proj.bias"],
        ]
        check_grad(
            lambda: tt.sum_(tt.mul(model.separate(x).sources[0], Tensor(w))),
            subset,
            rtol=1e-4,
        )


class TestCausality:
    def test_causal_output_unchanged_before_perturbed_chunk(self):
        cfg = tiny_config(causal=True)
        model = SeparationModel(cfg, seed=9)
        C, S, K = cfg.chunk_size, cfg.stride, cfg.kernel_size
        T = 100
        rng = np.random.default_rng(10)
        x = rng.standard_normal(T)
        base = model.separate(Tensor(x))
        j = 6  # perturb the start of chunk j (plus the encoder lookahead)
        idx = j * C * S + (K - S)
        x2 = x.copy()
        x2[idx] += 5.0
        pert = model.separate(Tensor(x2))
        horizon = j * C * S
        for k in range(cfg.num_sources):
            diff = np.abs(pert.sources[k].data[:horizon] - base.sources[k].data[:horizon])
            assert diff.max() < 1e-10

    def test_non_causal_model_fails_the_same_probe(self):
        cfg = tiny_config(causal=False)
        model = SeparationModel(cfg, seed=9)
        C, S, K = cfg.chunk_size, cfg.stride, cfg.kernel_size
        x = np.random.default_rng(10).standard_normal(100)
        base = model.separate(Tensor(x))
        x2 = x.copy()
        x2[6 * C * S + (K - S)] += 5.0
        pert = model.separate(Tensor(x2))
        diff = np.abs(pert.sources[0].data[: 6 * C * S] - base.sources[0].data[: 6 * C * S])
        assert diff.max() > 1e-10


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = tiny_config()
        model = SeparationModel(cfg, seed=11)
        for _, p in model.named_parameters():
            p.data += 0.01  # move off the deterministic init
        path = tmp_path / "m.bin"
        save_checkpoint(path, model)
        restored = restore_model(str(path))
        assert restored.config == cfg
        orig = dict(model.named_parameters())
        for name, p in restored.named_parameters():
            assert np.array_equal(p.data, orig[name].data), name

    def test_restored_model_same_outputs(self, tmp_path):
        model = SeparationModel(tiny_config(), seed=12)
        path = tmp_path / "m.bin"
        save_checkpoint(path, model)
        x = Tensor(np.random.default_rng(13).standard_normal(40))
        a = model.separate(x).sources[0].data
        b = restore_model(str(path)).separate(x).sources[0].data
        assert np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(str(path))

    def test_truncated_file(self, tmp_path):
        model = SeparationModel(tiny_config(), seed=14)
        path = tmp_path / "m.bin"
        save_checkpoint(path, model)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(str(path))

    def test_state_diff_reported(self, tmp_path):
        model = SeparationModel(tiny_config(), seed=15)
        path = tmp_path / "m.bin"
        save_checkpoint(path, model)
        _, values = load_checkpoint(str(path))
        del values["encoder.bias"]
        values["bogus"] = np.zeros(3)
        values["decoder.weight"] = np.zeros((1, 1, 1))
        with pytest.raises(CheckpointError) as err:
            load_state(SeparationModel(tiny_config(), seed=15), values)
        msg = str(err.value)
        assert "encoder.bias" in msg and "bogus" in msg and "decoder.weight" in msg
