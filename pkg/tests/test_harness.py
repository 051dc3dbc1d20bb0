import math
from dataclasses import replace

import numpy as np
import pytest

from egamtl import harness, synth
from egamtl.errors import InvalidConfigError
from egamtl.harness import NoiseProtocol, StrategySpec
from egamtl.metrics import DEFAULT_SPECS, rows_to_csv

SMALL = dict(epochs=5, t_warm=2, n_records=6, split=[4, 1, 1], repeats=2, synth={"duration_s": 12.0})


@pytest.fixture(scope="module")
def cfg():
    return harness.config_from_dict(SMALL)


@pytest.fixture(scope="module")
def dataset(cfg):
    return harness.build_dataset(cfg)


class TestConfig:
    def test_defaults_validate(self):
        harness.ExperimentConfig().validate()

    def test_yaml(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            "epochs: 3\nsynth:\n  ppi_range: [0.7, 0.9]\nnoise:\n  - {type: constant, snr_db: -3}\n"
            "strategies:\n  - equal_weight\n  - {name: ega, temperature: 0.5}\n"
        )
        c = harness.load_config(path)
        assert c.epochs == 3 and c.synth.ppi_range == (0.7, 0.9)
        assert c.noise == [NoiseProtocol("constant", -3.0)]
        assert [s.label for s in c.strategies] == ["equal_weight", "ega(T=0.5)"]

    @pytest.mark.parametrize(
        "bad",
        [{"epochs": -1}, {"strategy": "nope"}, {"split": [1, 1, 1]}, {"typo": 1}, {"synth": {"fs": 50.0}},
         {"noise": [{"type": "pink"}]}, {"temperature": 0.0}, {"loss_scales": [1, 1]}],
    )
    def test_invalid(self, bad):
        with pytest.raises(InvalidConfigError):
            harness.config_from_dict(bad)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidConfigError):
            harness.load_config(path)

    def test_digest_tracks_content(self, cfg):
        assert cfg.digest() == harness.config_from_dict(SMALL).digest()
        assert cfg.digest() != replace(cfg, seed=1).digest()


class TestData:
    def test_split_is_by_record(self, cfg, dataset):
        assert len(dataset.test_records) == 1
        seeds = harness.record_seeds(cfg)
        assert dataset.test_records[0].seed == seeds[-1]
        assert len(set(seeds)) == len(seeds)

    def test_shapes(self, dataset):
        d = dataset.train
        assert d.x.shape[1] == 200 and d.waveform.shape[1] == 200
        assert d.anchors.shape[1] == harness.ANCHOR_CLASSES and d.anchors.dtype == bool
        assert np.all((d.length >= 0) & (d.length < synth.N_PPI_BINS))

    def test_noisy_copy_leaves_dataset_alone(self, cfg, dataset):
        before = dataset.test.digest()
        data, report = harness.noisy_test(dataset, cfg, NoiseProtocol("abrupt", -9.0, 0.2, 2.0), seed=0)
        assert dataset.test.digest() == before and data.digest() != before
        assert report.doped == math.floor(0.2 * len(dataset.test) + 0.5)
        assert report.segments == [len(dataset.test)]
        np.testing.assert_allclose(report.snr_db, -9.0, atol=1e-9)

    def test_constant_noise_report(self, cfg, dataset):
        _, report = harness.noisy_test(dataset, cfg, NoiseProtocol("constant", -2.0), seed=4)
        assert report.doped == 0 and len(report.snr_db) == 1
        assert abs(report.snr_db[0] + 2.0) <= 0.1


class TestTrain:
    def test_zero_epochs(self, cfg, dataset):
        run = harness.train(replace(cfg, epochs=0), dataset)
        assert run.train_losses.shape == (0, 3) and run.val_losses.shape == (0, 3)
        assert set(run.metrics) == {s.key for s in DEFAULT_SPECS}

    def test_shapes_and_losses(self, cfg, dataset):
        run = harness.train(cfg, dataset)
        assert run.train_losses.shape == (cfg.epochs, 3)
        assert np.all(run.train_losses >= 0)
        assert run.skipped_updates == 0

    def test_deterministic(self, cfg, dataset):
        a = harness.train(cfg, dataset)
        b = harness.train(cfg, harness.build_dataset(cfg))
        assert a.train_losses.tobytes() == b.train_losses.tobytes()
        assert rows_to_csv(a.rows()) == rows_to_csv(b.rows())

    def test_warmup_trajectories_identical(self, cfg, dataset):
        a = harness.train(replace(cfg, strategy="ega"), dataset, keep_trajectory=True)
        b = harness.train(replace(cfg, strategy="ortho_only"), dataset, keep_trajectory=True)
        for e in range(cfg.t_warm):
            assert a.trunk_trajectory[e].tobytes() == b.trunk_trajectory[e].tobytes()
        assert a.trunk_trajectory[-1].tobytes() != b.trunk_trajectory[-1].tobytes()

    def test_rows(self, cfg, dataset):
        run = harness.train(replace(cfg, strategy="ortho_only", epochs=1), dataset)
        rows = run.rows()
        assert len(rows) == len(DEFAULT_SPECS)
        assert all(math.isnan(r.T) and r.noise_type == "none" for r in rows)

    def test_progress_ratios(self, cfg, dataset):
        run = harness.train(cfg, dataset)
        np.testing.assert_allclose(harness.progress_ratios(run, 2), run.train_losses[-1] / run.train_losses[1])
        with pytest.raises(InvalidConfigError):
            harness.progress_ratios(run, 10)

    def test_init_gradient_norms(self, cfg, dataset):
        norms = harness.init_gradient_norms(replace(cfg, loss_scales=[1.0, 1.0, 8.0]), dataset)
        base = harness.init_gradient_norms(cfg, dataset)
        np.testing.assert_allclose(norms[:, 2], 8 * base[:, 2], rtol=1e-12)


class TestCompare:
    def test_self_comparison(self, cfg):
        res = harness.compare_strategies(cfg, [StrategySpec("equal_weight")], "equal_weight")
        (row,) = res.summary
        assert abs(row["delta_m"]) <= 1e-9
        assert row["p_value"] == 1.0

    def test_row_count_and_order(self, cfg):
        specs = [StrategySpec("equal_weight"), StrategySpec("ega", 1.0)]
        res = harness.compare_strategies(cfg, specs, "equal_weight")
        assert len(res.rows) == len(specs) * cfg.repeats * len(DEFAULT_SPECS)
        assert res.rows == harness.sort_rows(res.rows)

    def test_single_task_baseline(self, cfg):
        res = harness.compare_strategies(replace(cfg, repeats=1, epochs=2), [StrategySpec("ega")], "single_task")
        assert math.isfinite(res.summary[0]["delta_m"])

    def test_unknown_baseline(self, cfg):
        with pytest.raises(InvalidConfigError):
            harness.compare_strategies(cfg, [StrategySpec("ega")], "gradnorm")


class TestSweep:
    def test_empty_protocols(self, cfg):
        res = harness.noise_sweep(replace(cfg, repeats=1), [])
        assert [r["label"] for r in res.summary] == ["clean"]
        assert len(res.rows) == len(DEFAULT_SPECS)
        assert res.monotone is None

    def test_grid(self, cfg):
        protocols = harness.constant_protocols() + harness.abrupt_protocols()
        res = harness.noise_sweep(cfg, protocols)
        assert len(res.summary) == 1 + len(protocols)
        assert len(set(res.train_hashes)) == 1
        assert len(res.rows) == cfg.repeats * (1 + len(protocols)) * len(DEFAULT_SPECS)
        assert isinstance(res.monotone, bool)
        n_test = len(harness.build_dataset(cfg).test)
        for label, counts in res.doped.items():
            expected = math.floor(0.2 * n_test + 0.5) if label.startswith("abrupt") else 0
            assert counts == [expected] * cfg.repeats

    def test_format_table(self, cfg):
        res = harness.noise_sweep(replace(cfg, repeats=1), [NoiseProtocol("constant", 0.0)])
        text = harness.format_table(res.summary)
        assert "clean" in text and "constant@0dB" in text
