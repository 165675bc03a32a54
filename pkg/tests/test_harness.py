"""Experiment runner: config parsing, determinism, stopping, sweeps, CLI."""
import os

import numpy as np
import pytest

from qtlbench.cli import main
from qtlbench.data import decode_bundle, save_bundle, split_assign, synthesize_features
from qtlbench.errors import ConfigurationError
from qtlbench.harness import (
    ExperimentConfig,
    OptimizerConfig,
    SweepSpec,
    parse_config_text,
    run_experiment,
    run_sweep,
)
from qtlbench.heads import HeadConfig
from qtlbench.metrics import METRIC_FIELDS
from qtlbench.verify import self_verify


def _toy_bundles(seed=1, dim=16, per_class=24, sep=8.0, classes=2, logits=True):
    bundle = synthesize_features(classes, dim, per_class, sep, seed,
                                 with_teacher_logits=logits)
    manifest = split_assign(bundle, 1.0 / 3.0, seed=seed)
    return (bundle.take(np.array(manifest.train_indices)),
            bundle.take(np.array(manifest.eval_indices)))


def _toy_config(family="DQN", n=3, **kw):
    head = HeadConfig(family, n, depth=1, num_classes=2, feature_dim=16,
                      hidden_dim=8)
    defaults = dict(head=head,
                    optimizer=OptimizerConfig(max_epochs=3, batch_size=8),
                    seeds=(1, 2), patience=None)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestConfigParsing:
    def test_full_config(self):
        text = """
        # benchmark point
        data.train = train.qtlb
        data.eval = eval.qtlb
        head.family = dqn
        head.n_qubits = 4
        head.depth = 2
        head.num_classes = 10
        optimizer.lr = 0.001
        optimizer.batch_size = 32
        optimizer.scheduler = on
        run.seeds = 42,123,600
        run.subset_total = 10000
        run.patience = 15
        """
        cfg = parse_config_text(text)
        assert cfg.head.family == "DQN"
        assert cfg.head.n_qubits == 4
        assert cfg.seeds == (42, 123, 600)
        assert cfg.subset_total == 10000
        assert cfg.optimizer.scheduler is True

    def test_defaults(self):
        cfg = parse_config_text("head.family=QPIE\nhead.n_qubits=6\n")
        assert cfg.optimizer.lr == 1e-3
        assert cfg.optimizer.batch_size == 32
        assert cfg.optimizer.max_epochs == 80
        assert cfg.seeds == (42, 123, 600)
        assert cfg.patience == 15
        assert cfg.optimizer.step_size == 20 and cfg.optimizer.gamma == 0.1

    def test_family_defaults_resolution(self):
        opt = OptimizerConfig()
        assert opt.resolved_scheduler("DQN") and opt.resolved_scheduler("QPIE")
        for family in ("AECQTL", "PVCQTL_M", "PVCQTL_V", "EDQTL"):
            assert not opt.resolved_scheduler(family)
        for family in ("DQN", "QPIE", "EDQTL"):
            assert opt.resolved_weight_decay(family) == 1e-4
        for family in ("AECQTL", "PVCQTL_M", "PVCQTL_V"):
            assert opt.resolved_weight_decay(family) == 0.0
        assert OptimizerConfig(weight_decay=0.5).resolved_weight_decay("DQN") == 0.5
        assert OptimizerConfig(scheduler=False).resolved_scheduler("DQN") is False

    @pytest.mark.parametrize("text", [
        "head.family=DQN\nhead.n_qubits=4\nbogus.key=1\n",
        "head.family=DQN\nhead.n_qubits=4\nhead.n_qubits=6\n",
        "head.family=DQN\nhead.n_qubits=4\noptimizer.scheduler=maybe\n",
        "head.family=DQN\n",
        "head.family=DQN\nhead.n_qubits=four\n",
        "head.family=DQN nhead.n_qubits=4",
        "head.family=DQN\nhead.n_qubits=4\nrun.seeds=\n",
    ])
    def test_rejects_bad_configs(self, text):
        with pytest.raises(ConfigurationError):
            parse_config_text(text)


class TestRunExperiment:
    def test_zero_epochs_reports_untrained_model(self):
        train, evals = _toy_bundles()
        cfg = _toy_config(optimizer=OptimizerConfig(max_epochs=0))
        a = run_experiment(cfg, 7, train, evals)
        b = run_experiment(cfg, 7, train, evals)
        assert a.epochs_completed == 0
        assert a.stop_reason == "budget"
        for name in METRIC_FIELDS:
            assert getattr(a, name) == getattr(b, name)

    def test_training_improves_separable_task(self):
        train, evals = _toy_bundles(sep=8.0, per_class=60)
        cfg = _toy_config(optimizer=OptimizerConfig(max_epochs=25, batch_size=8))
        report = run_experiment(cfg, 42, train, evals)
        assert report.accuracy >= 0.9
        assert report.quantum_params == 9
        assert report.circuit_width == 3

    def test_bitwise_deterministic_metrics(self):
        train, evals = _toy_bundles()
        cfg = _toy_config(family="PVCQTL_V")
        a = run_experiment(cfg, 3, train, evals)
        b = run_experiment(cfg, 3, train, evals)
        for name in METRIC_FIELDS:
            assert getattr(a, name) == getattr(b, name)
        assert a.epochs_completed == b.epochs_completed

    def test_patience_triggers_saturation_stop(self):
        train, evals = _toy_bundles(sep=12.0, per_class=60)
        cfg = _toy_config(optimizer=OptimizerConfig(max_epochs=60, batch_size=8),
                          patience=3)
        report = run_experiment(cfg, 42, train, evals)
        assert report.stop_reason == "saturation"
        assert report.epochs_completed < 60

    def test_edqtl_requires_teacher_logits(self):
        train, evals = _toy_bundles(logits=False)
        cfg = _toy_config(family="EDQTL")
        with pytest.raises(ConfigurationError):
            run_experiment(cfg, 1, train, evals)

    def test_edqtl_trains_with_teachers(self):
        train, evals = _toy_bundles(sep=8.0, per_class=60, logits=True)
        cfg = _toy_config(family="EDQTL",
                          optimizer=OptimizerConfig(max_epochs=25, batch_size=8))
        report = run_experiment(cfg, 42, train, evals)
        assert report.accuracy >= 0.9

    def test_bundle_mismatch_rejected(self):
        train, evals = _toy_bundles(dim=16)
        cfg = _toy_config(head=HeadConfig("DQN", 3, num_classes=2,
                                          feature_dim=32, hidden_dim=8))
        with pytest.raises(ConfigurationError):
            run_experiment(cfg, 1, train, evals)

    def test_subset_total_applied(self):
        train, evals = _toy_bundles(per_class=24)
        cfg = _toy_config(subset_total=16,
                          optimizer=OptimizerConfig(max_epochs=1, batch_size=8))
        report = run_experiment(cfg, 5, train, evals)
        assert report.epochs_completed == 1


class TestRunSweep:
    def test_degenerate_sweep_equals_single_run(self):
        train, evals = _toy_bundles()
        base = _toy_config(seeds=(9,))
        results = run_sweep(SweepSpec(base, (3,), (1,)), train, evals)
        assert len(results) == 1
        agg = results[0].aggregate
        single = run_experiment(base, 9, train, evals)
        assert agg.run_count == 1
        for name in METRIC_FIELDS:
            assert agg.means[name] == getattr(single, name)
            assert agg.stds[name] == 0.0

    def test_grid_counts_and_rows(self):
        train, evals = _toy_bundles()
        base = _toy_config(seeds=(1, 2, 3),
                           optimizer=OptimizerConfig(max_epochs=1, batch_size=8))
        results = run_sweep(SweepSpec(base, (2, 3), (1,)), train, evals)
        assert len(results) == 2
        assert all(r.aggregate.run_count == 3 for r in results)
        assert [r.n_qubits for r in results] == [2, 3]
        assert all(len(r.aggregate.stop_reasons) == 3 for r in results)

    def test_invalid_point_marked_failed(self):
        train, evals = _toy_bundles()
        head = HeadConfig("AECQTL", 4, depth=1, num_classes=2, feature_dim=16)
        base = ExperimentConfig(head=head, seeds=(1, 2),
                                optimizer=OptimizerConfig(max_epochs=1, batch_size=8),
                                patience=None)
        results = run_sweep(SweepSpec(base, (4, 3), (1,)), train, evals)
        assert results[0].status == "ok"
        assert results[1].status == "failed"          # 2^3 != 16
        assert len(results[1].failures) == 2

    def test_thread_env_var(self, monkeypatch):
        train, evals = _toy_bundles()
        base = _toy_config(seeds=(1, 2),
                           optimizer=OptimizerConfig(max_epochs=1, batch_size=8))
        serial = run_sweep(SweepSpec(base, (2,), (1,)), train, evals)
        monkeypatch.setenv("QTLBENCH_THREADS", "4")
        threaded = run_sweep(SweepSpec(base, (2,), (1,)), train, evals)
        for name in METRIC_FIELDS:
            assert serial[0].aggregate.means[name] == threaded[0].aggregate.means[name]


def _write_config(tmp_path, train_path, eval_path, extra=""):
    text = (f"data.train={train_path}\ndata.eval={eval_path}\n"
            "head.family=DQN\nhead.n_qubits=2\nhead.depth=1\n"
            "head.num_classes=2\nhead.feature_dim=8\nhead.hidden_dim=4\n"
            "optimizer.max_epochs=2\noptimizer.batch_size=8\n"
            "run.seeds=1\nrun.patience=none\n" + extra)
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


class TestCli:
    @pytest.fixture()
    def bundles_on_disk(self, tmp_path):
        bundle = synthesize_features(2, 8, 12, 6.0, seed=3)
        manifest = split_assign(bundle, 0.25, seed=3)
        train = bundle.take(np.array(manifest.train_indices))
        evals = bundle.take(np.array(manifest.eval_indices))
        train_path = str(tmp_path / "train.qtlb")
        eval_path = str(tmp_path / "eval.qtlb")
        save_bundle(train, train_path)
        save_bundle(evals, eval_path)
        return train_path, eval_path

    def test_synth_writes_decodable_bundle(self, tmp_path, capsys):
        out = str(tmp_path / "synth.qtlb")
        code = main(["synth", out, "--classes", "2", "--dim", "8",
                     "--per-class", "5", "--sep", "3.0", "--seed", "11"])
        assert code == 0
        with open(out, "rb") as fh:
            bundle = decode_bundle(fh.read())
        assert bundle.n_records == 10
        assert bundle.teacher_logits is not None

    def test_run_and_report(self, tmp_path, bundles_on_disk, capsys):
        train_path, eval_path = bundles_on_disk
        cfg = _write_config(tmp_path, train_path, eval_path)
        out_csv = str(tmp_path / "runs.csv")
        code = main(["run", cfg, "--out", out_csv])
        assert code == 0
        assert os.path.exists(out_csv)
        captured = capsys.readouterr().out
        assert captured.startswith("config_id,seed,accuracy")
        code = main(["report", out_csv, "--format", "table"])
        assert code == 0
        assert "DQN-n2-d1-C2" in capsys.readouterr().out

    def test_sweep_cli(self, tmp_path, bundles_on_disk, capsys):
        train_path, eval_path = bundles_on_disk
        cfg = _write_config(tmp_path, train_path, eval_path)
        code = main(["sweep", cfg, "--qubits", "2,3", "--depth", "1"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3  # header + 2 grid rows

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("head.family=DQN\n")  # missing n_qubits
        assert main(["run", str(bad)]) == 2
        assert main(["run", str(tmp_path / "missing.cfg")]) == 2

    def test_class_mismatch_is_config_error(self, tmp_path, bundles_on_disk, capsys):
        train_path, eval_path = bundles_on_disk
        bad_cfg = _write_config(tmp_path, train_path, eval_path,
                                extra="head.num_classes=3\n")
        assert main(["run", bad_cfg]) == 2

    def test_all_points_failed_sweep_exits_nonzero(self, tmp_path, bundles_on_disk, capsys):
        train_path, eval_path = bundles_on_disk
        cfg_path = tmp_path / "ae.cfg"
        cfg_path.write_text(
            f"data.train={train_path}\ndata.eval={eval_path}\n"
            "head.family=AECQTL\nhead.n_qubits=3\nhead.depth=1\n"
            "head.num_classes=2\nhead.feature_dim=8\n"
            "optimizer.max_epochs=1\nrun.seeds=1\n")
        # qubit axis breaks the amplitude-width contract at every point
        code = main(["sweep", str(cfg_path), "--qubits", "4", "--depth", "1"])
        assert code == 1
        out = capsys.readouterr().out
        assert "failed" in out


class TestSelfVerify:
    def test_fresh_build_passes(self):
        ok, lines = self_verify()
        assert ok, "\n".join(lines)
        assert all(line.startswith("PASS") for line in lines)

    def test_injected_sign_flip_fails(self):
        from qtlbench.diffgrad import parameter_shift_gradient

        def flipped(program, params, state, obs):
            return -parameter_shift_gradient(program, params, state, obs)

        ok, lines = self_verify(grad_fn=flipped)
        assert not ok
        assert any(line.startswith("FAIL parameter-shift") for line in lines)

    def test_cli_verify(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") >= 5
