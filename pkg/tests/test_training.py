"""Tests for optimization, early stopping, metrics, baselines and the training loop."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from src.core.errors import ConfigError, ContractError, DimensionError, DivergenceError
from src.data.pipeline import prepare_data
from src.data.synthetic import synthetic_generate
from src.model import EmbeddingConfig, MCSTModel, ModelConfig
from src.tensor import Parameter, Tape, Tensor
from src.training import (
    Adam,
    AdamState,
    EarlyStopping,
    EarlyStopState,
    HistoricalBaseline,
    TrainConfig,
    adam_step,
    clip_grad_norm,
    compute_metrics,
    cosine_lr,
    early_stop_update,
    evaluate,
    historical_baseline,
    mse_loss,
    train,
)
from tests.conftest import tiny_config


class TestAdam:
    """Tests for adam_step and Adam."""

    def test_first_step_moves_by_lr(self):
        theta = Parameter(np.array([0.0]))
        theta.grad = np.array([1.0])
        adam_step([("theta", theta)], AdamState(), lr=0.001)
        assert theta.data[0] == pytest.approx(-0.001, abs=1e-6)

    def test_zero_gradient_leaves_parameters_unchanged(self, rng):
        theta = Parameter(rng.standard_normal((3, 4)))
        before = theta.data.copy()
        theta.grad = np.zeros((3, 4))
        adam_step([("theta", theta)], AdamState(), lr=0.1)
        np.testing.assert_array_equal(theta.data, before)

    def test_missing_gradient(self):
        with pytest.raises(ContractError, match="theta"):
            adam_step([("theta", Parameter([1.0]))], AdamState(), lr=0.1)

    def test_state_tracks_steps_by_name(self):
        theta = Parameter([1.0, 2.0])
        optimizer = Adam([("theta", theta)])
        for _ in range(3):
            theta.grad = np.array([0.5, -0.5])
            optimizer.step(0.01)
        assert optimizer.state.t == 3
        assert set(optimizer.state.m) == {"theta"}
        optimizer.zero_grad()
        assert theta.grad is None

    def test_minimizes_a_quadratic(self):
        theta = Parameter([3.0, -2.0])
        optimizer = Adam([("theta", theta)])
        for _ in range(500):
            optimizer.zero_grad()
            with Tape() as tape:
                loss = (theta * theta).sum()
            tape.backward(loss)
            optimizer.step(0.05)
        assert np.all(np.abs(theta.data) < 0.1)


class TestSchedule:
    """Tests for cosine_lr and clip_grad_norm."""

    def test_endpoints(self):
        assert cosine_lr(0, 100, 1e-3, 1e-5) == pytest.approx(1e-3, rel=1e-12)
        assert cosine_lr(100, 100, 1e-3, 1e-5) == 1e-5
        assert cosine_lr(50, 100, 1e-3, 1e-5) == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)

    def test_monotone_decreasing(self):
        values = [cosine_lr(e, 20, 1e-3, 1e-5) for e in range(21)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_past_the_end_clamps(self):
        assert cosine_lr(150, 100, 1e-3, 1e-5) == 1e-5

    def test_clip_rescales_to_cap(self):
        a, b = Parameter([0.0, 0.0]), Parameter([0.0])
        a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
        assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
        total = np.sqrt(np.sum(a.grad ** 2) + np.sum(b.grad ** 2))
        assert total == pytest.approx(1.0, rel=1e-9)

    def test_clip_below_cap_is_noop(self):
        a = Parameter([0.0])
        a.grad = np.array([0.5])
        clip_grad_norm([a], 1.0)
        assert a.grad.tolist() == [0.5]


class TestEarlyStopping:
    """Tests for early_stop_update and EarlyStopping."""

    def test_improvement_resets_counter(self):
        state = EarlyStopState(best=1.0, counter=4, best_epoch=2)
        stop, improved, state = early_stop_update(state, 0.5, epoch=7, patience=5)
        assert (stop, improved) == (False, True)
        assert state == EarlyStopState(best=0.5, counter=0, best_epoch=7)

    def test_stops_after_patience(self):
        state = EarlyStopState(best=1.0)
        for epoch in range(2):
            stop, improved, state = early_stop_update(state, 1.0, epoch, patience=3)
            assert not stop and not improved
        stop, _, state = early_stop_update(state, 2.0, 2, patience=3)
        assert stop and state.counter == 3

    def test_nan_never_improves(self):
        stop, improved, _ = early_stop_update(EarlyStopState(), float("nan"), 0, patience=1)
        assert stop and not improved

    def test_snapshots_best_parameters(self):
        stopper = EarlyStopping(patience=2)
        params = {"w": np.array([1.0])}
        stopper.update(0.5, 0, params)
        params["w"][0] = 9.0
        stopper.update(0.7, 1, params)
        assert stopper.best_params["w"].tolist() == [1.0]


class TestMetrics:
    """Tests for compute_metrics and evaluate."""

    def test_hand_computed_oracle(self):
        report = compute_metrics(np.array([2.0, 4.0]), np.array([1.0, 5.0]))
        assert report.mae == 1.0
        assert report.rmse == 1.0
        assert report.mape == pytest.approx(37.5, abs=1e-12)
        assert report.count == 2

    def test_perfect_predictor_scores_zero(self, rng):
        y = rng.uniform(1.0, 5.0, size=(4, 12, 3, 3))
        report = compute_metrics(y, y.copy())
        assert (report.mae, report.rmse, report.mape) == (0.0, 0.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=50))
    def test_mae_never_exceeds_rmse(self, seed, size):
        rng = np.random.default_rng(seed)
        report = compute_metrics(rng.standard_normal(size) * 10, rng.standard_normal(size) * 10)
        assert 0.0 <= report.mae <= report.rmse + 1e-12
        assert report.mape >= 0.0

    def test_near_zero_targets_are_excluded_from_mape(self):
        report = compute_metrics(np.array([0.0, 2.0]), np.array([1.0, 3.0]))
        assert report.mape == pytest.approx(50.0)
        assert report.mape_excluded == 0.5

    def test_breakdowns(self, rng):
        y = rng.uniform(1.0, 5.0, size=(5, 12, 2, 3))
        pred = y + 0.5
        report = compute_metrics(y, pred)
        assert set(report.per_channel) == {"flow", "speed", "occupancy"}
        assert len(report.per_horizon) == 12
        assert set(report.horizon_summary) == {"h3", "h6", "h12"}
        assert report.horizon_summary["h3"].mae == pytest.approx(0.5)

    def test_order_invariance(self, rng):
        y, pred = rng.standard_normal((20, 12, 2, 3)), rng.standard_normal((20, 12, 2, 3))
        order = rng.permutation(20)
        a, b = compute_metrics(y, pred), compute_metrics(y[order], pred[order])
        assert a.mae == pytest.approx(b.mae, rel=1e-12)
        assert a.rmse == pytest.approx(b.rmse, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            compute_metrics(np.zeros(3), np.zeros(4))

    def test_empty(self):
        with pytest.raises(ConfigError):
            compute_metrics(np.zeros(0), np.zeros(0))

    def test_identity_forecaster_scores_zero(self, synthetic_small):
        prepared = prepare_data(synthetic_small)

        class Oracle:
            def predict(self, batch):
                return batch.y

        report = evaluate(Oracle(), prepared.windows["test"].iter_batches(64), prepared.normalizer)
        assert report.mae < 1e-9 and report.rmse < 1e-9


class TestBaseline:
    """Tests for the Historical baselines."""

    def test_inertia_repeats_last_step(self, rng):
        x = rng.standard_normal((2, 12, 3, 3))
        out = historical_baseline(x, "inertia")
        assert out.shape == (2, 12, 3, 3)
        for h in range(12):
            np.testing.assert_array_equal(out[:, h], x[:, -1])

    def test_mean_mode(self, rng):
        x = rng.standard_normal((2, 12, 3, 3))
        out = historical_baseline(x, "mean", t_out=4)
        assert out.shape == (2, 4, 3, 3)
        np.testing.assert_allclose(out[:, 2], x.mean(axis=1), atol=1e-15)

    def test_inertia_error_on_a_ramp_grows_linearly(self):
        slope, t_in, t_out = 0.5, 12, 12
        starts = np.arange(20)[:, None, None, None]
        steps_in = np.arange(t_in)[None, :, None, None]
        steps_out = np.arange(t_in, t_in + t_out)[None, :, None, None]
        x = np.broadcast_to(slope * (starts + steps_in) + 3.0, (20, t_in, 4, 3))
        y = np.broadcast_to(slope * (starts + steps_out) + 3.0, (20, t_out, 4, 3))
        report = compute_metrics(y, historical_baseline(x, "inertia", t_out))
        for h, triple in enumerate(report.per_horizon, start=1):
            assert triple.mae == pytest.approx(slope * h, abs=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            historical_baseline(np.zeros((1, 12, 1, 3)), "seasonal")
        with pytest.raises(ConfigError):
            HistoricalBaseline("seasonal")

    def test_constant_series_is_forecast_exactly(self, synthetic_small):
        prepared = prepare_data(synthetic_small)
        batch = prepared.windows["val"].batch([0])
        constant = np.broadcast_to(batch.x[:, -1:], batch.x.shape)
        np.testing.assert_allclose(historical_baseline(constant, "mean")[:, 0], batch.x[:, -1], atol=1e-12)


class TestTrainConfig:
    """Tests for TrainConfig validation."""

    def test_defaults(self):
        config = TrainConfig()
        assert config.lr_min == pytest.approx(1e-5)
        assert (config.beta1, config.beta2, config.patience, config.batch_size) == (0.9, 0.999, 15, 64)

    def test_lr_min_above_lr_init(self):
        with pytest.raises(ValidationError):
            TrainConfig(lr_init=1e-3, lr_min=1e-2)

    def test_patience_must_be_positive(self):
        with pytest.raises(ValidationError):
            TrainConfig(patience=0)


@pytest.fixture(scope="module")
def hourly_data():
    return prepare_data(synthetic_generate(n_nodes=4, days=6, seed=3, interval_minutes=60), t_in=3, t_out=3)


def run_training(data, tmp_path=None, seed=0, epochs=2):
    model = MCSTModel(tiny_config(dropout=0.1), seed=seed)
    config = TrainConfig(max_epochs=epochs, batch_size=16, seed=seed, prefetch=1)
    history = tmp_path / "history.jsonl" if tmp_path else None
    result = train(model, config, data.windows["train"], data.windows["val"], data.normalizer, history)
    return model, result


class TestTrainer:
    """Tests for the training loop."""

    def test_mse_loss(self):
        assert mse_loss(Tensor([1.0, 3.0]), np.array([0.0, 0.0])).item() == 5.0

    def test_smoke_run_writes_history(self, hourly_data, tmp_path):
        _, result = run_training(hourly_data, tmp_path)
        lines = (tmp_path / "history.jsonl").read_text().splitlines()
        assert len(lines) == len(result.history) == 2
        record = json.loads(lines[0])
        assert set(record) == {"epoch", "train_loss", "val_mae", "val_rmse", "val_mape", "lr", "seconds"}
        assert np.isfinite(result.best_val_mae)
        assert result.best_epoch in (0, 1)

    def test_restores_best_state(self, hourly_data):
        model, result = run_training(hourly_data)
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, result.best_state[name])

    def test_training_reduces_loss(self, hourly_data):
        _, result = run_training(hourly_data, epochs=4)
        assert result.history[-1].train_loss < result.history[0].train_loss

    def test_loss_falls_in_most_epochs(self, synthetic_small):
        prepared = prepare_data(synthetic_small)
        config = tiny_config(n_nodes=6, t=12, emb=EmbeddingConfig(
            d_feat=4, d_tod=4, d_dow=4, d_spatial=4, d_adaptive=4, interval_minutes=5, d_mamba=8
        ))
        model = MCSTModel(config, seed=2)
        result = train(
            model, TrainConfig(max_epochs=5, patience=5, batch_size=16, seed=2),
            prepared.windows["train"], prepared.windows["val"], prepared.normalizer,
        )
        losses = [record.train_loss for record in result.history]
        assert len(losses) == 5
        assert sum(later < earlier for earlier, later in zip(losses, losses[1:])) >= 3
        assert losses[-1] < losses[0]

    def test_same_seed_is_bitwise_reproducible(self, hourly_data):
        first_model, first = run_training(hourly_data, seed=5)
        second_model, second = run_training(hourly_data, seed=5)
        assert [r.train_loss for r in first.history] == [r.train_loss for r in second.history]
        assert [r.val_mae for r in first.history] == [r.val_mae for r in second.history]
        for name, value in first_model.state_dict().items():
            np.testing.assert_array_equal(value, second_model.state_dict()[name])

    def test_non_finite_loss_raises_divergence(self, hourly_data, mocker):
        mocker.patch("src.training.trainer.mse_loss", return_value=Tensor(np.array(np.nan)))
        with pytest.raises(DivergenceError, match=r"epoch 0, step 0"):
            run_training(hourly_data)


@pytest.mark.slow
class TestDeskScaleLearning:
    """Thirty epochs on the small synthetic set beat both Historical baselines."""

    def test_model_beats_baselines(self, synthetic_small):
        prepared = prepare_data(synthetic_small)
        model = MCSTModel(ModelConfig(n_nodes=6), seed=1)
        config = TrainConfig(max_epochs=30, seed=1)
        train(model, config, prepared.windows["train"], prepared.windows["val"], prepared.normalizer)

        def score(forecaster):
            return evaluate(forecaster, prepared.windows["test"].iter_batches(64), prepared.normalizer).mae

        model_mae = score(model)
        assert model_mae <= 0.8 * score(HistoricalBaseline("inertia"))
        assert model_mae <= 0.9 * score(HistoricalBaseline("mean"))
