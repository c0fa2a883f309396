"""Tests for the dual-pathway forecaster."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.errors import DimensionError
from src.model import (
    EmbeddingConfig,
    MCSTModel,
    ModelConfig,
    combine_pathways,
    inverse_spatial,
    inverse_temporal,
    parameter_count,
    reshape_spatial,
    reshape_temporal,
)
from src.model.embeddings import assemble_embedding, project
from src.ssm.config import SelectiveSSMConfig
from src.tensor import Parameter, Tape, Tensor, ops
from src.tensor.gradcheck import grad_check_many
from tests.conftest import tiny_config


def random_inputs(rng, config, m=2):
    x = rng.standard_normal((m, config.t_in, config.n_nodes, config.c_features))
    tod = rng.integers(0, config.emb.tod_slots, size=(m, config.t_in))
    dow = rng.integers(0, 7, size=(m, config.t_in))
    return x, tod, dow


class TestReshapes:
    """Tests for the pathway reshapes."""

    @pytest.fixture
    def grid(self):
        m, t, n, d = 2, 3, 4, 5
        return Tensor(np.arange(m * t * n * d, dtype=float).reshape(m, t, n, d))

    def test_temporal_index_oracle(self, grid):
        m, t, n, _ = grid.shape
        rows = reshape_temporal(grid)
        assert rows.shape == (m * n, t, 5)
        for s in range(m):
            for k in range(t):
                for v in range(n):
                    np.testing.assert_array_equal(rows.data[s * n + v, k], grid.data[s, k, v])

    def test_spatial_index_oracle(self, grid):
        m, t, n, _ = grid.shape
        rows = reshape_spatial(grid)
        assert rows.shape == (m * t, n, 5)
        for s in range(m):
            for k in range(t):
                np.testing.assert_array_equal(rows.data[s * t + k], grid.data[s, k])

    def test_round_trips(self, grid):
        np.testing.assert_array_equal(inverse_temporal(reshape_temporal(grid), 2, 4).data, grid.data)
        np.testing.assert_array_equal(inverse_spatial(reshape_spatial(grid), 2, 3).data, grid.data)

    def test_inverse_rejects_bad_split(self, grid):
        with pytest.raises(DimensionError):
            inverse_temporal(reshape_temporal(grid), 3, 4)


class TestCombine:
    """Tests for combine_pathways."""

    def test_weighted_sum(self):
        out = combine_pathways(Tensor([2.0]), Tensor([4.0]), Tensor(0.25), Tensor(0.5))
        assert out.data.tolist() == [2.5]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            combine_pathways(Tensor(np.ones(2)), Tensor(np.ones(3)), Tensor(0.5), Tensor(0.5))


class TestModelConfig:
    """Tests for ModelConfig validation."""

    def test_defaults(self):
        config = ModelConfig(n_nodes=10)
        assert config.d_ff == 192
        assert config.ssm.dt_rank == 6

    def test_width_mismatch(self):
        with pytest.raises(ValidationError):
            ModelConfig(n_nodes=3, emb=EmbeddingConfig(d_mamba=64))

    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            ModelConfig(n_nodes=3, heads=4)


class TestForward:
    """Tests for MCSTModel.forward."""

    def test_output_shape(self, rng, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        out = model(*random_inputs(rng, tiny_model_config, m=3))
        assert out.shape == (3, 3, 4, 3)

    def test_rejects_wrong_input(self, rng, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        x, tod, dow = random_inputs(rng, tiny_model_config)
        with pytest.raises(DimensionError):
            model(x[:, :2], tod[:, :2], dow[:, :2])

    def test_same_seed_same_parameters(self, tiny_model_config):
        first = MCSTModel(tiny_model_config, seed=3).state_dict()
        second = MCSTModel(tiny_model_config, seed=3).state_dict()
        other = MCSTModel(tiny_model_config, seed=4).state_dict()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])
        assert not np.array_equal(first["emb.tod"], other["emb.tod"])

    def test_finite_at_initialization(self, rng):
        config = ModelConfig(n_nodes=12, dropout=0.0)
        model = MCSTModel(config)
        x, tod, dow = random_inputs(rng, config)
        x = np.clip(x * 5.0, -10.0, 10.0)
        assert np.all(np.isfinite(model(x, tod, dow).data))

    def test_sample_order_does_not_change_forecasts(self, rng, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        x, tod, dow = random_inputs(rng, tiny_model_config, m=4)
        order = np.array([2, 0, 3, 1])
        base = model(x, tod, dow).data
        permuted = model(x[order], tod[order], dow[order]).data
        np.testing.assert_allclose(permuted, base[order], rtol=1e-12, atol=1e-12)

    def test_sample_forecast_independent_of_batch_mates(self, rng, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        x, tod, dow = random_inputs(rng, tiny_model_config, m=3)
        base = model(x, tod, dow).data
        x[1:] += 5.0
        np.testing.assert_allclose(model(x, tod, dow).data[0], base[0], rtol=1e-12, atol=1e-12)

    def test_temporal_pathway_is_causal(self, rng, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        x, tod, dow = random_inputs(rng, tiny_model_config)
        e = project(model.emb, assemble_embedding(model.emb, Tensor(x), tod, dow)).data
        m, _, n, _ = e.shape

        def temporal(values):
            return inverse_temporal(model.temporal(reshape_temporal(Tensor(values)), False), m, n).data

        base = temporal(e)
        e[:, 2] += 1.0
        moved = temporal(e)
        np.testing.assert_array_equal(moved[:, :2], base[:, :2])
        assert not np.array_equal(moved[:, 2], base[:, 2])

    @pytest.mark.parametrize("order", ["reversed", "shuffled"])
    def test_spatial_order_variants(self, rng, order):
        config = tiny_config(spatial_order=order)
        model = MCSTModel(config, seed=2)
        assert sorted(model.node_order.tolist()) == [0, 1, 2, 3]
        np.testing.assert_array_equal(model.node_order[model.node_order_inverse], np.arange(4))
        out = model(*random_inputs(rng, config))
        assert out.shape == (2, 3, 4, 3)
        assert np.all(np.isfinite(out.data))


class TestGradients:
    """Tests for end-to-end differentiation."""

    def test_every_parameter_matches_finite_differences(self, rng):
        config = tiny_config(t=3, t_out=2)
        model = MCSTModel(config, seed=1)
        x, tod, dow = random_inputs(rng, config)
        target = rng.standard_normal((2, 2, 4, 3))
        f = lambda: ops.mse(model(x, tod, dow), target)
        errors = grad_check_many(f, list(model.named_parameters()))
        worst = max(errors, key=errors.get)
        assert errors[worst] < 1e-4, f"{worst}: {errors[worst]:.3e}"

    def test_zero_spatial_weight_blocks_spatial_gradients(self, rng, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        model.fuse.w_s.data[...] = 0.0
        x, tod, dow = random_inputs(rng, tiny_model_config)
        with Tape() as tape:
            loss = ops.mse(model(x, tod, dow), rng.standard_normal((2, 3, 4, 3)))
        tape.backward(loss)
        for name, param in model.spatial.named_parameters():
            assert np.all(param.grad == 0.0), name
        assert np.any(model.temporal.blocks[0].mamba.in_proj.weight.grad != 0.0)
        assert model.fuse.w_s.grad is not None and model.fuse.w_s.grad != 0.0


class TestParameterCount:
    """Tests for parameter_count."""

    def test_pems04_sized_model(self):
        total, breakdown = parameter_count(MCSTModel(ModelConfig(n_nodes=307)))
        assert breakdown["emb.adaptive"] == 294_720
        assert breakdown["emb.spatial"] == 4_912
        assert breakdown["model.temporal"] == breakdown["model.spatial"] == 114_912
        assert breakdown["model.fuse"] == 2
        assert breakdown["model.head"] == 41_700
        assert total == 594_558
        assert 340_000 <= total <= 690_000

    def test_matches_module_count(self, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        total, breakdown = parameter_count(model)
        assert total == model.parameter_count() == sum(breakdown.values())

    def test_parameter_names(self, tiny_model_config):
        names = [name for name, _ in MCSTModel(tiny_model_config).named_parameters()]
        assert len(names) == len(set(names))
        assert "model.fuse.w_t" in names and "model.fuse.w_s" in names
        assert "model.temporal.0.mamba.A_log" in names
        assert "emb.adaptive" in names


class TestParameterLeaves:
    """Fusion weights are scalar parameters."""

    def test_scalar_weights(self, tiny_model_config):
        model = MCSTModel(tiny_model_config)
        assert isinstance(model.fuse.w_t, Parameter)
        assert model.fuse.w_t.shape == () and model.fuse.w_t.item() == 0.5
