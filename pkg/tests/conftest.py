"""Shared fixtures and the ``--runslow`` switch."""

import numpy as np
import pytest

from src.core.config import reset_settings
from src.data.synthetic import synthetic_generate
from src.model.config import EmbeddingConfig, ModelConfig
from src.ssm.config import SelectiveSSMConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Isolate every test from MCST_* variables in the environment."""
    for name in ("MCST_CHECK_FINITE", "MCST_SCAN_WORKERS", "MCST_OUTPUT_ROOT", "MCST_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(n_nodes: int = 4, t: int = 3, **overrides) -> ModelConfig:
    """Small model used by unit and gradient tests."""
    fields = dict(
        n_nodes=n_nodes,
        t_in=t,
        t_out=t,
        ssm=SelectiveSSMConfig(d_model=8, expand=2, state_dim=4, conv_kernel=2),
        emb=EmbeddingConfig(
            d_feat=4, d_tod=4, d_dow=4, d_spatial=4, d_adaptive=4, interval_minutes=60, d_mamba=8
        ),
        d_ff=16,
        dropout=0.0,
    )
    fields.update(overrides)
    return ModelConfig(**fields)


@pytest.fixture
def tiny_model_config():
    return tiny_config()


@pytest.fixture(scope="session")
def synthetic_small():
    """Six sensors, three days, seed 1."""
    return synthetic_generate(n_nodes=6, days=3, seed=1)
