"""Tests for the mcst command line and the run configuration."""

import json

import numpy as np
import pandas as pd
import pytest

from src.cli.commands import CHECKPOINT, CONFIG_ECHO, HISTORY, PREDICTIONS, REPORT, gradcheck_config
from src.cli.main import main
from src.cli.run_config import RunConfig, dump_run_config, load_run_config, parse_run_config
from src.core.errors import ConfigError
from src.data.dataset import load_dataset
from src.data.windows import split_chronological
from src.tensor import ops

TINY_RUN = """
[data]
nodes = 4
days = 6
interval_minutes = 60

[model]
t_in = 3
t_out = 3
d_model = 8
state_dim = 4
conv_kernel = 2
d_feat = 4
d_tod = 4
d_dow = 4
d_spatial = 4
d_adaptive = 4
d_ff = 16

[train]
max_epochs = 2
batch_size = 16
seed = 4

[output]
directory = {directory}
"""


def write_tiny_config(tmp_path, name="run"):
    path = tmp_path / f"{name}.ini"
    path.write_text(TINY_RUN.format(directory=tmp_path / name), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """A finished two-epoch run on hourly synthetic data."""
    root = tmp_path_factory.mktemp("trained")
    config = write_tiny_config(root)
    assert main(["train", "--config", str(config)]) == 0
    return root / "run"


class TestRunConfig:
    """Tests for parsing and echoing run configs."""

    def test_defaults(self):
        config = parse_run_config("")
        assert config == RunConfig()
        assert config.train.lr_init == 1e-3

    def test_resolved_echo_round_trips(self, tmp_path):
        config = load_run_config(write_tiny_config(tmp_path))
        echoed = parse_run_config(dump_run_config(config))
        assert echoed == config.resolved()
        assert echoed.model.dt_rank == 1
        assert echoed.train.lr_min == pytest.approx(1e-5)

    def test_blank_value_takes_default(self):
        config = parse_run_config("[data]\npath =\n[model]\nd_ff =\n")
        assert config.data.path is None and config.model.d_ff is None

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown config sections"):
            parse_run_config("[optimizer]\nlr = 1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_run_config("[train]\nlearning_rate = 0.1\n")

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            parse_run_config("[train]\npatience = 0\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.ini")

    def test_interval_that_does_not_divide_a_day(self):
        config = parse_run_config("[data]\ninterval_minutes = 7\n")
        with pytest.raises(ConfigError):
            config.to_model_config(4, config.data.interval_minutes)


class TestGenData:
    """Tests for gen-data."""

    def test_writes_three_days(self, tmp_path, capsys):
        out = tmp_path / "syn.mctd"
        assert main(["gen-data", "--nodes", "6", "--days", "3", "--seed", "1", "--out", str(out)]) == 0
        data = load_dataset(out)
        assert data.raw.shape == (864, 6, 3)
        assert "T=864" in capsys.readouterr().out

    def test_same_seed_same_bytes(self, tmp_path):
        first, second = tmp_path / "a.mctd", tmp_path / "b.mctd"
        for out in (first, second):
            main(["gen-data", "--nodes", "3", "--days", "1", "--seed", "9", "--out", str(out)])
        assert first.read_bytes() == second.read_bytes()

    def test_zero_nodes_is_usage_error(self, tmp_path):
        assert main(["gen-data", "--nodes", "0", "--out", str(tmp_path / "x.mctd")]) == 2

    def test_bad_start_weekday(self, tmp_path):
        assert main(["gen-data", "--start-dow", "8", "--out", str(tmp_path / "x.mctd")]) == 2

    def test_unknown_command(self):
        assert main(["fly"]) == 2


class TestTrainAndEval:
    """Tests for train, eval and predict on a finished run."""

    def test_run_directory_contents(self, trained_run):
        for name in (CONFIG_ECHO, CHECKPOINT, HISTORY, REPORT):
            assert (trained_run / name).is_file(), name
        report = json.loads((trained_run / REPORT).read_text())
        assert report["split"] == "test"
        assert set(report["baselines"]) == {"inertia", "mean"}
        assert report["epochs_run"] == 2
        assert report["model"]["mae"] <= report["model"]["rmse"]
        assert len((trained_run / HISTORY).read_text().splitlines()) == 2

    def test_echoed_config_is_resolved(self, trained_run):
        echoed = load_run_config(trained_run / CONFIG_ECHO)
        assert echoed.model.d_ff == 16 and echoed.model.dt_rank == 1
        assert echoed.train.max_epochs == 2

    def test_identical_runs_write_identical_reports(self, trained_run, tmp_path):
        config = write_tiny_config(tmp_path, name="again")
        assert main(["train", "--config", str(config)]) == 0
        assert (tmp_path / "again" / REPORT).read_bytes() == (trained_run / REPORT).read_bytes()

    def test_eval_reproduces_training_report(self, trained_run, tmp_path):
        out = tmp_path / "eval.json"
        assert main(["eval", "--checkpoint", str(trained_run / CHECKPOINT), "--out", str(out)]) == 0
        evaluated = json.loads(out.read_text())
        trained = json.loads((trained_run / REPORT).read_text())
        assert evaluated["model"] == trained["model"]
        assert evaluated["baselines"] == trained["baselines"]

    def test_eval_on_another_split(self, trained_run):
        assert main(["eval", "--checkpoint", str(trained_run / CHECKPOINT), "--split", "val"]) == 0
        report = json.loads((trained_run / "report_val.json").read_text())
        assert report["split"] == "val"

    def test_eval_rejects_node_mismatch(self, trained_run, tmp_path, capsys):
        other = tmp_path / "five.mctd"
        main(["gen-data", "--nodes", "5", "--days", "6", "--interval", "60", "--out", str(other)])
        code = main(["eval", "--checkpoint", str(trained_run / CHECKPOINT), "--data", str(other)])
        assert code == 2
        err = capsys.readouterr().err
        assert "4 sensors" in err and "5" in err

    def test_eval_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "nope.best")]) == 2

    def test_predict_writes_one_row_per_horizon_and_sensor(self, trained_run, tmp_path):
        out = tmp_path / "forecast.csv"
        assert main(["predict", "--checkpoint", str(trained_run / CHECKPOINT), "--at", "50", "--out", str(out)]) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["horizon", "node", "flow", "speed", "occupancy", "flagged"]
        assert len(frame) == 3 * 4
        assert sorted(frame["horizon"].unique().tolist()) == [1, 2, 3]
        assert frame["node"].iloc[0] == "S000"

    def test_predict_matches_eval_predictions(self, trained_run, tmp_path):
        report = tmp_path / "eval.json"
        assert main([
            "eval", "--checkpoint", str(trained_run / CHECKPOINT), "--out", str(report), "--save-predictions",
        ]) == 0
        stored = np.load(tmp_path / PREDICTIONS)
        test_start = split_chronological(6 * 24).test[0]
        k = 5
        out = tmp_path / "forecast.csv"
        at = test_start + k + 3
        assert main(["predict", "--checkpoint", str(trained_run / CHECKPOINT), "--at", str(at), "--out", str(out)]) == 0
        frame = pd.read_csv(out).sort_values(["horizon", "node"])
        values = frame[["flow", "speed", "occupancy"]].to_numpy().reshape(3, 4, 3)
        np.testing.assert_allclose(values, stored[k], rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("at", ["2", "1000"])
    def test_predict_rejects_out_of_range_index(self, trained_run, at):
        assert main(["predict", "--checkpoint", str(trained_run / CHECKPOINT), "--at", at]) == 2


class TestBenchScan:
    """Tests for bench-scan."""

    def test_csv_rows(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = main([
            "bench-scan", "--len", "128", "256", "--dinner", "4", "--state", "4", "--chunks", "1", "16",
            "--out", str(out),
        ])
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["length", "d_inner", "state_dim", "chunk", "mode", "wall_ns", "flops", "max_abs_diff"]
        assert len(frame) == 6
        assert (frame["max_abs_diff"] < 1e-10).all()
        seq = frame[frame["mode"] == "seq"]["flops"].tolist()
        assert 1.9 <= seq[1] / seq[0] <= 2.1

    def test_stdout(self, capsys):
        assert main(["bench-scan", "--len", "16", "--chunks", "4"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("length,d_inner")
        assert len(lines) == 3


class TestGradcheck:
    """Tests for gradcheck."""

    def test_tiny_model_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "model.head.linear.w" in out
        assert "FAIL" not in out

    def test_wrong_derivative_is_caught(self, mocker):
        forward, _ = ops.UNARY["silu"]
        mocker.patch.dict(ops.UNARY, {"silu": (forward, lambda x, y: np.ones_like(x))})
        assert main(["gradcheck"]) == 1

    def test_tiny_config_is_small(self):
        config = gradcheck_config()
        assert config.data.nodes == 4 and config.model.d_model == 8

    def test_oversized_model_is_rejected(self, tmp_path):
        path = tmp_path / "big.ini"
        path.write_text("[data]\nnodes = 10\n", encoding="utf-8")
        assert main(["gradcheck", "--config", str(path)]) == 2
