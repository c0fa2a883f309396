"""Implementations of the ``mcst`` subcommands.

Each command takes the parsed argparse namespace, writes its artifacts and
returns an exit code; failures surface as ``MCSTError`` subclasses that the
entry point maps to exit codes.
"""

import json
import logging
from argparse import Namespace
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from src.cli.run_config import DataSection, ModelSection, RunConfig, load_run_config, write_run_config
from src.core.config import get_settings
from src.core.errors import CheckFailure, ConfigError
from src.core.seeding import stream_rng
from src.data.dataset import CHANNELS, TrafficTensorFile, load_dataset, save_dataset
from src.data.pipeline import PreparedData, prepare_data
from src.data.synthetic import synthetic_generate
from src.model.embeddings import time_indices
from src.model.mcst import MCSTModel, parameter_count
from src.ssm.bench import BENCH_COLUMNS, bench_scan
from src.tensor import ops
from src.tensor.checkpoint import load_checkpoint, save_checkpoint
from src.tensor.gradcheck import grad_check_many
from src.training.baseline import BASELINE_MODES, HistoricalBaseline
from src.training.metrics import MetricsReport, collect_predictions, compute_metrics
from src.training.trainer import mse_loss, train

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.resolved"
CHECKPOINT = "checkpoint.best"
HISTORY = "history.jsonl"
REPORT = "report.json"
PREDICTIONS = "predictions.npy"

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_MAX_PARAMS = 50_000


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def run_directory(config: RunConfig) -> Path:
    directory = Path(config.output.directory)
    if not directory.is_absolute():
        directory = Path(get_settings().output_root) / directory
    return directory


def resolve_dataset(config: RunConfig, override: Optional[str] = None) -> TrafficTensorFile:
    """Load the configured dataset file, or generate the synthetic one from the run seed."""
    path = override or config.data.path
    if path:
        return load_dataset(path, min_steps=config.model.t_in + config.model.t_out)
    d = config.data
    return synthetic_generate(d.nodes, d.days, config.train.seed, d.interval_minutes, d.start_slot, d.start_dow)


def build_model(config: RunConfig, dataset: TrafficTensorFile) -> MCSTModel:
    model_config = config.to_model_config(dataset.n_nodes, dataset.interval_minutes)
    return MCSTModel(model_config, seed=config.train.seed)


def score_split(
    model: MCSTModel,
    prepared: PreparedData,
    split: str,
    config: RunConfig,
) -> Tuple[Dict[str, object], np.ndarray]:
    """Score the model and both Historical baselines on one split; returns (report dict, predictions)."""
    windows = prepared.windows[split]
    batch_size = config.train.batch_size
    floor = config.train.mape_floor
    pred, true = collect_predictions(model, windows.iter_batches(batch_size), prepared.normalizer)
    report = compute_metrics(true, pred, floor)

    baselines: Dict[str, MetricsReport] = {}
    for mode in BASELINE_MODES:
        forecaster = HistoricalBaseline(mode, config.model.t_out)
        b_pred, b_true = collect_predictions(forecaster, windows.iter_batches(batch_size), prepared.normalizer)
        baselines[mode] = compute_metrics(b_true, b_pred, floor)

    improvement = {
        mode: (1.0 - report.mae / b.mae) if b.mae > 0 else 0.0 for mode, b in baselines.items()
    }
    document = {
        "split": split,
        "range": list(prepared.splits.get(split)),
        "windows": len(windows),
        "model": report.model_dump(),
        "baselines": {mode: b.model_dump() for mode, b in baselines.items()},
        "mae_improvement": improvement,
    }
    return document, pred


def write_json(document: Dict[str, object], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    return path


def load_run_for_checkpoint(args: Namespace) -> Tuple[RunConfig, MCSTModel, PreparedData]:
    """Rebuild the model of a finished run and prepare the data it is applied to."""
    checkpoint = Path(args.checkpoint)
    config_path = Path(args.config) if args.config else checkpoint.parent / CONFIG_ECHO
    config = load_run_config(config_path)
    state = load_checkpoint(checkpoint)
    if "emb.spatial" not in state:
        raise ConfigError(f"{checkpoint} has no emb.spatial table")
    trained_nodes = state["emb.spatial"].shape[0]

    dataset = resolve_dataset(config, args.data)
    if dataset.n_nodes != trained_nodes:
        raise ConfigError(f"checkpoint was trained on {trained_nodes} sensors but the data has {dataset.n_nodes}")
    model = build_model(config, dataset)
    model.load_state_dict(state)
    prepared = prepare_data(dataset, config.model.t_in, config.model.t_out)
    return config, model, prepared


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args: Namespace) -> int:
    """Write a synthetic dataset and print its size and channel ranges."""
    dataset = synthetic_generate(args.nodes, args.days, args.seed, args.interval, args.start_slot, args.start_dow)
    save_dataset(dataset, args.out)
    flat = dataset.raw.reshape(-1, len(CHANNELS))
    summary = pd.DataFrame({
        "channel": list(CHANNELS),
        "min": flat.min(axis=0),
        "max": flat.max(axis=0),
        "mean": flat.mean(axis=0),
    })
    print(f"T={dataset.n_steps} n={dataset.n_nodes} interval={dataset.interval_minutes}min -> {args.out}")
    print(summary.to_string(index=False))
    return 0


def cmd_train(args: Namespace) -> int:
    """Train from a run config and write the run directory."""
    config = load_run_config(args.config) if args.config else RunConfig()
    if args.out:
        config = config.model_copy(update={"output": config.output.model_copy(update={"directory": args.out})})
    out_dir = run_directory(config)
    write_run_config(config, out_dir / CONFIG_ECHO)

    dataset = resolve_dataset(config)
    prepared = prepare_data(dataset, config.model.t_in, config.model.t_out)
    model = build_model(config, dataset)
    result = train(
        model,
        config.train,
        prepared.windows["train"],
        prepared.windows["val"],
        prepared.normalizer,
        history_path=out_dir / HISTORY,
    )
    save_checkpoint(result.best_state, out_dir / CHECKPOINT)

    document, pred = score_split(model, prepared, "test", config)
    total, breakdown = parameter_count(model)
    document.update({
        "best_epoch": result.best_epoch,
        "best_val_mae": result.best_val_mae,
        "epochs_run": len(result.history),
        "parameters": total,
        "parameter_breakdown": breakdown,
    })
    write_json(document, out_dir / REPORT)
    if config.output.write_predictions:
        np.save(out_dir / PREDICTIONS, pred)
    model_mae = document["model"]["mae"]
    print(f"best epoch {result.best_epoch}; test MAE {model_mae:.4f}; run directory {out_dir}")
    return 0


def cmd_eval(args: Namespace) -> int:
    """Score a checkpoint and the Historical baselines on one split."""
    config, model, prepared = load_run_for_checkpoint(args)
    document, pred = score_split(model, prepared, args.split, config)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"report_{args.split}.json"
    write_json(document, out)
    if args.save_predictions:
        np.save(out.parent / PREDICTIONS, pred)
    rows = [("model", document["model"])] + list(document["baselines"].items())
    table = pd.DataFrame([
        {"forecaster": name, "mae": r["mae"], "rmse": r["rmse"], "mape": r["mape"]} for name, r in rows
    ])
    print(table.to_string(index=False))
    return 0


def cmd_predict(args: Namespace) -> int:
    """Forecast the ``t_out`` steps that follow step ``at - 1`` and emit them as CSV."""
    config, model, prepared = load_run_for_checkpoint(args)
    t_in, t_out = config.model.t_in, config.model.t_out
    dataset = prepared.dataset
    at = args.at
    if not t_in <= at <= dataset.n_steps:
        raise ConfigError(f"--at {at} must lie in [{t_in}, {dataset.n_steps}] to admit a {t_in}-step history")

    absolute_start = at - t_in
    tod, dow = time_indices(dataset.start_slot, dataset.start_dow, dataset.n_steps, slots=dataset.slots_per_day)
    history = prepared.normalized[absolute_start:at][None]
    normalized = model.forward(history, tod[absolute_start:at][None], dow[absolute_start:at][None]).data[0]
    forecast = prepared.normalizer.invert(normalized)

    occupancy = CHANNELS.index("occupancy")
    mean, std = prepared.normalizer.mean[occupancy], prepared.normalizer.std[occupancy]
    low, high = mean - 3.0 * std, mean + 3.0 * std
    rows = []
    for h in range(t_out):
        for v, sensor in enumerate(dataset.sensor_ids):
            flow, speed, occ = forecast[h, v]
            rows.append({
                "horizon": h + 1,
                "node": sensor,
                "flow": flow,
                "speed": speed,
                "occupancy": occ,
                "flagged": bool(occ < low or occ > high),
            })
    frame = pd.DataFrame(rows, columns=["horizon", "node", "flow", "speed", "occupancy", "flagged"])
    flagged = int(frame["flagged"].sum())
    if flagged:
        logger.warning(f"{flagged} occupancy forecasts fall outside [{low:.4f}, {high:.4f}]")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False)
        logger.info(f"Wrote {len(frame)} forecast rows to {args.out}")
    else:
        print(frame.to_csv(index=False), end="")
    return 0


def cmd_bench_scan(args: Namespace) -> int:
    """Time the sequential and chunked scans and report flops and agreement."""
    rows = bench_scan(args.len, args.dinner, args.state, args.chunks, args.seed)
    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False)
    else:
        print(frame.to_csv(index=False), end="")
    return 0


def gradcheck_config() -> RunConfig:
    """Tiny default model for finite-difference checks."""
    return RunConfig(
        data=DataSection(nodes=4, interval_minutes=60),
        model=ModelSection(
            t_in=3, t_out=3, d_model=8, expand=2, state_dim=4, conv_kernel=2,
            d_feat=4, d_tod=4, d_dow=4, d_spatial=4, d_adaptive=4, d_ff=16,
        ),
    )


def model_gradient_errors(config: RunConfig, batch_size: int = 2, eps: float = 1e-5) -> Dict[str, float]:
    """
    Max relative error of every parameter's tape gradient of the forward+MSE loss.

    Runs on random normalized inputs in eval mode (dropout is the identity).
    """
    d = config.data
    model_config = config.to_model_config(d.nodes, d.interval_minutes)
    model = MCSTModel(model_config, seed=config.train.seed)
    total = model.parameter_count()
    if total > GRADCHECK_MAX_PARAMS:
        raise ConfigError(f"gradcheck model has {total} parameters, cap is {GRADCHECK_MAX_PARAMS}")

    rng = stream_rng(config.train.seed, "data")
    shape = (batch_size, model_config.t_in, model_config.n_nodes, model_config.c_features)
    x = rng.standard_normal(shape)
    y = rng.standard_normal((batch_size, model_config.t_out, model_config.n_nodes, model_config.c_features))
    tod = rng.integers(0, model_config.emb.tod_slots, size=(batch_size, model_config.t_in))
    dow = rng.integers(0, model_config.emb.dow_slots, size=(batch_size, model_config.t_in))

    def loss():
        return mse_loss(model.forward(x, tod, dow, training=False), ops.as_tensor(y))

    return grad_check_many(loss, list(model.named_parameters()), eps)


def cmd_gradcheck(args: Namespace) -> int:
    """Finite-difference check of every parameter group; exit 1 if any exceeds the tolerance."""
    config = load_run_config(args.config) if args.config else gradcheck_config()
    errors = model_gradient_errors(config, eps=args.eps)
    frame = pd.DataFrame(
        [{"parameter": name, "max_rel_err": err, "status": "pass" if err < args.tol else "FAIL"}
         for name, err in errors.items()],
        columns=["parameter", "max_rel_err", "status"],
    )
    print(frame.to_string(index=False))
    failed = frame.loc[frame["status"] == "FAIL", "parameter"].tolist()
    if failed:
        raise CheckFailure(f"{len(failed)} parameter groups exceed rel err {args.tol}: {failed}")
    logger.info(f"All {len(frame)} parameter groups pass at rel err < {args.tol}")
    return 0
