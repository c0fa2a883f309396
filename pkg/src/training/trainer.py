"""Training loop: shuffled Adam epochs on MSE, cosine schedule, early stopping on validation MAE."""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel

from src.core.errors import DivergenceError, NonFiniteError
from src.core.seeding import stream_rng
from src.data.normalize import Normalizer
from src.data.windows import BackgroundLoader, WindowSet
from src.model.mcst import MCSTModel
from src.tensor import ops
from src.tensor.tensor import Tape, Tensor
from src.training.config import TrainConfig
from src.training.early_stopping import EarlyStopping
from src.training.metrics import evaluate
from src.training.optim import Adam, clip_grad_norm, cosine_lr

logger = logging.getLogger(__name__)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean squared error over every element, in normalized units."""
    return ops.mse(pred, target)


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float
    val_mape: float
    lr: float
    seconds: float


@dataclass
class TrainResult:
    best_state: Dict[str, np.ndarray]
    best_epoch: int
    best_val_mae: float
    history: List[EpochRecord] = field(default_factory=list)


class Trainer:
    """
    Optimizes an ``MCSTModel`` on one split and early-stops on another.

    Args:
        model: Model to train in place
        config: Optimization settings
        train_windows: Training windows (normalized)
        val_windows: Validation windows (normalized)
        normalizer: Used to denormalize validation forecasts
        history_path: Optional JSON-lines file that receives one record per epoch
    """

    def __init__(
        self,
        model: MCSTModel,
        config: TrainConfig,
        train_windows: WindowSet,
        val_windows: WindowSet,
        normalizer: Normalizer,
        history_path: Optional[Union[str, Path]] = None,
    ):
        self.model = model
        self.config = config
        self.train_windows = train_windows
        self.val_windows = val_windows
        self.normalizer = normalizer
        self.history_path = Path(history_path) if history_path else None
        self.optimizer = Adam(model.named_parameters(), betas=(config.beta1, config.beta2), eps=config.adam_eps)
        self.shuffle_rng = stream_rng(config.seed, "shuffle")
        self.stopper = EarlyStopping(config.patience)
        self.history: List[EpochRecord] = []

    def train_epoch(self, epoch: int, lr: float) -> float:
        """Run one shuffled pass; returns the mean batch loss."""
        cfg = self.config
        batches = self.train_windows.iter_batches(cfg.batch_size, shuffle=True, rng=self.shuffle_rng)
        losses: List[float] = []
        clipped = 0
        for step, batch in enumerate(BackgroundLoader(batches, cfg.prefetch)):
            self.optimizer.zero_grad()
            try:
                with Tape() as tape:
                    pred = self.model.forward(batch.x, batch.tod_idx, batch.dow_idx, training=True)
                    loss = mse_loss(pred, batch.y)
            except NonFiniteError as exc:
                logger.error(f"Non-finite forward pass at epoch {epoch}, step {step}: {exc}")
                raise DivergenceError(f"non-finite forward pass: {exc}", epoch, step) from exc
            value = loss.item()
            if not math.isfinite(value):
                logger.error(f"Loss became {value} at epoch {epoch}, step {step}")
                raise DivergenceError(f"loss is {value}", epoch, step)
            tape.backward(loss)
            norm = clip_grad_norm(self.optimizer.params, cfg.grad_clip)
            if not math.isfinite(norm):
                logger.error(f"Gradient norm became {norm} at epoch {epoch}, step {step}")
                raise DivergenceError(f"gradient norm is {norm}", epoch, step)
            if cfg.grad_clip > 0 and norm > cfg.grad_clip:
                clipped += 1
            self.optimizer.step(lr)
            losses.append(value)
        if clipped:
            logger.warning(f"Gradient clipping engaged on {clipped}/{len(losses)} steps of epoch {epoch}")
        return float(np.mean(losses))

    def _append_history(self, record: EpochRecord) -> None:
        self.history.append(record)
        if self.history_path is not None:
            self.history_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.history_path, "a", encoding="utf-8") as f:
                f.write(record.model_dump_json() + "\n")

    def fit(self) -> TrainResult:
        """
        Train until ``max_epochs`` or early stopping, then restore the best parameters.

        Returns:
            Best parameters, their epoch and validation MAE, and the per-epoch history
        """
        cfg = self.config
        if self.history_path is not None and self.history_path.exists():
            self.history_path.unlink()
        logger.info(
            f"Training {self.model.parameter_count()} parameters on {len(self.train_windows)} windows "
            f"for up to {cfg.max_epochs} epochs"
        )
        for epoch in range(cfg.max_epochs):
            started = time.perf_counter()
            lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr_init, cfg.lr_min)
            train_loss = self.train_epoch(epoch, lr)
            report = evaluate(
                self.model,
                self.val_windows.iter_batches(cfg.batch_size),
                self.normalizer,
                cfg.mape_floor,
            )
            record = EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_mae=report.mae,
                val_rmse=report.rmse,
                val_mape=report.mape,
                lr=lr,
                seconds=time.perf_counter() - started,
            )
            self._append_history(record)
            logger.info(
                f"Epoch {epoch}: train_loss={train_loss:.5f} val_mae={report.mae:.4f} "
                f"val_rmse={report.rmse:.4f} lr={lr:.2e}"
            )
            if self.stopper.update(report.mae, epoch, self.model.state_dict()):
                break

        best = self.stopper.best_params
        if best is None:
            raise DivergenceError("validation MAE never became finite", epoch, 0)
        self.model.load_state_dict(best)
        state = self.stopper.state
        logger.info(f"Restored best parameters from epoch {state.best_epoch} (val_mae={state.best:.4f})")
        return TrainResult(best, state.best_epoch, state.best, list(self.history))


def train(
    model: MCSTModel,
    config: TrainConfig,
    train_windows: WindowSet,
    val_windows: WindowSet,
    normalizer: Normalizer,
    history_path: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """Train ``model`` in place and return its best checkpoint and history."""
    return Trainer(model, config, train_windows, val_windows, normalizer, history_path).fit()
