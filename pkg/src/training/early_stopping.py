"""Patience-based early stopping on a validation metric."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EarlyStopState:
    best: float = math.inf
    counter: int = 0
    best_epoch: int = -1


def early_stop_update(
    state: EarlyStopState,
    current: float,
    epoch: int,
    patience: int = 15,
) -> Tuple[bool, bool, EarlyStopState]:
    """
    Fold one validation value into the stopping state.

    Args:
        state: State after the previous epoch
        current: Validation value of this epoch (lower is better)
        epoch: Epoch number of ``current``
        patience: Consecutive non-improving epochs that trigger a stop

    Returns:
        (stop, improved, new_state)
    """
    if current < state.best:
        return False, True, EarlyStopState(best=current, counter=0, best_epoch=epoch)
    updated = replace(state, counter=state.counter + 1)
    return updated.counter >= patience, False, updated


class EarlyStopping:
    """Tracks the best parameters seen so far alongside the stopping state."""

    def __init__(self, patience: int = 15):
        self.patience = patience
        self.state = EarlyStopState()
        self.best_params: Optional[Dict[str, np.ndarray]] = None

    def update(self, current: float, epoch: int, params: Dict[str, np.ndarray]) -> bool:
        """Record ``current``; snapshots ``params`` on improvement. Returns True when training should stop."""
        stop, improved, self.state = early_stop_update(self.state, current, epoch, self.patience)
        if improved:
            self.best_params = {name: value.copy() for name, value in params.items()}
            logger.debug(f"New best validation value {current:.6f} at epoch {epoch}")
        elif stop:
            logger.info(f"Early stopping after {self.state.counter} epochs without improvement")
        return stop
