"""Optimization settings."""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TrainConfig(BaseModel):
    """Adam, cosine annealing and early-stopping settings of one run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lr_init: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    max_epochs: int = Field(default=100, ge=1)
    patience: int = Field(default=15, ge=1)
    batch_size: int = Field(default=64, ge=1)
    lr_min: Optional[float] = Field(default=None, gt=0.0, description="Defaults to lr_init / 100")
    seed: int = Field(default=0, ge=0, description="Root of every random sub-stream")
    grad_clip: float = Field(default=5.0, ge=0.0, description="Global gradient-norm cap; 0 disables")
    prefetch: int = Field(default=2, ge=0, description="Loader queue depth; 0 loads on the training thread")
    mape_floor: float = Field(default=1e-4, ge=0.0, description="Targets below this magnitude are left out of MAPE")

    @model_validator(mode="after")
    def _default_lr_min(self) -> "TrainConfig":
        if self.lr_min is None:
            object.__setattr__(self, "lr_min", self.lr_init / 100.0)
        if self.lr_min > self.lr_init:
            raise ValueError(f"lr_min={self.lr_min} exceeds lr_init={self.lr_init}")
        return self
