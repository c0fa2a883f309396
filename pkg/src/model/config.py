"""Configuration of the embedding stack and the full forecaster."""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.ssm.config import SelectiveSSMConfig

MINUTES_PER_DAY = 24 * 60


class EmbeddingConfig(BaseModel):
    """Widths of the five embedding stores and of the projection target."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_feat: int = Field(default=24, ge=1, description="Feature projection width")
    d_tod: int = Field(default=24, ge=1, description="Time-of-day table width")
    d_dow: int = Field(default=24, ge=1, description="Day-of-week table width")
    d_spatial: int = Field(default=16, ge=1, description="Per-node table width")
    d_adaptive: int = Field(default=80, ge=1, description="Per-(step, node) table width")
    interval_minutes: int = Field(default=5, ge=1, description="Sampling interval of the series")
    dow_slots: int = Field(default=7, ge=1)
    d_mamba: int = Field(default=96, ge=1, description="Width after projection")

    @model_validator(mode="after")
    def _check_interval(self) -> "EmbeddingConfig":
        if MINUTES_PER_DAY % self.interval_minutes:
            raise ValueError(f"interval_minutes={self.interval_minutes} does not divide a day")
        return self

    @property
    def tod_slots(self) -> int:
        return MINUTES_PER_DAY // self.interval_minutes

    @property
    def d_concat(self) -> int:
        return self.d_feat + self.d_tod + self.d_dow + self.d_spatial + self.d_adaptive


class ModelConfig(BaseModel):
    """Shape and width settings of ``MCSTModel``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_nodes: int = Field(ge=1, description="Number of sensors")
    t_in: int = Field(default=12, ge=1, description="History steps")
    t_out: int = Field(default=12, ge=1, description="Forecast horizons")
    c_features: int = Field(default=3, ge=1, description="Channels per sensor")
    ssm: SelectiveSSMConfig = Field(default_factory=SelectiveSSMConfig)
    emb: EmbeddingConfig = Field(default_factory=EmbeddingConfig)
    blocks_per_pathway: int = Field(default=1, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    d_ff: Optional[int] = Field(default=None, ge=1, description="FFN hidden width, 2 * d_model when unset")
    spatial_order: Literal["sensor", "reversed", "shuffled"] = Field(
        default="sensor", description="Node ordering scanned by the spatial pathway"
    )

    @model_validator(mode="after")
    def _check_widths(self) -> "ModelConfig":
        if self.emb.d_mamba != self.ssm.d_model:
            raise ValueError(f"embedding width {self.emb.d_mamba} != block width {self.ssm.d_model}")
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 2 * self.ssm.d_model)
        return self
