"""Selective state-space block configuration."""

import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SelectiveSSMConfig(BaseModel):
    """Widths of one Mamba block."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_model: int = Field(default=96, ge=1, description="Block input/output width")
    expand: int = Field(default=2, ge=1, description="Inner width multiplier")
    state_dim: int = Field(default=32, ge=1, description="State size N per inner channel")
    dt_rank: Optional[int] = Field(default=None, ge=1, description="Step-size bottleneck width")
    conv_kernel: int = Field(default=4, ge=1, description="Causal depthwise conv width")
    scan_chunk: int = Field(
        default=0, ge=0, description="Chunk length of the parallel scan; 0 runs the sequential scan"
    )

    @model_validator(mode="after")
    def _default_dt_rank(self) -> "SelectiveSSMConfig":
        if self.dt_rank is None:
            object.__setattr__(self, "dt_rank", math.ceil(self.d_model / 16))
        return self

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model
