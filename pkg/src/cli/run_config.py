"""Sectioned INI run configuration: ``[data]``, ``[model]``, ``[train]`` and ``[output]``.

Unknown sections and keys are rejected, missing keys take their defaults and a
blank value means "derive the default". ``dump_run_config`` writes every value
resolved, so reading the echo back yields an equal ``RunConfig``.
"""

import configparser
import logging
import math
from pathlib import Path
from typing import Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.core.errors import ConfigError
from src.model.config import EmbeddingConfig, ModelConfig
from src.ssm.config import SelectiveSSMConfig
from src.training.config import TrainConfig

logger = logging.getLogger(__name__)


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    path: Optional[str] = Field(default=None, description="MCTD file; blank generates synthetic data")
    nodes: int = Field(default=6, ge=1)
    days: int = Field(default=3, ge=1)
    interval_minutes: int = Field(default=5, ge=1)
    start_slot: int = Field(default=0, ge=0)
    start_dow: int = Field(default=0, ge=0, le=6)


class ModelSection(BaseModel):
    """Flat view of ``ModelConfig``; the sensor count comes from the dataset."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    t_in: int = Field(default=12, ge=1)
    t_out: int = Field(default=12, ge=1)
    d_model: int = Field(default=96, ge=1)
    expand: int = Field(default=2, ge=1)
    state_dim: int = Field(default=32, ge=1)
    dt_rank: Optional[int] = Field(default=None, ge=1)
    conv_kernel: int = Field(default=4, ge=1)
    scan_chunk: int = Field(default=0, ge=0)
    d_feat: int = Field(default=24, ge=1)
    d_tod: int = Field(default=24, ge=1)
    d_dow: int = Field(default=24, ge=1)
    d_spatial: int = Field(default=16, ge=1)
    d_adaptive: int = Field(default=80, ge=1)
    blocks_per_pathway: int = Field(default=1, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    d_ff: Optional[int] = Field(default=None, ge=1)
    spatial_order: Literal["sensor", "reversed", "shuffled"] = "sensor"


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    directory: str = Field(default="default", description="Run directory; relative paths resolve under MCST_OUTPUT_ROOT")
    write_predictions: bool = Field(default=False, description="Also save test-split predictions after training")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output: OutputSection = Field(default_factory=OutputSection)

    def resolved(self) -> "RunConfig":
        """Copy with every derived default written out."""
        model = self.model.model_copy(update={
            "dt_rank": self.model.dt_rank or math.ceil(self.model.d_model / 16),
            "d_ff": self.model.d_ff or 2 * self.model.d_model,
        })
        return self.model_copy(update={"model": model})

    def to_model_config(self, n_nodes: int, interval_minutes: int) -> ModelConfig:
        m = self.model
        try:
            return ModelConfig(
                n_nodes=n_nodes,
                t_in=m.t_in,
                t_out=m.t_out,
                ssm=SelectiveSSMConfig(
                    d_model=m.d_model,
                    expand=m.expand,
                    state_dim=m.state_dim,
                    dt_rank=m.dt_rank,
                    conv_kernel=m.conv_kernel,
                    scan_chunk=m.scan_chunk,
                ),
                emb=EmbeddingConfig(
                    d_feat=m.d_feat,
                    d_tod=m.d_tod,
                    d_dow=m.d_dow,
                    d_spatial=m.d_spatial,
                    d_adaptive=m.d_adaptive,
                    interval_minutes=interval_minutes,
                    d_mamba=m.d_model,
                ),
                blocks_per_pathway=m.blocks_per_pathway,
                dropout=m.dropout,
                d_ff=m.d_ff,
                spatial_order=m.spatial_order,
            )
        except ValidationError as exc:
            raise ConfigError(f"invalid model configuration: {exc}") from exc


SECTIONS: Dict[str, type] = {
    "data": DataSection,
    "model": ModelSection,
    "train": TrainConfig,
    "output": OutputSection,
}


def parse_run_config(text: str) -> RunConfig:
    """
    Parse INI text into a validated ``RunConfig``.

    Raises:
        ConfigError: Malformed INI, unknown section or key, or an invalid value
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed run config: {exc}") from exc

    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}; expected {list(SECTIONS)}")
    values = {}
    for name in parser.sections():
        values[name] = {
            key: (None if raw.strip() == "" else raw.strip())
            for key, raw in parser.items(name)
        }
    try:
        return RunConfig(**{name: SECTIONS[name](**fields) for name, fields in values.items()})
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"run config {path} does not exist")
    return parse_run_config(path.read_text(encoding="utf-8"))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_run_config(config: RunConfig) -> str:
    """Render the resolved config as INI text."""
    resolved = config.resolved()
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in getattr(resolved, name).model_dump().items():
            lines.append(f"{key} = {_format(value)}".rstrip())
        lines.append("")
    return "\n".join(lines)


def write_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_run_config(config), encoding="utf-8")
    logger.info(f"Wrote resolved config to {path}")
    return path
