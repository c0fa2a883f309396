"""Embeddings and the dual-pathway forecaster."""

from src.model.config import EmbeddingConfig, ModelConfig
from src.model.embeddings import EmbeddingTables, assemble_embedding, project, time_indices
from src.model.mcst import (
    MCSTModel,
    combine_pathways,
    inverse_spatial,
    inverse_temporal,
    parameter_count,
    reshape_spatial,
    reshape_temporal,
)

__all__ = [
    "EmbeddingConfig",
    "ModelConfig",
    "EmbeddingTables",
    "assemble_embedding",
    "project",
    "time_indices",
    "MCSTModel",
    "combine_pathways",
    "inverse_spatial",
    "inverse_temporal",
    "parameter_count",
    "reshape_spatial",
    "reshape_temporal",
]
