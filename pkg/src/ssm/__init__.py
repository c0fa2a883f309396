"""Selective state-space scan and the Mamba blocks built on it."""

from src.ssm.config import SelectiveSSMConfig
from src.ssm.mamba import FeedForward, MambaBlock, MCSTBlock
from src.ssm.scan import (
    FlopCounter,
    ScanElement,
    combine,
    discretize,
    linear_recurrence,
    selective_scan,
    selective_scan_parallel,
    selective_scan_sequential,
)

__all__ = [
    "SelectiveSSMConfig",
    "FeedForward",
    "MambaBlock",
    "MCSTBlock",
    "FlopCounter",
    "ScanElement",
    "combine",
    "discretize",
    "linear_recurrence",
    "selective_scan",
    "selective_scan_parallel",
    "selective_scan_sequential",
]
