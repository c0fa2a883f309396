"""Timing and work measurement of the sequential and chunked scans."""

import logging
import time
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.ssm.scan import FlopCounter, selective_scan_parallel, selective_scan_sequential

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["length", "d_inner", "state_dim", "chunk", "mode", "wall_ns", "flops", "max_abs_diff"]


def random_scan_instance(
    length: int,
    d_inner: int,
    state_dim: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw a stable scan problem: transitions in (0, 1), everything else standard normal."""
    A_bar = rng.uniform(0.05, 0.99, size=(length, d_inner, state_dim))
    B_bar = rng.standard_normal((length, d_inner, state_dim))
    u = rng.standard_normal((length, d_inner))
    C_k = rng.standard_normal((length, state_dim))
    D_skip = rng.standard_normal(d_inner)
    return A_bar, B_bar, u, C_k, D_skip


def bench_scan(
    lengths: Sequence[int],
    d_inner: int,
    state_dim: int,
    chunks: Sequence[int],
    seed: int = 0,
) -> List[Dict[str, object]]:
    """
    Run each length once sequentially and once per chunk size.

    Args:
        lengths: Sequence lengths to measure
        d_inner: Inner channel count
        state_dim: State size N
        chunks: Parallel chunk sizes
        seed: Seed of the random instances

    Returns:
        One row per (length, mode, chunk); parallel rows carry the max abs
        difference to the sequential output of the same instance
    """
    rng = np.random.default_rng(seed)
    rows: List[Dict[str, object]] = []
    for length in lengths:
        instance = random_scan_instance(length, d_inner, state_dim, rng)

        counter = FlopCounter()
        started = time.perf_counter_ns()
        reference = selective_scan_sequential(*instance, counter=counter)
        rows.append({
            "length": length, "d_inner": d_inner, "state_dim": state_dim, "chunk": length,
            "mode": "seq", "wall_ns": time.perf_counter_ns() - started,
            "flops": counter.flops, "max_abs_diff": 0.0,
        })

        for chunk in chunks:
            counter = FlopCounter()
            started = time.perf_counter_ns()
            result = selective_scan_parallel(*instance, chunk=chunk, counter=counter)
            elapsed = time.perf_counter_ns() - started
            diff = float(np.max(np.abs(result - reference))) if result.size else 0.0
            rows.append({
                "length": length, "d_inner": d_inner, "state_dim": state_dim, "chunk": chunk,
                "mode": "par", "wall_ns": elapsed, "flops": counter.flops, "max_abs_diff": diff,
            })
        logger.info(f"Benchmarked length {length} over {len(chunks)} chunk sizes")
    return rows
