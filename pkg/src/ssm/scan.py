"""Selective state-space scan: discretization, sequential and chunked parallel scans.

The recurrence ``x_k = a_k * x_{k-1} + b_k`` (elementwise, x_0 = 0) is the
composition of affine maps ``x -> a x + b``. Composing two steps gives
``(a2, b2) . (a1, b1) = (a2 a1, a2 b1 + b2)``, which is associative, so the
prefix states can be computed chunk by chunk: each chunk scans locally from a
zero state, a short single-threaded pass carries chunk-end states forward, and
each chunk then adds ``cumprod(a) * carry_in`` to its local states.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core.config import get_settings
from src.core.errors import ContractError, DimensionError
from src.tensor.ops import emit
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class FlopCounter:
    """Running count of floating-point multiplies and adds issued by the scan kernels."""

    flops: int = 0

    def add(self, count: int) -> None:
        self.flops += int(count)


@dataclass
class ScanElement:
    """Affine step ``x -> a * x + b`` (or a composition of consecutive steps)."""

    a: np.ndarray
    b: np.ndarray


def combine(later: ScanElement, earlier: ScanElement) -> ScanElement:
    """Compose two consecutive steps: apply ``earlier`` first, then ``later``."""
    return ScanElement(a=later.a * earlier.a, b=later.a * earlier.b + later.b)


_pool: Optional[ThreadPoolExecutor] = None
_pool_lock = threading.Lock()


def get_scan_pool() -> ThreadPoolExecutor:
    """Get or create the worker pool shared by parallel scans."""
    global _pool
    with _pool_lock:
        if _pool is None:
            workers = get_settings().scan_workers
            _pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="scan")
            logger.debug(f"Started scan pool with {workers} workers")
        return _pool


# ---------------------------------------------------------------------------
# Recurrence kernels (time on axis 0)
# ---------------------------------------------------------------------------

def _sequential_states(a: np.ndarray, b: np.ndarray, counter: Optional[FlopCounter]) -> np.ndarray:
    states = np.empty_like(b)
    states[0] = b[0]
    for k in range(1, b.shape[0]):
        states[k] = a[k] * states[k - 1] + b[k]
    if counter is not None:
        counter.add(2 * b.size)
    return states


def _local_scan(a: np.ndarray, b: np.ndarray, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
    """Scan one chunk from a zero state; returns local states and cumulative transitions."""
    states = np.empty_like(b[start:stop])
    cumulative = np.empty_like(a[start:stop])
    states[0] = b[start]
    cumulative[0] = a[start]
    for k in range(1, stop - start):
        states[k] = a[start + k] * states[k - 1] + b[start + k]
        cumulative[k] = a[start + k] * cumulative[k - 1]
    return states, cumulative


def _parallel_states(a: np.ndarray, b: np.ndarray, chunk: int, counter: Optional[FlopCounter]) -> np.ndarray:
    length = b.shape[0]
    step_size = b[0].size
    bounds = [(start, min(start + chunk, length)) for start in range(0, length, chunk)]
    pool = get_scan_pool()

    # Up-sweep: independent local scans
    local = list(pool.map(lambda span: _local_scan(a, b, span[0], span[1]), bounds))

    # Carry pass: compose chunk summaries left to right
    carries: List[Optional[np.ndarray]] = []
    running: Optional[ScanElement] = None
    for states, cumulative in local:
        carries.append(None if running is None else running.b)
        summary = ScanElement(a=cumulative[-1], b=states[-1])
        running = summary if running is None else combine(summary, running)

    # Down-sweep: fold each chunk's carry-in into its local states
    out = np.empty_like(b)

    def fix_up(j: int) -> None:
        start, stop = bounds[j]
        states, cumulative = local[j]
        carry = carries[j]
        out[start:stop] = states if carry is None else states + cumulative * carry

    list(pool.map(fix_up, range(len(bounds))))

    if counter is not None:
        # local states (2/elem) + cumulative transitions (1/elem after the first of each chunk)
        counter.add(2 * b.size + (length - len(bounds)) * step_size)
        # carry composition (3/elem per chunk boundary) + fix-up (2/elem outside the first chunk)
        counter.add(3 * (len(bounds) - 1) * step_size)
        counter.add(2 * (length - bounds[0][1]) * step_size)
    return out


def linear_recurrence(
    a: np.ndarray,
    b: np.ndarray,
    chunk: int = 0,
    counter: Optional[FlopCounter] = None,
) -> np.ndarray:
    """
    All states of ``x_k = a_k * x_{k-1} + b_k`` with ``x_0 = 0``, time on axis 0.

    Args:
        a: Transitions [length, ...]
        b: Contributions, same shape as ``a``
        chunk: Chunk length of the parallel scan; 0 selects the sequential loop
        counter: Optional flop counter

    Returns:
        States [length, ...]
    """
    if a.shape != b.shape:
        raise DimensionError(f"recurrence shapes differ: {a.shape} vs {b.shape}")
    if chunk < 0:
        raise ContractError(f"chunk must be >= 1 (or 0 for sequential), got {chunk}")
    if b.shape[0] == 0:
        return np.empty_like(b)
    if chunk == 0:
        return _sequential_states(a, b, counter)
    return _parallel_states(a, b, chunk, counter)


# ---------------------------------------------------------------------------
# Selective SSM pieces (time on axis -3 of [..., length, d_inner, N])
# ---------------------------------------------------------------------------

def discretize(A: np.ndarray, B_k: np.ndarray, delta_k: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Zero-order hold for the diagonal transition, Euler rule for the input matrix.

    Args:
        A: Continuous transition [d_inner, N], strictly negative
        B_k: Input matrices [..., length, N]
        delta_k: Positive step sizes [..., length, d_inner]

    Returns:
        (A_bar, B_bar), each [..., length, d_inner, N]
    """
    if A.ndim != 2 or delta_k.shape[-1] != A.shape[0] or B_k.shape[-1] != A.shape[1]:
        raise DimensionError(f"discretize shapes A{A.shape}, B{B_k.shape}, delta{delta_k.shape} do not align")
    if B_k.shape[:-1] != delta_k.shape[:-1]:
        raise DimensionError(f"B and delta disagree on leading shape: {B_k.shape} vs {delta_k.shape}")
    if np.any(delta_k <= 0):
        raise ContractError("discretization step delta must be strictly positive")
    if np.any(A >= 0):
        raise ContractError("continuous transition A must be strictly negative")
    step = delta_k[..., None]
    A_bar = np.exp(step * A)
    B_bar = step * B_k[..., None, :]
    return A_bar, B_bar


def _check_scan_shapes(A_bar: np.ndarray, B_bar: np.ndarray, u: np.ndarray, C_k: np.ndarray, D_skip: np.ndarray) -> None:
    if A_bar.shape != B_bar.shape or A_bar.ndim < 3:
        raise DimensionError(f"A_bar {A_bar.shape} and B_bar {B_bar.shape} must match with rank >= 3")
    if u.shape != A_bar.shape[:-1]:
        raise DimensionError(f"u shape {u.shape} does not match A_bar {A_bar.shape}")
    if C_k.shape != A_bar.shape[:-2] + A_bar.shape[-1:]:
        raise DimensionError(f"C shape {C_k.shape} does not match A_bar {A_bar.shape}")
    if D_skip.shape != A_bar.shape[-2:-1]:
        raise DimensionError(f"D shape {D_skip.shape} does not match inner width {A_bar.shape[-2]}")


def scan_states(A_bar: np.ndarray, Bu: np.ndarray, chunk: int = 0, counter: Optional[FlopCounter] = None) -> np.ndarray:
    """Hidden states for time on axis -3."""
    states = linear_recurrence(np.moveaxis(A_bar, -3, 0), np.moveaxis(Bu, -3, 0), chunk, counter)
    return np.moveaxis(states, 0, -3)


def readout(states: np.ndarray, C_k: np.ndarray, u: np.ndarray, D_skip: np.ndarray,
            counter: Optional[FlopCounter] = None) -> np.ndarray:
    """``y_k = sum_N C_k * x_k + D * u_k``."""
    y = (states * C_k[..., None, :]).sum(axis=-1) + D_skip * u
    if counter is not None:
        counter.add(2 * states.size + 2 * u.size)
    return y


def _selective_scan(A_bar, B_bar, u, C_k, D_skip, chunk, counter):
    _check_scan_shapes(A_bar, B_bar, u, C_k, D_skip)
    if u.shape[-2] == 0:
        return np.empty(u.shape)
    Bu = B_bar * u[..., None]
    if counter is not None:
        counter.add(Bu.size)
    states = scan_states(A_bar, Bu, chunk, counter)
    return readout(states, C_k, u, D_skip, counter)


def selective_scan_sequential(
    A_bar: np.ndarray,
    B_bar: np.ndarray,
    u: np.ndarray,
    C_k: np.ndarray,
    D_skip: np.ndarray,
    counter: Optional[FlopCounter] = None,
) -> np.ndarray:
    """
    Reference scan: step-by-step recurrence from a zero state.

    Args:
        A_bar: Discrete transitions [..., length, d_inner, N]
        B_bar: Discrete input matrices [..., length, d_inner, N]
        u: Inputs [..., length, d_inner]
        C_k: Readout vectors [..., length, N]
        D_skip: Feedthrough [d_inner]
        counter: Optional flop counter

    Returns:
        Outputs [..., length, d_inner]
    """
    return _selective_scan(A_bar, B_bar, u, C_k, D_skip, 0, counter)


def selective_scan_parallel(
    A_bar: np.ndarray,
    B_bar: np.ndarray,
    u: np.ndarray,
    C_k: np.ndarray,
    D_skip: np.ndarray,
    chunk: int,
    counter: Optional[FlopCounter] = None,
) -> np.ndarray:
    """Same contract as ``selective_scan_sequential``, computed with the chunked two-pass scan."""
    if chunk < 1:
        raise ContractError(f"chunk must be >= 1, got {chunk}")
    return _selective_scan(A_bar, B_bar, u, C_k, D_skip, chunk, counter)


# ---------------------------------------------------------------------------
# Differentiable fused op
# ---------------------------------------------------------------------------

def _reverse_states(a_next: np.ndarray, c: np.ndarray, chunk: int) -> np.ndarray:
    """Adjoint recurrence ``G_k = c_k + a_{k+1} G_{k+1}`` run backwards in time."""
    flipped = linear_recurrence(
        np.flip(np.moveaxis(a_next, -3, 0), axis=0),
        np.flip(np.moveaxis(c, -3, 0), axis=0),
        chunk,
    )
    return np.moveaxis(np.flip(flipped, axis=0), 0, -3)


def selective_scan(u: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor, chunk: int = 0) -> Tensor:
    """
    Discretize and scan as one tape node.

    Args:
        u: Inputs [..., length, d_inner]
        delta: Positive step sizes [..., length, d_inner]
        A: Continuous transition [d_inner, N]
        B: Input matrices [..., length, N]
        C: Readout vectors [..., length, N]
        D: Feedthrough [d_inner]
        chunk: Parallel scan chunk (0 = sequential)

    Returns:
        Outputs [..., length, d_inner]
    """
    ud, dd, Ad, Bd, Cd, Dd = u.data, delta.data, A.data, B.data, C.data, D.data
    A_bar, B_bar = discretize(Ad, Bd, dd)
    _check_scan_shapes(A_bar, B_bar, ud, Cd, Dd)
    Bu = B_bar * ud[..., None]
    states = scan_states(A_bar, Bu, chunk)
    y = readout(states, Cd, ud, Dd)
    d_inner, n_state = Ad.shape

    def backward(gy: np.ndarray):
        g_D = (gy * ud).reshape(-1, d_inner).sum(axis=0)
        g_C = (gy[..., None] * states).sum(axis=-2)
        direct = gy[..., None] * Cd[..., None, :]
        a_next = np.zeros_like(A_bar)
        a_next[..., :-1, :, :] = A_bar[..., 1:, :, :]
        G = _reverse_states(a_next, direct, chunk)
        prev = np.zeros_like(states)
        prev[..., 1:, :, :] = states[..., :-1, :, :]
        g_A_bar = G * prev
        g_B_bar = G * ud[..., None]
        g_u = gy * Dd + (G * B_bar).sum(axis=-1)
        dA_term = g_A_bar * A_bar
        g_delta = (dA_term * Ad).sum(axis=-1) + (g_B_bar * Bd[..., None, :]).sum(axis=-1)
        g_A = (dA_term * dd[..., None]).reshape(-1, d_inner, n_state).sum(axis=0)
        g_B = (g_B_bar * dd[..., None]).sum(axis=-2)
        return g_u, g_delta, g_A, g_B, g_C, g_D

    return emit("selective_scan", (u, delta, A, B, C, D), y, backward)
