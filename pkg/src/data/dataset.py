"""Traffic tensor files: in-memory form and the ``MCTD`` binary format.

Layout (little-endian): magic ``MCTD``, u32 version, u32 T, u32 n, u32 c,
u16 interval_minutes, u16 start_slot, u8 start_dow, f64 payload [T, n, c]
row-major, u32 sensor-id count, newline-joined UTF-8 ids up to end of file.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

import numpy as np

from src.core.binary import BinaryReader
from src.core.errors import DataError, FormatError

logger = logging.getLogger(__name__)

MAGIC = b"MCTD"
VERSION = 1
CHANNELS = ("flow", "speed", "occupancy")
MINUTES_PER_DAY = 24 * 60


@dataclass
class TrafficTensorFile:
    """
    Multi-channel sensor series.

    ``raw`` is [T, n, 3] with channels (flow, speed, occupancy): vehicles per
    interval, free units of speed, and occupancy as a fraction of the interval.
    """

    raw: np.ndarray
    interval_minutes: int = 5
    start_slot: int = 0
    start_dow: int = 0
    sensor_ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if not self.sensor_ids and self.raw.ndim == 3:
            self.sensor_ids = [f"S{v:03d}" for v in range(self.raw.shape[1])]

    @property
    def n_steps(self) -> int:
        return self.raw.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.raw.shape[1]

    @property
    def slots_per_day(self) -> int:
        return MINUTES_PER_DAY // self.interval_minutes

    def validate(self, min_steps: int = 24) -> None:
        """
        Check the shape, metadata and channel invariants.

        Raises:
            DataError: Naming the channel and the (step, node) index of the first violation
        """
        if self.raw.ndim != 3 or self.raw.shape[2] != len(CHANNELS):
            raise DataError(f"expected raw [T, n, {len(CHANNELS)}], got {self.raw.shape}")
        if self.n_nodes < 1:
            raise DataError("dataset has no sensors")
        if self.n_steps < min_steps:
            raise DataError(f"dataset has {self.n_steps} steps, needs at least {min_steps}")
        if self.interval_minutes < 1 or MINUTES_PER_DAY % self.interval_minutes:
            raise DataError(f"interval_minutes={self.interval_minutes} does not divide a day")
        if not 0 <= self.start_slot < self.slots_per_day or not 0 <= self.start_dow < 7:
            raise DataError(f"start slot {self.start_slot} / weekday {self.start_dow} out of range")
        if len(self.sensor_ids) != self.n_nodes:
            raise DataError(f"{len(self.sensor_ids)} sensor ids for {self.n_nodes} sensors")

        bounds = {"flow": (0.0, np.inf), "speed": (0.0, np.inf), "occupancy": (0.0, 1.0)}
        for channel, name in enumerate(CHANNELS):
            values = self.raw[:, :, channel]
            low, high = bounds[name]
            bad = ~np.isfinite(values) | (values < low) | (values > high)
            if bad.any():
                index = tuple(int(i) for i in np.argwhere(bad)[0])
                raise DataError(
                    f"{name} value {values[index]} outside [{low}, {high}] at step {index[0]}, node {index[1]}",
                    channel=name,
                    index=index,
                )


def save_dataset(data: TrafficTensorFile, path: Union[str, Path]) -> Path:
    """Write ``data`` in the ``MCTD`` format."""
    path = Path(path)
    data.validate(min_steps=1)
    T, n, c = data.raw.shape
    ids = "\n".join(data.sensor_ids).encode("utf-8")
    blob = b"".join([
        MAGIC,
        struct.pack("<IIIIHHB", VERSION, T, n, c, data.interval_minutes, data.start_slot, data.start_dow),
        np.ascontiguousarray(data.raw, dtype="<f8").tobytes(),
        struct.pack("<I", len(data.sensor_ids)),
        ids,
    ])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    logger.info(f"Wrote dataset {path} (T={T}, n={n})")
    return path


def load_dataset(path: Union[str, Path], min_steps: int = 24) -> TrafficTensorFile:
    """
    Read and validate an ``MCTD`` file.

    Args:
        path: Dataset file
        min_steps: Shortest acceptable series (one history plus one target window)

    Returns:
        Parsed dataset

    Raises:
        FormatError: Bad magic, version or truncated payload (with byte offset)
        DataError: A channel invariant is violated
    """
    path = Path(path)
    reader = BinaryReader(path.read_bytes(), "dataset")
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("not an MCTD dataset (bad magic)", 0)
    version, T, n, c, interval, start_slot, start_dow = reader.unpack("<IIIIHHB", "header")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}", 4)
    if c != len(CHANNELS):
        raise FormatError(f"expected {len(CHANNELS)} channels, header says {c}", 16)
    payload = reader.take(8 * T * n * c, "payload")
    raw = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(T, n, c)
    (count,) = reader.unpack("<I", "sensor-id count")
    ids_offset = reader.offset
    try:
        text = reader.take(reader.remaining, "sensor ids").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"sensor ids are not valid UTF-8: {exc.reason}", ids_offset + exc.start) from exc
    sensor_ids = text.split("\n") if count else []
    if len(sensor_ids) != count or (count and count != n):
        raise FormatError(f"sensor-id count {count} does not match {len(sensor_ids)} ids for {n} sensors", reader.offset)

    data = TrafficTensorFile(raw, interval, start_slot, start_dow, sensor_ids)
    try:
        data.validate(min_steps=min_steps)
    except DataError as exc:
        logger.error(f"Invalid dataset {path}: {exc}")
        raise
    logger.info(f"Loaded dataset {path} (T={T}, n={n}, interval={interval} min)")
    return data
