"""Versioned binary checkpoints of named float64 parameters.

Layout (little-endian): magic ``MCST``, u32 version, u32 count, then per
parameter: u16 name length, UTF-8 name, u8 rank, u64 extents, f64 payload.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from src.core.binary import BinaryReader
from src.core.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"MCST"
VERSION = 1


def save_checkpoint(state: Dict[str, np.ndarray], path: Union[str, Path]) -> Path:
    """
    Write parameters to ``path``.

    Args:
        state: Ordered mapping of dotted name to array
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, value in state.items():
        array = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.tobytes(order="C"))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.info(f"Saved checkpoint with {len(state)} parameters to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a checkpoint written by ``save_checkpoint``; rejects unknown versions."""
    reader = BinaryReader(Path(path).read_bytes(), "checkpoint")
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("not an MCST checkpoint (bad magic)", 0)
    version, count = reader.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "name length")
        raw_name = reader.take(name_len, "name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"parameter name is not valid UTF-8: {exc.reason}", reader.offset - name_len + exc.start) from exc
        (rank,) = reader.unpack("<B", f"rank of {name}")
        shape = reader.unpack(f"<{rank}Q", f"extents of {name}") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        payload = reader.take(8 * size, f"payload of {name}")
        if name in state:
            raise FormatError(f"duplicate parameter {name}", reader.offset)
        state[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.offset != len(reader.blob):
        raise FormatError("trailing bytes after last parameter", reader.offset)
    return state
