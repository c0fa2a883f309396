"""Bounds-checked reader for the little-endian binary formats."""

import struct
from typing import Tuple

from src.core.errors import FormatError


class BinaryReader:
    """Sequential reader that reports truncation with the failing byte offset."""

    def __init__(self, blob: bytes, label: str):
        self.blob = blob
        self.label = label
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.blob) - self.offset

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.blob):
            raise FormatError(f"truncated {self.label} while reading {what}", self.offset)
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))
