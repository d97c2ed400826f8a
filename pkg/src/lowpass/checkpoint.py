"""LPRL checkpoint container.

    magic  b"LPRL"
    u32    format version
    records until end of file, each: u32 name length, UTF-8 name, u32 rank, rank × u32 dims, f64 payload

All integers and floats little-endian. Records keep insertion order.
"""

from __future__ import annotations

import logging
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from .errors import DataError, DataFormatError
from .layers import Layer, build_network, load_state_dict, state_dict
from .models import ActivationSpec

logger = logging.getLogger(__name__)

MEAN_RECORD = "input.mean"


def save_checkpoint(path, records: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    for name, value in records.items():
        arr = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp, path)
    logger.info("Saved %d records to %s", len(records), path)
    return path


class _Reader:

    def __init__(self, path: Path, raw: bytes):
        self.path, self.raw, self.pos = path, raw, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataFormatError(str(self.path), self.pos, f"truncated {what}")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Checkpoint not found: {path}")
    reader = _Reader(path, path.read_bytes())
    if reader.take(4, "magic") != CHECKPOINT_MAGIC:
        raise DataFormatError(str(path), 0, "bad magic, not an LPRL checkpoint")
    version = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(str(path), 4, f"unsupported version {version}")
    records: Dict[str, np.ndarray] = {}
    while reader.pos < len(reader.raw):
        start = reader.pos
        try:
            name = reader.take(reader.u32("name length"), "name").decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError(str(path), start + 4, "record name is not UTF-8") from None
        rank = reader.u32("rank")
        dims = tuple(reader.u32("dims") for _ in range(rank))
        count = int(np.prod(dims)) if dims else 1
        payload = reader.take(8 * count, f"payload of '{name}'")
        records[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return records


# ── Networks ──────────────────────────────────────────────

def save_network(path, network: List[Layer], mean: np.ndarray) -> Path:
    records = state_dict(network)
    records[MEAN_RECORD] = np.asarray(mean, dtype=np.float64).reshape(-1)
    return save_checkpoint(path, records)


def load_network(
    path,
    arch: str,
    activation: ActivationSpec,
    in_shape: Tuple[int, int, int],
    classes: int = 10,
    padding: int = 1,
) -> Tuple[List[Layer], np.ndarray]:
    """Rebuild the architecture and load weights, activation parameters and input mean."""
    records = load_checkpoint(path)
    network = build_network(arch, activation, in_shape=in_shape, classes=classes, padding=padding)
    load_state_dict(network, records)
    mean: Optional[np.ndarray] = records.get(MEAN_RECORD)
    if mean is None:
        raise DataFormatError(str(path), 0, f"missing record '{MEAN_RECORD}'")
    return network, mean
