"""CSV result files.

Floats are written with repr(), the shortest string that round-trips, so a
rerun with the same config and seed produces byte-identical files.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .config import TRAIN_LOG_HEADER
from .errors import DataError

logger = logging.getLogger(__name__)

TRAIN_COLUMNS = TRAIN_LOG_HEADER
METRICS_COLUMNS = ["kind", "severity", "top1"]
FP_COLUMNS = ["kind", "FP", "mFP"]
SHIFT_COLUMNS = ["axis", "level", "CS"]
HIST_COLUMNS = ["bin_lo", "bin_hi", "count_clean", "count_lfc", "count_hfc"]
MAP_COLUMNS = ["r", "theta", "x", "y", "class", "score"]
BOUNDARY_COLUMNS = ["class_a", "class_b", "px", "py", "dx", "dy", "max_residual", "n_points"]
FEATURE_COLUMNS = ["x", "y", "label"]
SUMMARY_COLUMNS = ["metric", "value"]


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row {row!r} does not match columns {list(header)}")
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.info("Wrote %d rows to %s", count, path)
    return path


def read_csv(path, required: Sequence[str] = ()) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Result file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        return list(reader)


def column(rows: List[Dict[str, str]], name: str, cast=float) -> np.ndarray:
    return np.array([cast(r[name]) for r in rows])
