"""SVG figures rendered from result CSVs only (no model access).

hist      ← hist.csv          activation magnitude histograms, clean / LFc / HFc
shift     ← shift.csv         CS per severity level and per depth
fp        ← fp.csv            flip probability bars per kind and mFP
accuracy  ← metrics.csv       top1 against severity, one line per kind
contact   ← augment dir       grid of augmented images at increasing thresholds
sweep     ← several run dirs  test top1 and mFP against a swept activation parameter
train     ← train_log.csv     loss and top1 per epoch
"""

from __future__ import annotations

import configparser
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .dataio import read_png_dir
from .errors import DataError
from .results import (
    FP_COLUMNS, HIST_COLUMNS, METRICS_COLUMNS, SHIFT_COLUMNS, TRAIN_COLUMNS, column, read_csv,
)

logger = logging.getLogger(__name__)

CONTACT_TILES = 12

SVG_RC = {
    "svg.hashsalt": "lowpass",
    "svg.fonttype": "none",
    "font.size": 9,
}


@contextmanager
def svg_figure(width: float = 6.0, height: float = 4.0, ncols: int = 1):
    """Yields (fig, axes) with deterministic SVG settings; closes the figure afterwards."""
    with plt.rc_context(SVG_RC):
        fig, axes = plt.subplots(1, ncols, figsize=(width, height))
        try:
            yield fig, axes
        finally:
            plt.close(fig)


def save_svg(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    logger.info("Wrote %s", path)
    return path


# ── Per-kind figures ──────────────────────────────────────

def plot_hist(csv_path, out) -> Path:
    rows = read_csv(csv_path, HIST_COLUMNS)
    lo, hi = column(rows, "bin_lo"), column(rows, "bin_hi")
    with svg_figure() as (fig, ax):
        for name, label in (("count_clean", "clean"), ("count_lfc", "LFc"), ("count_hfc", "HFc")):
            ax.stairs(column(rows, name), np.append(lo, hi[-1]), label=label)
        ax.set_yscale("symlog")
        ax.set_xlabel("activation magnitude")
        ax.set_ylabel("count (mean over layers)")
        ax.legend()
        return save_svg(fig, out)


def plot_shift(csv_path, out) -> Path:
    rows = read_csv(csv_path, SHIFT_COLUMNS)
    with svg_figure(10.0, 4.0, ncols=2) as (fig, (left, right)):
        for ax, axis, xlabel in ((left, "severity", "severity level (1 = clean)"), (right, "depth", "depth level")):
            part = [r for r in rows if r["axis"] == axis]
            ax.plot(column(part, "level", int), column(part, "CS"), marker="o")
            ax.set_xlabel(xlabel)
            ax.set_ylabel("cosine similarity")
        return save_svg(fig, out)


def plot_fp(csv_path, out) -> Path:
    rows = read_csv(csv_path, FP_COLUMNS)
    kinds = [r["kind"] for r in rows]
    with svg_figure() as (fig, ax):
        ax.bar(kinds, column(rows, "FP"))
        ax.axhline(float(rows[0]["mFP"]), color="black", linestyle="--", label="mFP")
        ax.set_ylabel("flip probability")
        ax.tick_params(axis="x", labelrotation=45)
        ax.legend()
        return save_svg(fig, out)


def plot_accuracy(csv_path, out) -> Path:
    rows = read_csv(csv_path, METRICS_COLUMNS)
    clean = [float(r["top1"]) for r in rows if r["kind"] == "clean"]
    with svg_figure() as (fig, ax):
        for kind in dict.fromkeys(r["kind"] for r in rows if r["kind"] != "clean"):
            part = [r for r in rows if r["kind"] == kind]
            ax.plot(column(part, "severity", int), column(part, "top1"), marker="o", label=kind)
        if clean:
            ax.axhline(clean[0], color="black", linestyle=":", label="clean")
        ax.set_xlabel("severity")
        ax.set_ylabel("top-1")
        ax.legend(fontsize=7)
        return save_svg(fig, out)


def plot_train(csv_path, out) -> Path:
    rows = read_csv(csv_path, TRAIN_COLUMNS)
    with svg_figure(10.0, 4.0, ncols=2) as (fig, (left, right)):
        for split in dict.fromkeys(r["split"] for r in rows):
            part = [r for r in rows if r["split"] == split]
            left.plot(column(part, "epoch", int), column(part, "loss"), label=split)
            right.plot(column(part, "epoch", int), column(part, "top1"), label=split)
        left.set_ylabel("loss")
        right.set_ylabel("top-1")
        for ax in (left, right):
            ax.set_xlabel("epoch")
            ax.legend()
        return save_svg(fig, out)


def plot_contact(in_dir, out) -> Path:
    """One tile per row of thresholds.csv (threshold, file), lowest threshold first."""
    in_dir = Path(in_dir)
    rows = read_csv(in_dir / "thresholds.csv", ["threshold", "file"])
    rows = sorted(rows, key=lambda r: float(r["threshold"]))[:CONTACT_TILES]
    images, names = read_png_dir(in_dir)
    by_name = dict(zip(names, images))
    with svg_figure(1.4 * len(rows), 1.8, ncols=len(rows)) as (fig, axes):
        for ax, row in zip(np.atleast_1d(axes), rows):
            image = by_name[row["file"]]
            shown = image[0] if image.shape[0] == 1 else image.transpose(1, 2, 0)
            ax.imshow(shown, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
            ax.set_title(f"t={float(row['threshold']):.2f}")
            ax.axis("off")
        return save_svg(fig, out)


def _run_value(run_dir: Path, param: str) -> float:
    parser = configparser.ConfigParser()
    if not parser.read(run_dir / "config.ini"):
        raise DataError(f"No config.ini in {run_dir}")
    for item in parser.get("activation", "params", fallback="").split(","):
        key, _, value = item.partition("=")
        if key.strip() == param:
            return float(value)
    raise DataError(f"{run_dir}/config.ini does not set activation parameter '{param}'")


def plot_sweep(run_dirs: Sequence, out, param: str = "alpha") -> Path:
    """Final test top1 (and mFP when present) of each run against one activation parameter."""
    points: List[tuple] = []
    for run_dir in map(Path, run_dirs):
        log = [r for r in read_csv(run_dir / "train_log.csv", TRAIN_COLUMNS) if r["split"] == "test"]
        if not log:
            raise DataError(f"{run_dir}/train_log.csv has no test rows")
        fp_path = run_dir / "fp.csv"
        mfp = float(read_csv(fp_path, FP_COLUMNS)[0]["mFP"]) if fp_path.is_file() else np.nan
        points.append((_run_value(run_dir, param), float(log[-1]["top1"]), mfp))
    if not points:
        raise DataError("plot --kind sweep needs at least one run directory")
    points.sort()
    x, acc, mfp = (np.array(v) for v in zip(*points))
    with svg_figure() as (fig, ax):
        ax.plot(x, acc, marker="o", label="test top-1")
        ax.set_xlabel(param)
        ax.set_ylabel("top-1")
        if np.any(np.isfinite(mfp)):
            twin = ax.twinx()
            twin.plot(x, mfp, marker="s", color="tab:red", label="mFP")
            twin.set_ylabel("mFP")
        ax.legend(loc="lower left")
        return save_svg(fig, out)
