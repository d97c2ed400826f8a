"""Command line: one subcommand per experiment.

train          → checkpoint.lprl, train_log.csv, config.ini
eval           → metrics.csv, fp.csv, shift.csv, hist.csv
corrupt        → corrupted PNGs
augment        → DCT-augmented PNGs + thresholds.csv
map-decisions  → map.svg, map.csv, boundaries.csv, features.csv, map_summary.csv
plot           → SVG from any of the CSVs above

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .activations import af_init, check_spec, parse_af_params
from .checkpoint import load_network, save_network
from .config import (
    ACTIVATION_KINDS, ARCHITECTURES, CHECKPOINT_NAME, CORRUPTION_KINDS, EXIT_OK, EXIT_USAGE,
    LOG_FORMAT, PREVIEW_IMAGES, SEVERITY_LEVELS,
)
from .corruptions import corrupt_batch, load_severity_table, make_sequences
from .dataio import Dataset, load_dataset, read_png_dir, split_validation, write_pngs
from .dct import augment_batch, augment_thresholds, drop_coefficients
from .decision_map import (
    build_fc2_net, compactness_radius, fc2_features, fit_boundaries, map_from_rows, ray_constancy,
    render_map, score_extremization, sweep, sweep_origin, sweep_unit,
)
from .errors import LowpassError, UsageError
from .layers import activation_layers, build_network
from .metrics import (
    accuracy_by_severity, activation_histogram, feature_shift, flip_probability, network_classifier,
)
from .models import ActivationSpec, AugmentPolicy, BoundaryFit, CorruptionSpec, RunConfig
from .plots import plot_accuracy, plot_contact, plot_fp, plot_hist, plot_shift, plot_sweep, plot_train
from .results import (
    BOUNDARY_COLUMNS, FEATURE_COLUMNS, FP_COLUMNS, HIST_COLUMNS, MAP_COLUMNS, METRICS_COLUMNS,
    SHIFT_COLUMNS, SUMMARY_COLUMNS, TRAIN_COLUMNS, column, read_csv, write_csv,
)
from .runconfig import load_config, parse_pairs, parse_schedule, write_config
from .training import train

logger = logging.getLogger(__name__)

EVAL_PARTS = ("metrics", "fp", "shift", "hist")
PLOT_KINDS = ("hist", "shift", "fp", "accuracy", "map", "contact", "sweep", "train")


def _ok(message: str = "") -> int:
    if message:
        logger.info(message)
    return EXIT_OK


def _fail(error: LowpassError) -> int:
    logger.error("%s: %s", type(error).__name__, error)
    return error.exit_code


# ── Shared setup ──────────────────────────────────────────

def activation_spec(config: RunConfig) -> ActivationSpec:
    section = config.activation
    stats = None
    if section.init_stats:
        rows = read_csv(section.init_stats, HIST_COLUMNS)
        edges = np.append(column(rows, "bin_lo"), column(rows, "bin_hi")[-1])
        stats = {"edges": edges, "clean": column(rows, "count_clean"), "hfc": column(rows, "count_hfc")}
    spec = af_init(section.kind, dataset_stats=stats, learnable=section.learnable or None, **section.params)
    check_spec(spec)
    return spec


def dataset(config: RunConfig) -> Dataset:
    d = config.data
    return load_dataset(d.dataset, d.root, d.train_limit, d.test_limit,
                        seed=config.run.seed, per_class=d.synthetic_per_class)


def _load(config: RunConfig, ckpt: Path, ds: Dataset):
    return load_network(ckpt, config.net.arch, activation_spec(config), ds.in_shape,
                        classes=ds.classes, padding=config.net.padding)


def _images(args, config: RunConfig):
    """PNG directory from --in, else the first --limit test images of the configured dataset."""
    if args.input:
        return read_png_dir(args.input)
    test = dataset(config).test
    n = min(args.limit, len(test))
    return test.images[:n], [f"{i:05d}_label{int(test.labels[i])}.png" for i in range(n)]


# ── Commands ──────────────────────────────────────────────

def cmd_train(config: RunConfig) -> Path:
    ds = split_validation(dataset(config), config.data.val_fraction, config.run.seed)
    network = build_network(config.net.arch, activation_spec(config), in_shape=ds.in_shape,
                            classes=ds.classes, seed=config.run.seed, padding=config.net.padding)
    out = Path(config.run.out_dir)
    write_config(config, out / "config.ini")
    result = train(network, ds.train, config, val_split=ds.val, test_split=ds.test)
    write_csv(out / "train_log.csv", TRAIN_COLUMNS, result.rows)
    save_network(out / CHECKPOINT_NAME, network, result.mean)
    for i, layer in enumerate(activation_layers(network)):
        spec = layer.spec
        logger.info("Activation %d %s: A=%g B=%g alpha=%g beta=%g", i, spec.kind, spec.A, spec.B, spec.alpha, spec.beta)
    return out


def cmd_eval(config: RunConfig, ckpt: Path, parts: Sequence[str] = EVAL_PARTS) -> Path:
    ds = dataset(config)
    network, mean = _load(config, ckpt, ds)
    test, ev, seed, workers = ds.test, config.eval, config.run.seed, config.run.workers
    table = load_severity_table()
    out = Path(config.run.out_dir)

    if "metrics" in parts:
        rows = accuracy_by_severity(network, mean, test.images, test.labels, ev.kinds, ev.severities,
                                    seed=seed, workers=workers, table=table)
        write_csv(out / "metrics.csv", METRICS_COLUMNS, rows)

    if "fp" in parts:
        clips = test.images[:ev.clips]
        sequences = [s for kind in ev.fp_kinds for s in make_sequences(clips, kind, ev.frames, seed, table)]
        report = flip_probability(sequences, network_classifier(network, mean))
        write_csv(out / "fp.csv", FP_COLUMNS, [[k, v, report.mfp] for k, v in report.per_kind.items()])
        logger.info("mFP %.5f", report.mfp)

    subset = test.images[:ev.shift_images]
    if "shift" in parts:
        corrupted = [corrupt_batch(subset, CorruptionSpec(kind=ev.shift_kind, severity=s, seed=seed),
                                   workers=workers, table=table) for s in range(1, SEVERITY_LEVELS + 1)]
        shift = feature_shift(network, mean, subset, corrupted, mode=ev.shift_mode)
        rows = [["severity", level, cs] for level, cs in sorted(shift.per_severity.items())]
        rows += [["depth", d, cs] for d, cs in enumerate(shift.per_depth, start=1)]
        write_csv(out / "shift.csv", SHIFT_COLUMNS, rows)

    if "hist" in parts:
        sets = {"clean": subset}
        for name, kind in (("lfc", ev.hist_lfc), ("hfc", ev.hist_hfc)):
            spec = CorruptionSpec(kind=kind, severity=ev.hist_severity, seed=seed)
            sets[name] = corrupt_batch(subset, spec, workers=workers, table=table)
        counts, edges, magnitude = activation_histogram(network, mean, sets["clean"], ev.bins)
        columns, magnitudes = [counts], [["mean_clean", magnitude]]
        for name in ("lfc", "hfc"):
            c, _, m = activation_histogram(network, mean, sets[name], edges=edges)
            columns.append(c)
            magnitudes.append([f"mean_{name}", m])
        rows = [[edges[i], edges[i + 1], *(float(c[i]) for c in columns)] for i in range(len(edges) - 1)]
        write_csv(out / "hist.csv", HIST_COLUMNS, rows)
        write_csv(out / "hist_summary.csv", SUMMARY_COLUMNS, magnitudes)
        logger.info("Mean activation magnitude: %s", ", ".join(f"{k}={v:.5f}" for k, v in magnitudes))
    return out


def cmd_corrupt(args, config: RunConfig) -> List[Path]:
    images, names = _images(args, config)
    spec = CorruptionSpec(kind=args.kind, severity=args.severity, seed=config.run.seed)
    corrupted = corrupt_batch(images, spec, workers=config.run.workers, table=load_severity_table())
    return write_pngs(corrupted, args.out, names)


def cmd_augment(args, config: RunConfig) -> Path:
    if not args.dct:
        raise UsageError("augment needs a policy flag (--dct)")
    policy = AugmentPolicy(t_min=config.augment.t_min, t_max=config.augment.t_max)
    images, names = _images(args, config)
    if args.sweep:
        thresholds = np.linspace(policy.t_min, policy.t_max, args.sweep)
        augmented = np.stack([drop_coefficients(images[0], t) for t in thresholds])
        names = [f"sweep_{i:02d}.png" for i in range(args.sweep)]
    else:
        thresholds = augment_thresholds(len(images), policy, config.run.seed)
        augmented = augment_batch(images, policy, config.run.seed, workers=config.run.workers)
    write_pngs(augmented, args.out, names)
    return write_csv(Path(args.out) / "thresholds.csv", ["threshold", "file"], zip(map(float, thresholds), names))


def cmd_map(config: RunConfig, ckpt: Path, svg_out: Path, csv_out: Path) -> Path:
    ds = dataset(config)
    network, mean = _load(config, ckpt, ds)
    fc2 = build_fc2_net(network)
    m = config.map
    images, labels = ds.test.images[:m.feature_images], ds.test.labels[:m.feature_images]
    features = fc2_features(fc2, images, mean)
    origin = sweep_origin(features, m.origin)
    unit = sweep_unit(features, origin, m.n)
    dmap = sweep(fc2, m.n, m.dtheta, origin, unit)
    fits = fit_boundaries(dmap)

    write_csv(csv_out, MAP_COLUMNS, dmap.rows())
    write_csv(csv_out.with_name("boundaries.csv"), BOUNDARY_COLUMNS, [
        [f.class_a, f.class_b, *f.point, *f.direction, f.max_residual, f.n_points] for f in fits])
    write_csv(csv_out.with_name("features.csv"), FEATURE_COLUMNS,
              [[float(x), float(y), int(c)] for (x, y), c in zip(features, labels)])
    inner, outer = score_extremization(dmap)
    reach = m.n * unit
    summary = [
        ["ray_constancy", ray_constancy(dmap)],
        ["score_r1", inner],
        ["score_rN", outer],
        ["compactness_radius", compactness_radius(features, origin)],
        ["max_residual_ratio", max((f.max_residual for f in fits), default=0.0) / reach],
        ["boundaries", len(fits)],
    ]
    write_csv(csv_out.with_name("map_summary.csv"), SUMMARY_COLUMNS, summary)
    return render_map(dmap, svg_out, fits, features, labels)


def _fits_from_csv(path: Path) -> List[BoundaryFit]:
    if not path.is_file():
        return []
    return [BoundaryFit(class_a=int(r["class_a"]), class_b=int(r["class_b"]),
                        point=(float(r["px"]), float(r["py"])), direction=(float(r["dx"]), float(r["dy"])),
                        max_residual=float(r["max_residual"]), n_points=int(r["n_points"]))
            for r in read_csv(path, BOUNDARY_COLUMNS)]


def cmd_plot(kind: str, inputs: Sequence[str], out: Path, param: str = "alpha") -> Path:
    if kind == "sweep":
        return plot_sweep(inputs, out, param)
    if len(inputs) != 1:
        raise UsageError(f"plot --kind {kind} takes exactly one --in")
    source = Path(inputs[0])
    if kind == "map":
        features_path = source.with_name("features.csv")
        features = labels = None
        if features_path.is_file():
            rows = read_csv(features_path, FEATURE_COLUMNS)
            features = np.stack([column(rows, "x"), column(rows, "y")], axis=1)
            labels = column(rows, "label", int)
        dmap = map_from_rows(read_csv(source, MAP_COLUMNS))
        return render_map(dmap, out, _fits_from_csv(source.with_name("boundaries.csv")), features, labels)
    plotters = {"hist": plot_hist, "shift": plot_shift, "fp": plot_fp, "accuracy": plot_accuracy,
                "contact": plot_contact, "train": plot_train}
    return plotters[kind](source, out)


# ── Argument parsing ──────────────────────────────────────

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config INI; flags override its values")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--dataset", choices=["mnist", "cifar10", "synthetic"])
    p.add_argument("--data-root")
    p.add_argument("--train-limit", type=int)
    p.add_argument("--test-limit", type=int)


def _activation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--net", choices=ARCHITECTURES)
    p.add_argument("--af", choices=ACTIVATION_KINDS)
    p.add_argument("--af-params", help="e.g. A=5,B=8.1,alpha=0.05")
    p.add_argument("--learnable", help="e.g. A=true,alpha=false")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowpass", description="LP-ReLU robustness experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network")
    _common(p)
    _activation_flags(p)
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--schedule", help="epoch:multiplier,...")
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--dct", action="store_true", default=None, help="DCT augmentation")
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--init-stats", help="hist.csv used to place the LP-ReLU cut-offs")

    p = sub.add_parser("eval", help="accuracy, flip probability, feature shift, histograms")
    _common(p)
    _activation_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out")
    p.add_argument("--only", help=f"comma-separated subset of {','.join(EVAL_PARTS)}")
    p.add_argument("--kinds")
    p.add_argument("--severities")
    p.add_argument("--fp-kinds")
    p.add_argument("--clips", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--shift-kind", choices=CORRUPTION_KINDS)
    p.add_argument("--shift-mode", choices=["layer", "concat"])
    p.add_argument("--shift-images", type=int)
    p.add_argument("--bins", type=int)

    for name, helptext in (("corrupt", "write corrupted images"), ("augment", "write DCT-augmented images")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--in", dest="input", help="directory of PNG images (default: dataset test split)")
        p.add_argument("--out", required=True)
        p.add_argument("--limit", type=int, default=PREVIEW_IMAGES)
        if name == "corrupt":
            p.add_argument("--kind", required=True, choices=CORRUPTION_KINDS)
            p.add_argument("--severity", required=True, type=int, choices=range(1, SEVERITY_LEVELS + 1))
        else:
            p.add_argument("--dct", action="store_true")
            p.add_argument("--t-min", type=float)
            p.add_argument("--t-max", type=float)
            p.add_argument("--sweep", type=int, help="one image at this many evenly spaced thresholds")

    p = sub.add_parser("map-decisions", help="decision-space map of an FC₂ network")
    _common(p)
    _activation_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--dtheta", type=float)
    p.add_argument("--origin", choices=["centroid", "zero"])
    p.add_argument("--out", default="map.svg")
    p.add_argument("--csv", default="map.csv")

    p = sub.add_parser("plot", help="SVG from result CSVs")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--in", dest="input", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--param", default="alpha", help="swept activation parameter (sweep only)")
    return parser


def _csv_list(text: Optional[str]):
    return None if text is None else [s.strip() for s in text.split(",") if s.strip()]


def overrides_from(args) -> Dict[str, Dict[str, object]]:
    get = lambda name: getattr(args, name, None)
    params = get("af_params")
    learnable = get("learnable")
    schedule = get("schedule")
    return {
        "run": {"seed": get("seed"), "workers": get("workers"),
                "out_dir": get("out") if args.command in ("train", "eval") else None},
        "data": {"dataset": get("dataset"), "root": get("data_root"), "train_limit": get("train_limit"),
                 "test_limit": get("test_limit"), "val_fraction": get("val_fraction")},
        "net": {"arch": get("net")},
        "activation": {"kind": get("af"), "params": None if params is None else parse_af_params(params),
                       "learnable": None if learnable is None else parse_pairs(learnable),
                       "init_stats": get("init_stats")},
        "optim": {"lr": get("lr"), "momentum": get("momentum"), "l2": get("l2"), "epochs": get("epochs"),
                  "batch_size": get("batch_size"),
                  "schedule": None if schedule is None else parse_schedule(schedule)},
        "augment": {"dct": get("dct") if args.command == "train" else None,
                    "t_min": get("t_min"), "t_max": get("t_max")},
        "eval": {"kinds": _csv_list(get("kinds")), "severities": _csv_list(get("severities")),
                 "fp_kinds": _csv_list(get("fp_kinds")), "clips": get("clips"), "frames": get("frames"),
                 "shift_kind": get("shift_kind"), "shift_mode": get("shift_mode"),
                 "shift_images": get("shift_images"), "bins": get("bins")},
        "map": {"n": get("n"), "dtheta": get("dtheta"), "origin": get("origin")},
    }


def _config_for(args) -> RunConfig:
    path = args.config
    ckpt = getattr(args, "ckpt", None)
    if path is None and ckpt is not None and (Path(ckpt).parent / "config.ini").is_file():
        path = str(Path(ckpt).parent / "config.ini")
    overrides = overrides_from(args)
    if args.command == "eval" and overrides["run"]["out_dir"] is None:
        overrides["run"]["out_dir"] = str(Path(ckpt).parent)
    return load_config(path, overrides)


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "plot":
            path = cmd_plot(args.kind, args.input, Path(args.out), args.param)
            return _ok(f"Plot written to {path}")
        config = _config_for(args)
        if args.command == "train":
            return _ok(f"Run written to {cmd_train(config)}")
        if args.command == "eval":
            parts = _csv_list(args.only) or list(EVAL_PARTS)
            unknown = set(parts) - set(EVAL_PARTS)
            if unknown:
                raise UsageError(f"Unknown eval part(s) {sorted(unknown)}")
            return _ok(f"Evaluation written to {cmd_eval(config, Path(args.ckpt), parts)}")
        if args.command == "corrupt":
            return _ok(f"{len(cmd_corrupt(args, config))} images written to {args.out}")
        if args.command == "augment":
            return _ok(f"Thresholds written to {cmd_augment(args, config)}")
        path = cmd_map(config, Path(args.ckpt), Path(args.out), Path(args.csv))
        return _ok(f"Decision map written to {path}")
    except LowpassError as e:
        return _fail(e)
