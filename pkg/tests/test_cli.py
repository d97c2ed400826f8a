"""End-to-end tests for the command line on the synthetic dataset."""

import logging

import pytest

from src.lowpass.cli import build_parser, main
from src.lowpass.results import read_csv

TRAIN = ["train", "--dataset", "synthetic", "--train-limit", "64", "--test-limit", "20",
         "--epochs", "1", "--batch-size", "32", "--seed", "3", "--log-level", "WARNING"]

EVAL = ["--kinds", "gaussian_noise,contrast", "--severities", "1,5", "--fp-kinds", "gaussian_noise",
        "--clips", "3", "--frames", "4", "--shift-images", "6", "--bins", "10", "--log-level", "WARNING"]


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture(scope="module")
def mlp_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mlp")
    assert main(TRAIN + ["--net", "mlp", "--out", str(out)]) == 0
    assert main(["eval", "--ckpt", str(out / "checkpoint.lprl")] + EVAL) == 0
    return out


@pytest.fixture(scope="module")
def fc2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fc2")
    assert main(TRAIN + ["--net", "cnn3_fc2", "--train-limit", "40", "--out", str(out)]) == 0
    return out


class TestTrain:

    def test_outputs(self, mlp_run):
        for name in ("checkpoint.lprl", "train_log.csv", "config.ini"):
            assert (mlp_run / name).is_file()
        rows = read_csv(mlp_run / "train_log.csv", ["epoch", "split", "loss", "top1", "lr"])
        assert [r["split"] for r in rows] == ["train", "val", "test"]

    def test_rerun_is_byte_identical(self, mlp_run, tmp_path):
        assert main(TRAIN + ["--net", "mlp", "--out", str(tmp_path)]) == 0
        for name in ("checkpoint.lprl", "train_log.csv"):
            assert (tmp_path / name).read_bytes() == (mlp_run / name).read_bytes()

    def test_fig8_alias_trains_cnn3(self, tmp_path):
        small = ["--train-limit", "30", "--test-limit", "10"]
        assert main(TRAIN + small + ["--net", "fig8", "--out", str(tmp_path / "alias")]) == 0
        assert main(TRAIN + small + ["--net", "cnn3", "--out", str(tmp_path / "cnn3")]) == 0
        assert "arch = cnn3\n" in (tmp_path / "alias" / "config.ini").read_text()
        alias, canonical = (tmp_path / d / "checkpoint.lprl" for d in ("alias", "cnn3"))
        assert alias.read_bytes() == canonical.read_bytes()

    def test_lp_relu2_with_bad_cutoffs(self, tmp_path):
        assert main(TRAIN + ["--af", "lp_relu2", "--af-params", "A=9,B=8", "--out", str(tmp_path)]) == 1

    def test_bad_af_params(self, tmp_path):
        assert main(TRAIN + ["--af", "lp_relu1", "--af-params", "A=oops", "--out", str(tmp_path)]) == 1

    def test_missing_data(self, tmp_path):
        code = main(["train", "--dataset", "mnist", "--data-root", str(tmp_path), "--out", str(tmp_path)])
        assert code == 2

    def test_unknown_flag_value(self):
        with pytest.raises(SystemExit) as e:
            main(["train", "--af", "gelu"])
        assert e.value.code == 1

    def test_no_command(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 1


class TestEval:

    def test_outputs(self, mlp_run):
        metrics = read_csv(mlp_run / "metrics.csv", ["kind", "severity", "top1"])
        assert [(r["kind"], r["severity"]) for r in metrics] == [
            ("clean", "0"), ("gaussian_noise", "1"), ("gaussian_noise", "5"), ("contrast", "1"), ("contrast", "5"),
        ]
        fp = read_csv(mlp_run / "fp.csv", ["kind", "FP", "mFP"])
        assert [r["kind"] for r in fp] == ["gaussian_noise"]
        shift = read_csv(mlp_run / "shift.csv", ["axis", "level", "CS"])
        assert [float(r["CS"]) for r in shift if r["axis"] == "severity"][0] == 1.0
        assert len(read_csv(mlp_run / "hist.csv")) == 10
        summary = read_csv(mlp_run / "hist_summary.csv", ["metric", "value"])
        assert [r["metric"] for r in summary] == ["mean_clean", "mean_lfc", "mean_hfc"]

    def test_rerun_is_byte_identical(self, mlp_run, tmp_path):
        args = ["eval", "--ckpt", str(mlp_run / "checkpoint.lprl"), "--out", str(tmp_path), "--workers", "2"]
        assert main(args + EVAL) == 0
        for name in ("metrics.csv", "fp.csv", "shift.csv", "hist.csv"):
            assert (tmp_path / name).read_bytes() == (mlp_run / name).read_bytes()

    def test_only(self, mlp_run, tmp_path):
        args = ["eval", "--ckpt", str(mlp_run / "checkpoint.lprl"), "--out", str(tmp_path), "--only", "fp"]
        assert main(args + EVAL) == 0
        assert sorted(p.name for p in tmp_path.iterdir()) == ["fp.csv"]

    def test_unknown_part(self, mlp_run, tmp_path):
        args = ["eval", "--ckpt", str(mlp_run / "checkpoint.lprl"), "--out", str(tmp_path), "--only", "speed"]
        assert main(args) == 1

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--ckpt", str(tmp_path / "none.lprl"), "--dataset", "synthetic"]) == 2


class TestImages:

    def test_corrupt_dataset_images(self, tmp_path):
        args = ["corrupt", "--dataset", "synthetic", "--kind", "gaussian_noise", "--severity", "3",
                "--out", str(tmp_path), "--limit", "4"]
        assert main(args) == 0
        assert len(list(tmp_path.glob("*.png"))) == 4

    def test_corrupt_png_dir(self, tmp_path):
        src, dst = tmp_path / "in", tmp_path / "out"
        assert main(["corrupt", "--dataset", "synthetic", "--kind", "contrast", "--severity", "1",
                     "--out", str(src), "--limit", "2"]) == 0
        assert main(["corrupt", "--in", str(src), "--kind", "zoom_blur", "--severity", "5",
                     "--out", str(dst)]) == 0
        assert sorted(p.name for p in dst.iterdir()) == sorted(p.name for p in src.iterdir())

    def test_bad_severity(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["corrupt", "--kind", "gaussian_noise", "--severity", "6", "--out", str(tmp_path)])
        assert e.value.code == 1

    def test_augment_needs_policy(self, tmp_path):
        assert main(["augment", "--dataset", "synthetic", "--out", str(tmp_path)]) == 1

    def test_augment(self, tmp_path):
        assert main(["augment", "--dataset", "synthetic", "--dct", "--limit", "3", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "thresholds.csv", ["threshold", "file"])
        assert len(rows) == 3
        assert all(0.0 <= float(r["threshold"]) <= 0.5 for r in rows)

    def test_augment_sweep_and_contact_sheet(self, tmp_path):
        sheet = tmp_path / "contact.svg"
        assert main(["augment", "--dataset", "synthetic", "--dct", "--sweep", "5", "--t-max", "0.8",
                     "--out", str(tmp_path / "aug")]) == 0
        rows = read_csv(tmp_path / "aug" / "thresholds.csv")
        assert [float(r["threshold"]) for r in rows] == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8])
        assert main(["plot", "--kind", "contact", "--in", str(tmp_path / "aug"), "--out", str(sheet)]) == 0
        assert sheet.read_text().lstrip().startswith("<?xml")


class TestMap:

    def test_outputs(self, fc2_run, tmp_path):
        svg, csv = tmp_path / "map.svg", tmp_path / "map.csv"
        args = ["map-decisions", "--ckpt", str(fc2_run / "checkpoint.lprl"), "--n", "4", "--dtheta", "0.1",
                "--out", str(svg), "--csv", str(csv)]
        assert main(args) == 0
        assert len(read_csv(csv)) == 4 * 63
        summary = {r["metric"]: float(r["value"]) for r in read_csv(tmp_path / "map_summary.csv")}
        assert 0.0 <= summary["ray_constancy"] <= 1.0
        assert len(read_csv(tmp_path / "features.csv")) == 20
        assert (tmp_path / "boundaries.csv").is_file()

        replot = tmp_path / "replot.svg"
        assert main(["plot", "--kind", "map", "--in", str(csv), "--out", str(replot)]) == 0
        assert replot.is_file()

    def test_needs_fc2(self, mlp_run, tmp_path):
        args = ["map-decisions", "--ckpt", str(mlp_run / "checkpoint.lprl"), "--out", str(tmp_path / "m.svg"),
                "--csv", str(tmp_path / "m.csv")]
        assert main(args) == 1


class TestPlot:

    @pytest.mark.parametrize("kind, source", [
        ("train", "train_log.csv"), ("hist", "hist.csv"), ("shift", "shift.csv"),
        ("fp", "fp.csv"), ("accuracy", "metrics.csv"),
    ])
    def test_from_eval_outputs(self, mlp_run, tmp_path, kind, source):
        out = tmp_path / f"{kind}.svg"
        assert main(["plot", "--kind", kind, "--in", str(mlp_run / source), "--out", str(out)]) == 0
        assert out.read_bytes().startswith(b"<?xml")

    def test_same_input_same_bytes(self, mlp_run, tmp_path):
        for name in ("a.svg", "b.svg"):
            main(["plot", "--kind", "accuracy", "--in", str(mlp_run / "metrics.csv"), "--out", str(tmp_path / name)])
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_sweep(self, tmp_path):
        runs = []
        for alpha in ("0.05", "0.2"):
            out = tmp_path / f"alpha{alpha}"
            assert main(TRAIN + ["--net", "mlp", "--af", "lp_relu1", "--af-params", f"alpha={alpha}",
                                 "--out", str(out)]) == 0
            runs.append(str(out))
        out = tmp_path / "sweep.svg"
        assert main(["plot", "--kind", "sweep", "--in", *runs, "--out", str(out), "--param", "alpha"]) == 0
        assert out.is_file()

    def test_sweep_without_parameter(self, mlp_run, tmp_path):
        assert main(["plot", "--kind", "sweep", "--in", str(mlp_run), "--out", str(tmp_path / "s.svg")]) == 2

    def test_one_input_only(self, mlp_run, tmp_path):
        args = ["plot", "--kind", "hist", "--in", str(mlp_run / "hist.csv"), str(mlp_run / "fp.csv"),
                "--out", str(tmp_path / "h.svg")]
        assert main(args) == 1

    def test_missing_input(self, tmp_path):
        assert main(["plot", "--kind", "fp", "--in", str(tmp_path / "fp.csv"), "--out", str(tmp_path / "f.svg")]) == 2


class TestParser:

    def test_subcommands(self):
        choices = build_parser()._subparsers._group_actions[0].choices
        assert sorted(choices) == ["augment", "corrupt", "eval", "map-decisions", "plot", "train"]
