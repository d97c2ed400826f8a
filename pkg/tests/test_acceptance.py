"""Desk-scale checks on real MNIST.

Skipped unless the four MNIST IDX files are found under $LOWPASS_DATA_ROOT.
Training uses 10000 images and a handful of epochs, so expect several minutes.
"""

import logging

import numpy as np
import pytest

from src.lowpass.cli import main
from src.lowpass.dataio import MNIST_FILES, data_root
from src.lowpass.results import read_csv


def _have_mnist() -> bool:
    root = data_root()
    names = [name for pair in MNIST_FILES.values() for name in pair]
    return all(any(base.joinpath(n).is_file() or base.joinpath(f"{n}.gz").is_file() for base in (root, root / "mnist"))
               for n in names)


pytestmark = pytest.mark.skipif(not _have_mnist(), reason="MNIST files not found under LOWPASS_DATA_ROOT")

TRAIN = ["train", "--dataset", "mnist", "--train-limit", "10000", "--test-limit", "2000",
         "--epochs", "5", "--schedule", "3:0.2", "--seed", "0", "--log-level", "WARNING"]


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def final_test_top1(run_dir) -> float:
    rows = [r for r in read_csv(run_dir / "train_log.csv") if r["split"] == "test"]
    return float(rows[-1]["top1"])


@pytest.fixture(scope="module")
def relu_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("relu")
    assert main(TRAIN + ["--net", "cnn3", "--af", "relu", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fc2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fc2")
    assert main(TRAIN + ["--net", "cnn3_fc2", "--af", "relu", "--out", str(out)]) == 0
    return out


class TestBaseline:

    def test_relu_accuracy(self, relu_run):
        assert final_test_top1(relu_run) >= 0.97

    def test_fc2_keeps_accuracy(self, relu_run, fc2_run):
        assert final_test_top1(fc2_run) >= final_test_top1(relu_run) - 0.005


class TestDecisionSpace:

    def test_map_claims(self, fc2_run, tmp_path):
        csv = tmp_path / "map.csv"
        assert main(["map-decisions", "--ckpt", str(fc2_run / "checkpoint.lprl"),
                     "--out", str(tmp_path / "map.svg"), "--csv", str(csv)]) == 0
        summary = {r["metric"]: float(r["value"]) for r in read_csv(tmp_path / "map_summary.csv")}
        assert summary["ray_constancy"] >= 0.995
        assert summary["max_residual_ratio"] < 0.02
        assert summary["score_rN"] > summary["score_r1"]


class TestReluStatistics:

    @pytest.fixture(scope="class")
    def evaluated(self, relu_run):
        args = ["eval", "--ckpt", str(relu_run / "checkpoint.lprl"), "--only", "shift,hist",
                "--shift-images", "500", "--log-level", "WARNING"]
        assert main(args) == 0
        return relu_run

    def test_feature_shift_decreases_with_severity(self, evaluated):
        rows = [r for r in read_csv(evaluated / "shift.csv") if r["axis"] == "severity"]
        cs = np.array([float(r["CS"]) for r in rows])
        assert np.all(np.diff(cs[1:]) < 0)

    def test_activation_magnitudes(self, evaluated):
        summary = {r["metric"]: float(r["value"]) for r in read_csv(evaluated / "hist_summary.csv")}
        assert summary["mean_hfc"] > summary["mean_clean"] >= summary["mean_lfc"]

    def test_eval_is_deterministic(self, evaluated, tmp_path):
        args = ["eval", "--ckpt", str(evaluated / "checkpoint.lprl"), "--only", "shift,hist",
                "--shift-images", "500", "--out", str(tmp_path), "--log-level", "WARNING"]
        assert main(args) == 0
        for name in ("shift.csv", "hist.csv"):
            assert (tmp_path / name).read_bytes() == (evaluated / name).read_bytes()


ROBUSTNESS_EVAL = ["--only", "metrics,fp,shift", "--kinds", "gaussian_noise", "--severities", "1,2,3,4,5",
                   "--fp-kinds", "gaussian_noise,shot_noise,motion_blur,zoom_blur", "--clips", "200",
                   "--frames", "30", "--shift-kind", "gaussian_noise", "--shift-images", "500",
                   "--log-level", "WARNING"]


def robustness(run_dir, out) -> dict:
    args = ["eval", "--ckpt", str(run_dir / "checkpoint.lprl"), "--out", str(out)] + ROBUSTNESS_EVAL
    assert main(args) == 0
    top1 = {int(r["severity"]): float(r["top1"]) for r in read_csv(out / "metrics.csv")
            if r["kind"] == "gaussian_noise"}
    cs = {int(r["level"]): float(r["CS"]) for r in read_csv(out / "shift.csv") if r["axis"] == "severity"}
    mfp = float(read_csv(out / "fp.csv")[0]["mFP"])
    return {"top1": top1, "cs": cs, "mfp": mfp}


@pytest.fixture(scope="module")
def lp2_dct_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("lp2_dct")
    assert main(TRAIN + ["--net", "cnn3", "--af", "lp_relu2", "--dct", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def compared(relu_run, lp2_dct_run, tmp_path_factory):
    return (robustness(relu_run, tmp_path_factory.mktemp("relu_eval")),
            robustness(lp2_dct_run, tmp_path_factory.mktemp("lp2_dct_eval")))


class TestLowPassRobustness:

    def test_noise_accuracy_margin(self, compared):
        relu, lp2 = compared
        assert lp2["top1"][5] - relu["top1"][5] >= 0.05

    def test_noise_accuracy_dominates(self, compared):
        relu, lp2 = compared
        assert all(lp2["top1"][s] >= relu["top1"][s] for s in (3, 4, 5))

    def test_feature_shift_at_worst_level(self, compared):
        relu, lp2 = compared
        assert lp2["cs"][6] > relu["cs"][6]

    def test_flip_probability(self, compared):
        relu, lp2 = compared
        assert lp2["mfp"] < relu["mfp"]
