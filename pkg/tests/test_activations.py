"""Tests for the activation catalog: values, slopes, init and projection."""

import numpy as np
import pytest

from src.lowpass.activations import (
    PARAM_NAMES, af_derivative, af_forward, af_init, af_param_grads, af_project_constraints,
    breakpoints, check_spec, derive_cutoffs, parse_af_params,
)
from src.lowpass.config import ACTIVATION_KINDS, DEFAULT_LEARNABLE
from src.lowpass.errors import ActivationError
from src.lowpass.layers import ActivationLayer, forward, project_constraints
from src.lowpass.models import ActivationSpec
from src.lowpass.tensor import Tensor, backward

XS = np.linspace(-10.0, 12.0, 441)


def lp2(**kw):
    values = {"A": 5.0, "B": 8.1, "alpha": 0.05, "beta": 0.05 / 3}
    values.update(kw)
    return ActivationSpec(kind="lp_relu2", learnable=dict(DEFAULT_LEARNABLE["lp_relu2"]), **values)


def away_from_breakpoints(spec, xs=XS, margin=1e-3):
    keep = np.ones(len(xs), dtype=bool)
    for b in breakpoints(spec):
        keep &= np.abs(xs - b) > margin
    return xs[keep]


def relative_error(a, b):
    return np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-6)


def uniform_points(spec, n=2000, margin=1e-3):
    xs = np.random.default_rng(0).uniform(-10.0, 12.0, n)
    return away_from_breakpoints(spec, xs, margin=margin)


class TestForward:

    def test_lp_relu1_identity_branch(self):
        assert float(af_forward(af_init("lp_relu1"), 3.0)) == 3.0

    def test_lp_relu1_tail(self):
        assert float(af_forward(af_init("lp_relu1"), 10.0)) == pytest.approx(6.2)

    def test_lp_relu2_tail(self):
        assert float(af_forward(lp2(), 10.0)) == pytest.approx(5.18667, abs=1e-5)

    def test_clipped_relu_saturates(self):
        assert float(af_forward(af_init("clipped_relu"), 8.0)) == 6.0

    def test_tent_peak(self):
        assert float(af_forward(af_init("tent"), 0.0)) == 1.0

    def test_swish_beta_zero_is_half_linear(self):
        assert float(af_forward(af_init("swish", beta=0.0), 4.0)) == pytest.approx(2.0)

    def test_log_tail_continuous_at_cutoff(self):
        spec = af_init("log_tailed_relu")
        assert float(af_forward(spec, 6.0 + 1e-9)) == pytest.approx(6.0, abs=1e-8)

    def test_lp_relu1_alpha_one_is_relu(self):
        spec = af_init("lp_relu1", alpha=1.0)
        assert np.allclose(af_forward(spec, XS), np.maximum(XS, 0.0))

    def test_lp_relu1_alpha_zero_is_clipped_relu(self):
        spec = af_init("lp_relu1", alpha=0.0)
        assert np.allclose(af_forward(spec, XS), af_forward(af_init("clipped_relu", A=6.0), XS))

    @pytest.mark.parametrize("kind", ACTIVATION_KINDS)
    def test_continuous(self, kind):
        spec = af_init(kind)
        for b in breakpoints(spec):
            left, right = af_forward(spec, [b - 1e-9, b + 1e-9])
            assert left == pytest.approx(right, abs=1e-7)

    def test_lp_relu2_bounded_beyond_b(self):
        spec = lp2()
        f_b = af_forward(spec, spec.B)
        xs = np.linspace(spec.B, 1000.0, 200)
        assert np.all(af_forward(spec, xs) <= f_b + spec.beta * (xs - spec.B) + 1e-9)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ActivationError, match="A < B"):
            af_forward(lp2(A=9.0, B=8.0), 1.0)
        with pytest.raises(ActivationError, match="alpha > beta"):
            af_forward(lp2(beta=0.1), 1.0)
        with pytest.raises(ActivationError, match="delta"):
            af_forward(ActivationSpec(kind="tent", delta=0.0), 1.0)


class TestDerivatives:

    @pytest.mark.parametrize("kind", ACTIVATION_KINDS)
    def test_matches_finite_differences(self, kind):
        spec = af_init(kind)
        xs = away_from_breakpoints(spec)
        h = 1e-6
        numeric = (af_forward(spec, xs + h) - af_forward(spec, xs - h)) / (2 * h)
        assert np.allclose(af_derivative(spec, xs), numeric, atol=1e-5)

    @pytest.mark.parametrize("kind", ACTIVATION_KINDS)
    def test_matches_finite_differences_at_random_points(self, kind):
        spec = af_init(kind)
        xs = uniform_points(spec)
        assert len(xs) >= 1000
        h = 1e-4
        numeric = (af_forward(spec, xs + h) - af_forward(spec, xs - h)) / (2 * h)
        assert np.all(relative_error(af_derivative(spec, xs), numeric) < 1e-4)

    def test_right_hand_slope_at_breakpoints(self):
        spec = lp2()
        assert list(af_derivative(spec, [0.0, 5.0, 8.1])) == [1.0, spec.alpha, spec.beta]

    @pytest.mark.parametrize("kind", ["lp_relu1", "lp_relu2", "leaky_relu", "p_relu",
                                      "clipped_relu", "log_tailed_relu", "tent", "swish"])
    def test_param_grads_match_finite_differences(self, kind):
        spec = af_init(kind)
        xs = uniform_points(spec, margin=1e-2)
        assert len(xs) >= 1000
        grads = af_param_grads(spec, xs)
        h = 1e-4
        for name in PARAM_NAMES[kind]:
            value = getattr(spec, name)
            up = af_forward(spec.model_copy(update={name: value + h}), xs)
            down = af_forward(spec.model_copy(update={name: value - h}), xs)
            assert np.all(relative_error(grads[name], (up - down) / (2 * h)) < 1e-4), name

    def test_layer_backward_reaches_parameters(self):
        layer = ActivationLayer(af_init("lp_relu2"))
        x = Tensor(np.array([-1.0, 2.0, 6.0, 9.0]), requires_grad=True)
        backward(forward([layer], x).sum())
        grads = {name: float(t.grad) for name, t in layer.params.items()}
        assert grads["A"] == pytest.approx(2 * (1 - 0.05))
        assert grads["B"] == pytest.approx(0.05 - 0.05 / 3)
        assert grads["beta"] == pytest.approx(9.0 - 8.1)
        assert np.array_equal(x.grad, [0.0, 1.0, 0.05, 0.05 / 3])


class TestInit:

    def test_lp_relu2(self):
        spec = af_init("lp_relu2")
        assert (spec.A, spec.B, spec.alpha) == (5.0, 8.1, 0.05)
        assert spec.beta == pytest.approx(0.016667, abs=1e-6)

    def test_lp_relu1(self):
        spec = af_init("lp_relu1")
        assert (spec.A, spec.alpha) == (6.0, 0.05)

    def test_leaky(self):
        assert af_init("leaky_relu").alpha == 0.01

    def test_alpha_override_moves_beta(self):
        spec = af_init("lp_relu2", alpha=0.09)
        assert spec.beta == pytest.approx(0.03)

    def test_learnable_mask(self):
        assert af_init("lp_relu1").learnable_names() == ["A"]
        assert af_init("lp_relu1", learnable={"alpha": True}).learnable_names() == ["A", "alpha"]

    def test_unknown_kind(self):
        with pytest.raises(ActivationError, match="Invalid activation"):
            af_init("gelu")

    def test_unknown_parameter(self):
        with pytest.raises(ActivationError, match="no parameter"):
            af_init("relu", alpha=0.1)

    def test_cutoffs_from_histograms(self):
        stats = {
            "edges": np.linspace(0.0, 10.0, 11),
            "clean": np.array([50, 30, 15, 4, 1, 0, 0, 0, 0, 0], dtype=float),
            "hfc": np.full(10, 10.0),
        }
        assert derive_cutoffs(stats) == pytest.approx((4.0, 5.0))
        spec = af_init("lp_relu2", dataset_stats=stats)
        assert (spec.A, spec.B) == pytest.approx((4.0, 5.0))


class TestProjection:

    def test_restores_cutoff_order(self):
        spec = af_project_constraints(lp2(A=8.0, B=7.9))
        assert spec.A == 8.0
        assert spec.B == pytest.approx(8.1)

    def test_clamps_alpha(self):
        spec = af_init("lp_relu1", learnable={"alpha": True}).model_copy(update={"alpha": 1.2})
        spec = af_project_constraints(spec)
        assert spec.alpha == pytest.approx(1.0 - 1e-3)

    def test_fixed_alpha_one_is_kept(self):
        spec = af_init("lp_relu1", alpha=1.0)
        assert af_project_constraints(spec) is spec
        layer = ActivationLayer(spec)
        layer.params["A"].data = np.asarray(-2.0)
        project_constraints([layer])
        assert layer.spec.alpha == 1.0
        assert layer.spec.A == 0.0

    def test_fixed_parameters_untouched(self):
        spec = lp2(A=8.0, B=7.9).model_copy(update={"learnable": {"A": True, "alpha": True}})
        assert af_project_constraints(spec) is spec

    def test_valid_spec_unchanged(self):
        spec = lp2()
        assert af_project_constraints(spec) is spec

    def test_idempotent(self):
        once = af_project_constraints(lp2(A=-1.0, alpha=2.0, beta=3.0))
        check_spec(once)
        assert af_project_constraints(once) is once


class TestParseParams:

    def test_pairs(self):
        assert parse_af_params("A=5, B=8.1") == {"A": 5.0, "B": 8.1}

    def test_empty(self):
        assert parse_af_params("") == {}

    def test_missing_equals(self):
        with pytest.raises(ActivationError, match="expected k=v"):
            parse_af_params("A5")

    def test_bad_number(self):
        with pytest.raises(ActivationError, match="Bad value"):
            parse_af_params("A=five")
