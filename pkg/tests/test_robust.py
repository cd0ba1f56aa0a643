"""M-estimator losses, derivatives, and IRLS weights."""

import math

import numpy as np
import pytest

from gnssfgo.robust import KernelKind, RobustKernel, irls_weight, loss

CAUCHY_1 = RobustKernel(KernelKind.CAUCHY, k=1.0)
HUBER_2 = RobustKernel(KernelKind.HUBER, k=2.0)
QUADRATIC = RobustKernel(KernelKind.NONE)


class TestLossValues:
    def test_cauchy_unit_k_at_residual_fifty(self):
        value, _, _ = loss(CAUCHY_1, 50.0 ** 2)
        assert value == pytest.approx(0.5 * math.log(2501.0), abs=1e-12)
        assert value == pytest.approx(3.912, abs=0.5)

    def test_huber_k_two_at_residual_fifty(self):
        value, _, _ = loss(HUBER_2, 50.0 ** 2)
        assert value == pytest.approx(2.0 * (50.0 - 1.0), abs=1e-12)
        assert value == pytest.approx(98.0, abs=2.0)

    @pytest.mark.parametrize("kernel", [QUADRATIC, HUBER_2, CAUCHY_1])
    def test_zero_residual_gives_zero_loss(self, kernel):
        value, first, second = loss(kernel, 0.0)
        assert value == 0.0
        assert first == pytest.approx(0.5)

    @pytest.mark.parametrize("kernel", [HUBER_2, CAUCHY_1])
    def test_quadratic_near_origin(self, kernel):
        s = 1e-8
        value, _, _ = loss(kernel, s)
        assert value == pytest.approx(0.5 * s, rel=1e-6)

    def test_huber_value_and_slope_continuous_at_transition(self):
        k2 = HUBER_2.k ** 2
        below = loss(HUBER_2, k2 * (1 - 1e-12))
        above = loss(HUBER_2, k2 * (1 + 1e-12))
        assert below[0] == pytest.approx(above[0], abs=1e-9)
        assert below[1] == pytest.approx(above[1], abs=1e-9)

    def test_negative_squared_norm_is_rejected(self):
        with pytest.raises(ValueError):
            loss(QUADRATIC, -1.0)


class TestDerivatives:
    @pytest.mark.parametrize("kernel", [QUADRATIC, HUBER_2, CAUCHY_1,
                                        RobustKernel(KernelKind.CAUCHY, 3.0),
                                        RobustKernel(KernelKind.HUBER, 0.5)])
    @pytest.mark.parametrize("s", [0.01, 0.5, 1.0, 4.0, 25.0, 2500.0])
    def test_first_and_second_derivatives_match_finite_differences(
            self, kernel, s):
        h = 1e-4 * max(s, 1.0)
        if kernel.kind is KernelKind.HUBER and abs(s - kernel.k ** 2) < 2 * h:
            pytest.skip("finite difference straddles the Huber transition")
        value_m, _, _ = loss(kernel, s - h)
        value, first, second = loss(kernel, s)
        value_p, _, _ = loss(kernel, s + h)
        fd_first = (value_p - value_m) / (2 * h)
        fd_second = (value_p - 2 * value + value_m) / (h * h)
        assert first == pytest.approx(fd_first, rel=1e-5, abs=1e-9)
        assert second == pytest.approx(fd_second, rel=1e-3, abs=1e-7)

    @pytest.mark.parametrize("kernel", [QUADRATIC, HUBER_2, CAUCHY_1])
    @pytest.mark.parametrize("e", [0.0, 0.3, 1.0, 2.0, 7.0, 50.0])
    def test_irls_weight_equals_twice_first_derivative(self, kernel, e):
        _, first, _ = loss(kernel, e * e)
        assert irls_weight(kernel, e) == pytest.approx(2.0 * first, abs=1e-14)


class TestIrlsWeights:
    def test_quadratic_weight_is_always_one(self):
        for e in (0.0, 1.0, 1e6):
            assert irls_weight(QUADRATIC, e) == 1.0

    def test_huber_weight_examples(self):
        assert irls_weight(HUBER_2, 1.0) == 1.0
        assert irls_weight(HUBER_2, 50.0) == pytest.approx(0.04)

    def test_cauchy_weight_examples(self):
        assert irls_weight(CAUCHY_1, 0.0) == 1.0
        assert irls_weight(CAUCHY_1, 50.0) == pytest.approx(1.0 / 2501.0)

    def test_cauchy_decays_faster_than_huber(self):
        huber = RobustKernel(KernelKind.HUBER, 1.0)
        cauchy = RobustKernel(KernelKind.CAUCHY, 1.0)
        for e in (5.0, 20.0, 100.0):
            assert irls_weight(cauchy, e) < irls_weight(huber, e)

    def test_negative_residual_norm_is_rejected(self):
        with pytest.raises(ValueError):
            irls_weight(CAUCHY_1, -0.1)


class TestKernelConstruction:
    def test_parse_accepts_case_insensitive_names(self):
        assert RobustKernel.parse("Cauchy", 2.0) == RobustKernel(
            KernelKind.CAUCHY, 2.0)
        assert RobustKernel.parse(" none ").kind is KernelKind.NONE

    def test_parse_rejects_unknown_names(self):
        with pytest.raises(ValueError, match="unknown kernel"):
            RobustKernel.parse("tukey")

    def test_non_positive_parameter_is_rejected(self):
        with pytest.raises(ValueError):
            RobustKernel(KernelKind.HUBER, 0.0)
        with pytest.raises(ValueError):
            RobustKernel(KernelKind.CAUCHY, -1.0)

    def test_kind_must_be_enum_member(self):
        with pytest.raises(TypeError):
            RobustKernel("cauchy", 1.0)
