import math

import numpy as np
import pytest

from hedgenet.analysis import (
    RATE_N_MIN,
    choose_eta,
    estimate_h2,
    estimate_theta,
    fit_rate,
    one_step_profile,
)
from hedgenet.models import bm_constant, gbm_diagonal
from hedgenet.pricing import BMQuadratic, make_pricing

SPEC_GBM = gbm_diagonal(1, 1.0, 1.0)
DIGITAL = make_pricing("digital", {"K": 1.0, "s": 1.0}, 1.0)
SPEC_BM1 = bm_constant(np.eye(1), [0.0])
QUAD1 = BMQuadratic(1, 1.0)


class TestChooseEta:
    def test_below_half(self):
        assert choose_eta(0.25) == 0.0
        assert choose_eta(0.0) == 0.0
        assert choose_eta(0.49) == 0.0

    def test_midpoint_rule(self):
        assert choose_eta(0.75) == 0.75
        assert choose_eta(0.5) == 0.5

    def test_always_admissible(self):
        for theta in np.linspace(0.0, 0.99, 34):
            eta = choose_eta(theta)
            if theta < 0.5:
                assert eta == 0.0
            else:
                assert 2.0 * theta - 1.0 < eta < 1.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            choose_eta(1.0)
        with pytest.raises(ValueError):
            choose_eta(-0.1)


class TestFitRate:
    def test_exact_half_slope(self):
        pts = [(n, n ** -0.5) for n in (8, 16, 32, 64, 128)]
        fit = fit_rate(pts)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0)

    def test_intercept(self):
        pts = [(n, 3.0 * n ** -0.25) for n in (8, 16, 32, 64)]
        fit = fit_rate(pts)
        assert fit.slope == pytest.approx(-0.25, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)

    def test_scale_equivariance(self):
        # log(c * r) != log c + log r bitwise, so equality holds to rounding
        pts = [(8, 0.21), (16, 0.157), (32, 0.11), (64, 0.081), (128, 0.06)]
        base = fit_rate(pts)
        scaled = fit_rate([(n, 7.3 * r) for n, r in pts])
        assert scaled.slope == pytest.approx(base.slope, rel=1e-13)
        assert scaled.intercept == pytest.approx(
            base.intercept + math.log(7.3), rel=1e-12
        )

    def test_drops_small_n(self):
        pts = [(2, 99.0), (4, 99.0)] + [(n, n ** -0.5) for n in (8, 16, 32, 64)]
        fit = fit_rate(pts)
        assert all(n >= RATE_N_MIN for n, _ in fit.points_used)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_rate([(8, 1.0), (16, 0.7), (32, 0.5)])

    def test_degenerate_inputs(self):
        with pytest.raises(ValueError):
            fit_rate([(n, 1.0) for n in (8, 16, 32, 64)])
        with pytest.raises(ValueError):
            fit_rate([(8, 1.0), (16, -0.5), (32, 0.3), (64, 0.2)])


class TestEstimateTheta:
    def test_quadratic_payoff_flat(self):
        fit = estimate_theta(SPEC_BM1, QUAD1, n_paths=100000, master_seed=5)
        assert abs(fit.theta_hat) <= 0.05
        # m(t) = 4 identically: hessian 2, A = 1
        for _, m in fit.grid:
            assert m == pytest.approx(4.0)

    def test_digital(self):
        fit = estimate_theta(SPEC_GBM, DIGITAL, n_paths=50000, master_seed=5)
        assert fit.theta_hat == pytest.approx(0.75, abs=0.1)
        assert fit.ci95[0] < fit.theta_hat < fit.ci95[1]
        assert fit.r2 > 0.99

    def test_rejects_grid_outside_window(self):
        with pytest.raises(ValueError):
            estimate_theta(SPEC_GBM, DIGITAL, t_grid=[0.1, 0.6],
                           n_paths=1000, master_seed=0)

    def test_warns_on_extreme_theta(self):
        from hedgenet.analysis import ThetaFit

        with pytest.warns(UserWarning):
            ThetaFit(theta_hat=1.3, ci95=(1.2, 1.4), grid=(), r2=1.0)


class TestEstimateH2:
    def test_quadratic_constant_four(self):
        curve = estimate_h2(SPEC_BM1, QUAD1, [0.2, 0.5, 0.8], 1000, 5)
        for _, h2, se in curve.points:
            assert h2 == pytest.approx(4.0)
            assert se == pytest.approx(0.0, abs=1e-12)

    def test_digital_positive_infimum(self):
        curve = estimate_h2(
            SPEC_GBM, DIGITAL, np.linspace(0.1, 0.9, 9), 50000, 5
        )
        h2_min, se = curve.infimum()
        assert h2_min - 3.0 * se > 0.0

    def test_nonnegative_up_to_noise(self):
        curve = estimate_h2(SPEC_GBM, DIGITAL, [0.3, 0.6], 20000, 7)
        for _, h2, se in curve.points:
            assert h2 >= -3.0 * se

    def test_diagonal_equivalence_with_pair_sum(self):
        # for diagonal models H^2(u) equals the sum over coordinate pairs of
        # E[A_aa A_bb (d2F_ab)^2] -- same samples, so equality is numerical
        from hedgenet.analysis import _pair_moments, _state_at
        from hedgenet.models import a_matrix

        pr = make_pricing("product", {"factors": [
            {"kind": "call", "K": 1.0, "s": 1.0},
            {"kind": "digital", "K": 1.0, "s": 1.0},
        ]}, 1.0)
        spec = gbm_diagonal(2, 1.0, [1.0, 1.0])
        u = 0.5
        curve = estimate_h2(spec, pr, [u], 20000, 3)
        x = _state_at(spec, u, 20000, 3)
        mean, _ = _pair_moments(spec, pr, u, x)
        assert curve.points[0][1] == pytest.approx(mean.sum(), rel=1e-10)


class TestOneStepProfile:
    def test_u_equals_a_is_zero(self):
        rows = one_step_profile(SPEC_GBM, DIGITAL, 0.5, [0.5], 1000, 0)
        assert rows[0][1] == 0.0

    def test_lhs_nonnegative(self):
        rows = one_step_profile(
            SPEC_GBM, DIGITAL, 0.5, [0.55, 0.7, 0.85], 20000, 1
        )
        assert all(r[1] >= 0.0 for r in rows)

    def test_lhs_bounded_by_fitted_constant_times_integral(self):
        rows = one_step_profile(
            SPEC_GBM, DIGITAL, 0.5, [0.55, 0.6, 0.7, 0.8, 0.9], 30000, 1
        )
        u0, lhs0, _, rhs0 = rows[0]
        c = lhs0 / rhs0
        for u, lhs, _, rhs in rows[1:]:
            assert lhs <= 10.0 * c * rhs

    def test_short_interval_density_limit(self):
        # LHS/(u-a) approaches H^2(a) for u - a = 1e-3
        a = 0.5
        rows = one_step_profile(SPEC_GBM, DIGITAL, a, [a + 1e-3], 50000, 2)
        _, lhs, lhs_se, _ = rows[0]
        h2 = estimate_h2(SPEC_GBM, DIGITAL, [a], 50000, 2).points[0]
        density = lhs / 1e-3
        density_se = lhs_se / 1e-3
        assert abs(density - h2[1]) < 3.0 * (density_se + h2[2])

    def test_rejects_u_before_a(self):
        with pytest.raises(ValueError):
            one_step_profile(SPEC_GBM, DIGITAL, 0.5, [0.4], 100, 0)
