import numpy as np
import pytest
from scipy.stats import norm

from hedgenet.hedging import HedgeExperiment, estimate_l2_error
from hedgenet.models import bm_constant, gbm_diagonal
from hedgenet.oracle import (
    analytic_quadratic_error,
    mc_payoff_expectation,
    pde_residual,
)
from hedgenet.pricing import BMQuadratic, make_pricing
from hedgenet.timenets import EtaNetParams, TimeNet, equidistant_net, eta_net

SPEC_GBM = gbm_diagonal(1, 1.0, 1.0)


class TestPdeResidual:
    def test_quadratic_near_exact(self):
        spec = bm_constant(np.eye(1), [0.5])
        r = pde_residual(spec, BMQuadratic(1, 1.0), 0.5, [0.5])
        assert r.relative <= 1e-8

    def test_digital_closed_form(self):
        r = pde_residual(SPEC_GBM, make_pricing("digital", {}, 1.0), 0.5, [1.0])
        assert r.relative <= 1e-4

    def test_product_d3(self):
        pr = make_pricing("product", {"factors": [
            {"kind": "call", "K": 1.0, "s": 1.0},
            {"kind": "power", "K": 1.0, "alpha": 0.25, "s": 1.0},
            {"kind": "digital", "K": 1.0, "s": 1.0},
        ]}, 1.0)
        spec = gbm_diagonal(3, 1.0, np.ones(3))
        r = pde_residual(spec, pr, 0.5, [1.0, 1.0, 1.0])
        assert r.relative <= 1e-3

    @pytest.mark.parametrize("key,params,tol", [
        ("digital", {"K": 1.0, "s": 1.0}, 1e-4),
        ("call", {"K": 1.0, "s": 1.0}, 1e-4),
        ("power", {"K": 1.0, "alpha": 0.25, "s": 1.0}, 1e-3),
    ])
    def test_random_bulk_points(self, key, params, tol):
        pr = make_pricing(key, params, 1.0)
        rng = np.random.default_rng(hash(key) % 2**32)
        for _ in range(50):
            t = rng.uniform(0.05, 0.95)
            x = rng.uniform(0.3, 4.0, 1)
            r = pde_residual(SPEC_GBM, pr, t, x)
            assert r.relative <= tol, (t, x, r.relative)

    def test_sum_digital_bulk(self):
        pr = make_pricing("sum_digital_2d", {"K": 2.0}, 1.0)
        spec = gbm_diagonal(2, 1.0, [1.0, 1.0])
        rng = np.random.default_rng(4)
        for _ in range(20):
            t = rng.uniform(0.05, 0.95)
            x = rng.uniform(0.5, 2.5, 2)
            r = pde_residual(spec, pr, t, x)
            assert r.relative <= 1e-3, (t, x, r.relative)

    def test_rejects_boundary_time(self):
        with pytest.raises(ValueError):
            pde_residual(SPEC_GBM, make_pricing("digital", {}, 1.0), 0.999, [1.0])


class TestAnalyticQuadraticError:
    def test_examples(self):
        assert analytic_quadratic_error(TimeNet(1.0, np.array([0.0, 1.0])), 1, 1.0) == 2.0
        assert analytic_quadratic_error(equidistant_net(1.0, 4), 1, 1.0) == \
            pytest.approx(0.5)
        net = TimeNet(1.0, np.array([0.0, 0.75, 1.0]))
        assert analytic_quadratic_error(net, 2, 1.0) == pytest.approx(2.5)

    def test_mc_validation_n1(self):
        # the formula's base case against a large direct MC
        from hedgenet.rng import normals

        z = normals(2024, np.arange(1_000_000), 0, 1)[:, 0]
        err = z * z - 1.0
        m = (err * err).mean()
        se = (err * err).std(ddof=1) / 1000.0
        assert abs(m - 2.0) < 3.0 * se

    @pytest.mark.parametrize("eta", [None, 0.5])
    @pytest.mark.parametrize("n", [1, 4, 16])
    def test_agrees_with_engine(self, eta, n):
        net = (equidistant_net(1.0, n) if eta is None
               else eta_net(EtaNetParams(1.0, n, eta)))
        spec = bm_constant(np.eye(1), [0.0])
        est = estimate_l2_error(
            HedgeExperiment(spec, BMQuadratic(1, 1.0), net, 50000, 8)
        )["terminal"]
        cf = analytic_quadratic_error(net, 1, 1.0)
        assert abs(est.mean_sq - cf) < 3.0 * est.stderr_mean_sq

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            analytic_quadratic_error(equidistant_net(2.0, 4), 1, 1.0)


class TestMcPayoffExpectation:
    def test_digital(self):
        pr = make_pricing("digital", {"K": 1.0, "s": 1.0}, 1.0)
        m, se = mc_payoff_expectation(SPEC_GBM, pr, 100000, 12)
        assert abs(m - norm.cdf(-0.5)) < 3.0 * se

    def test_zero_strike_call_martingale(self):
        m, se = mc_payoff_expectation(
            SPEC_GBM, lambda x: x[:, 0], 100000, 12, T=1.0
        )
        assert abs(m - 1.0) < 3.0 * se

    def test_product_factorizes(self):
        pr = make_pricing("product", {"factors": [
            {"kind": "call", "K": 1.0, "s": 1.0},
            {"kind": "digital", "K": 1.0, "s": 1.0},
        ]}, 1.0)
        spec = gbm_diagonal(2, 1.0, [1.0, 1.0])
        m, se = mc_payoff_expectation(spec, pr, 200000, 12)
        prod = pr.value(0.0, np.array([[1.0, 1.0]]))[0]
        assert abs(m - prod) < 3.0 * se

    def test_catalogue_values_match_mc(self):
        cases = [
            ("call", {"K": 1.0, "s": 1.0}, SPEC_GBM),
            ("power", {"K": 1.0, "alpha": 0.25, "s": 1.0}, SPEC_GBM),
            ("sum_digital_2d", {"K": 2.0}, gbm_diagonal(2, 1.0, [1.0, 1.0])),
        ]
        for key, params, spec in cases:
            pr = make_pricing(key, params, 1.0)
            m, se = mc_payoff_expectation(spec, pr, 1_000_000, 99)
            v = pr.value(0.0, np.asarray([spec.x0]))[0]
            assert abs(v - m) < 3.0 * se, key
