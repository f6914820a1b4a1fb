import math

import numpy as np
import pytest

from gwh.errors import ConfigError, HorizonError, MonotonicityError
from gwh.extrema import ExactExponentialLaw
from gwh.gittins import (
    GittinsCurve,
    PayoffSpec,
    build_curve,
    gittins_threshold,
    kappa,
    kappa_evaluator,
    mu,
    representation_check,
)
from gwh.levy import brownian
from gwh.mc import SimConfig
from gwh.payoffs import ConstantFn, ExpFn, LinearFn
from gwh.rng import philox_stream

STD_BM = brownian(0.0, 1.0)
DRIFTED = brownian(-0.5, 1.0)
GOLDEN = 0.5 + math.sqrt(1.25)

LIN = PayoffSpec(LinearFn(0.5), "increasing")  # g = r y at r = 0.5
EXP = PayoffSpec(ExpFn(), "increasing")


class TestKappa:
    def test_linear_payoff(self):
        # E[inf at Exp(0.5)] = -1/sqrt(2 r) = -1 for standard BM.
        assert kappa(LIN, STD_BM, 0.5, 0.0) == pytest.approx(-1.0, abs=1e-12)

    def test_constant_payoff_normalizes(self):
        c0 = 3.7
        p = PayoffSpec(ConstantFn(0.5 * c0), "increasing")
        for x in (-2.0, 0.0, 1.5):
            assert kappa(p, STD_BM, 0.5, x) == pytest.approx(c0, abs=1e-14)

    def test_exp_payoff_closed_form(self):
        # eta = sqrt(2); kappa(0) = eta/(eta + 1).
        got = kappa(EXP, STD_BM, 1.0, 0.0)
        assert got == pytest.approx(math.sqrt(2) / (math.sqrt(2) + 1), abs=1e-12)

    def test_exp_payoff_mc_cross_check(self):
        got = kappa(EXP, STD_BM, 1.0, 0.0)
        rng = philox_stream(21, 0xAB, 0)
        draws = -rng.exponential(1.0 / math.sqrt(2), 1_000_000)
        sample = np.exp(draws)
        se = sample.std(ddof=1) / math.sqrt(len(sample))
        assert abs(got - sample.mean()) <= 4 * se

    def test_direction_enforced(self):
        with pytest.raises(ConfigError):
            kappa(PayoffSpec(LinearFn(-1.0), "decreasing"), STD_BM, 0.5, 0.0)


class TestMu:
    def test_linear_payoff(self):
        # mu(0) = -E[sup at Exp(0.5)] = -1/sqrt(2 r); quadrature oracle below.
        p = PayoffSpec(LinearFn(-0.5), "decreasing")
        got = mu(p, STD_BM, 0.5, 0.0)
        eta = 1.0  # Phi(0.5) for standard BM
        oracle = 2.0 * (-0.5) * (1.0 / eta)  # (1/r) E[-r (x + sup)]
        assert got == pytest.approx(oracle, abs=1e-12)
        # Symmetry oracle: same value as kappa of the mirrored payoff on the dual.
        assert got == pytest.approx(kappa(LIN, STD_BM, 0.5, 0.0), abs=1e-12)

    def test_put_style_payoff(self):
        # g = 2 - e^y, drifted BM; sup ~ Exp(GOLDEN).
        p = PayoffSpec(ExpFn(scale=-1.0, coef=1.0, shift=2.0), "decreasing")
        got = mu(p, DRIFTED, 0.5, 0.0)
        oracle = 2.0 * (2.0 - GOLDEN / (GOLDEN - 1.0))
        assert got == pytest.approx(oracle, abs=1e-10)

    def test_quadrature_oracle(self):
        from scipy.integrate import quad

        p = PayoffSpec(ExpFn(scale=-1.0, coef=1.0, shift=2.0), "decreasing")
        got = mu(p, DRIFTED, 0.5, 0.0)
        val, _ = quad(lambda u: (2.0 - math.exp(u)) * GOLDEN * math.exp(-GOLDEN * u), 0, 60)
        assert got == pytest.approx(val / 0.5, rel=1e-8)


class TestCurve:
    def test_linear_curve_affine(self):
        curve = build_curve(LIN, STD_BM, 0.5, -2.0, 3.0, 101)
        assert np.allclose(curve.values, curve.grid - 1.0, atol=1e-8)

    def test_constant_curve(self):
        p = PayoffSpec(ConstantFn(1.0), "increasing")
        curve = build_curve(p, STD_BM, 0.5, -1.0, 1.0, 11)
        assert np.allclose(curve.values, 2.0, atol=1e-14)

    def test_exp_curve_log_affine(self):
        curve = build_curve(EXP, STD_BM, 1.0, -1.0, 1.0, 41)
        logs = np.log(curve.values)
        assert np.allclose(np.diff(logs), logs[1] - logs[0], atol=1e-8)

    def test_monotonicity_error_on_hidden_kink(self):
        # Increasing on the probe grid yet with a steep decreasing branch far
        # below it: the index becomes non-monotone on the grid.
        def g(y):
            y = np.asarray(y, dtype=float)
            return np.where(y > -3.0, y, -3.0 - 50.0 * (y + 3.0))

        with pytest.raises(MonotonicityError):
            build_curve(PayoffSpec(g, "increasing"), STD_BM, 0.5, -1.0, 1.0, 21)

    def test_direction_probe(self):
        with pytest.raises(ConfigError):
            build_curve(PayoffSpec(LinearFn(1.0), "decreasing"), STD_BM, 0.5, -1, 1, 11)


class TestThreshold:
    def test_affine_root(self):
        curve = build_curve(LIN, STD_BM, 0.5, -2.0, 3.0, 101)
        assert gittins_threshold(curve, 0.0) == pytest.approx(1.0, abs=2e-9)

    def test_sentinels(self):
        curve = build_curve(LIN, STD_BM, 0.5, -2.0, 3.0, 101)
        assert gittins_threshold(curve, -10.0) == -math.inf
        assert gittins_threshold(curve, +10.0) == math.inf

    def test_exp_curve_inversion(self):
        curve = build_curve(EXP, STD_BM, 1.0, -1.0, 1.0, 2001)
        c = float(curve(0.7))
        assert gittins_threshold(curve, c) == pytest.approx(0.7, abs=1e-8)

    def test_threshold_consistency(self):
        curve = build_curve(LIN, STD_BM, 0.5, -2.0, 3.0, 101)
        for c in (-0.7, 0.3, 1.2):
            x = gittins_threshold(curve, c)
            assert float(curve(x)) == pytest.approx(c, abs=1e-7)

    def test_requires_nondecreasing(self):
        p = PayoffSpec(ExpFn(scale=-1.0, shift=2.0), "decreasing")
        curve = build_curve(p, DRIFTED, 0.5, -1.0, 1.0, 21)
        with pytest.raises(ConfigError):
            gittins_threshold(curve, 0.0)


class TestInvariants:
    def test_monotone_in_x(self):
        curve = build_curve(EXP, STD_BM, 1.0, -2.0, 2.0, 101)
        assert np.all(np.diff(curve.values) >= 0)

    def test_translation_covariance(self):
        # Drift-free model, linear g: kappa(x+h) - kappa(x) = h a / r.
        a, r, h = 0.5, 0.5, 0.35
        got = kappa(LIN, STD_BM, r, 1.0 + h) - kappa(LIN, STD_BM, r, 1.0)
        assert got == pytest.approx(h * a / r, abs=1e-8)


class TestKappaEvaluator:
    def test_closed_form_matches_pointwise(self):
        k = kappa_evaluator(EXP, STD_BM, 1.0)
        xs = np.linspace(-1, 2, 7)
        for x in xs:
            assert float(k(x)) == pytest.approx(kappa(EXP, STD_BM, 1.0, float(x)), rel=1e-12)

    def test_curve_backed_fallback(self):
        def g(y):
            y = np.asarray(y, dtype=float)
            return y + 0.1 * np.tanh(y)

        p = PayoffSpec(g, "increasing")
        k = kappa_evaluator(p, STD_BM, 0.5, x_range=(-3.0, 3.0))
        assert float(k(0.5)) == pytest.approx(kappa(p, STD_BM, 0.5, 0.5), abs=1e-5)
        with pytest.raises(ConfigError):
            k(5.0)


class TestRepresentation:
    def test_constant_payoff_exact(self):
        c0 = 1.3
        p = PayoffSpec(ConstantFn(0.5 * c0), "increasing")
        gd, gr = representation_check(p, STD_BM, 0.5, 0.0, replications=256, step=0.01, seed=5)
        # Zero variance up to float rounding; both estimates equal c0 up to
        # the 0.1% horizon tail.
        assert gd.stderr <= 1e-8
        assert gd.mean == pytest.approx(c0, rel=2e-3)
        assert gr.mean == pytest.approx(c0, rel=2e-3)

    def test_geometric_bm_value(self):
        gd, gr = representation_check(
            EXP, STD_BM, 1.0, 0.0, replications=20_000, step=5e-3, seed=9, threads=2
        )
        combined = math.hypot(gd.stderr, gr.stderr)
        assert abs(gd.mean - gr.mean) <= 3 * combined
        assert abs(gd.mean - 2.0) <= 4 * gd.stderr

    def test_horizon_error_when_growth_beats_discount(self):
        with pytest.raises(HorizonError):
            representation_check(EXP, STD_BM, 0.4, 0.0, replications=256, step=0.01, seed=1)
