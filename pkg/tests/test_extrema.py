import math

import numpy as np
import pytest

from gwh.errors import IntegrabilityError, SimulationBudgetError
from gwh.extrema import (
    EmpiricalLaw,
    ExactExponentialLaw,
    ScaleFunctionLaw,
    expected_functional,
    infimum_law,
    normalization,
    scale_function,
    supremum_law,
)
from gwh.levy import (
    CompoundPoisson,
    ExponentialDown,
    ExponentialUp,
    LevyModel,
    TwoSidedExponential,
    brownian,
    dual_model,
    laplace_exponent,
    phi_right_inverse,
)
from gwh.mc import SimConfig, ks_distance, sample_extremum_at_exp_time
from gwh.payoffs import ConstantFn, ExpFn, LinearFn
from gwh.rng import philox_stream

GOLDEN = 0.5 + math.sqrt(1.25)

STD_BM = brownian(0.0, 1.0)
DRIFTED = brownian(-0.5, 1.0)
SN_JUMPS = LevyModel(0.1, 1.0, CompoundPoisson(0.7, ExponentialDown(1.5)))
SP_JUMPS = LevyModel(-0.2, 1.0, CompoundPoisson(0.7, ExponentialUp(1.5)))
TWO_SIDED = LevyModel(0.0, 0.8, CompoundPoisson(1.0, TwoSidedExponential(2.0, 2.5, 0.5)))


def wh_inf_transform(model, r, beta):
    """E[exp(beta * inf X_{T(r)})] for spectrally negative models, closed form."""
    phi = phi_right_inverse(model, r)
    return r * (beta - phi) / (phi * (laplace_exponent(model, beta) - r))


class TestExactLaws:
    def test_std_bm_infimum_is_exp1(self):
        law = infimum_law(STD_BM, 0.5)
        assert isinstance(law, ExactExponentialLaw)
        assert law.side == "inf"
        assert law.rate == pytest.approx(1.0, abs=1e-12)

    def test_drifted_supremum_rate_is_phi(self):
        law = supremum_law(DRIFTED, 0.5)
        assert isinstance(law, ExactExponentialLaw)
        assert law.rate == pytest.approx(GOLDEN, abs=1e-10)

    def test_sp_jump_model_has_exact_infimum(self):
        law = infimum_law(SP_JUMPS, 0.5)
        assert isinstance(law, ExactExponentialLaw)
        dual_phi = phi_right_inverse(dual_model(SP_JUMPS), 0.5)
        assert law.rate == pytest.approx(dual_phi)


class TestExpectedFunctional:
    def test_exp_closed_form(self):
        law = ExactExponentialLaw("inf", 1.0)
        assert expected_functional(law, ExpFn()) == pytest.approx(0.5, abs=1e-14)

    def test_normalization_constant(self):
        for law in (ExactExponentialLaw("inf", 2.3), ExactExponentialLaw("sup", 0.7)):
            assert expected_functional(law, ConstantFn(1.0)) == 1.0

    def test_exponential_mean(self):
        law = ExactExponentialLaw("inf", 2.0)
        assert expected_functional(law, LinearFn(1.0)) == pytest.approx(-0.5, abs=1e-14)

    def test_quadrature_matches_closed_form(self):
        law = ExactExponentialLaw("inf", 1.7)
        got = expected_functional(law, lambda y: math.exp(y))
        assert got == pytest.approx(1.7 / 2.7, abs=1e-8)

    def test_quadratic_moment(self):
        # E[(x + S)^2] with S = -Exp(eta): second moment 2/eta^2.
        eta = 1.3
        law = ExactExponentialLaw("inf", eta)
        got = expected_functional(law, lambda y: (0.4 + y) ** 2)
        exact = 0.4**2 - 2 * 0.4 / eta + 2 / eta**2
        assert got == pytest.approx(exact, abs=1e-8)

    def test_integrability_error_exp_at_rate(self):
        law = ExactExponentialLaw("sup", 1.5)
        with pytest.raises(IntegrabilityError):
            expected_functional(law, ExpFn(coef=1.5))
        with pytest.raises(IntegrabilityError):
            expected_functional(law, lambda y: np.exp(2.0 * y))

    @pytest.mark.parametrize(
        "f,exact",
        [
            (LinearFn(1.0), lambda eta: -1.0 / eta),
            (ExpFn(), lambda eta: eta / (eta + 1.0)),
            (lambda y: np.minimum((y + 1.0) ** 2, 25.0), None),  # clipped quadratic
        ],
    )
    def test_mc_agreement(self, f, exact):
        eta = 1.0
        law = ExactExponentialLaw("inf", eta)
        val = expected_functional(law, f)
        rng = philox_stream(11, 0xE5, 0)
        draws = -rng.exponential(1.0 / eta, 1_000_000)
        sample = np.asarray(f(draws))
        se = sample.std(ddof=1) / math.sqrt(len(sample))
        assert abs(val - sample.mean()) <= 4 * se
        if exact is not None:
            assert val == pytest.approx(exact(eta), abs=1e-10)


class TestScaleFunction:
    def test_bm_closed_form(self):
        tab = scale_function(STD_BM, 0.5, 8.0, 513)
        x = tab.grid
        exact = np.exp(x) - np.exp(-x)
        rel = np.abs(tab.w_values[1:] - exact[1:]) / exact[1:]
        assert rel.max() < 1e-8

    def test_bm_transform_value(self):
        # integral of e^{-2x} W(x) must equal 1/(psi(2) - 0.5) = 1/1.5.
        from scipy import integrate

        tab = scale_function(STD_BM, 0.5, 12.0, 1025)
        val = integrate.simpson(np.exp(-2 * tab.grid) * tab.w_values, x=tab.grid)
        assert val == pytest.approx(1.0 / 1.5, rel=1e-4)

    def test_w_zero_and_monotone(self):
        for model in (STD_BM, SN_JUMPS):
            tab = scale_function(model, 0.5, 6.0, 257)
            assert tab.w_values[0] == 0.0
            assert np.all(np.diff(tab.w_values) >= 0)


class TestScaleLaw:
    def test_normalization(self):
        law = infimum_law(SN_JUMPS, 0.5)
        assert isinstance(law, ScaleFunctionLaw)
        assert abs(normalization(law) - 1.0) <= 1e-8

    def test_exp_functional_matches_wh_transform(self):
        r = 0.5
        law = infimum_law(SN_JUMPS, r)
        got = expected_functional(law, ExpFn())
        assert got == pytest.approx(wh_inf_transform(SN_JUMPS, r, 1.0), rel=1e-5)

    def test_mean_matches_wh_derivative(self):
        r = 0.5
        law = infimum_law(SN_JUMPS, r)
        eps = 1e-5
        exact = (wh_inf_transform(SN_JUMPS, r, eps) - wh_inf_transform(SN_JUMPS, r, -eps)) / (
            2 * eps
        )
        assert expected_functional(law, LinearFn(1.0)) == pytest.approx(exact, rel=1e-5)

    def test_sp_supremum_via_dual(self):
        r = 0.5
        law = supremum_law(SP_JUMPS, r)
        assert isinstance(law, ScaleFunctionLaw)
        got = expected_functional(law, ExpFn(coef=0.3))
        exact = wh_inf_transform(dual_model(SP_JUMPS), r, -0.3)
        assert got == pytest.approx(exact, rel=1e-5)
        assert abs(normalization(law) - 1.0) <= 1e-8


class TestEmpiricalLaw:
    def test_two_sided_builds_empirical(self):
        law = infimum_law(TWO_SIDED, 0.5, sim=SimConfig(reps=4000, step=5e-3, seed=1))
        assert isinstance(law, EmpiricalLaw)
        assert np.all(law.samples <= 1e-12)

    def test_budget_error(self):
        with pytest.raises(SimulationBudgetError):
            infimum_law(TWO_SIDED, 0.5, sim=SimConfig(reps=50, step=1e-2, seed=1, min_paths=100))

    def test_self_consistency_two_seeds(self):
        r = 0.5
        a = supremum_law(TWO_SIDED, r, sim=SimConfig(reps=20_000, step=2e-3, seed=3))
        b = supremum_law(TWO_SIDED, r, sim=SimConfig(reps=20_000, step=2e-3, seed=4))
        ea = expected_functional(a, LinearFn(1.0))
        eb = expected_functional(b, LinearFn(1.0))
        se = math.hypot(ea.stderr, eb.stderr)
        assert abs(ea.mean - eb.mean) <= 3 * se

    def test_expected_functional_returns_estimate(self):
        law = infimum_law(TWO_SIDED, 0.5, sim=SimConfig(reps=2000, step=5e-3, seed=2))
        est = expected_functional(law, ExpFn())
        assert est.stderr > 0 and est.n == 2000


class TestSimulatedExtremaKS:
    def test_std_bm_infimum_ks(self):
        # Exact law of -inf at Exp(0.5) time is Exp(1).
        n = 30_000
        samples = sample_extremum_at_exp_time(STD_BM, 0.5, "inf", n, 1e-3, seed=5)
        law = ExactExponentialLaw("inf", phi_right_inverse(dual_model(STD_BM), 0.5))
        assert ks_distance(samples, law.cdf) <= 0.02

    def test_sp_jump_infimum_ks(self):
        # Spectrally positive jump model: the infimum side is exact.
        n = 30_000
        samples = sample_extremum_at_exp_time(SP_JUMPS, 0.5, "inf", n, 1e-3, seed=6)
        law = infimum_law(SP_JUMPS, 0.5)
        assert ks_distance(samples, law.cdf) <= 0.02

    def test_duality_sup_vs_dual_inf(self):
        # sup of X and -inf of -X agree in law; exact kinds share the rate.
        sup = supremum_law(DRIFTED, 0.5)
        inf_dual = infimum_law(dual_model(DRIFTED), 0.5)
        assert sup.rate == pytest.approx(inf_dual.rate, abs=1e-12)

    def test_duality_empirical(self):
        r = 0.5
        a = supremum_law(TWO_SIDED, r, sim=SimConfig(reps=20_000, step=2e-3, seed=7))
        b = infimum_law(dual_model(TWO_SIDED), r, sim=SimConfig(reps=20_000, step=2e-3, seed=8))
        # Compare -inf sample of the dual against the sup sample by KS.
        neg = np.sort(-b.samples)
        ks = _two_sample_ks(a.samples, neg)
        assert ks <= 0.02


def _two_sample_ks(x, y):
    data = np.concatenate([x, y])
    data.sort()
    fx = np.searchsorted(np.sort(x), data, side="right") / len(x)
    fy = np.searchsorted(np.sort(y), data, side="right") / len(y)
    return float(np.abs(fx - fy).max())
