import math

import numpy as np
import pytest

from gwh.errors import ConfigError, DomainError, MonotonePathsError
from gwh.levy import (
    CompoundPoisson,
    ExponentialDown,
    ExponentialUp,
    LevyModel,
    PointMass,
    TwoSidedExponential,
    ZERO,
    brownian,
    difference_model,
    dual_model,
    esscher_tilt,
    laplace_exponent,
    phi_right_inverse,
    simulate_path,
)

GOLDEN = 0.5 + math.sqrt(1.25)  # positive root of b^2 - b - 1 = 0

MODELS = [
    brownian(0.0, 1.0),
    brownian(-0.5, 1.0),
    brownian(0.3, 0.7),
    LevyModel(0.0, 0.0, CompoundPoisson(1.0, ExponentialUp(2.0))),
    LevyModel(-1.0, 1.0, CompoundPoisson(0.5, ExponentialDown(1.5))),
    LevyModel(0.1, 0.5, CompoundPoisson(2.0, TwoSidedExponential(3.0, 2.0, 0.4))),
    LevyModel(0.0, 1.0, CompoundPoisson(1.0, PointMass(0.5))),
]


def _domain_grid(model, n=9):
    lo, hi = model.mgf_domain()
    lo = max(lo, -4.0) + 0.2
    hi = min(hi, 4.0) - 0.2
    return np.linspace(lo, hi, n)


class TestLaplaceExponent:
    def test_standard_bm(self):
        assert laplace_exponent(brownian(0, 1), 1.0) == pytest.approx(0.5, abs=0)

    def test_drifted_bm_cancels(self):
        assert laplace_exponent(brownian(-1, 1), 2.0) == pytest.approx(0.0, abs=1e-15)

    def test_compound_poisson(self):
        m = LevyModel(0.0, 0.0, CompoundPoisson(1.0, ExponentialUp(2.0)))
        assert laplace_exponent(m, 1.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("model", MODELS)
    def test_psi_zero_is_zero(self, model):
        assert laplace_exponent(model, 0.0) == 0.0

    @pytest.mark.parametrize("model", MODELS)
    def test_convexity(self, model):
        c = _domain_grid(model, 21)
        h = c[1] - c[0]
        psi = np.array([laplace_exponent(model, ci) for ci in c])
        second = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / h**2
        assert np.all(second >= -1e-8)

    def test_domain_error(self):
        m = LevyModel(0.0, 0.0, CompoundPoisson(1.0, ExponentialUp(2.0)))
        with pytest.raises(DomainError):
            laplace_exponent(m, 2.0)
        with pytest.raises(DomainError):
            laplace_exponent(m, 3.0)


class TestPhiRightInverse:
    def test_standard_bm_r2(self):
        assert phi_right_inverse(brownian(0, 1), 2.0) == pytest.approx(2.0, abs=1e-10)

    def test_standard_bm_r_half(self):
        assert phi_right_inverse(brownian(0, 1), 0.5) == pytest.approx(1.0, abs=1e-10)

    def test_negative_drift_quadratic_root(self):
        phi = phi_right_inverse(brownian(-0.5, 1.0), 0.5)
        assert phi == pytest.approx(GOLDEN, abs=1e-10)
        assert abs(laplace_exponent(brownian(-0.5, 1.0), phi) - 0.5) <= 1e-10

    @pytest.mark.parametrize("model", [m for m in MODELS if not m.monotone_paths])
    @pytest.mark.parametrize("r", [0.25, 0.5, 2.0])
    def test_residual_contract(self, model, r):
        phi = phi_right_inverse(model, r)
        assert phi > 0
        assert abs(laplace_exponent(model, phi) - r) <= 1e-10 * max(1.0, r)

    def test_largest_root_selected(self):
        # psi has two positive roots when psi'(0) < 0; the right inverse is
        # the larger one.
        m = brownian(-0.5, 1.0)
        phi = phi_right_inverse(m, 0.5)
        assert phi > 0.5  # the convexity minimum sits at beta = 0.5

    def test_monotone_rejected(self):
        with pytest.raises(MonotonePathsError):
            phi_right_inverse(LevyModel(1.0, 0.0, None), 0.5)


class TestEsscherTilt:
    def test_gaussian_tilt(self):
        t = esscher_tilt(brownian(0.2, 1.5), 0.7)
        assert t.drift == pytest.approx(0.2 + 1.5**2 * 0.7)
        assert t.sigma == 1.5
        assert t.jumps is None

    def test_tilt_by_zero_is_identity(self):
        m = MODELS[5]
        assert esscher_tilt(m, 0.0) is m

    def test_exponential_up_example(self):
        m = LevyModel(0.0, 0.0, CompoundPoisson(1.0, ExponentialUp(2.0)))
        t = esscher_tilt(m, 1.0)
        assert t.jumps.rate == pytest.approx(2.0)
        assert t.jumps.law == ExponentialUp(1.0)
        # MGF identity E'[e^{uX_1}] = E[e^{(u+c)X_1}] / E[e^{cX_1}].
        for u in (0.1, 0.3):
            lhs = math.exp(laplace_exponent(t, u))
            rhs = math.exp(laplace_exponent(m, u + 1.0)) / math.exp(
                laplace_exponent(m, 1.0)
            )
            assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("model", MODELS)
    def test_tilt_identity_property(self, model):
        lo, hi = model.mgf_domain()
        c = min(hi - 0.3, max(lo + 0.3, 0.4))
        t = esscher_tilt(model, c)
        for u in _domain_grid(model, 5):
            if not (lo < u + c < hi):
                continue
            lhs = laplace_exponent(t, u)
            rhs = laplace_exponent(model, u + c) - laplace_exponent(model, c)
            assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_domain_error(self):
        m = LevyModel(0.0, 0.0, CompoundPoisson(1.0, ExponentialUp(2.0)))
        with pytest.raises(DomainError):
            esscher_tilt(m, 2.5)


class TestDifferenceModel:
    def test_bm_minus_bm(self):
        z = difference_model(brownian(0, 1), brownian(0, 1))
        assert z.drift == 0.0
        assert z.sigma == pytest.approx(math.sqrt(2.0))
        assert z.jumps is None

    def test_zero_process_identity(self):
        y = MODELS[5]
        assert difference_model(y, ZERO) == y

    def test_two_exp_up_models_give_two_sided(self):
        y = LevyModel(0.1, 0.5, CompoundPoisson(1.0, ExponentialUp(2.0)))
        x = LevyModel(-0.2, 0.5, CompoundPoisson(3.0, ExponentialUp(1.5)))
        z = difference_model(y, x)
        assert isinstance(z.jumps.law, TwoSidedExponential)
        assert z.jumps.rate == pytest.approx(4.0)
        # MGF identity: psi_Z(c) = psi_Y(c) + psi_X(-c).
        for c in (-0.4, 0.3, 0.9):
            lhs = laplace_exponent(z, c)
            rhs = laplace_exponent(y, c) + laplace_exponent(x, -c)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_dual_model(self):
        m = LevyModel(0.3, 1.0, CompoundPoisson(1.0, ExponentialUp(2.0)))
        d = dual_model(m)
        assert d.drift == -0.3
        assert isinstance(d.jumps.law, ExponentialDown)
        assert d.spectrally_negative and not m.spectrally_negative


class TestMonotoneFlags:
    def test_pure_drift_is_monotone(self):
        assert LevyModel(1.0, 0.0, None).monotone_paths
        assert LevyModel(-1.0, 0.0, None).monotone_paths
        assert ZERO.monotone_paths

    def test_bm_not_monotone(self):
        assert not brownian(5.0, 0.1).monotone_paths

    def test_one_sided_drift_aligned(self):
        up = LevyModel(0.5, 0.0, CompoundPoisson(1.0, ExponentialUp(1.0)))
        assert up.monotone_paths
        mixed = LevyModel(-0.5, 0.0, CompoundPoisson(1.0, ExponentialUp(1.0)))
        assert not mixed.monotone_paths


class TestSimulatePath:
    def test_deterministic_drift(self):
        p = simulate_path(LevyModel(1.0, 0.0, None), horizon=1.0, step=0.1, seed=3)
        assert np.allclose(p.values, np.linspace(0, 1.0, 11), atol=1e-12)

    def test_same_seed_identical(self):
        m = MODELS[5]
        a = simulate_path(m, 2.0, 0.01, seed=42)
        b = simulate_path(m, 2.0, 0.01, seed=42)
        assert np.array_equal(a.values, b.values)

    def test_different_seed_differs(self):
        a = simulate_path(brownian(0, 1), 1.0, 0.01, seed=1)
        b = simulate_path(brownian(0, 1), 1.0, 0.01, seed=2)
        assert not np.array_equal(a.values, b.values)

    def test_bm_terminal_moments(self):
        n = 100_000
        vals = np.empty(n)
        # One path per replication would be slow; a single long batch of
        # terminal increments has the same law.
        from gwh.rng import philox_stream

        rng = philox_stream(7, 0x5A4D, 0)
        vals = rng.standard_normal(n)  # X_1 for standard BM
        assert abs(vals.mean()) <= 3.0 / math.sqrt(n)
        var = vals.var(ddof=1)
        se_var = math.sqrt(2.0 / (n - 1))
        assert abs(var - 1.0) <= 3.0 * se_var

    def test_bm_path_moments_small(self):
        # Path-level check on the actual simulator at a smaller budget.
        n = 4000
        ends = np.array(
            [simulate_path(brownian(0, 1), 1.0, 0.05, seed=s).values[-1] for s in range(n)]
        )
        assert abs(ends.mean()) <= 3.0 / math.sqrt(n)
        assert abs(ends.var(ddof=1) - 1.0) <= 4.0 * math.sqrt(2.0 / (n - 1))

    def test_start_offset(self):
        p = simulate_path(brownian(0, 1), 1.0, 0.25, start=2.5, seed=0)
        assert p.values[0] == 2.5

    def test_bad_step(self):
        with pytest.raises(ConfigError):
            simulate_path(brownian(0, 1), 1.0, -0.1)
        with pytest.raises(ConfigError):
            simulate_path(brownian(0, 1), 1.0, 0.3)


class TestValidation:
    def test_negative_sigma(self):
        with pytest.raises(ConfigError):
            LevyModel(0.0, -1.0, None)

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            CompoundPoisson(0.0, ExponentialUp(1.0))

    def test_bad_jump_params(self):
        with pytest.raises(ConfigError):
            ExponentialUp(-1.0)
        with pytest.raises(ConfigError):
            TwoSidedExponential(1.0, 1.0, 1.5)
        with pytest.raises(ConfigError):
            PointMass(0.0)
