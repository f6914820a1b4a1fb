import math

import numpy as np
import pytest

from gwh.errors import ConfigError, PreconditionError
from gwh.gittins import PayoffSpec, build_curve
from gwh.levy import brownian
from gwh.mc import MCEstimate, SimConfig
from gwh.oracle import LatticeSpec, dp_stopping_oracle
from gwh.payoffs import ConstantFn, ExpFn, LinearFn
from gwh.stopping import CONTINUE, STOP, perpetual_put, stopping_value, stopping_value_repr

STD_BM = brownian(0.0, 1.0)
PUT_MODEL = brownian(-0.5, 1.0)
LIN = PayoffSpec(LinearFn(0.5), "increasing")  # g = r y at r = 0.5


def classical_put(model, r, strike, x):
    """Perpetual-put closed form for geometric Brownian motion (smooth-pasting
    route; independent of the Wiener-Hopf machinery)."""
    mu, sig = model.drift, model.sigma
    p = (-mu - math.sqrt(mu * mu + 2 * sig * sig * r)) / (sig * sig)
    b = strike * p / (p - 1.0)
    s = math.exp(x)
    price = strike - s if s <= b else (strike - b) * (s / b) ** p
    return price, b


class TestStoppingValue:
    def test_stop_region_exact(self):
        res = stopping_value(LIN, STD_BM, 0.5, c=0.0, x=2.0, sim=SimConfig(reps=100))
        assert res.region == STOP
        assert res.value == 0.0
        assert res.threshold == pytest.approx(1.0, abs=1e-8)

    def test_kappa_equals_c_stops_everywhere(self):
        # g = r c so kappa = c identically: value c at every x.
        c = 0.8
        p = PayoffSpec(ConstantFn(0.5 * c), "increasing")
        for x in (-3.0, 0.0, 4.0):
            res = stopping_value(p, STD_BM, 0.5, c=c, x=x, sim=SimConfig(reps=100))
            assert res.region == STOP and res.value == c

    def test_continue_value_vs_dp_oracle(self):
        cfg = SimConfig(reps=60_000, step=2e-3, seed=13, threads=2)
        res = stopping_value(LIN, STD_BM, 0.5, c=0.0, x=-1.0, sim=cfg)
        assert res.region == CONTINUE
        lat = LatticeSpec(-6.0, 6.0, 401, 1e-3)
        orc = dp_stopping_oracle(LinearFn(0.5), STD_BM, 0.5, 0.0, lat)
        node = int(np.argmin(np.abs(orc.grid + 1.0)))
        cell_value = abs(orc.values[node + 1] - orc.values[node - 1])
        tol = max(2 * cell_value, 3 * res.value.stderr)
        assert abs(res.value.mean - orc.values[node]) <= tol

    def test_value_below_c(self):
        cfg = SimConfig(reps=20_000, step=2e-3, seed=3)
        res = stopping_value(LIN, STD_BM, 0.5, c=0.0, x=-1.0, sim=cfg)
        assert res.value.mean <= 0.0 + 3 * res.value.stderr


class TestReprEstimator:
    def test_kappa_equals_c_gives_zero_excess(self):
        c = 0.8
        p = PayoffSpec(ConstantFn(0.5 * c), "increasing")
        est = stopping_value_repr(p, STD_BM, 0.5, c=c, x=0.0, sim=SimConfig(reps=500, step=5e-3))
        assert est.mean == pytest.approx(c, abs=1e-12)
        assert est.stderr == 0.0

    def test_agreement_with_direct(self):
        cfg = SimConfig(reps=40_000, step=2e-3, seed=13, threads=2)
        direct = stopping_value(LIN, STD_BM, 0.5, c=0.0, x=-1.0, sim=cfg)
        repr_ = stopping_value_repr(LIN, STD_BM, 0.5, c=0.0, x=-1.0, sim=cfg)
        combined = math.hypot(direct.value.stderr, repr_.stderr)
        assert abs(direct.value.mean - repr_.mean) <= 3 * combined

    def test_deep_stop_region_consistency(self):
        # kappa(x) >> c: the estimator reduces to c up to Monte Carlo noise.
        cfg = SimConfig(reps=30_000, step=2e-3, seed=7)
        est = stopping_value_repr(LIN, STD_BM, 0.5, c=-1.0, x=3.0, sim=cfg)
        assert abs(est.mean - (-1.0)) <= 4 * est.stderr

    def test_pathwise_monotone_in_c(self):
        cfg = SimConfig(reps=5_000, step=5e-3, seed=11)
        a = stopping_value_repr(LIN, STD_BM, 0.5, c=-0.5, x=-1.0, sim=cfg)
        b = stopping_value_repr(LIN, STD_BM, 0.5, c=0.5, x=-1.0, sim=cfg)
        # Same seed, pathwise-monotone estimator: the ordering is exact.
        assert a.mean <= b.mean


class TestThresholdMonotonicity:
    def test_x_star_nondecreasing_in_c(self):
        from gwh.gittins import gittins_threshold

        curve = build_curve(LIN, STD_BM, 0.5, -3.0, 4.0, 141)
        xs = [gittins_threshold(curve, c) for c in (-0.5, 0.0, 0.5, 1.0)]
        assert all(x1 <= x2 for x1, x2 in zip(xs, xs[1:]))


class TestPerpetualPut:
    def test_threshold_matches_classical(self):
        res = perpetual_put(PUT_MODEL, 0.5, strike=1.0, x=0.0, sim=SimConfig(reps=100))
        _, b_classical = classical_put(PUT_MODEL, 0.5, 1.0, 0.0)
        assert res.threshold == pytest.approx(b_classical, rel=1e-12)

    def test_price_matches_classical(self):
        cfg = SimConfig(reps=20_000, step=1e-3, seed=5, threads=2)
        res = perpetual_put(PUT_MODEL, 0.5, strike=1.0, x=0.0, sim=cfg)
        exact, _ = classical_put(PUT_MODEL, 0.5, 1.0, 0.0)
        assert res.price.mean == pytest.approx(exact, rel=0.02)

    def test_deep_in_the_money(self):
        x = math.log(1.0) - 10.0
        res = perpetual_put(PUT_MODEL, 0.5, strike=1.0, x=x, sim=SimConfig(reps=100))
        assert res.price == pytest.approx(1.0 - math.exp(x), abs=1e-15)

    def test_zero_strike(self):
        res = perpetual_put(PUT_MODEL, 0.5, strike=0.0, x=0.0)
        assert res.price == 0.0 and res.threshold == 0.0

    def test_precondition(self):
        with pytest.raises(PreconditionError):
            perpetual_put(brownian(0.5, 1.0), 0.5, strike=1.0, x=0.0)

    def test_price_dominates_intrinsic(self):
        cfg = SimConfig(reps=10_000, step=2e-3, seed=9)
        x = -0.5
        res = perpetual_put(PUT_MODEL, 0.5, strike=1.0, x=x, sim=cfg)
        intrinsic = max(1.0 - math.exp(x), 0.0)
        assert res.price.mean >= intrinsic - 3 * res.price.stderr
