"""Parameterized optimal stopping values and the perpetual put example.

The value v(x, c) of stopping for reward c against an accumulating payoff g is
read off the index curve: on the stopping region (kappa(x) >= c) the value is
c exactly; elsewhere it is estimated by Monte Carlo at an exponential horizon
through either of the two first-passage identities, on common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PreconditionError
from .extrema import expected_functional, infimum_law
from .gittins import (
    INCREASING,
    GittinsCurve,
    PayoffSpec,
    build_curve,
    gittins_threshold,
    kappa_evaluator,
)
from .levy import LevyModel, as_rate, laplace_exponent
from .mc import MCEstimate, SimConfig, estimate_from_values, sample_exp_time_state, sample_first_passage_down
from .payoffs import ExpFn

__all__ = [
    "StoppingResult",
    "PutResult",
    "stopping_value",
    "stopping_value_repr",
    "perpetual_put",
    "default_curve_range",
]

STOP = "stop"
CONTINUE = "continue"


@dataclass(frozen=True)
class StoppingResult:
    value: object  # float on the stopping region, MCEstimate otherwise
    threshold: float
    region: str


@dataclass(frozen=True)
class PutResult:
    price: object  # float for immediate exercise, MCEstimate otherwise
    threshold: float


def model_scale(model: LevyModel, r: float) -> float:
    """Rough spatial scale of excursions up to the discount horizon."""
    s = model.sigma * math.sqrt(2.0 / r) + abs(model.drift) / r
    if model.jumps is not None:
        from .levy import jump_mean

        s += abs(jump_mean(model.jumps.law)) * model.jumps.rate / r + 1.0
    return max(s, 1.0)


def default_curve_range(model: LevyModel, r: float, x: float) -> tuple[float, float]:
    s = model_scale(model, r)
    return (x - 8.0 * s, x + 8.0 * s)


def _curve_for(payoff, model, rr, x, curve, sim) -> GittinsCurve:
    if curve is not None:
        return curve
    lo, hi = default_curve_range(model, rr, x)
    return build_curve(payoff, model, rr, lo, hi, nodes=801, sim=sim)


def stopping_value(
    payoff: PayoffSpec,
    model: LevyModel,
    r,
    c: float,
    x: float,
    sim: SimConfig | None = None,
    curve: GittinsCurve | None = None,
) -> StoppingResult:
    """Value of the stopping problem with stopping reward c started at x.

    On the stopping region the value is c without simulation.  Otherwise
    G(x) - v(x, c) = (1/r) E[(g(X_T) - c r) 1{max >= x*}] at T ~ Exp(r) is
    estimated by Monte Carlo, jointly with G on the same paths.
    """
    if payoff.direction != INCREASING:
        raise ConfigError("stopping_value is stated for increasing payoffs")
    rr = as_rate(r)
    cfg = sim or SimConfig()
    kcurve = _curve_for(payoff, model, rr, x, curve, cfg)
    x_star = gittins_threshold(kcurve, c)
    if x >= x_star or float(kcurve(x)) >= c:
        return StoppingResult(value=float(c), threshold=x_star, region=STOP)

    state = sample_exp_time_state(
        model, rr, cfg.reps, cfg.step, cfg.seed,
        want_end=True, want_max=True, threads=cfg.threads, start=x,
    )
    stopped = state["max"] >= x_star
    gvals = np.asarray(payoff.g(state["end"]), dtype=float)
    per_path = np.where(stopped, c, gvals / rr)
    return StoppingResult(
        value=estimate_from_values(per_path, seed=cfg.seed),
        threshold=x_star,
        region=CONTINUE,
    )


def stopping_value_repr(
    payoff: PayoffSpec,
    model: LevyModel,
    r,
    c: float,
    x: float,
    sim: SimConfig | None = None,
    curve: GittinsCurve | None = None,
) -> MCEstimate:
    """Alternative estimator of v(x, c) through the running maximum of the
    index: G - E[sup_{u <= T}(kappa(X_u) - c)^+] at T ~ Exp(r).

    Uses the same stream as stopping_value, so the two estimators run on
    common random numbers for a fixed SimConfig.
    """
    if payoff.direction != INCREASING:
        raise ConfigError("stopping_value_repr is stated for increasing payoffs")
    rr = as_rate(r)
    cfg = sim or SimConfig()
    state = sample_exp_time_state(
        model, rr, cfg.reps, cfg.step, cfg.seed,
        want_end=True, want_max=True, threads=cfg.threads, start=x,
    )
    mx = state["max"]
    lo = min(x, float(mx.min())) - 1.0
    hi = max(x, float(mx.max())) + 1.0
    k_eval = kappa_evaluator(payoff, model, rr, x_range=(lo, hi))
    gvals = np.asarray(payoff.g(state["end"]), dtype=float)
    # kappa is increasing, so the running sup of kappa(X) is kappa(running max).
    excess = np.maximum(np.asarray(k_eval(mx), dtype=float) - c, 0.0)
    per_path = gvals / rr - excess
    return estimate_from_values(per_path, seed=cfg.seed)


def perpetual_put(
    model: LevyModel,
    r,
    strike: float,
    x: float,
    sim: SimConfig | None = None,
) -> PutResult:
    """Perpetual American put on exp(X) via the Wiener-Hopf threshold.

    The exercise threshold is b* = K E[exp(inf X at Exp(r))]; the price is the
    discounted payoff at the first passage of exp(X) to b* or below.  Requires
    psi(1) < r so the problem is non-degenerate.
    """
    rr = as_rate(r)
    if strike < 0:
        raise ConfigError(f"strike must be nonnegative, got {strike}")
    if strike == 0.0:
        return PutResult(price=0.0, threshold=0.0)
    try:
        psi1 = laplace_exponent(model, 1.0)
    except Exception as exc:
        raise PreconditionError(f"psi(1) undefined: {exc}") from exc
    if not (psi1 < rr):
        raise PreconditionError(f"need psi(1) < r, got psi(1)={psi1} >= r={rr}")

    cfg = sim or SimConfig()
    law = infimum_law(model, rr, sim=cfg)
    m1 = expected_functional(law, ExpFn())
    if isinstance(m1, MCEstimate):
        m1 = m1.mean
    b_star = strike * m1
    if math.exp(x) <= b_star:
        return PutResult(price=strike - math.exp(x), threshold=b_star)

    level = math.log(b_star)
    # Discounted-tail horizon: exp(-rH) K below 0.1% of the at-threshold payoff.
    scale = max(strike - b_star, 1e-6 * strike)
    horizon = math.log(strike / (1e-3 * scale)) / rr
    tau, xat = sample_first_passage_down(
        model, level, cfg.reps, cfg.step, horizon, cfg.seed, start=x, threads=cfg.threads
    )
    crossed = np.isfinite(tau)
    payoff = np.zeros(len(tau))
    if crossed.any():
        payoff[crossed] = np.maximum(strike - np.exp(xat[crossed]), 0.0) * np.exp(
            -rr * tau[crossed]
        )
    return PutResult(price=estimate_from_values(payoff, seed=cfg.seed), threshold=b_star)
