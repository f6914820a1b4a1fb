"""Singular control: monotone-follower and irreversible-investment solvers,
cost functionals, nested-simulation subgradients, and first-order verification.

Threshold rules come from the index route: the follower barrier solves
kappa(x) = (1/r) E[c'(x + inf)] - K = 0 and the investment rule is
L(x) = (p')^{-1}(r K / E[q(x + inf)]); controls are running maxima of the
resulting signals.  Verification estimates the marginal-cost process
DJ_t = K + p_t by nested Monte Carlo and checks the positivity and flat-off
conditions of the first-order characterisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetError,
    ConfigError,
    DomainError,
    HorizonError,
    MonotonePathsError,
    NoRootError,
    PreconditionError,
)
from .extrema import ExactExponentialLaw, expected_functional, infimum_law
from .levy import (
    LevyModel,
    SamplePath,
    as_rate,
    difference_model,
    esscher_tilt,
    laplace_exponent,
)
from .mc import (
    STREAM_INNER,
    STREAM_PATHS,
    STREAM_PILOT,
    MCEstimate,
    SimConfig,
    default_chunk_for,
    path_matrix,
    reduce_estimates,
    trapezoid_node_weights,
)
from .payoffs import ExpFn, LinearFn, PowerFn, shifted
from .rng import philox_stream, run_chunks

__all__ = [
    "FollowerCostSpec",
    "InvestSpec",
    "CobbDouglasSpec",
    "ControlPath",
    "SubgradientPath",
    "VerificationReport",
    "FocTolerances",
    "ThresholdStrategy",
    "InvestStrategy",
    "ZeroStrategy",
    "ConstantStrategy",
    "quadratic_follower",
    "follower_threshold",
    "follower_control",
    "invest_index",
    "invest_control",
    "cost_functional",
    "subgradient_path",
    "verify_first_order",
    "esscher_reduce",
    "EsscherReduction",
    "model_scale",
]


def model_scale(model: LevyModel, r: float) -> float:
    s = model.sigma * math.sqrt(2.0 / r) + abs(model.drift) / r
    if model.jumps is not None:
        from .levy import jump_mean

        s += abs(jump_mean(model.jumps.law)) * model.jumps.rate / r
    return max(s, 1.0)


# ---------------------------------------------------------------------------
# Problem specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FollowerCostSpec:
    """Convex running cost of the gap plus proportional intervention cost.

    `cost` and `marginal` are functions of the gap alone; time-dependent
    variants are out of scope and rejected by the probes.
    """

    cost: object
    marginal: object
    intervention: float

    def __post_init__(self):
        if not (self.intervention >= 0):
            raise ConfigError(f"intervention cost must be >= 0, got {self.intervention}")
        ys = np.linspace(-5.0, 5.0, 41)
        try:
            dm = np.diff(np.asarray(self.marginal(ys), dtype=float))
        except TypeError as exc:
            raise ConfigError(
                "cost handles must be functions of the gap only (no time argument)"
            ) from exc
        if np.any(dm < -1e-10):
            raise ConfigError("marginal cost must be nondecreasing (convex cost)")

    @property
    def K(self) -> float:
        return self.intervention


def quadratic_follower(weight: float, intervention: float = 0.0) -> FollowerCostSpec:
    """c(y) = weight * y^2 / 2 with structured marginal weight * y."""
    if not (weight > 0):
        raise ConfigError("quadratic weight must be positive")
    return FollowerCostSpec(
        cost=lambda y: 0.5 * weight * np.square(y),
        marginal=LinearFn(weight, 0.0),
        intervention=intervention,
    )


@dataclass(frozen=True)
class InvestSpec:
    """Concave production profit p(theta) q(x) with expansion cost K > 0."""

    profit: object
    marginal: object  # p'(theta), strictly decreasing and positive
    q: object  # positive increasing state factor
    intervention: float
    marginal_inv: object | None = None

    def __post_init__(self):
        if not (self.intervention > 0):
            raise ConfigError(
                "K must be strictly positive: with K = 0 the investment supremum "
                "is not attained"
            )
        th = np.geomspace(1e-3, 1e3, 25)
        pm = np.asarray(self.marginal(th), dtype=float)
        if np.any(pm <= 0) or np.any(np.diff(pm) >= 0):
            raise ConfigError("p' must be positive and strictly decreasing")
        xs = np.linspace(-5.0, 5.0, 21)
        qs = np.asarray(self.q(xs), dtype=float)
        if np.any(qs <= 0):
            raise ConfigError("q must be positive")

    @property
    def K(self) -> float:
        return self.intervention

    def marginal_at_zero(self) -> float:
        return float(self.marginal(1e-12))

    def invert_marginal(self, y):
        """theta with p'(theta) = y; analytic handle if supplied."""
        if self.marginal_inv is not None:
            return self.marginal_inv(y)
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        for i, yi in np.ndenumerate(y):
            out[i] = _bisect_decreasing(self.marginal, float(yi))
        return out if out.ndim else float(out)


def _bisect_decreasing(f, y: float) -> float:
    lo, hi = 1e-12, 1.0
    for _ in range(200):
        if float(f(hi)) < y:
            break
        hi *= 2.0
    else:
        raise NoRootError("marginal inverse bracket expansion failed")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if float(f(mid)) > y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CobbDouglasSpec:
    """Profit C (theta^(1-alpha) e^(alpha x))^beta with unit state factor e^x.

    gamma = alpha beta / (1 - beta (1 - alpha)) and A = C beta (1 - alpha);
    the closed-form rule is L(x) = delta e^(gamma x).
    """

    C: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.C > 0):
            raise ConfigError("C must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if not (0.0 < self.beta < 1.0 / (1.0 - self.alpha)):
            raise ConfigError("beta must lie in (0, 1/(1-alpha))")

    @property
    def gamma(self) -> float:
        return self.alpha * self.beta / (1.0 - self.beta * (1.0 - self.alpha))

    @property
    def A(self) -> float:
        return self.C * self.beta * (1.0 - self.alpha)

    @property
    def theta_exponent(self) -> float:
        return self.beta * (1.0 - self.alpha)

    def invest_spec(self, intervention: float = 1.0) -> InvestSpec:
        b = self.theta_exponent
        A = self.A
        return InvestSpec(
            profit=PowerFn(self.C, b),
            marginal=PowerFn(A, b - 1.0),
            q=ExpFn(coef=self.alpha * self.beta),
            intervention=intervention,
            marginal_inv=lambda y: np.power(np.asarray(y, dtype=float) / A, 1.0 / (b - 1.0)),
        )

    def delta(self, model: LevyModel, r, intervention: float = 1.0) -> float:
        """Coefficient of the closed-form rule, derived by solving
        p'(L) E[q(x + inf)] = r K with the Cobb-Douglas forms.

        The exponent is 1/(1 - beta(1 - alpha)), the same denominator that
        defines gamma.
        """
        rr = as_rate(r)
        law = infimum_law(model, rr)
        m = expected_functional(law, ExpFn(coef=self.alpha * self.beta))
        if isinstance(m, MCEstimate):
            m = m.mean
        return float(
            ((self.A / (rr * intervention)) * m) ** (1.0 / (1.0 - self.beta * (1.0 - self.alpha)))
        )


# ---------------------------------------------------------------------------
# Control paths and strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlPath:
    """Nondecreasing control on the path grid; the value at index 0 is the
    initial jump from theta_{0-} = 0."""

    step: float
    values: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.values) < -1e-12):
            raise ConfigError("control paths must be nondecreasing")
        if np.any(self.values < -1e-12):
            raise ConfigError("controls are nonnegative (theta_{0-} = 0)")


class ThresholdStrategy:
    """theta_t = sup_{u<=t} (X_u - barrier)^+; reflects the gap at the barrier."""

    def __init__(self, barrier: float):
        self.barrier = float(barrier)

    @property
    def threshold(self) -> float:
        return self.barrier

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.maximum.accumulate(np.maximum(values - self.barrier, 0.0), axis=-1)

    def __call__(self, path: SamplePath) -> ControlPath:
        return ControlPath(path.step, self.apply(path.values))

    def shifted_control(self, delta: float) -> "ThresholdStrategy":
        """Strategy whose control is uniformly shifted up by delta (> 0 acts
        more: the barrier moves down by delta)."""
        return ThresholdStrategy(self.barrier - delta)

    def __repr__(self):
        return f"ThresholdStrategy(barrier={self.barrier})"


class InvestStrategy:
    """theta_t = sup_{u<=t} L(X_u) for a nondecreasing rule L."""

    def __init__(self, rule):
        self.rule = rule

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.rule(values), dtype=float), axis=-1)

    def __call__(self, path: SamplePath) -> ControlPath:
        return ControlPath(path.step, self.apply(path.values))

    def __repr__(self):
        return "InvestStrategy"


class ZeroStrategy:
    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.zeros_like(values)

    def __call__(self, path: SamplePath) -> ControlPath:
        return ControlPath(path.step, self.apply(path.values))

    def __repr__(self):
        return "ZeroStrategy"


class ConstantStrategy:
    """theta_t = y for all t >= 0 (one initial jump of size y)."""

    def __init__(self, level: float):
        if level < 0:
            raise ConfigError("constant control level must be >= 0")
        self.level = float(level)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.full_like(values, self.level)

    def __call__(self, path: SamplePath) -> ControlPath:
        return ControlPath(path.step, self.apply(path.values))

    def __repr__(self):
        return f"ConstantStrategy(level={self.level})"


# ---------------------------------------------------------------------------
# Thresholds and rules
# ---------------------------------------------------------------------------


def follower_threshold(spec: FollowerCostSpec, model: LevyModel, r) -> float:
    """Barrier x* solving (1/r) E[c'(x + inf X at Exp(r))] = K, to 1e-9.

    NoRootError reports the sign of the index at both bracket ends, which
    distinguishes the never-act and always-act regimes.
    """
    if model.monotone_paths:
        raise MonotonePathsError("threshold solvers require non-monotone paths")
    rr = as_rate(r)
    law = infimum_law(model, rr)

    def kap(x: float) -> float:
        v = expected_functional(law, shifted(spec.marginal, x))
        if isinstance(v, MCEstimate):
            v = v.mean
        return v / rr - spec.K

    s = model_scale(model, rr)
    lo = -(1.0 + spec.K + s)
    hi = +(1.0 + spec.K + s)
    klo, khi = kap(lo), kap(hi)
    for _ in range(80):
        if klo < 0.0 <= khi:
            break
        if klo >= 0.0:
            lo *= 2.0
            klo = kap(lo)
        if khi < 0.0:
            hi *= 2.0
            khi = kap(hi)
        if abs(lo) > 1e9 or abs(hi) > 1e9:
            break
    if not (klo < 0.0 <= khi):
        regime = "never act" if khi < 0.0 else "always act immediately"
        raise NoRootError(
            f"kappa has no sign change: kappa({lo:.3g})={klo:.3g}, "
            f"kappa({hi:.3g})={khi:.3g} ({regime})"
        )
    from scipy.optimize import brentq

    return float(brentq(kap, lo, hi, xtol=1e-9))


def follower_control(path: SamplePath, x_star: float) -> ControlPath:
    """Running maximum of (X_u - x*)^+."""
    return ThresholdStrategy(x_star)(path)


def invest_index(spec: InvestSpec, model: LevyModel, r, x, law=None):
    """Capacity rule L(x) = (p')^{-1}(r K / E[q(x + inf X at Exp(r))]).

    Returns 0 where the required marginal profit exceeds p'(0+) (the
    indirect-cost boundary); accepts scalar or array x.
    """
    rr = as_rate(r)
    if law is None:
        law = infimum_law(model, rr)
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0

    if isinstance(spec.q, ExpFn) and isinstance(law, ExactExponentialLaw) and spec.q.shift == 0.0:
        m = expected_functional(law, ExpFn(scale=1.0, coef=spec.q.coef))
        denom = spec.q.scale * np.exp(spec.q.coef * x_arr) * m
    else:
        denom = np.empty(x_arr.shape if not scalar else (1,))
        flat = np.atleast_1d(x_arr)
        for i, xi in enumerate(flat):
            v = expected_functional(law, shifted(spec.q, float(xi)))
            denom.flat[i] = v.mean if isinstance(v, MCEstimate) else v
        if scalar:
            denom = denom[0]
    if np.any(~np.isfinite(np.atleast_1d(denom))) or np.any(np.atleast_1d(denom) <= 0):
        raise PreconditionError("E[q(x + inf)] must be finite and positive")
    y = rr * spec.K / denom
    p0 = spec.marginal_at_zero()
    out = np.where(np.atleast_1d(y) >= p0, 0.0, np.atleast_1d(spec.invert_marginal(y)))
    return float(out[0]) if scalar else out.reshape(x_arr.shape)


def invest_control(path: SamplePath, rule) -> ControlPath:
    """Running maximum of L(X_u); L must be nondecreasing."""
    probe = np.asarray(rule(np.linspace(-5.0, 5.0, 17)), dtype=float)
    if np.any(np.diff(probe) < -1e-10):
        raise ConfigError("investment rule L must be nondecreasing")
    return InvestStrategy(rule)(path)


# ---------------------------------------------------------------------------
# Cost functional
# ---------------------------------------------------------------------------


def _is_invest(problem) -> bool:
    if isinstance(problem, InvestSpec):
        return True
    if isinstance(problem, FollowerCostSpec):
        return False
    raise ConfigError(f"unsupported problem spec {type(problem)!r}")


def _running_weights(problem, model, strategy, values, theta, w_nodes):
    if _is_invest(problem):
        run = np.asarray(problem.profit(theta), dtype=float) * np.asarray(
            problem.q(values), dtype=float
        )
    else:
        run = np.asarray(problem.cost(values - theta), dtype=float)
    return run @ w_nodes


def _stieltjes(theta: np.ndarray, rr: float, step: float) -> np.ndarray:
    """Sum of exp(-r t_i) dtheta_i including the time-0 jump at weight 1."""
    n = theta.shape[-1] - 1
    disc = np.exp(-rr * step * np.arange(n + 1))
    d = np.diff(theta, axis=-1, prepend=0.0)
    return d @ disc


def _pilot_cost_horizon(problem, model, strategy, rr: float, step: float, seed: int) -> float:
    """Horizon with the discounted running-cost tail below 0.1%."""
    n_pilot = 256
    h = max(8.0 / rr, 2.0)
    for _ in range(4):
        n = int(round(h / step))
        rng = philox_stream(seed, STREAM_PILOT, 1)
        pm = path_matrix(model, rng, n_pilot, n, step)
        vals = pm["values"]
        theta = strategy.apply(vals)
        if _is_invest(problem):
            run = np.asarray(problem.profit(theta), dtype=float) * np.asarray(
                problem.q(vals), dtype=float
            )
        else:
            run = np.asarray(problem.cost(vals - theta), dtype=float)
        t = step * np.arange(n + 1)
        m = np.abs(run).mean(axis=0) * np.exp(-rr * t)
        total = float(np.mean(np.abs(run) @ trapezoid_node_weights(rr, n, step)))
        total = max(abs(total), 1e-12)
        half = n // 2
        logs = np.log(np.maximum(m[half:], 1e-300))
        slope = np.polyfit(t[half:], logs, 1)[0]
        if slope < -1e-12:
            target = 1e-3 * total
            m_end = max(m[-1], 1e-300)
            extra = max(0.0, math.log(m_end / (target * abs(slope))) / abs(slope))
            return float(h + min(extra, 400.0 / rr))
        h *= 2.0
    raise HorizonError("discounted running cost does not decay on the pilot horizon")


def cost_functional(
    problem,
    model: LevyModel,
    strategy,
    r,
    sim: SimConfig | None = None,
) -> MCEstimate:
    """Discounted running cost plus K times the control's Stieltjes discount
    sum (follower), or running profit minus expansion cost (investment).

    The horizon comes from the SimConfig or a pilot-fitted discounted-tail
    bound of 0.1%.
    """
    rr = as_rate(r)
    cfg = sim or SimConfig()
    horizon = cfg.horizon or _pilot_cost_horizon(problem, model, strategy, rr, cfg.step, cfg.seed)
    n = int(round(horizon / cfg.step))
    w_nodes = trapezoid_node_weights(rr, n, cfg.step)
    invest = _is_invest(problem)
    sign_k = -1.0 if invest else 1.0
    chunk = default_chunk_for(n)

    def worker(ci: int, m: int):
        rng = philox_stream(cfg.seed, STREAM_PATHS, ci)
        pm = path_matrix(model, rng, m, n, cfg.step)
        vals = pm["values"]
        theta = strategy.apply(vals)
        run = _running_weights(problem, model, strategy, vals, theta, w_nodes)
        stj = _stieltjes(theta, rr, cfg.step)
        tot = run + sign_k * problem.K * stj
        return (float(tot.sum()), float((tot**2).sum()), m)

    parts = run_chunks(cfg.reps, worker, threads=cfg.threads, chunk=chunk)
    return reduce_estimates(parts, cfg.seed)


def common_path_costs(
    problem,
    model: LevyModel,
    strategies: list,
    r,
    sim: SimConfig | None = None,
) -> tuple[list[MCEstimate], list[MCEstimate]]:
    """Costs of several strategies on identical paths, plus paired differences
    against the first strategy."""
    if not strategies:
        raise ConfigError("need at least one strategy")
    rr = as_rate(r)
    cfg = sim or SimConfig()
    horizon = cfg.horizon or _pilot_cost_horizon(
        problem, model, strategies[0], rr, cfg.step, cfg.seed
    )
    n = int(round(horizon / cfg.step))
    w_nodes = trapezoid_node_weights(rr, n, cfg.step)
    invest = _is_invest(problem)
    sign_k = -1.0 if invest else 1.0
    chunk = default_chunk_for(n)
    ns = len(strategies)

    def worker(ci: int, m: int):
        rng = philox_stream(cfg.seed, STREAM_PATHS, ci)
        pm = path_matrix(model, rng, m, n, cfg.step)
        vals = pm["values"]
        totals = []
        for strat in strategies:
            theta = strat.apply(vals)
            run = _running_weights(problem, model, strat, vals, theta, w_nodes)
            tot = run + sign_k * problem.K * _stieltjes(theta, rr, cfg.step)
            totals.append(tot)
        out = []
        for j in range(ns):
            out.append((float(totals[j].sum()), float((totals[j] ** 2).sum()), m))
        for j in range(ns):
            d = totals[j] - totals[0]
            out.append((float(d.sum()), float((d**2).sum()), m))
        return out

    parts = run_chunks(cfg.reps, worker, threads=cfg.threads, chunk=chunk)
    costs = [reduce_estimates([p[j] for p in parts], cfg.seed) for j in range(ns)]
    diffs = [reduce_estimates([p[ns + j] for p in parts], cfg.seed) for j in range(ns)]
    return costs, diffs


# ---------------------------------------------------------------------------
# Subgradient process and first-order verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubgradientPath:
    """Marginal-cost process DJ_t = k_t + p_t along an outer path, with the
    nested-simulation standard error of each point."""

    step: float
    times: np.ndarray
    dj: np.ndarray
    se: np.ndarray
    k: float

    @property
    def p(self) -> np.ndarray:
        return self.dj - self.k


def subgradient_path(
    spec: FollowerCostSpec,
    model: LevyModel,
    strategy,
    r,
    outer_path: SamplePath,
    inner_reps: int = 200,
    inner_step: float = 0.01,
    inner_horizon: float | None = None,
    seed: int = 0,
    se_cap: float | None = None,
) -> SubgradientPath:
    """Nested Monte Carlo estimate of DJ_t = K + p_t along the outer path.

    p_t = E[integral of c_theta(gap_u) e^{-r(u-t)} du | gap_t] with
    c_theta = -c'(gap) for the follower; the inner simulations restart the
    reflected gap from its current value under the threshold strategy, with
    antithetic pairing of the Gaussian part.
    """
    if not hasattr(strategy, "threshold"):
        raise ConfigError("subgradient estimation requires a threshold-type strategy")
    rr = as_rate(r)
    barrier = float(strategy.threshold)
    theta = strategy.apply(outer_path.values)
    gaps = outer_path.values - theta
    if inner_horizon is None:
        inner_horizon = math.log(1e4) / rr
    n_in = int(round(inner_horizon / inner_step))
    w = trapezoid_node_weights(rr, n_in, inner_step)
    half = max(1, inner_reps // 2)
    mu, sig = model.drift, model.sigma
    jumps = model.jumps

    n_pts = len(gaps)
    dj = np.empty(n_pts)
    se = np.empty(n_pts)
    block = max(1, int(2**21 // max(1, half * n_in)))

    from .mc import bridge_segment_max

    for b0 in range(0, n_pts, block):
        b1 = min(n_pts, b0 + block)
        nb = b1 - b0
        rng = philox_stream(seed, STREAM_INNER, b0)
        z = rng.standard_normal((nb, half, n_in))
        dxc = sig * math.sqrt(inner_step) * z
        dxc += mu * inner_step
        anti = (2.0 * mu * inner_step) - dxc  # mirrored Gaussian part
        if sig > 0:
            # Bridge maxima of the Gaussian part remove the dominant step
            # bias of the reflected running maximum.
            u = 1.0 - rng.random((nb, half, n_in))
            segmax = bridge_segment_max(dxc, sig * sig * inner_step, u)
            segmax_anti = bridge_segment_max(anti, sig * sig * inner_step, u)
        else:
            segmax = np.maximum(dxc, 0.0)
            segmax_anti = np.maximum(anti, 0.0)
        jinc = None
        if jumps is not None:
            counts = rng.poisson(jumps.rate * inner_step, (nb, half, n_in))
            total = int(counts.sum())
            if total:
                from .levy import sample_jumps

                sizes = sample_jumps(jumps.law, rng, total)
                csum = np.concatenate(([0.0], np.cumsum(sizes)))
                ends = np.cumsum(counts.ravel()).reshape(nb, half, n_in)
                jinc = csum[ends] - csum[ends - counts]
        y0 = gaps[b0:b1]
        pair_sum = None
        for inc, smx in ((dxc, segmax), (anti, segmax_anti)):
            if jinc is not None:
                inc = inc + jinc  # jumps at segment ends, shared by the pair
            s = np.cumsum(inc, axis=-1)
            y = np.empty((nb, half, n_in + 1))
            y[..., 0] = y0[:, None]
            y[..., 1:] = y0[:, None, None] + s
            # Within-segment maxima relative to the segment start (pre-jump).
            peak = y[..., :-1] + smx
            np.maximum(peak, y[..., 1:], out=peak)
            excess = np.empty_like(y)
            excess[..., 0] = np.maximum(y[..., 0] - barrier, 0.0)
            np.maximum.accumulate(np.maximum(peak - barrier, 0.0), axis=-1, out=peak)
            np.maximum(peak, excess[..., 0][..., None], out=excess[..., 1:])
            np.subtract(y, excess, out=y)
            est = -np.asarray(spec.marginal(y), dtype=float) @ w
            pair_sum = est if pair_sum is None else 0.5 * (pair_sum + est)
        p_hat = pair_sum.mean(axis=-1)
        p_se = pair_sum.std(axis=-1, ddof=1) / math.sqrt(half)
        dj[b0:b1] = spec.K + p_hat
        se[b0:b1] = p_se

    if se_cap is not None and float(se.max()) > se_cap:
        raise BudgetError(
            f"inner standard error {se.max():.3e} exceeds the cap {se_cap:.3e}"
        )
    return SubgradientPath(
        step=outer_path.step, times=outer_path.times, dj=dj, se=se, k=spec.K
    )


@dataclass(frozen=True)
class FocTolerances:
    z: float = 3.0
    max_violation_rate: float = 0.01
    snell_z: float = 3.0


@dataclass(frozen=True)
class VerificationReport:
    """First-order-condition report.

    `passed` covers positivity (violation rate at z standard errors) and the
    flat-off Stieltjes sum.  The Snell minimum is reported alongside; with
    many grid points a -z excursion happens by chance, so it is diagnostic
    rather than part of `passed`.
    """

    positivity_violation_rate: float
    positivity_ok: bool
    flatoff_sum: float
    flatoff_se: float
    flatoff_ok: bool
    flatoff_sum_left: float
    snell_min_z: float
    snell_ok: bool
    n_points: int

    @property
    def passed(self) -> bool:
        return self.positivity_ok and self.flatoff_ok


def verify_first_order(
    subgrad: SubgradientPath,
    control: ControlPath,
    r,
    tolerances: FocTolerances = FocTolerances(),
) -> VerificationReport:
    """Check the positivity and flat-off conditions of the first-order
    characterisation on matching grids.

    The flat-off sum uses the subgradient at the point of increase (the
    post-action state, consistent with controls that may act immediately
    after a jump); the left-limit variant is recorded for diagnostics.
    """
    if len(subgrad.dj) != len(control.values) or abs(subgrad.step - control.step) > 1e-12:
        raise ConfigError("subgradient and control grids must match")
    rr = as_rate(r)
    dj, ses = subgrad.dj, subgrad.se
    n = len(dj)
    t = subgrad.times
    viol = np.count_nonzero(dj < -tolerances.z * ses)
    rate = viol / n

    disc = np.exp(-rr * t)
    dtheta = np.diff(control.values, prepend=0.0)
    flat_sum = float(np.sum(dj * disc * dtheta))
    flat_se = float(math.sqrt(np.sum((ses * disc * dtheta) ** 2)))
    dj_left = np.concatenate(([dj[0]], dj[:-1]))
    flat_left = float(np.sum(dj_left * disc * dtheta))

    min_z = float(np.min(dj / np.maximum(ses, 1e-300)))
    return VerificationReport(
        positivity_violation_rate=float(rate),
        positivity_ok=bool(rate <= tolerances.max_violation_rate),
        flatoff_sum=flat_sum,
        flatoff_se=flat_se,
        flatoff_ok=bool(abs(flat_sum) <= tolerances.z * max(flat_se, 1e-300)),
        flatoff_sum_left=flat_left,
        snell_min_z=min_z,
        snell_ok=bool(min_z >= -tolerances.snell_z),
        n_points=n,
    )


# ---------------------------------------------------------------------------
# Esscher reduction of Levy intervention costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EsscherReduction:
    """Reduced constant-cost investment problem for exp(Y_t) intervention costs.

    Z is the net state X - Y under the tilted measure, r_tilde the reduced
    rate, and the optimal control is the running maximum of
    L(z) = beta_coef * exp(z / alpha) along Z.
    """

    z_model: LevyModel
    r_tilde: float
    alpha: float
    beta_coef: float
    invest_spec: InvestSpec

    def rule(self):
        spec, model, rt = self.invest_spec, self.z_model, self.r_tilde
        law = infimum_law(model, rt)
        return lambda z: invest_index(spec, model, rt, z, law=law)

    def strategy(self) -> InvestStrategy:
        return InvestStrategy(self.rule())


def esscher_reduce(model_x: LevyModel, model_y: LevyModel, r, alpha: float) -> EsscherReduction:
    """Reduce the investment problem with intervention costs exp(Y_t) to a
    constant-cost problem by tilting with exp(Y_t - psi_Y(1) t).

    Under the tilted measure the problem is the Cobb-Douglas unit-cost case
    driven by Z with the reduced rate r - psi_Y(1); the net state is
    Z = X - Y~ (Y~ the tilted Y), which makes the Y = 0 reduction the
    identity.
    """
    rr = as_rate(r)
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    try:
        psi_y1 = laplace_exponent(model_y, 1.0)
    except DomainError as exc:
        raise PreconditionError(f"psi_Y(1) must be finite: {exc}") from exc
    r_tilde = rr - psi_y1
    if not (r_tilde > 0):
        raise PreconditionError(f"need r - psi_Y(1) > 0, got {r_tilde}")
    y_tilted = esscher_tilt(model_y, 1.0)
    z_model = difference_model(model_x, y_tilted)

    spec = InvestSpec(
        profit=PowerFn(1.0 / (1.0 - alpha), 1.0 - alpha),
        marginal=PowerFn(1.0, -alpha),
        q=ExpFn(coef=1.0),
        intervention=1.0,
        marginal_inv=lambda y: np.power(np.asarray(y, dtype=float), -1.0 / alpha),
    )
    law = infimum_law(z_model, r_tilde)
    m = expected_functional(law, ExpFn())
    if isinstance(m, MCEstimate):
        m = m.mean
    beta_coef = float((m / r_tilde) ** (1.0 / alpha))
    return EsscherReduction(
        z_model=z_model, r_tilde=r_tilde, alpha=alpha, beta_coef=beta_coef, invest_spec=spec
    )
