"""Laws of the running supremum/infimum at an independent exponential time.

Spectrally one-sided models get exact laws: the jump-free side has an
exponential extremum with rate equal to the right inverse of the Laplace
exponent, and the other side is built from the scale function, whose Laplace
transform 1/(psi(beta) - r) is inverted numerically.  Two-sided models fall
back to empirical laws sampled at an Exp(r) horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .errors import (
    ConfigError,
    DomainError,
    IntegrabilityError,
    InversionError,
    MonotonePathsError,
    SimulationBudgetError,
)
from .levy import (
    LevyModel,
    as_rate,
    dual_model,
    laplace_exponent,
    laplace_exponent_prime,
    phi_right_inverse,
)
from .mc import MCEstimate, SimConfig, estimate_from_values, sample_extremum_at_exp_time
from .payoffs import ConstantFn, ExpFn, LinearFn

__all__ = [
    "ExactExponentialLaw",
    "ScaleFunctionTable",
    "ScaleFunctionLaw",
    "EmpiricalLaw",
    "ExtremaLaw",
    "supremum_law",
    "infimum_law",
    "scale_function",
    "expected_functional",
    "normalization",
]

SUP = "sup"
INF = "inf"

_QUAD_ABS_TOL = 1e-8
_RESIDUAL_TOL = 1e-4  # relative, Laplace-transform residual of the table
_TALBOT_M = 36


# ---------------------------------------------------------------------------
# Law types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactExponentialLaw:
    """Extremum with |value| ~ Exp(rate); support [0,inf) for sup, (-inf,0] for inf."""

    side: str
    rate: float

    def __post_init__(self):
        if self.side not in (SUP, INF):
            raise ConfigError(f"side must be 'sup' or 'inf', got {self.side!r}")
        if not (self.rate > 0):
            raise ConfigError(f"exponential rate must be > 0, got {self.rate}")

    @property
    def sign(self) -> float:
        return 1.0 if self.side == SUP else -1.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.side == SUP:
            return np.where(x < 0, 0.0, 1.0 - np.exp(-self.rate * np.maximum(x, 0.0)))
        return np.where(x > 0, 1.0, np.exp(self.rate * np.minimum(x, 0.0)))


@dataclass(frozen=True)
class ScaleFunctionTable:
    """W^(r) tabulated on [0, x_max] together with its derivative."""

    r: float
    grid: np.ndarray
    w_values: np.ndarray
    wp_values: np.ndarray
    phi: float
    psi_prime_at_phi: float

    def w(self, x):
        return np.interp(x, self.grid, self.w_values)


@dataclass(frozen=True)
class ScaleFunctionLaw:
    """Extremum law with density from the scale function of a spectrally
    negative model: the density of the reflected extremum on [0, inf) is
    (r/phi) dW - r W dx, mapped back through `sign`."""

    side: str
    table: ScaleFunctionTable
    u_grid: np.ndarray
    density: np.ndarray
    tail_rate: float
    tail_mass: float

    @property
    def sign(self) -> float:
        return 1.0 if self.side == SUP else -1.0


@dataclass(frozen=True)
class EmpiricalLaw:
    """Sorted extremum sample simulated to an Exp(r) horizon."""

    side: str
    samples: np.ndarray
    step: float
    n_paths: int
    seed: int = 0

    def __post_init__(self):
        if len(self.samples) != self.n_paths:
            raise ConfigError("empirical sample length disagrees with path count")
        if np.any(np.diff(self.samples) < 0):
            raise ConfigError("empirical samples must be sorted")


ExtremaLaw = Union[ExactExponentialLaw, ScaleFunctionLaw, EmpiricalLaw]


# ---------------------------------------------------------------------------
# Fixed-Talbot Laplace inversion (vectorized), mpmath fallback
# ---------------------------------------------------------------------------


def _psi_complex(model: LevyModel, s: np.ndarray) -> np.ndarray:
    out = model.drift * s + 0.5 * model.sigma**2 * s * s
    j = model.jumps
    if j is not None:
        law = j.law
        from .levy import ExponentialDown, ExponentialUp, PointMass, TwoSidedExponential

        if isinstance(law, ExponentialUp):
            m = law.a / (law.a - s)
        elif isinstance(law, ExponentialDown):
            m = law.b / (law.b + s)
        elif isinstance(law, TwoSidedExponential):
            up = law.a / (law.a - s) if law.p > 0 else 0.0
            dn = law.b / (law.b + s) if law.p < 1 else 0.0
            m = law.p * up + (1.0 - law.p) * dn
        elif isinstance(law, PointMass):
            m = np.exp(s * law.size)
        else:  # pragma: no cover
            raise ConfigError(f"unsupported jump law {law}")
        out = out + j.rate * (m - 1.0)
    return out


def talbot_invert(F: Callable[[np.ndarray], np.ndarray], t: np.ndarray, M: int = _TALBOT_M) -> np.ndarray:
    """Fixed-Talbot inversion of a Laplace transform at positive times.

    Abate-Valko contour with M nodes; accuracy is limited by double-precision
    cancellation (~1e-10 relative for smooth transforms), which the caller
    must validate against the transform-residual invariant.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ConfigError("talbot_invert requires strictly positive times")
    rr = 2.0 * M / (5.0 * t)  # (nt,)
    theta = np.pi * np.arange(1, M) / M  # (M-1,)
    cot = 1.0 / np.tan(theta)
    s = rr[:, None] * theta[None, :] * (cot[None, :] + 1j)  # (nt, M-1)
    sigma = theta + (theta * cot - 1.0) * cot
    part = np.exp(t[:, None] * s) * F(s) * (1.0 + 1j * sigma[None, :])
    total = 0.5 * np.exp(rr * t) * np.real(F(rr.astype(complex))) + np.real(part).sum(axis=1)
    return (rr / M) * total


def _stehfest_invert(F_real: Callable[[float], float], t: np.ndarray, n_terms: int = 16) -> np.ndarray:
    """Gaver-Stehfest ladder in float as a fallback; modest accuracy."""
    import mpmath as mp

    out = np.empty(len(t))
    f = lambda s: F_real(float(s.real)) if hasattr(s, "real") else F_real(float(s))
    for i, ti in enumerate(t):
        out[i] = float(mp.invertlaplace(f, ti, method="stehfest", degree=n_terms))
    return out


# ---------------------------------------------------------------------------
# Scale function
# ---------------------------------------------------------------------------


def _w_zero(model: LevyModel) -> float:
    # W(0) = 0 when sigma > 0; for bounded variation it is 1/drift.
    if model.sigma > 0:
        return 0.0
    return 1.0 / model.drift


def _wp_zero(model: LevyModel) -> float:
    # W'(0+) = 2/sigma^2 when sigma > 0.
    if model.sigma > 0:
        return 2.0 / model.sigma**2
    return math.nan


def scale_function(model: LevyModel, r, x_max: float, nodes: int = 257) -> ScaleFunctionTable:
    """Tabulate W^(r) by inverting 1/(psi(beta)-r) on [0, x_max].

    The pole at phi = Phi(r) is removed by tilting: W(x) = exp(phi x) W_phi(x)
    with L[W_phi](s) = 1/(psi(s+phi)-r).  The table must satisfy the
    Laplace-transform residual invariant or InversionError is raised.
    """
    rr = as_rate(r)
    if not model.spectrally_negative:
        raise ConfigError("scale functions are defined for spectrally negative models")
    if model.monotone_paths:
        raise MonotonePathsError("scale function undefined for monotone-path models")
    if not (x_max > 0) or nodes < 8:
        raise ConfigError("need x_max > 0 and nodes >= 8")

    phi = phi_right_inverse(model, rr)
    if phi * x_max > 690.0:
        raise ConfigError(
            f"x_max={x_max} overflows W ~ exp(phi x) with phi={phi:.4g}; shrink the span"
        )
    psi_p = laplace_exponent_prime(model, phi)
    w0 = _w_zero(model)

    grid = np.linspace(0.0, x_max, nodes)
    tilt = np.exp(phi * grid[1:])

    def F_w(s):
        return 1.0 / (_psi_complex(model, s + phi) - rr)

    def F_wp(s):
        return s / (_psi_complex(model, s + phi) - rr) - w0

    w = np.empty(nodes)
    wp = np.empty(nodes)
    w[0] = w0
    wt = talbot_invert(F_w, grid[1:])
    wpt = talbot_invert(F_wp, grid[1:])
    w[1:] = tilt * wt
    wp[1:] = tilt * (phi * wt + wpt)
    wp[0] = _wp_zero(model) if model.sigma > 0 else wp[1]

    table = ScaleFunctionTable(
        r=rr, grid=grid, w_values=w, wp_values=wp, phi=phi, psi_prime_at_phi=psi_p
    )
    resid = _transform_residual(model, table)
    if resid > _RESIDUAL_TOL:
        # Regularized Gaver-Stehfest fallback before giving up.
        w_f = np.empty(nodes)
        w_f[0] = w0
        wt_f = _stehfest_invert(lambda s: 1.0 / (laplace_exponent(model, s + phi) - rr), grid[1:])
        w_f[1:] = tilt * wt_f
        wp_f = np.gradient(w_f, grid)
        table = ScaleFunctionTable(
            r=rr, grid=grid, w_values=w_f, wp_values=wp_f, phi=phi, psi_prime_at_phi=psi_p
        )
        resid = _transform_residual(model, table)
        if resid > _RESIDUAL_TOL:
            raise InversionError(
                f"scale-function residual {resid:.3e} exceeds {_RESIDUAL_TOL} at {nodes} nodes"
            )
    return table


def _transform_residual(model: LevyModel, table: ScaleFunctionTable) -> float:
    """Max relative error of the tabulated transform at 5 betas > 1.1 phi.

    The table is refined with a cubic spline before integration so the check
    measures the table, not the quadrature grid.
    """
    from scipy.interpolate import CubicSpline

    phi, rr = table.phi, table.r
    x, w = table.grid, table.w_values
    x_max = x[-1]
    c_tail = w[-1] * math.exp(-phi * x_max)  # asymptotic constant of W e^{-phi x}
    spline = CubicSpline(x, w)
    xf = np.linspace(0.0, x_max, 16 * (len(x) - 1) + 1)
    wf = spline(xf)
    worst = 0.0
    for mult in (1.15, 1.35, 1.6, 2.0, 2.5):
        beta = 1.1 * phi * mult
        target = 1.0 / (laplace_exponent(model, beta) - rr)
        num = integrate.simpson(np.exp(-beta * xf) * wf, x=xf)
        num += c_tail * math.exp((phi - beta) * x_max) / (beta - phi)
        worst = max(worst, abs(num - target) / abs(target))
    return worst


# ---------------------------------------------------------------------------
# Law construction
# ---------------------------------------------------------------------------


def _exact_exponential(model: LevyModel, rr: float, side: str) -> ExactExponentialLaw:
    base = model if side == SUP else dual_model(model)
    return ExactExponentialLaw(side=side, rate=phi_right_inverse(base, rr))


def _scale_law(model_sn: LevyModel, rr: float, side: str, nodes: int) -> ScaleFunctionLaw:
    """Density law of the extremum via the scale function of `model_sn`
    (already spectrally negative; `side` records the caller's orientation).

    The density of the reflected extremum is (r/phi) dW - r W dx on [0, inf);
    its Laplace transform r (s - phi) / (phi (psi(s) - r)) has a removable
    singularity at phi and decaying abscissa, so it is inverted directly.
    """
    phi = phi_right_inverse(model_sn, rr)

    def G(s):
        return rr * (s - phi) / (phi * (_psi_complex(model_sn, s) - rr))

    def g_points(u):
        return talbot_invert(G, np.atleast_1d(np.asarray(u, dtype=float)))

    gref = max(float(np.max(np.abs(g_points([0.5 / phi, 1.0 / phi])))), 1e-300)
    umax = 4.0 / phi
    for _ in range(60):
        if abs(g_points(umax)[0]) <= 1e-9 * gref:
            break
        umax *= 1.5
    else:
        raise InversionError("extremum density does not decay on the probed span")

    u = np.linspace(0.0, umax, nodes)
    g = np.empty(nodes)
    g[1:] = g_points(u[1:])
    g[0] = (rr / phi) * _wp_zero(model_sn) - rr * _w_zero(model_sn)
    g = np.maximum(g, 0.0)

    # Fit the exponential tail rate on the deepest decade still resolved above
    # the inversion noise floor, then replace noisier nodes by the fit.
    gmax = float(g.max())
    resolved = np.nonzero(g >= 1e-8 * gmax)[0]
    hi = int(resolved[-1])
    lo_candidates = np.nonzero(g[: hi + 1] >= 1e-4 * gmax)[0]
    lo = int(lo_candidates[-1]) if len(lo_candidates) else max(0, hi - nodes // 4)
    if hi - lo < 8:
        lo = max(0, hi - max(8, nodes // 10))
    window = slice(lo, hi + 1)
    logs = np.log(np.maximum(g[window], 1e-300))
    slope, intercept = np.polyfit(u[window], logs, 1)
    rho = -slope
    if not (rho > 0):
        raise InversionError("could not fit an exponential tail to the extremum density")
    fitted = np.exp(intercept + slope * u)
    g[hi:] = fitted[hi:]
    tail_mass = fitted[-1] / rho

    # A companion W table on a span safe from exp(phi x) overflow.
    table = scale_function(model_sn, rr, min(umax, 80.0 / phi), min(nodes, 513))
    return ScaleFunctionLaw(
        side=side, table=table, u_grid=u, density=g, tail_rate=float(rho), tail_mass=float(tail_mass)
    )


def _empirical(model: LevyModel, rr: float, side: str, sim: SimConfig | None) -> EmpiricalLaw:
    cfg = sim or SimConfig()
    if cfg.reps < cfg.min_paths:
        raise SimulationBudgetError(
            f"empirical law needs at least {cfg.min_paths} paths, got {cfg.reps}"
        )
    samples = sample_extremum_at_exp_time(
        model, rr, side, cfg.reps, cfg.step, cfg.seed, threads=cfg.threads
    )
    return EmpiricalLaw(
        side=side, samples=np.sort(samples), step=cfg.step, n_paths=cfg.reps, seed=cfg.seed
    )


def supremum_law(
    model: LevyModel, r, sim: SimConfig | None = None, scale_nodes: int = 4097
) -> ExtremaLaw:
    """Law of the running supremum at an independent Exp(r) time."""
    rr = as_rate(r)
    if model.monotone_paths:
        raise MonotonePathsError("extrema laws are degenerate for monotone-path models")
    if model.spectrally_negative:
        return _exact_exponential(model, rr, SUP)
    if model.spectrally_positive and model.sigma > 0:
        # sup X = -inf(-X); -X is spectrally negative.
        return _scale_law(dual_model(model), rr, SUP, scale_nodes)
    return _empirical(model, rr, SUP, sim)


def infimum_law(
    model: LevyModel, r, sim: SimConfig | None = None, scale_nodes: int = 4097
) -> ExtremaLaw:
    """Law of the running infimum at an independent Exp(r) time."""
    rr = as_rate(r)
    if model.monotone_paths:
        raise MonotonePathsError("extrema laws are degenerate for monotone-path models")
    if model.spectrally_positive:
        return _exact_exponential(model, rr, INF)
    if model.spectrally_negative and model.sigma > 0:
        return _scale_law(model, rr, INF, scale_nodes)
    return _empirical(model, rr, INF, sim)


# ---------------------------------------------------------------------------
# Expectations against a law
# ---------------------------------------------------------------------------


def _tail_probe_exp(f, sign: float, rate: float):
    """Raise if |f| grows at least as fast as the exponential density decays."""
    us = np.array([12.0, 24.0, 36.0]) / rate
    h = np.abs(np.asarray([f(sign * u) for u in us], dtype=float)) * np.exp(-rate * us)
    if not (h[2] < h[1] < h[0] or np.all(h < 1e-12)):
        raise IntegrabilityError("integrand does not decay against the exponential law")


def _expected_exact(law: ExactExponentialLaw, f):
    eta, sign = law.rate, law.sign
    if isinstance(f, ConstantFn):
        return f.value
    if isinstance(f, LinearFn):
        return f.b + f.a * sign / eta
    if isinstance(f, ExpFn):
        c = f.coef * sign
        if c >= eta:
            raise IntegrabilityError(
                f"exp integrand with effective coefficient {c} >= rate {eta}"
            )
        return f.scale * eta / (eta - c) + f.shift
    _tail_probe_exp(f, sign, eta)
    val, _ = integrate.quad(
        lambda u: f(sign * u) * eta * math.exp(-eta * u),
        0.0,
        np.inf,
        epsabs=_QUAD_ABS_TOL,
        limit=400,
    )
    return float(val)


def _expected_scale(law: ScaleFunctionLaw, f):
    u, g, sign = law.u_grid, law.density, law.sign
    vals = np.asarray(f(sign * u), dtype=float)
    body = integrate.simpson(vals * g, x=u)
    # Tail: density ~ g[-1] exp(-rho (u - umax)); probe that f does not defeat it.
    rho, umax = law.tail_rate, u[-1]
    probes = umax + np.array([1.0, 2.0, 3.0]) * (5.0 / rho)
    h = np.abs(np.asarray([f(sign * p) for p in probes], dtype=float)) * np.exp(
        -rho * (probes - umax)
    )
    if not (h[2] < h[1] < h[0] or np.all(h * law.density[-1] < 1e-14)):
        raise IntegrabilityError("integrand does not decay against the scale-law tail")
    ut = np.linspace(umax, umax + 60.0 / rho, 512)
    gt = g[-1] * np.exp(-rho * (ut - umax))
    tail = integrate.simpson(np.asarray(f(sign * ut), dtype=float) * gt, x=ut)
    return float(body + tail)


def _expected_empirical(law: EmpiricalLaw, f) -> MCEstimate:
    vals = np.asarray(f(law.samples), dtype=float)
    return estimate_from_values(vals, seed=law.seed)


def expected_functional(law: ExtremaLaw, f):
    """E[f(extremum)] against the law.

    Closed form for affine/exponential integrands on exact exponential laws,
    adaptive quadrature otherwise; empirical laws return an MCEstimate with a
    standard error attached.
    """
    if isinstance(law, ExactExponentialLaw):
        return _expected_exact(law, f)
    if isinstance(law, ScaleFunctionLaw):
        return _expected_scale(law, f)
    if isinstance(law, EmpiricalLaw):
        return _expected_empirical(law, f)
    raise ConfigError(f"unsupported law type {type(law)!r}")


def normalization(law: ExtremaLaw) -> float:
    """Total mass of the law; equals 1 up to quadrature error for analytic kinds."""
    if isinstance(law, ExactExponentialLaw):
        val, _ = integrate.quad(
            lambda u: law.rate * math.exp(-law.rate * u), 0.0, np.inf, epsabs=_QUAD_ABS_TOL
        )
        return float(val)
    if isinstance(law, ScaleFunctionLaw):
        return float(integrate.simpson(law.density, x=law.u_grid) + law.tail_mass)
    return 1.0


def law_mean(law: ExtremaLaw):
    return expected_functional(law, LinearFn(1.0, 0.0))
