"""Lévy process models: Laplace exponents, right inverses, Esscher tilts, paths.

Sign convention used everywhere: psi(c) = (1/t) log E[exp(c X_t)].  Results
stated in the spectrally-positive convention are obtained by applying the same
operations to the dual model ``difference_model(ZERO, model)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError, MonotonePathsError, NoRootError

__all__ = [
    "Discount",
    "ExponentialUp",
    "ExponentialDown",
    "TwoSidedExponential",
    "PointMass",
    "CompoundPoisson",
    "LevyModel",
    "SamplePath",
    "ZERO",
    "as_rate",
    "laplace_exponent",
    "phi_right_inverse",
    "esscher_tilt",
    "difference_model",
    "dual_model",
    "simulate_path",
    "brownian",
]

_PHI_BISECT_TOL = 1e-12  # tolerance in beta for the right-inverse bisection


@dataclass(frozen=True)
class Discount:
    """Deterministic interest rate r > 0."""

    r: float

    def __post_init__(self):
        if not (self.r > 0) or not math.isfinite(self.r):
            raise ConfigError(f"discount rate must satisfy r > 0, got {self.r}")


def as_rate(r) -> float:
    """Accept a Discount or a bare positive float."""
    if isinstance(r, Discount):
        return r.r
    return Discount(float(r)).r


# ---------------------------------------------------------------------------
# Jump laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialUp:
    """Positive jumps with density a*exp(-a*x), x > 0."""

    a: float

    def __post_init__(self):
        if not (self.a > 0):
            raise ConfigError(f"ExponentialUp rate must be > 0, got {self.a}")


@dataclass(frozen=True)
class ExponentialDown:
    """Negative jumps; |jump| is exponential with rate b."""

    b: float

    def __post_init__(self):
        if not (self.b > 0):
            raise ConfigError(f"ExponentialDown rate must be > 0, got {self.b}")


@dataclass(frozen=True)
class TwoSidedExponential:
    """Up-exponential(a) with probability p, down-exponential(b) otherwise."""

    a: float
    b: float
    p: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError("TwoSidedExponential rates must be > 0")
        if not (0.0 <= self.p <= 1.0):
            raise ConfigError(f"up probability must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class PointMass:
    """Deterministic jump of a fixed nonzero size."""

    size: float

    def __post_init__(self):
        if self.size == 0 or not math.isfinite(self.size):
            raise ConfigError("PointMass size must be nonzero and finite")


JumpLaw = Union[ExponentialUp, ExponentialDown, TwoSidedExponential, PointMass]


def jump_mgf_domain(law: JumpLaw) -> tuple[float, float]:
    """Open interval on which E[exp(c*J)] is finite."""
    if isinstance(law, ExponentialUp):
        return (-math.inf, law.a)
    if isinstance(law, ExponentialDown):
        return (-law.b, math.inf)
    if isinstance(law, TwoSidedExponential):
        lo = -law.b if law.p < 1.0 else -math.inf
        hi = law.a if law.p > 0.0 else math.inf
        return (lo, hi)
    return (-math.inf, math.inf)


def jump_mgf(law: JumpLaw, c: float) -> float:
    lo, hi = jump_mgf_domain(law)
    if not (lo < c < hi):
        raise DomainError(f"c={c} outside MGF domain ({lo}, {hi}) of {law}")
    if isinstance(law, ExponentialUp):
        return law.a / (law.a - c)
    if isinstance(law, ExponentialDown):
        return law.b / (law.b + c)
    if isinstance(law, TwoSidedExponential):
        up = law.a / (law.a - c) if law.p > 0 else 0.0
        dn = law.b / (law.b + c) if law.p < 1 else 0.0
        return law.p * up + (1.0 - law.p) * dn
    return math.exp(c * law.size)


def jump_mgf_prime(law: JumpLaw, c: float) -> float:
    """d/dc E[exp(c*J)] inside the domain."""
    if isinstance(law, ExponentialUp):
        return law.a / (law.a - c) ** 2
    if isinstance(law, ExponentialDown):
        return -law.b / (law.b + c) ** 2
    if isinstance(law, TwoSidedExponential):
        up = law.a / (law.a - c) ** 2 if law.p > 0 else 0.0
        dn = -law.b / (law.b + c) ** 2 if law.p < 1 else 0.0
        return law.p * up + (1.0 - law.p) * dn
    return law.size * math.exp(c * law.size)


def jump_mean(law: JumpLaw) -> float:
    return jump_mgf_prime(law, 0.0)


def reflect_jump_law(law: JumpLaw) -> JumpLaw:
    """Law of -J."""
    if isinstance(law, ExponentialUp):
        return ExponentialDown(law.a)
    if isinstance(law, ExponentialDown):
        return ExponentialUp(law.b)
    if isinstance(law, TwoSidedExponential):
        return TwoSidedExponential(a=law.b, b=law.a, p=1.0 - law.p)
    return PointMass(-law.size)


def jump_support_sign(law: JumpLaw) -> tuple[bool, bool]:
    """(has positive jumps, has negative jumps)."""
    if isinstance(law, ExponentialUp):
        return True, False
    if isinstance(law, ExponentialDown):
        return False, True
    if isinstance(law, TwoSidedExponential):
        return law.p > 0.0, law.p < 1.0
    return law.size > 0, law.size < 0


def sample_jumps(law: JumpLaw, rng: np.random.Generator, count: int) -> np.ndarray:
    if isinstance(law, ExponentialUp):
        return rng.exponential(1.0 / law.a, count)
    if isinstance(law, ExponentialDown):
        return -rng.exponential(1.0 / law.b, count)
    if isinstance(law, TwoSidedExponential):
        up = rng.random(count) < law.p
        mags = np.where(
            up,
            rng.exponential(1.0 / law.a, count),
            -rng.exponential(1.0 / law.b, count),
        )
        return mags
    return np.full(count, law.size)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompoundPoisson:
    rate: float
    law: JumpLaw

    def __post_init__(self):
        if not (self.rate > 0):
            raise ConfigError(f"jump rate must be > 0, got {self.rate}")


@dataclass(frozen=True)
class LevyModel:
    """Triplet (drift, sigma, compound-Poisson jumps); no compensation applied."""

    drift: float = 0.0
    sigma: float = 0.0
    jumps: CompoundPoisson | None = None

    def __post_init__(self):
        if not math.isfinite(self.drift):
            raise ConfigError("drift must be finite")
        if not (self.sigma >= 0) or not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def has_jumps(self) -> bool:
        return self.jumps is not None

    @property
    def spectrally_positive(self) -> bool:
        """No negative jumps."""
        if self.jumps is None:
            return True
        return not jump_support_sign(self.jumps.law)[1]

    @property
    def spectrally_negative(self) -> bool:
        """No positive jumps."""
        if self.jumps is None:
            return True
        return not jump_support_sign(self.jumps.law)[0]

    @property
    def monotone_paths(self) -> bool:
        """Paths are a.s. monotone (degenerate for threshold solvers)."""
        if self.sigma > 0:
            return False
        if self.jumps is None:
            return True
        up, down = jump_support_sign(self.jumps.law)
        if up and down:
            return False
        if up:
            return self.drift >= 0
        return self.drift <= 0

    def mgf_domain(self) -> tuple[float, float]:
        if self.jumps is None:
            return (-math.inf, math.inf)
        return jump_mgf_domain(self.jumps.law)


ZERO = LevyModel(0.0, 0.0, None)


def brownian(drift: float = 0.0, sigma: float = 1.0) -> LevyModel:
    return LevyModel(drift=drift, sigma=sigma, jumps=None)


@dataclass(frozen=True)
class SamplePath:
    """Values of X on the uniform grid 0, step, 2*step, ..."""

    step: float
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if not (self.step > 0):
            raise ConfigError(f"step must be > 0, got {self.step}")
        if len(self.values) == 0:
            raise ConfigError("path values must be nonempty")

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(len(self.values))


# ---------------------------------------------------------------------------
# Laplace exponent and right inverse
# ---------------------------------------------------------------------------


def laplace_exponent(model: LevyModel, c: float) -> float:
    """psi(c) = drift*c + sigma^2 c^2 / 2 + rate*(M_J(c) - 1); psi(0) = 0 exactly."""
    if c == 0.0:
        return 0.0
    out = model.drift * c + 0.5 * model.sigma**2 * c * c
    if model.jumps is not None:
        out += model.jumps.rate * (jump_mgf(model.jumps.law, c) - 1.0)
    return out


def laplace_exponent_prime(model: LevyModel, c: float) -> float:
    out = model.drift + model.sigma**2 * c
    if model.jumps is not None:
        out += model.jumps.rate * jump_mgf_prime(model.jumps.law, c)
    return out


def _psi_or_inf(model: LevyModel, c: float) -> float:
    try:
        return laplace_exponent(model, c)
    except DomainError:
        return math.inf
    except OverflowError:
        return math.inf


def phi_right_inverse(model: LevyModel, r) -> float:
    """Largest beta > 0 with psi(beta) = r, by bracket expansion then bisection.

    Raises NoRootError if psi stays below r on its domain and
    MonotonePathsError for models with monotone paths.
    """
    rr = as_rate(r)
    if model.monotone_paths:
        raise MonotonePathsError("right inverse undefined for monotone-path models")
    _, hi_dom = model.mgf_domain()

    # Locate the convexity minimum so the bisection bracket sits to its right;
    # psi is convex with psi(0) = 0, so the largest root lies where psi is
    # increasing.
    lo = 0.0
    if laplace_exponent_prime(model, 0.0) < 0.0:
        step = 1.0
        while True:
            cand = lo + step
            if cand >= hi_dom:
                cand = lo + 0.9 * (hi_dom - lo)
            if laplace_exponent_prime(model, cand) > 0.0:
                hi_min = cand
                break
            lo = cand
            step *= 2.0
            if step > 1e12:
                raise NoRootError("psi' stays negative; psi never reaches r")
        a, b = lo, hi_min
        for _ in range(200):
            mid = 0.5 * (a + b)
            if laplace_exponent_prime(model, mid) > 0.0:
                b = mid
            else:
                a = mid
            if b - a < _PHI_BISECT_TOL:
                break
        lo = b

    # Expand the upper bracket by doubling from beta = 1 until psi exceeds r
    # or the domain boundary is approached.
    hi = max(1.0, lo * 2.0 if lo > 0 else 1.0)
    if math.isfinite(hi_dom):
        hi = min(hi, lo + 0.5 * (hi_dom - lo))
    for _ in range(400):
        if _psi_or_inf(model, hi) > rr:
            break
        if math.isfinite(hi_dom):
            hi = hi + 0.5 * (hi_dom - hi)
        else:
            hi *= 2.0
        if hi > 1e15:
            raise NoRootError(f"psi stays below r={rr} on its domain")
    else:
        raise NoRootError(f"psi stays below r={rr} on its domain")

    a, b = lo, hi
    while b - a > _PHI_BISECT_TOL:
        mid = 0.5 * (a + b)
        if _psi_or_inf(model, mid) > rr:
            b = mid
        else:
            a = mid
    root = 0.5 * (a + b)
    # The bisection tolerance is in beta; polish to the psi-residual contract.
    for _ in range(8):
        d = laplace_exponent_prime(model, root)
        if d <= 0:
            break
        delta = (laplace_exponent(model, root) - rr) / d
        root -= delta
        if abs(delta) < 1e-16 * max(1.0, root):
            break
    resid = abs(laplace_exponent(model, root) - rr)
    if not resid <= 1e-10 * max(1.0, rr):
        raise NoRootError(f"right inverse residual {resid} too large")
    return root


# ---------------------------------------------------------------------------
# Esscher tilt and differences
# ---------------------------------------------------------------------------


def _tilt_jump_law(law: JumpLaw, c: float) -> tuple[JumpLaw, float]:
    """Tilted jump law and its MGF factor M_J(c)."""
    m = jump_mgf(law, c)
    if isinstance(law, ExponentialUp):
        return ExponentialUp(law.a - c), m
    if isinstance(law, ExponentialDown):
        return ExponentialDown(law.b + c), m
    if isinstance(law, TwoSidedExponential):
        if law.p == 0.0:
            return TwoSidedExponential(law.a, law.b + c, 0.0), m
        if law.p == 1.0:
            return TwoSidedExponential(law.a - c, law.b, 1.0), m
        up_part = law.p * law.a / (law.a - c)
        return TwoSidedExponential(law.a - c, law.b + c, up_part / m), m
    return law, m


def esscher_tilt(model: LevyModel, c: float) -> LevyModel:
    """Model under the exponential change of measure exp(c X_t - psi(c) t).

    The Gaussian drift shifts by sigma^2 c, the jump intensity scales by the
    jump MGF at c, and the jump law is exponentially tilted.  Tilting by zero
    is the identity.
    """
    if c == 0.0:
        return model
    lo, hi = model.mgf_domain()
    if not (lo < c < hi):
        raise DomainError(f"tilt parameter c={c} outside MGF domain ({lo}, {hi})")
    drift = model.drift + model.sigma**2 * c
    jumps = None
    if model.jumps is not None:
        law, factor = _tilt_jump_law(model.jumps.law, c)
        jumps = CompoundPoisson(rate=model.jumps.rate * factor, law=law)
    return LevyModel(drift=drift, sigma=model.sigma, jumps=jumps)


def _merge_jumps(
    jy: CompoundPoisson | None, jx: CompoundPoisson | None
) -> CompoundPoisson | None:
    """Jump component of Y - X; X's jumps enter reflected in sign."""
    if jy is None and jx is None:
        return None
    if jx is None:
        return jy
    refl = CompoundPoisson(rate=jx.rate, law=reflect_jump_law(jx.law))
    if jy is None:
        return refl

    def _onesided(law):
        # (direction, rate parameter) for purely one-sided exponential laws
        if isinstance(law, ExponentialUp):
            return "up", law.a
        if isinstance(law, ExponentialDown):
            return "down", law.b
        if isinstance(law, TwoSidedExponential):
            if law.p == 1.0:
                return "up", law.a
            if law.p == 0.0:
                return "down", law.b
        return None

    a, b = _onesided(jy.law), _onesided(refl.law)
    if a is not None and b is not None:
        total = jy.rate + refl.rate
        if a[0] == "up" and b[0] == "down":
            return CompoundPoisson(total, TwoSidedExponential(a[1], b[1], jy.rate / total))
        if a[0] == "down" and b[0] == "up":
            return CompoundPoisson(total, TwoSidedExponential(b[1], a[1], refl.rate / total))
        if a[0] == b[0] and abs(a[1] - b[1]) < 1e-15 * max(a[1], b[1]):
            law = ExponentialUp(a[1]) if a[0] == "up" else ExponentialDown(a[1])
            return CompoundPoisson(total, law)
    if isinstance(jy.law, PointMass) and isinstance(refl.law, PointMass):
        if jy.law.size == refl.law.size:
            return CompoundPoisson(jy.rate + refl.rate, jy.law)
    raise ConfigError(
        "jump structure of Y - X is not representable as a single supported jump law"
    )


def difference_model(model_y: LevyModel, model_x: LevyModel) -> LevyModel:
    """Model of Z = Y - X for independent Y, X."""
    return LevyModel(
        drift=model_y.drift - model_x.drift,
        sigma=math.hypot(model_y.sigma, model_x.sigma),
        jumps=_merge_jumps(model_y.jumps, model_x.jumps),
    )


def dual_model(model: LevyModel) -> LevyModel:
    """Model of -X."""
    return difference_model(ZERO, model)


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------


def increments(
    model: LevyModel, rng: np.random.Generator, n: int, step: float
) -> np.ndarray:
    """n i.i.d. increments of X over intervals of length step.

    Draw order (normals, Poisson counts, jump sizes) is fixed; it is part of
    the reproducibility contract.
    """
    dx = model.drift * step + model.sigma * math.sqrt(step) * rng.standard_normal(n)
    if model.jumps is not None:
        counts = rng.poisson(model.jumps.rate * step, n)
        total = int(counts.sum())
        if total:
            sizes = sample_jumps(model.jumps.law, rng, total)
            ends = np.cumsum(counts)
            sums = np.zeros(n)
            csum = np.concatenate(([0.0], np.cumsum(sizes)))
            starts = ends - counts
            sums = csum[ends] - csum[starts]
            dx = dx + sums
    return dx


def simulate_path(
    model: LevyModel,
    horizon: float,
    step: float,
    start: float = 0.0,
    seed: int = 0,
) -> SamplePath:
    """Euler-exact path on the uniform grid: exact Gaussian increments plus a
    Poisson number of jumps per step.  Bit-reproducible for fixed inputs."""
    if not (step > 0):
        raise ConfigError(f"step must be positive, got {step}")
    if not (horizon > 0):
        raise ConfigError(f"horizon must be positive, got {horizon}")
    n = int(round(horizon / step))
    if abs(n * step - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigError(f"step {step} does not divide horizon {horizon}")
    rng = philox_stream_for_path(seed)
    dx = increments(model, rng, n, step)
    values = np.empty(n + 1)
    values[0] = start
    np.cumsum(dx, out=values[1:])
    values[1:] += start
    return SamplePath(step=step, values=values, seed=seed)


def philox_stream_for_path(seed: int) -> np.random.Generator:
    from .rng import philox_stream

    return philox_stream(seed, stream_id=0x5A4D, chunk_index=0)
