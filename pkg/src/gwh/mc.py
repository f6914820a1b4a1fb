"""Monte Carlo plumbing: estimate types, sim configs, and path-sampling kernels.

All kernels are chunked over replications with counter-based streams (see
gwh.rng) and reduce partial results in chunk order, so outputs are independent
of worker scheduling and bit-reproducible for a fixed configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .levy import LevyModel, sample_jumps
from .rng import CHUNK, philox_stream, run_chunks

__all__ = [
    "MCEstimate",
    "SimConfig",
    "estimate_from_values",
    "sample_exp_time_state",
    "sample_extremum_at_exp_time",
    "sample_first_passage_down",
    "path_matrix",
    "ks_distance",
]

# Stream ids keep draws of unrelated estimators out of each other's chunks.
STREAM_EXP_TIME = 0xE1
STREAM_FIRST_PASSAGE = 0xF1
STREAM_PATHS = 0xA1
STREAM_PILOT = 0xB2
STREAM_INNER = 0xC3


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo result: mean, standard error, replication count, seed."""

    mean: float
    stderr: float
    n: int
    seed: int = 0

    def __iter__(self):
        yield self.mean
        yield self.stderr


@dataclass(frozen=True)
class SimConfig:
    """Simulation budget shared by the Monte Carlo estimators."""

    reps: int = 10_000
    step: float = 1e-3
    seed: int = 0
    horizon: float | None = None
    min_paths: int = 100
    threads: int | None = None

    def __post_init__(self):
        if self.reps <= 0:
            raise ConfigError(f"reps must be positive, got {self.reps}")
        if not (self.step > 0):
            raise ConfigError(f"step must be positive, got {self.step}")
        if self.horizon is not None and not (self.horizon > 0):
            raise ConfigError(f"horizon must be positive, got {self.horizon}")


def estimate_from_values(values: np.ndarray, seed: int = 0) -> MCEstimate:
    n = len(values)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(mean=mean, stderr=se, n=n, seed=seed)


def reduce_estimates(partials: list[tuple[float, float, int]], seed: int) -> MCEstimate:
    """Combine per-chunk (sum, sum of squares, n) in chunk order."""
    n = sum(p[2] for p in partials)
    s = math.fsum(p[0] for p in partials)
    ss = math.fsum(p[1] for p in partials)
    mean = s / n
    var = max(0.0, (ss - n * mean * mean) / (n - 1)) if n > 1 else math.inf
    return MCEstimate(mean=mean, stderr=math.sqrt(var / n), n=n, seed=seed)


# ---------------------------------------------------------------------------
# Brownian-bridge extrema corrections
# ---------------------------------------------------------------------------


def bridge_segment_max(dx_cont: np.ndarray, sig2dt, u: np.ndarray) -> np.ndarray:
    """Maximum over one step of the Gaussian bridge from 0 to dx_cont.

    Exact inverse-CDF sampling from P(M <= b) = 1 - exp(-2 b (b - a) / (s^2 dt));
    u must lie in (0, 1].
    """
    return 0.5 * (dx_cont + np.sqrt(dx_cont * dx_cont - 2.0 * sig2dt * np.log(u)))


def bridge_segment_min(dx_cont: np.ndarray, sig2dt, u: np.ndarray) -> np.ndarray:
    return 0.5 * (dx_cont - np.sqrt(dx_cont * dx_cont - 2.0 * sig2dt * np.log(u)))


def _uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    # (0, 1]: keeps log() finite.
    return 1.0 - rng.random(size)


# ---------------------------------------------------------------------------
# State at an independent exponential time
# ---------------------------------------------------------------------------


def sample_exp_time_state(
    model: LevyModel,
    r: float,
    n: int,
    step: float,
    seed: int,
    stream_id: int = STREAM_EXP_TIME,
    want_max: bool = False,
    want_min: bool = False,
    want_end: bool = False,
    bridge: bool = True,
    threads: int | None = None,
    start: float = 0.0,
) -> dict[str, np.ndarray]:
    """Sample (X_T, max, min) at T ~ Exp(r), independent per replication.

    The horizon is drawn per replication; the final partial step is simulated
    exactly for the Gaussian part.  Bridge corrections give the exact marginal
    law of each requested extremum for purely Gaussian models; max and min use
    independent bridge draws, so their joint law within a step is approximate.
    Jumps are placed at step ends.
    """
    mu, sig = model.drift, model.sigma
    sig2 = sig * sig
    jumps = model.jumps
    use_bridge = bridge and sig > 0

    def worker(ci: int, m: int):
        rng = philox_stream(seed, stream_id, ci)
        horizon = rng.exponential(1.0 / r, m)
        nfull = np.floor(horizon / step).astype(np.int64)
        rem = horizon - nfull * step
        order = np.argsort(-nfull, kind="stable")
        nf = nfull[order]
        rm = rem[order]

        x = np.full(m, float(start))
        mx = np.full(m, float(start))
        mn = np.full(m, float(start))
        kmax = int(nf[0]) if m else 0
        neg_nf = -nf
        for k in range(kmax):
            cnt = int(np.searchsorted(neg_nf, -(k + 1), side="right"))
            if cnt == 0:
                break
            sl = slice(0, cnt)
            z = rng.standard_normal(cnt)
            dxc = mu * step + sig * math.sqrt(step) * z
            if use_bridge:
                if want_max:
                    u = _uniform_open(rng, cnt)
                    np.maximum(mx[sl], x[sl] + bridge_segment_max(dxc, sig2 * step, u), out=mx[sl])
                if want_min:
                    u = _uniform_open(rng, cnt)
                    np.minimum(mn[sl], x[sl] + bridge_segment_min(dxc, sig2 * step, u), out=mn[sl])
            xnew = x[sl] + dxc
            if jumps is not None:
                counts = rng.poisson(jumps.rate * step, cnt)
                total = int(counts.sum())
                if total:
                    sizes = sample_jumps(jumps.law, rng, total)
                    csum = np.concatenate(([0.0], np.cumsum(sizes)))
                    ends = np.cumsum(counts)
                    xnew = xnew + (csum[ends] - csum[ends - counts])
            x[sl] = xnew
            if want_max:
                np.maximum(mx[sl], xnew, out=mx[sl])
            if want_min:
                np.minimum(mn[sl], xnew, out=mn[sl])

        # Final partial step of per-path length rem (exact Gaussian part).
        z = rng.standard_normal(m)
        dxc = mu * rm + sig * np.sqrt(rm) * z
        if use_bridge:
            if want_max:
                u = _uniform_open(rng, m)
                np.maximum(mx, x + bridge_segment_max(dxc, sig2 * rm, u), out=mx)
            if want_min:
                u = _uniform_open(rng, m)
                np.minimum(mn, x + bridge_segment_min(dxc, sig2 * rm, u), out=mn)
        xnew = x + dxc
        if jumps is not None:
            lam = jumps.rate * rm
            counts = rng.poisson(lam)
            total = int(counts.sum())
            if total:
                sizes = sample_jumps(jumps.law, rng, total)
                csum = np.concatenate(([0.0], np.cumsum(sizes)))
                ends = np.cumsum(counts)
                xnew = xnew + (csum[ends] - csum[ends - counts])
        x = xnew
        if want_max:
            np.maximum(mx, x, out=mx)
        if want_min:
            np.minimum(mn, x, out=mn)

        inv = np.empty(m, dtype=np.int64)
        inv[order] = np.arange(m)
        out = {}
        if want_end:
            out["end"] = x[inv]
        if want_max:
            out["max"] = mx[inv]
        if want_min:
            out["min"] = mn[inv]
        return out

    parts = run_chunks(n, worker, threads=threads)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def sample_extremum_at_exp_time(
    model: LevyModel,
    r: float,
    side: str,
    n: int,
    step: float,
    seed: int,
    bridge: bool = True,
    threads: int | None = None,
) -> np.ndarray:
    """Replications of the running supremum or infimum at an Exp(r) time."""
    if side not in ("sup", "inf"):
        raise ConfigError(f"side must be 'sup' or 'inf', got {side!r}")
    out = sample_exp_time_state(
        model, r, n, step, seed,
        want_max=(side == "sup"), want_min=(side == "inf"),
        bridge=bridge, threads=threads,
    )
    return out["max" if side == "sup" else "min"]


# ---------------------------------------------------------------------------
# First passage below a level
# ---------------------------------------------------------------------------


def sample_first_passage_down(
    model: LevyModel,
    level: float,
    n: int,
    step: float,
    horizon: float,
    seed: int,
    start: float = 0.0,
    stream_id: int = STREAM_FIRST_PASSAGE,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(tau, X_tau) for the first passage of X at or below `level`.

    Paths not crossing by `horizon` get tau = +inf.  The Gaussian part uses
    Brownian-bridge crossing detection (crossings land exactly on the level);
    detection after a jump uses the post-jump state, which may overshoot.
    """
    mu, sig = model.drift, model.sigma
    sig2dt = sig * sig * step
    jumps = model.jumps
    nsteps = int(math.ceil(horizon / step))

    def worker(ci: int, m: int):
        rng = philox_stream(seed, stream_id, ci)
        tau = np.full(m, np.inf)
        xat = np.full(m, np.nan)
        x = np.full(m, float(start))
        idx = np.arange(m)
        if start <= level:
            tau[:] = 0.0
            xat[:] = start
            return tau, xat
        for k in range(nsteps):
            if len(idx) == 0:
                break
            cnt = len(idx)
            z = rng.standard_normal(cnt)
            dxc = mu * step + sig * math.sqrt(step) * z
            xc = x + dxc
            hit = xc <= level
            if sig > 0:
                u = _uniform_open(rng, cnt)
                with np.errstate(over="ignore"):
                    p = np.exp(-2.0 * (x - level) * (xc - level) / sig2dt)
                hit = hit | (u < p)
            xhit = np.full(cnt, level)
            xnew = xc
            if jumps is not None:
                counts = rng.poisson(jumps.rate * step, cnt)
                total = int(counts.sum())
                if total:
                    sizes = sample_jumps(jumps.law, rng, total)
                    csum = np.concatenate(([0.0], np.cumsum(sizes)))
                    ends = np.cumsum(counts)
                    xnew = xc + (csum[ends] - csum[ends - counts])
                jump_hit = (~hit) & (xnew <= level)
                xhit = np.where(jump_hit, xnew, xhit)
                hit = hit | jump_hit
            if hit.any():
                gids = idx[hit]
                tau[gids] = (k + 1) * step
                xat[gids] = xhit[hit]
                idx = idx[~hit]
                x = xnew[~hit]
            else:
                x = xnew
        return tau, xat

    parts = run_chunks(n, worker, threads=threads)
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
    )


# ---------------------------------------------------------------------------
# Fixed-grid path matrices
# ---------------------------------------------------------------------------


def path_matrix(
    model: LevyModel,
    rng: np.random.Generator,
    m: int,
    n: int,
    step: float,
    start: float = 0.0,
    want_seg_max: bool = False,
) -> dict[str, np.ndarray]:
    """m paths on a grid of n steps: values (m, n+1) and optional per-segment
    bridge maxima of the continuous part (m, n)."""
    mu, sig = model.drift, model.sigma
    dxc = rng.standard_normal((m, n))
    dxc *= sig * math.sqrt(step)
    dxc += mu * step
    seg_max = None
    if want_seg_max:
        if sig > 0:
            # 0.5*(dx + sqrt(dx^2 - 2 s^2 dt log U)), built in place.
            u = rng.random((m, n))
            np.subtract(1.0, u, out=u)
            np.log(u, out=u)
            u *= -2.0 * sig * sig * step
            u += dxc * dxc
            np.sqrt(u, out=u)
            u += dxc
            u *= 0.5
            seg_max = u
        else:
            seg_max = np.maximum(dxc, 0.0)
    dx = dxc
    if model.jumps is not None:
        counts = rng.poisson(model.jumps.rate * step, (m, n))
        total = int(counts.sum())
        if total:
            sizes = sample_jumps(model.jumps.law, rng, total)
            csum = np.concatenate(([0.0], np.cumsum(sizes)))
            ends = np.cumsum(counts.ravel()).reshape(m, n)
            dx = dxc + (csum[ends] - csum[ends - counts])
    values = np.empty((m, n + 1))
    values[:, 0] = start
    np.cumsum(dx, axis=1, out=values[:, 1:])
    values[:, 1:] += start
    out = {"values": values}
    if seg_max is not None:
        # Segment max is relative to the segment start value (pre-jump).
        seg_max += values[:, :-1]
        out["seg_max"] = seg_max
    return out


def running_max_with_bridge(values: np.ndarray, seg_max: np.ndarray) -> np.ndarray:
    """Running maximum at grid times, including within-segment bridge maxima.

    Entry i is the maximum of the path over [0, t_i]; entry 0 is the start value.
    """
    m, n1 = values.shape
    out = np.empty_like(values)
    out[:, 0] = values[:, 0]
    np.maximum(seg_max, values[:, 1:], out=seg_max)
    np.maximum.accumulate(seg_max, axis=1, out=seg_max)
    out[:, 1:] = seg_max
    return out


def discount_weights(r: float, n: int, step: float) -> np.ndarray:
    """Exact per-step integrals of exp(-r t) over [t_i, t_{i+1}], i < n."""
    t = step * np.arange(n + 1)
    e = np.exp(-r * t)
    return (e[:-1] - e[1:]) / r


def trapezoid_node_weights(r: float, n: int, step: float) -> np.ndarray:
    """Node weights w with f_nodes @ w = trapezoid-in-f, exact-in-exp(-rt)
    approximation of the integral of f(t) exp(-r t) over [0, n*step]."""
    w = discount_weights(r, n, step)
    out = np.zeros(n + 1)
    out[:-1] += 0.5 * w
    out[1:] += 0.5 * w
    return out


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a distribution."""
    x = np.sort(np.asarray(samples))
    n = len(x)
    f = cdf(x)
    up = np.arange(1, n + 1) / n - f
    dn = f - np.arange(0, n) / n
    return float(max(up.max(), dn.max()))


def default_chunk_for(n_steps: int, cap_elems: int = 1 << 23) -> int:
    """Chunk size for path matrices, fixed by config (not machine state)."""
    return max(128, min(CHUNK, cap_elems // max(1, n_steps)))
