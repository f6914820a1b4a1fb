"""Independent verification machinery: lattice dynamic programming and
common-random-number policy comparison.

The lattice chain moment-matches the continuous part with a trinomial stencil
(widened to k cells when one cell cannot carry the variance) and mixes in an
explicit jump-displacement row for compound-Poisson models.  These solvers
share no numerical machinery with the index-based estimators they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError
from .levy import (
    ExponentialDown,
    ExponentialUp,
    LevyModel,
    PointMass,
    TwoSidedExponential,
    as_rate,
    jump_mean,
    jump_mgf_prime,
)
from .mc import MCEstimate, SimConfig

__all__ = [
    "LatticeSpec",
    "TransitionKernel",
    "StoppingOracleResult",
    "FollowerOracleResult",
    "build_kernel",
    "dp_stopping_oracle",
    "dp_follower_oracle",
    "policy_comparison",
    "ComparisonRow",
]


@dataclass(frozen=True)
class LatticeSpec:
    x_lo: float
    x_hi: float
    nodes: int
    dt: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi):
            raise ConfigError("need x_lo < x_hi")
        if self.nodes < 51:
            raise ConfigError(f"lattice needs at least 51 nodes, got {self.nodes}")
        if not (self.dt > 0):
            raise ConfigError("time step must be positive")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nodes)

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nodes - 1)

    def widened(self, factor: float = 0.25) -> "LatticeSpec":
        """Same spacing, span widened by `factor` of the range on both sides."""
        pad_cells = int(math.ceil(factor * (self.nodes - 1)))
        pad = pad_cells * self.h
        return LatticeSpec(
            self.x_lo - pad, self.x_hi + pad, self.nodes + 2 * pad_cells, self.dt
        )


def _jump_cell_masses(law, offsets: np.ndarray, h: float) -> np.ndarray:
    """Probability of the jump landing in each cell [off-h/2, off+h/2)."""

    def cdf(x):
        x = np.asarray(x, dtype=float)
        if isinstance(law, ExponentialUp):
            return np.where(x < 0, 0.0, 1.0 - np.exp(-law.a * np.maximum(x, 0.0)))
        if isinstance(law, ExponentialDown):
            return np.where(x > 0, 1.0, np.exp(law.b * np.minimum(x, 0.0)))
        if isinstance(law, TwoSidedExponential):
            up = np.where(x < 0, 0.0, 1.0 - np.exp(-law.a * np.maximum(x, 0.0)))
            dn = np.where(x > 0, 1.0, np.exp(law.b * np.minimum(x, 0.0)))
            return law.p * up + (1.0 - law.p) * dn
        if isinstance(law, PointMass):
            return (x >= law.size).astype(float)
        raise ConfigError(f"unsupported jump law {law}")

    lo = cdf(offsets - 0.5 * h)
    hi = cdf(offsets + 0.5 * h)
    q = hi - lo
    # Fold truncated tail mass into the extreme cells.
    q[0] += lo[0]
    q[-1] += 1.0 - hi[-1]
    return q


def _match_two_moments(q: np.ndarray, offsets: np.ndarray, mean: float, second: float) -> np.ndarray:
    """Adjust cell masses so the first two moments match exactly.

    Corrections are solved on three spread-out cells inside the law's support
    so the O(h^2) adjustments never drive a mass negative.
    """
    # Correction nodes at mass quantiles: substantial local mass keeps the
    # adjusted row nonnegative.
    cum = np.cumsum(q)
    total = cum[-1]
    idx = np.unique(
        [int(np.searchsorted(cum, frac * total)) for frac in (0.05, 0.5, 0.95)]
    )
    if len(idx) < 3:
        support = np.nonzero(q > 1e-12)[0]
        if len(support) < 3 or support[-1] - support[0] < 4:
            raise ConfigError("jump support too narrow for a two-moment correction")
        idx = np.array([support[0], support[len(support) // 2], support[-1]])
    a = np.vstack([np.ones(3), offsets[idx], offsets[idx] ** 2])
    b = np.array([0.0, mean - float(q @ offsets), second - float(q @ offsets**2)])
    try:
        d = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("degenerate jump discretization") from exc
    out = q.copy()
    out[idx] += d
    if np.any(out < -1e-12):
        raise ConfigError(
            "jump moment correction went negative; widen the lattice or shrink h"
        )
    return np.maximum(out, 0.0)


@dataclass(frozen=True)
class TransitionKernel:
    """One-step transition on the lattice: either a 3-column stencil (cols,
    probs) for continuous models or a dense row-stochastic matrix."""

    grid: np.ndarray
    cols: np.ndarray | None
    probs: np.ndarray | None
    dense: np.ndarray | None
    mean_target: float
    var_target: float

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ v
        return (v[self.cols] * self.probs).sum(axis=1)


def _stencil(m: float, var: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (in cells) and probabilities matching mean m and variance var.

    One cell cannot always carry the variance, so the stencil widens to
    +-k cells; a +-1 pair then keeps the even and odd sublattices coupled
    (a bare +-k stencil with k >= 2 decouples parities and produces a
    sawtooth in the iterated values).
    """
    k = 1
    while True:
        kh = k * h
        b = (var + m * m) / (kh * kh)
        a = m / kh
        if b + abs(a) <= 0.95:
            break
        k += 1
        if k > 10_000:
            raise ConfigError("cannot match moments on this lattice; shrink dt or h")
    if k == 1:
        pu = 0.5 * (b + a)
        pd = 0.5 * (b - a)
        return np.array([-1, 0, 1]), np.array([pd, 1.0 - pu - pd, pu])
    s = var + m * m
    headroom = 0.95 - s / (k * h) ** 2 - abs(m) / (k * h)
    q = min(0.15, max(0.0, 0.5 * headroom / max(1e-12, 2.0 - 2.0 / (k * k))))
    bk = (s - 2.0 * q * h * h) / (k * h) ** 2
    ak = m / (k * h)
    pu = 0.5 * (bk + ak)
    pd = 0.5 * (bk - ak)
    pm = 1.0 - pu - pd - 2.0 * q
    if min(pu, pd, pm, q) < 0:
        raise ConfigError("stencil probabilities went negative; shrink dt or h")
    return np.array([-k, -1, 0, 1, k]), np.array([pd, q, pm, q, pu])


def build_kernel(model: LevyModel, lattice: LatticeSpec) -> TransitionKernel:
    """Reflecting-boundary transition kernel for one time step."""
    grid = lattice.grid
    n, h, dt = lattice.nodes, lattice.h, lattice.dt
    m_cont = model.drift * dt
    v_cont = model.sigma**2 * dt
    offs, pvec = _stencil(m_cont, v_cont, h)

    idx = np.arange(n)

    def reflect(j):
        j = np.where(j < 0, -j, j)
        j = np.where(j > n - 1, 2 * (n - 1) - j, j)
        return j

    def stencil_cols(offs_):
        return np.stack([reflect(idx + o) for o in offs_], axis=1)

    cols = stencil_cols(offs)
    probs = np.broadcast_to(pvec, (n, len(pvec))).copy()

    mean_t = m_cont
    var_t = v_cont
    if model.jumps is None:
        return TransitionKernel(
            grid=grid, cols=cols, probs=probs, dense=None, mean_target=mean_t, var_target=var_t
        )

    lam = model.jumps.rate * dt
    if lam > 0.5:
        raise ConfigError(f"jump intensity per step {lam} too large; shrink dt")
    law = model.jumps.law
    ej = jump_mean(law)
    ej2 = _jump_second_moment(law)
    offsets = h * np.arange(-(n - 1), n)
    if isinstance(law, PointMass):
        # Linear split keeps the mean exact; the O(h^2) second-moment excess
        # is compensated through the trinomial variance below.
        q = np.zeros(2 * n - 1)
        pos = law.size / h
        j0 = int(math.floor(pos))
        frac = pos - j0
        if not (-(n - 1) <= j0 and j0 + 1 <= n - 1):
            raise ConfigError("point-mass jump larger than the lattice span")
        q[(n - 1) + j0] = 1.0 - frac
        q[(n - 1) + j0 + 1] = frac
    else:
        q = _jump_cell_masses(law, offsets, h)
        q = _match_two_moments(q, offsets, ej, ej2)
    ej2_disc = float(q @ offsets**2)

    # Keep the total one-step variance exact by absorbing any jump
    # discretization excess into the continuous stencil.
    v_adj = v_cont + lam * (ej2 - ej2_disc)
    if v_adj < 0:
        raise ConfigError("jump discretization excess exceeds the Gaussian variance")
    offs, pvec = _stencil(m_cont, v_adj, h)
    cols = stencil_cols(offs)
    probs = np.broadcast_to(pvec, (n, len(pvec))).copy()

    dense = np.zeros((n, n))
    rows = np.repeat(idx, len(pvec))
    # add.at: reflected stencils can collide at boundary rows.
    np.add.at(dense, (rows, cols.ravel()), probs.ravel() * (1.0 - lam))
    # Jump step: continuous displacement convolved with the jump displacement.
    joff = np.nonzero(q > 1e-16)[0]
    for o in joff:
        shift = o - (n - 1)
        target = reflect(cols + shift)
        np.add.at(dense, (rows, target.ravel()), probs.ravel() * lam * q[o])

    mean_t = m_cont + lam * ej
    # Exact one-step mixture moments: E[dx^2] - mean^2.
    second = v_cont + m_cont**2 + lam * (2 * m_cont * ej + ej2)
    var_t = second - mean_t**2
    return TransitionKernel(
        grid=grid, cols=None, probs=None, dense=dense, mean_target=mean_t, var_target=var_t
    )


def _jump_second_moment(law) -> float:
    if isinstance(law, ExponentialUp):
        return 2.0 / law.a**2
    if isinstance(law, ExponentialDown):
        return 2.0 / law.b**2
    if isinstance(law, TwoSidedExponential):
        return law.p * 2.0 / law.a**2 + (1.0 - law.p) * 2.0 / law.b**2
    if isinstance(law, PointMass):
        return law.size**2
    raise ConfigError(f"unsupported jump law {law}")


def kernel_row_moments(kernel: TransitionKernel, lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (mean, variance) of the displacement, for the moment invariant.

    Rows whose stencil touches a boundary reflect mass and are excluded by
    callers when checking interior moment matching.
    """
    grid = kernel.grid
    if kernel.dense is not None:
        disp = grid[None, :] - grid[:, None]
        mean = (kernel.dense * disp).sum(axis=1)
        second = (kernel.dense * disp**2).sum(axis=1)
    else:
        disp = grid[kernel.cols] - grid[:, None]
        mean = (kernel.probs * disp).sum(axis=1)
        second = (kernel.probs * disp**2).sum(axis=1)
    return mean, second - mean**2


# ---------------------------------------------------------------------------
# Stopping oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingOracleResult:
    grid: np.ndarray
    values: np.ndarray
    threshold_node: int | None
    threshold_x: float
    iterations: int
    probe_gap: float


def _probe_gap(v: np.ndarray, v_wide: np.ndarray, lat: LatticeSpec, wide: LatticeSpec) -> float:
    """Max widening shift over the central half of the original grid.

    Interior query nodes means nodes away from the original edges; the edge
    nodes themselves sit next to the reflecting boundary by construction.
    """
    pad = round((lat.x_lo - wide.x_lo) / lat.h)
    aligned = v_wide[pad : pad + lat.nodes]
    q0, q1 = lat.nodes // 4, lat.nodes - lat.nodes // 4
    return float(np.max(np.abs(aligned[q0:q1] - v[q0:q1])))


def _value_iteration(update, v0: np.ndarray, gamma: float, tol: float = 1e-10) -> tuple[np.ndarray, int]:
    v = v0
    max_iter = int(max(10_000, 40.0 / max(1e-12, -math.log(gamma)))) + 100
    for it in range(max_iter):
        v_new = update(v)
        if float(np.max(np.abs(v_new - v))) < tol:
            return v_new, it + 1
        v = v_new
    raise ConvergenceError(f"value iteration did not converge in {max_iter} sweeps")


def dp_stopping_oracle(
    payoff,
    model: LevyModel,
    r,
    c: float,
    lattice: LatticeSpec,
    probe_tol: float = 1e-2,
) -> StoppingOracleResult:
    """Value iteration for v = min(c, accumulated payoff + discounted E v).

    The mandatory widening probe re-solves on a 25%-wider lattice; the result
    is rejected if the reported threshold moves by more than 2 cells or the
    values near it move by more than probe_tol relative to their scale.  The measured near-threshold
    shift is reported as probe_gap so callers can assert tighter bounds.
    """
    rr = as_rate(r)
    tol_eq = 1e-8 * max(1.0, abs(c))

    def solve(spec: LatticeSpec) -> tuple[np.ndarray, int | None]:
        kern = build_kernel(model, spec)
        grid = spec.grid
        gamma = math.exp(-rr * spec.dt)
        run = np.asarray(payoff(grid), dtype=float) * (1.0 - gamma) / rr
        v0 = np.minimum(c, run / (1.0 - gamma))

        def update(v):
            return np.minimum(c, run + gamma * kern.apply(v))

        v, _ = _value_iteration(update, v0, gamma)
        stop = np.nonzero(v >= c - tol_eq)[0]
        return v, (int(stop[0]) if len(stop) else None)

    lat = lattice
    v, node = solve(lat)
    wide = lat.widened()
    v_wide, node_wide = solve(wide)
    pad = round((lat.x_lo - wide.x_lo) / lat.h)
    interior = (
        node is not None
        and node_wide is not None
        and 0 < node < lat.nodes - 1
        and 0 < node_wide < wide.nodes - 1
    )
    if interior:
        if abs((node + pad) - node_wide) > 2:
            raise ConfigError("lattice too narrow: widening moved the threshold")
        sl = slice(max(0, node - 25), min(lat.nodes, node + 25))
    else:
        # Degenerate regimes (stop everywhere / never): probe the centre.
        sl = slice(lat.nodes // 4, lat.nodes - lat.nodes // 4)
    probe_gap = float(np.max(np.abs(v_wide[pad : pad + lat.nodes][sl] - v[sl])))
    if probe_gap > probe_tol * max(1.0, float(np.max(np.abs(v)))):
        raise ConfigError(
            f"lattice too narrow: widening moved query values by {probe_gap:.2e}"
        )

    x = float(lat.grid[node]) if node is not None else math.inf
    return StoppingOracleResult(
        grid=lat.grid,
        values=v,
        threshold_node=node,
        threshold_x=x,
        iterations=0,
        probe_gap=probe_gap,
    )


# ---------------------------------------------------------------------------
# Follower oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FollowerOracleResult:
    grid: np.ndarray
    values: np.ndarray
    boundary_node: int | None
    boundary_x: float
    probe_gap: float


def dp_follower_oracle(
    spec,
    model: LevyModel,
    r,
    lattice: LatticeSpec,
    probe_tol: float = 1e-2,
) -> FollowerOracleResult:
    """Singular-control DP on the gap coordinate y = x - theta.

    One sweep alternates a continuation update with the instantaneous-action
    transform v(y) <- min_{z <= y} v(z) + K (y - z); the action boundary is
    read off the marginal value v'(y) reaching K.  The mandatory widening
    probe re-solves on a wider lattice and rejects the result if the boundary
    moves by more than 2 cells or nearby values move by more than probe_tol
    relative to their scale.
    """
    rr = as_rate(r)
    K = spec.K

    def boundary(v: np.ndarray, lat: LatticeSpec) -> int | None:
        dv = np.diff(v) / lat.h
        tol = max(1e-7, 1e-4 * lat.h * max(1.0, K))
        binding = np.nonzero(dv >= K - tol)[0]
        return int(binding[0]) + 1 if len(binding) else None

    def solve(lat: LatticeSpec) -> np.ndarray:
        kern = build_kernel(model, lat)
        grid = lat.grid
        h = lat.h
        gamma = math.exp(-rr * lat.dt)
        run = np.asarray(spec.cost(grid), dtype=float) * (1.0 - gamma) / rr
        kh = K * h * np.arange(lat.nodes)

        def act(v):
            return np.minimum.accumulate(v - kh) + kh

        def update(v):
            return act(run + gamma * kern.apply(v))

        v0 = act(run / (1.0 - gamma))
        v, _ = _value_iteration(update, v0, gamma)
        return v

    lat = lattice
    v = solve(lat)
    node = boundary(v, lat)
    wide = lat.widened()
    v_wide = solve(wide)
    node_wide = boundary(v_wide, wide)
    pad = round((lat.x_lo - wide.x_lo) / lat.h)
    interior = (
        node is not None
        and node_wide is not None
        and 0 < node < lat.nodes - 1
        and 0 < node_wide < wide.nodes - 1
    )
    if interior:
        if abs((node + pad) - node_wide) > 2:
            raise ConfigError("lattice too narrow: widening moved the action boundary")
        sl = slice(max(0, node - 25), min(lat.nodes, node + 25))
    else:
        sl = slice(lat.nodes // 4, lat.nodes - lat.nodes // 4)
    probe_gap = float(np.max(np.abs(v_wide[pad : pad + lat.nodes][sl] - v[sl])))
    if probe_gap > probe_tol * max(1.0, float(np.max(np.abs(v)))):
        raise ConfigError(
            f"lattice too narrow: widening moved query values by {probe_gap:.2e}"
        )

    x = float(lat.grid[node]) if node is not None else math.inf
    return FollowerOracleResult(
        grid=lat.grid, values=v, boundary_node=node, boundary_x=x, probe_gap=probe_gap
    )


# ---------------------------------------------------------------------------
# Policy comparison on common random numbers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    cost: MCEstimate
    diff_vs_first: MCEstimate


def policy_comparison(
    problem,
    model: LevyModel,
    r,
    strategies: list[tuple[str, object]],
    sim: SimConfig | None = None,
) -> list[ComparisonRow]:
    """Evaluate every strategy on identical paths; paired differences are
    reported against the first entry."""
    from .control import common_path_costs

    names = [n for n, _ in strategies]
    costs, diffs = common_path_costs(problem, model, [s for _, s in strategies], r, sim)
    return [ComparisonRow(name=n, cost=c, diff_vs_first=d) for n, c, d in zip(names, costs, diffs)]
