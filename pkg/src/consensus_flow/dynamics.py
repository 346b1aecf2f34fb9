"""
Discretised projected primal-dual consensus flow.

Each agent ``i`` holds a primal estimate ``x_i`` in its local set and a dual
variable ``lambda_i``.  With ``d_i = -g_i(x_i) - alpha * sum_j a_ij (x_i - x_j)
- alpha * sum_j a_ij (lambda_i - lambda_j)`` the continuous flow is

    x_i'      = P_{T_{Omega_i}(x_i)} [ d_i ]
    lambda_i' = alpha * sum_j a_ij (x_i - x_j)

Two explicit schemes are provided.  Projected Euler steps with the raw drive
and projects onto the set; it needs only set projections.  The tangent scheme
steps with the tangent-cone velocity and then projects, which requires exact
cone oracles.

Explicit steps chatter with amplitude O(h) around a cost kink whose
equilibrium subgradient lies strictly inside the subdifferential.  The
semi-implicit scheme removes this for univariate agents on intervals: the
graph coupling is explicit and the cost plus constraint are taken implicitly,

    x_i+ = argmin_{y in Omega_i} f^i(y) + (y - x_i - h c_i)^2 / (2h),

which can land exactly on a kink and stay there.  All schemes update lambda
from the pre-step ``x``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConsensusFlowError,
    DimensionMismatch,
    NonFinite,
    NotInSet,
    UnsupportedSet,
)
from .funcs import ConvexFunction
from .network import Network
from .sets import Box, ConvexSet, Intersection, WholeSpace

SCHEMES = ("projected-euler", "tangent", "semi-implicit")
DEFAULT_H = 1e-3
DEFAULT_STOP_TOL = 1e-6
DEFAULT_T_END = 100.0
CONVERGED_STREAK = 10


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Costs, local sets, initial data, graph and gain of one experiment.

    ``x0`` and ``lam0`` are ``(n, q)`` arrays; agent ``i`` owns row ``i``.
    """

    costs: tuple
    sets: tuple
    x0: np.ndarray
    lam0: np.ndarray
    network: Network
    alpha: float = 1.0

    def __post_init__(self):
        costs, sets = tuple(self.costs), tuple(self.sets)
        n, q = self.network.n, self.network.q
        if len(costs) != n or len(sets) != n:
            raise DimensionMismatch(f"expected {n} costs and sets, got {len(costs)} and {len(sets)}")
        for i, (f, S) in enumerate(zip(costs, sets)):
            if f.dim != q or S.dim != q:
                raise DimensionMismatch(f"agent {i}: cost/set dimension differs from q={q}")
        x0 = np.asarray(self.x0, dtype=float).reshape(n, q)
        lam0 = np.asarray(self.lam0, dtype=float).reshape(n, q)
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be a positive finite number")
        for i, S in enumerate(sets):
            if not S.contains(x0[i], 1e-12):
                raise NotInSet(f"agent {i}: initial point {x0[i]} is outside its constraint set")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "lam0", lam0)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self):
        return self.network.n

    @property
    def q(self):
        return self.network.q

    def with_alpha(self, alpha):
        return ProblemInstance(self.costs, self.sets, self.x0, self.lam0, self.network, alpha)

    def initial_state(self):
        return SystemState(0.0, self.x0.copy(), self.lam0.copy())

    def total_cost(self, x):
        """Network cost ``sum_i f^i(x_i)`` for an ``(n, q)`` array."""
        x = np.asarray(x, dtype=float).reshape(self.n, self.q)
        return float(sum(f.value(xi) for f, xi in zip(self.costs, x)))

    @property
    def supports_tangent(self):
        return not any(isinstance(S, Intersection) for S in self.sets)

    @property
    def supports_semi_implicit(self):
        return self.q == 1 and all(isinstance(S, (Box, WholeSpace)) for S in self.sets)


@dataclass(frozen=True, eq=False)
class SystemState:
    t: float
    x: np.ndarray
    lam: np.ndarray

    @property
    def stacked_x(self):
        return self.x.reshape(-1)

    @property
    def stacked_lam(self):
        return self.lam.reshape(-1)


@dataclass(frozen=True, eq=False)
class StepReport:
    xdot_est: np.ndarray
    lambdadot: np.ndarray
    residual: float
    consensus_gap: float


@dataclass(eq=False)
class TrajectoryTrace:
    """Sampled states and step reports; arrays are indexed by sample first."""

    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    xdot: np.ndarray
    lamdot: np.ndarray
    residual: np.ndarray
    consensus_gap: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def final_state(self) -> SystemState:
        return SystemState(float(self.t[-1]), self.x[-1].copy(), self.lam[-1].copy())

    @property
    def converged(self):
        return self.meta.get("stop_reason") == "converged"

    def consensus_value(self):
        return self.x[-1].mean(axis=0)


# -- per-agent dynamics ---------------------------------------------------------


class _LocalViews:
    """Edge lists gathered once from every agent's ``neighbor_view``.

    ``coupling`` returns ``sum_j a_ij (y_i - y_j)`` for every agent ``i``;
    agent ``i``'s row uses only its own neighbor entries.
    """

    def __init__(self, network):
        rows, cols, weights, starts = [], [], [], []
        for i in range(network.n):
            starts.append(len(rows))
            for j, a in network.neighbor_view(i):
                rows.append(i)
                cols.append(j)
                weights.append(a)
        self.n = network.n
        self.rows = np.array(rows, dtype=int)
        self.cols = np.array(cols, dtype=int)
        self.w = np.array(weights, dtype=float)[:, None]
        self.starts = np.array(starts, dtype=int)

    def kinks(self, i, f):
        cache = self.__dict__.setdefault("_kinks", {})
        if i not in cache:
            cache[i] = sorted(set(f.kinks()))
        return cache[i]

    def coupling(self, y):
        if self.rows.size == 0:
            return np.zeros_like(y)
        return np.add.reduceat(self.w * (y[self.rows] - y[self.cols]), self.starts, axis=0)


def _couplings(P, views, x, lam):
    """Per-agent ``(L x)_i`` and ``(L lambda)_i`` from neighbor data only."""
    return views.coupling(x), views.coupling(lam)


def _drives(P, views, x, lam):
    """Unprojected drive ``d`` and consensus coupling ``L x`` for all agents."""
    lx, ll = _couplings(P, views, x, lam)
    c = -P.alpha * (lx + ll)
    d = np.empty_like(x)
    for i in range(P.n):
        d[i] = c[i] - P.costs[i].subgradient(x[i])
    return d, lx


def _interval_bounds(S):
    if isinstance(S, Box):
        return float(S.lo[0]), float(S.hi[0])
    return -math.inf, math.inf


def _min_velocity_1d(f, S, x, c):
    # choose g in the subdifferential so that the tangent projection of -g + c is smallest
    I = f.subdifferential_1d(x[0])
    w = min(max(0.0, c[0] - I.hi), c[0] - I.lo)
    return S.project_tangent_cone(x, np.array([w]))


def velocity_field(P: ProblemInstance, s: SystemState, views=None, selection="min-velocity"):
    """Right-hand side of the flow at ``s``.

    Returns ``(v_x, v_lambda)`` as ``(n, q)`` arrays.  With the default
    ``selection="min-velocity"`` a univariate agent uses the subgradient that
    makes its projected velocity smallest, which is zero exactly at an
    equilibrium even on a cost kink.  Other agents, or
    ``selection="least-norm"``, use the least-norm subgradient.

    Raises
    ------
    UnsupportedSet
        If some local set has no exact tangent-cone oracle.
    """
    views = views or _LocalViews(P.network)
    lx, ll = _couplings(P, views, s.x, s.lam)
    c = -P.alpha * (lx + ll)
    vx = np.empty_like(c)
    for i, (f, S) in enumerate(zip(P.costs, P.sets)):
        if selection == "min-velocity" and P.q == 1:
            vx[i] = _min_velocity_1d(f, S, s.x[i], c[i])
        else:
            vx[i] = S.project_tangent_cone(s.x[i], c[i] - f.subgradient(s.x[i]))
    return vx, P.alpha * lx


def resolvent_1d(f: ConvexFunction, S: ConvexSet, z: float, h: float, kinks=None) -> float:
    """``argmin_{y in S} f(y) + (y - z)^2 / (2h)`` for univariate ``f`` and interval ``S``.

    The optimality map ``y -> df(y) + (y - z)/h`` is strictly increasing, so
    the minimiser is either a bound, a kink where the map brackets zero, or
    the root of the map on the smooth piece between two breakpoints.  Every
    univariate cost here is piecewise quadratic, so the map is affine on
    each piece and two samples pin the root.  ``kinks`` may carry the
    precomputed sorted breakpoints of ``f``.
    """
    lo, hi = _interval_bounds(S)

    def psi(y):
        I = f.subdifferential_1d(y)
        return I.lo + (y - z) / h, I.hi + (y - z) / h

    if lo > -math.inf and psi(lo)[1] >= 0:
        return lo
    if hi < math.inf and psi(hi)[0] <= 0:
        return hi
    a, b = lo, hi
    for k in sorted(set(f.kinks())) if kinks is None else kinks:
        if not lo < k < hi:
            continue
        pl, pu = psi(k)
        if pl <= 0 <= pu:
            return k
        if pl > 0:
            b = k
            break
        a = k
    if a == -math.inf and b == math.inf:
        y1, y2 = z - 1.0, z + 1.0
    elif a == -math.inf:
        y1, y2 = b - 2.0, b - 1.0
    elif b == math.inf:
        y1, y2 = a + 1.0, a + 2.0
    else:
        y1, y2 = a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0
    p1, p2 = psi(y1)[0], psi(y2)[0]
    y = y1 - p1 * (y2 - y1) / (p2 - p1)
    return min(max(y, a), b)


def _step(P, views, s, h, scheme):
    if scheme == "semi-implicit":
        lx, ll = _couplings(P, views, s.x, s.lam)
        z = s.x - h * P.alpha * (lx + ll)
        x_new = np.empty_like(s.x)
        for i, (f, S) in enumerate(zip(P.costs, P.sets)):
            x_new[i, 0] = resolvent_1d(f, S, float(z[i, 0]), h, views.kinks(i, f))
    else:
        d, lx = _drives(P, views, s.x, s.lam)
        x_new = np.empty_like(s.x)
        if scheme == "projected-euler":
            for i, S in enumerate(P.sets):
                x_new[i] = S.project(s.x[i] + h * d[i])
        elif scheme == "tangent":
            for i, S in enumerate(P.sets):
                v = S.project_tangent_cone(s.x[i], d[i])
                x_new[i] = S.project(s.x[i] + h * v)
        else:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    lamdot = P.alpha * lx
    lam_new = s.lam + h * lamdot
    xdot = (x_new - s.x) / h
    report = StepReport(
        xdot,
        lamdot,
        float(np.linalg.norm(xdot) + np.linalg.norm(lamdot)),
        float(np.sum(s.x * lx)),
    )
    return SystemState(s.t + h, x_new, lam_new), report


def resolve_scheme(P: ProblemInstance, scheme: str) -> str:
    """Map ``"auto"`` to a concrete scheme and check the choice is usable."""
    if scheme == "auto":
        return "semi-implicit" if P.supports_semi_implicit else "projected-euler"
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES + ('auto',)}")
    if scheme == "tangent" and not P.supports_tangent:
        raise UnsupportedSet("the tangent scheme needs exact tangent cones; use projected-euler")
    if scheme == "semi-implicit" and not P.supports_semi_implicit:
        raise UnsupportedSet("the semi-implicit scheme needs q=1 and interval constraint sets")
    return scheme


def step_projected_euler(P: ProblemInstance, s: SystemState, h: float) -> SystemState:
    if not h > 0:
        raise ValueError("step size must be positive")
    return _step(P, _LocalViews(P.network), s, h, "projected-euler")[0]


def step_tangent(P: ProblemInstance, s: SystemState, h: float) -> SystemState:
    if not h > 0:
        raise ValueError("step size must be positive")
    return _step(P, _LocalViews(P.network), s, h, "tangent")[0]


def step_semi_implicit(P: ProblemInstance, s: SystemState, h: float) -> SystemState:
    if not h > 0:
        raise ValueError("step size must be positive")
    resolve_scheme(P, "semi-implicit")
    return _step(P, _LocalViews(P.network), s, h, "semi-implicit")[0]


def step_report(P: ProblemInstance, s: SystemState, h: float, scheme="projected-euler") -> StepReport:
    """Report of the step the scheme would take from ``s``."""
    return _step(P, _LocalViews(P.network), s, h, scheme)[1]


def run(
    P: ProblemInstance,
    h: float = DEFAULT_H,
    t_end: float = DEFAULT_T_END,
    stop_tol: float = DEFAULT_STOP_TOL,
    scheme: str = "projected-euler",
    record_stride: int = 1,
    seed: int | None = None,
) -> TrajectoryTrace:
    """Integrate from the initial data until ``t_end`` or convergence.

    The run is converged once the step residual ``||x_dot|| + ||lambda_dot||``
    stays at or below ``stop_tol`` for ten consecutive steps.  Every
    ``record_stride``-th state is recorded, plus the final one.

    Raises
    ------
    NonFinite
        If the state picks up a NaN or infinity; carries the step index.
    """
    if not h > 0 or not t_end > 0:
        raise ValueError("h and t_end must be positive")
    scheme = resolve_scheme(P, scheme)
    record_stride = max(int(record_stride), 1)
    views = _LocalViews(P.network)
    n_steps = int(math.ceil(t_end / h - 1e-9))
    rec = {k: [] for k in ("t", "x", "lam", "xdot", "lamdot", "res", "gap")}

    def record(k, s, rep):
        rec["t"].append(k * h)
        rec["x"].append(s.x)
        rec["lam"].append(s.lam)
        rec["xdot"].append(rep.xdot_est)
        rec["lamdot"].append(rep.lambdadot)
        rec["res"].append(rep.residual)
        rec["gap"].append(rep.consensus_gap)

    s = P.initial_state()
    streak = 0
    k = 0
    reason = "t_end"
    while k < n_steps:
        s_next, rep = _step(P, views, s, h, scheme)
        if not (np.all(np.isfinite(s_next.x)) and np.all(np.isfinite(s_next.lam))):
            raise NonFinite(k + 1)
        if k % record_stride == 0:
            record(k, s, rep)
        streak = streak + 1 if rep.residual <= stop_tol else 0
        k += 1
        s = s_next
        if streak >= CONVERGED_STREAK:
            reason = "converged"
            break
    _, rep = _step(P, views, s, h, scheme)
    record(k, s, rep)
    return TrajectoryTrace(
        t=np.array(rec["t"]),
        x=np.array(rec["x"]),
        lam=np.array(rec["lam"]),
        xdot=np.array(rec["xdot"]),
        lamdot=np.array(rec["lamdot"]),
        residual=np.array(rec["res"]),
        consensus_gap=np.array(rec["gap"]),
        meta={
            "h": h,
            "alpha": P.alpha,
            "scheme": scheme,
            "seed": seed,
            "stop_reason": reason,
            "steps": k,
            "t_end": t_end,
            "stop_tol": stop_tol,
            "record_stride": record_stride,
        },
    )


# -- sweeps -------------------------------------------------------------------


@dataclass
class RunSummary:
    index: int
    alpha: float
    h: float
    scheme: str
    seed: int | None
    final_consensus: list | None = None
    residual: float | None = None
    steps: int | None = None
    stop_reason: str | None = None
    error: str | None = None
    wall_ms: float | None = None

    @property
    def ok(self):
        return self.error is None


def _sweep_cell(args):
    index, P, alpha, h, scheme, seed, t_end, stop_tol = args
    summary = RunSummary(index, alpha, h, scheme, seed)
    t0 = time.perf_counter()
    try:
        trace = run(P.with_alpha(alpha), h, t_end, stop_tol, scheme, record_stride=10**9, seed=seed)
        summary.final_consensus = trace.consensus_value().tolist()
        summary.residual = float(trace.residual[-1])
        summary.steps = trace.meta["steps"]
        summary.stop_reason = trace.meta["stop_reason"]
    except (ConsensusFlowError, ValueError) as exc:
        summary.error = f"{type(exc).__name__}: {exc}"
    summary.wall_ms = 1e3 * (time.perf_counter() - t0)
    return summary


def sweep(
    P: ProblemInstance,
    grid: Sequence[tuple],
    seeds: Sequence[int | None] = (None,),
    t_end: float = DEFAULT_T_END,
    stop_tol: float = DEFAULT_STOP_TOL,
    jobs: int = 1,
) -> list[RunSummary]:
    """Run every ``(alpha, h, scheme)`` cell for every seed.

    Runs are independent and deterministic; results come back in grid order
    whatever ``jobs`` is.  A failing cell records its error instead of
    aborting the sweep.
    """
    if not grid:
        raise ValueError("sweep grid is empty")
    cells = []
    for alpha, h, scheme in grid:
        for seed in seeds:
            cells.append((len(cells), P, float(alpha), float(h), scheme, seed, t_end, stop_tol))
    if jobs <= 1:
        return [_sweep_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, cells))
