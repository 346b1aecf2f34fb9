"""
Numerical certificates for the consensus flow.

- ``check_optimal_1d``: exact interval test of ``0 in df(x) + N_{Omega_0}(x)``.
- ``reconstruct_lambda_star``: a dual vector completing an optimal ``x*``
  into an equilibrium pair.
- ``build_gain_schedule``: the weight matrix ``Q_n`` with
  ``alpha L - k alpha^2 L^2 = L Q_n L``.
- ``lyapunov_audit``: the functions V1, V2, V = V1 + k V2 and the
  dissipation ``W`` along a trace, with monotonicity statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ProblemInstance, SystemState, TrajectoryTrace, velocity_field
from .errors import (
    DimensionMismatch,
    IdentityViolation,
    Infeasible,
    InfeasibleSplit,
    NotBox,
    NotUnivariate,
    UnsupportedSet,
)
from .funcs import Interval
from .network import Network
from .sets import EPS_ACT, Box, Intersection, WholeSpace, intersect_boxes

CERT_TOL = 1e-8
C_SLACK = 10.0


def _interval_of(S):
    if isinstance(S, Box) and S.dim == 1:
        return float(S.lo[0]), float(S.hi[0])
    if isinstance(S, WholeSpace) and S.dim == 1:
        return -math.inf, math.inf
    raise NotBox(f"expected a one-dimensional box, got {type(S).__name__}")


def _normal_interval(lo, hi, x, tol=EPS_ACT):
    at_lo = x - lo <= tol
    at_hi = hi - x <= tol
    return Interval(-math.inf if at_lo else 0.0, math.inf if at_hi else 0.0)


def _require_1d(P):
    if P.q != 1:
        raise NotUnivariate(f"instance has local dimension q={P.q}")
    return [_interval_of(S) for S in P.sets]


@dataclass(frozen=True)
class OptimalityCheck:
    optimal: bool
    subdifferential: Interval
    normal_cone: Interval
    slack: Interval
    feasible_set: Interval


def check_optimal_1d(P: ProblemInstance, x: float) -> OptimalityCheck:
    """Decide ``0 in sum_i df^i(x) + N_{Omega_0}(x)`` by interval arithmetic.

    Raises
    ------
    NotUnivariate, NotBox
        For instances outside the scalar-interval setting.
    Infeasible
        If ``x`` is not in the intersection of the local intervals.
    """
    bounds = _require_1d(P)
    lo = max(b[0] for b in bounds)
    hi = min(b[1] for b in bounds)
    x = float(x)
    if lo > hi:
        raise Infeasible(f"the local intervals do not intersect ([{lo}, {hi}])")
    if not (lo - EPS_ACT <= x <= hi + EPS_ACT):
        raise Infeasible(f"x = {x} lies outside the feasible interval [{lo}, {hi}]")
    sub = Interval(0.0, 0.0)
    for f in P.costs:
        sub = sub + f.subdifferential_1d(x)
    normal = _normal_interval(lo, hi, x)
    slack = sub + normal
    return OptimalityCheck(slack.lo <= 0.0 <= slack.hi, sub, normal, slack, Interval(lo, hi))


def feasible_set(P: ProblemInstance):
    """The common feasible set, as a single Box when every local set is an interval box."""
    if all(isinstance(S, (Box, WholeSpace)) for S in P.sets):
        boxes = [
            S if isinstance(S, Box) else Box(np.full(S.dim, -np.inf), np.full(S.dim, np.inf))
            for S in P.sets
        ]
        out = intersect_boxes(boxes)
        if out is not None:
            return out
    return Intersection(tuple(P.sets))


def optimality_residual(P: ProblemInstance, x, tau=1e-3, method="auto") -> float:
    """Stationarity gap of the centralised problem at ``x``.

    When the common feasible set is a single Box the gap is
    ``||P_T(-g(x))||`` with the least-norm subgradient; otherwise it is the
    projected-gradient fixed-point gap ``||x - P(x - tau g(x))|| / tau``.
    Set-valued subdifferentials can make either value an overestimate.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.zeros(P.q)
    for f in P.costs:
        g = g + f.subgradient(x)
    omega = feasible_set(P)
    if method == "auto":
        method = "tangent" if isinstance(omega, (Box, WholeSpace)) else "fixed-point"
    if method == "tangent":
        try:
            return float(np.linalg.norm(omega.project_tangent_cone(x, -g)))
        except UnsupportedSet:
            pass
    return float(np.linalg.norm(x - omega.project(x - tau * g)) / tau)


@dataclass
class OptimalityCertificate:
    x_star: np.ndarray
    g_parts: np.ndarray
    z_parts: np.ndarray
    lambda_star: np.ndarray | None
    residual: float
    cert_tol: float = CERT_TOL

    @property
    def verified(self):
        return self.residual <= self.cert_tol


def _clamp(v, I):
    return min(max(v, I.lo), I.hi)


def _balanced_split(intervals):
    """Least-norm ``u_k in intervals[k]`` with ``sum u_k = 0``.

    The minimiser is ``u_k = clamp(-mu, I_k)`` for the root ``mu`` of the
    nonincreasing piecewise-linear map ``mu -> sum clamp(-mu, I_k)``.
    """
    def total(mu):
        return sum(_clamp(-mu, I) for I in intervals)

    knots = sorted({-e for I in intervals for e in (I.lo, I.hi) if math.isfinite(e)})
    if not knots:
        knots = [0.0]
    lo_mu, hi_mu = knots[0] - 1.0, knots[-1] + 1.0
    if total(lo_mu) < 0 or total(hi_mu) > 0:
        return None
    pts = [lo_mu] + knots + [hi_mu]
    vals = [total(m) for m in pts]
    # the map is linear between consecutive knots, so interpolate on the bracketing piece
    best = None
    for (m0, v0), (m1, v1) in zip(zip(pts, vals), zip(pts[1:], vals[1:])):
        if v0 >= 0 >= v1:
            if v0 == v1:
                # flat piece at zero: the least-norm point sits where |mu| is smallest
                best = min(max(0.0, m0), m1)
            else:
                best = m0 + v0 * (m1 - m0) / (v0 - v1)
            break
    if best is None:
        return None
    return np.array([_clamp(-best, I) for I in intervals])


def reconstruct_lambda_star(P: ProblemInstance, x_star: float) -> OptimalityCertificate:
    """Complete an optimal scalar ``x*`` with a dual vector ``lambda*``.

    Subgradients ``g_i`` and normal vectors ``z_i`` are split by least norm
    subject to ``sum_i (g_i + z_i) = 0``; then ``lambda* = -(1/alpha) L^+ l``
    with ``l_i = g_i + z_i`` (the minimum-norm solution).

    Raises
    ------
    InfeasibleSplit
        If no balanced split exists or the equilibrium residual exceeds
        the certificate tolerance; this contradicts a positive optimality
        check and signals an upstream bug.
    """
    chk = check_optimal_1d(P, x_star)
    if not chk.optimal:
        raise InfeasibleSplit(f"x = {x_star} is not optimal; no multiplier exists")
    x = float(x_star)
    bounds = _require_1d(P)
    intervals = []
    for f, (lo, hi) in zip(P.costs, bounds):
        intervals.append(f.subdifferential_1d(x))
        intervals.append(_normal_interval(lo, hi, x))
    u = _balanced_split(intervals)
    if u is None or abs(u.sum()) > 1e-8:
        raise InfeasibleSplit("could not balance subgradients against normal vectors")
    g = u[0::2].reshape(P.n, 1)
    z = u[1::2].reshape(P.n, 1)
    l = g + z
    lam = -P.network.spectral.pinv_apply(l) / P.alpha
    cert = OptimalityCertificate(np.array([x]), g, z, lam, 0.0)
    cert.residual = equilibrium_condition_residual(P, cert)
    if not cert.verified:
        raise InfeasibleSplit(f"equilibrium residual {cert.residual:.3e} exceeds {CERT_TOL}")
    return cert


def equilibrium_condition_residual(P: ProblemInstance, cert: OptimalityCertificate) -> float:
    """Max over agents of ``||P_{T_i}(-g_i - alpha (L lambda*)_i)||`` at ``x*``."""
    x = np.tile(cert.x_star, (P.n, 1))
    ll = P.network.apply_laplacian(cert.lambda_star)
    worst = 0.0
    for i, S in enumerate(P.sets):
        v = S.project_tangent_cone(x[i], -cert.g_parts[i] - P.alpha * ll[i])
        worst = max(worst, float(np.linalg.norm(v)))
    return worst


# -- gain schedule ------------------------------------------------------------


@dataclass(frozen=True)
class GainSchedule:
    alpha: float
    k: float
    Qn: np.ndarray
    lambda_bar: np.ndarray
    identity_residual: float

    def apply_Q(self, y):
        """``(Q_n (x) I_q) y`` applied blockwise to ``(n, q)`` data."""
        return self.Qn @ y

    @property
    def q_max(self):
        return float(np.linalg.eigvalsh(self.Qn).max())

    @property
    def q_min(self):
        return float(np.linalg.eigvalsh(self.Qn).min())


def build_gain_schedule(N: Network, alpha: float, k_fraction: float = 0.5) -> GainSchedule:
    """Build ``Q_n`` for ``k = k_fraction / (alpha * lambda_max)``.

    Raises
    ------
    IdentityViolation
        If ``Q_n`` is not positive definite or the matrix identity fails by
        more than 1e-9 in Frobenius norm.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0 < k_fraction < 1:
        raise ValueError("k_fraction must lie in (0, 1)")
    sp = N.spectral
    L = N.laplacian
    k = k_fraction / (alpha * sp.lambda_max)
    kernel = sp.kernel_mask()
    lam = sp.eigenvalues
    lambda_bar = np.where(kernel, 2.0 * k * alpha, 1.0 / np.where(kernel, 1.0, lam))
    Qn = k * alpha**2 * (sp.Q * (lambda_bar / (k * alpha) - 1.0)) @ sp.Q.T
    Qn = 0.5 * (Qn + Qn.T)
    resid = float(np.linalg.norm(alpha * L - k * alpha**2 * L @ L - L @ Qn @ L))
    if resid > 1e-9:
        raise IdentityViolation(f"identity residual {resid:.3e} exceeds 1e-9")
    if np.linalg.eigvalsh(Qn).min() <= 0:
        raise IdentityViolation("Q_n is not positive definite")
    return GainSchedule(float(alpha), float(k), Qn, lambda_bar, resid)


# -- Lyapunov functions -------------------------------------------------------


def v1(x, lam, x_ref, lam_ref):
    return 0.5 * float(np.sum((x - x_ref) ** 2) + np.sum((lam - lam_ref) ** 2))


def v2(P: ProblemInstance, x, lam, f_star):
    lx = P.network.apply_laplacian(x)
    return P.total_cost(x) - f_star + P.alpha * (0.5 * float(np.sum(x * lx)) + float(np.sum(lx * lam)))


def v_star(P, x, lam, cert: OptimalityCertificate, schedule: GainSchedule):
    x_ref = np.tile(cert.x_star, (P.n, 1))
    f_star = P.total_cost(x_ref)
    return v1(x, lam, x_ref, cert.lambda_star) + schedule.k * v2(P, x, lam, f_star)


def dissipation(xdot, lamdot, schedule: GainSchedule):
    """``W = k ||x_dot||^2 + lambda_dot^T (Q_n (x) I) lambda_dot``."""
    return schedule.k * float(np.sum(xdot**2)) + float(np.sum(lamdot * schedule.apply_Q(lamdot)))


@dataclass
class Monotonicity:
    increases: int
    violations: int
    max_jump: float
    cumulative_increase: float
    initial: float
    steps: int

    @property
    def violating_fraction(self):
        return self.violations / max(self.steps, 1)


def monotonicity(series, slack):
    d = np.diff(np.asarray(series, dtype=float))
    pos = d[d > 0]
    return Monotonicity(
        increases=int(pos.size),
        violations=int(np.sum(d > slack)),
        max_jump=float(pos.max()) if pos.size else 0.0,
        cumulative_increase=float(pos.sum()),
        initial=float(series[0]),
        steps=int(d.size),
    )


@dataclass
class LyapunovReport:
    t: np.ndarray
    V1: np.ndarray
    V2: np.ndarray | None
    Vstar: np.ndarray | None
    W: np.ndarray
    consensus_gap: np.ndarray
    stats: dict = field(default_factory=dict)
    slack: float = 0.0
    certified: bool = False

    @property
    def min_vstar(self):
        return None if self.Vstar is None else float(self.Vstar.min())

    def rows(self):
        """Rows of ``(t, V1, V2, Vstar, W, consensus_gap)``; absent series give NaN."""
        m = len(self.t)
        nan = np.full(m, np.nan)
        V2 = self.V2 if self.V2 is not None else nan
        Vs = self.Vstar if self.Vstar is not None else nan
        return zip(self.t, self.V1, V2, Vs, self.W, self.consensus_gap)


def lyapunov_audit(
    trace: TrajectoryTrace,
    P: ProblemInstance,
    schedule: GainSchedule,
    cert: OptimalityCertificate | None = None,
    ref: tuple | None = None,
    c_slack: float = C_SLACK,
) -> LyapunovReport:
    """Evaluate the Lyapunov functions along ``trace``.

    With a certificate, V1 is centred on ``(1 (x) x*, lambda*)`` and V2, V
    are evaluated as well.  Without one, V1 is centred on ``ref`` or, by
    default, on the trace's final state, and only it is audited.  Per-step
    increases above ``c_slack * h`` count as violations.
    """
    if schedule.Qn.shape[0] != P.n or trace.x.shape[1:] != (P.n, P.q):
        raise DimensionMismatch("schedule, instance and trace disagree on the agent count")
    h = trace.meta.get("h", 1.0) * trace.meta.get("record_stride", 1)
    slack = c_slack * h
    if cert is not None:
        x_ref = np.tile(cert.x_star, (P.n, 1))
        lam_ref = cert.lambda_star
    elif ref is not None:
        x_ref = np.asarray(ref[0], dtype=float).reshape(P.n, P.q)
        lam_ref = np.asarray(ref[1], dtype=float).reshape(P.n, P.q)
    else:
        x_ref, lam_ref = trace.x[-1], trace.lam[-1]
    V1 = np.array([v1(x, l, x_ref, lam_ref) for x, l in zip(trace.x, trace.lam)])
    W = np.array([dissipation(xd, ld, schedule) for xd, ld in zip(trace.xdot, trace.lamdot)])
    V2 = Vs = None
    stats = {"V1": monotonicity(V1, slack)}
    if cert is not None:
        f_star = P.total_cost(x_ref)
        V2 = np.array([v2(P, x, l, f_star) for x, l in zip(trace.x, trace.lam)])
        Vs = V1 + schedule.k * V2
        stats["Vstar"] = monotonicity(Vs, slack)
    return LyapunovReport(
        trace.t.copy(), V1, V2, Vs, W, trace.consensus_gap.copy(), stats, slack, cert is not None
    )


# -- trajectory checks --------------------------------------------------------


def dual_drift(trace: TrajectoryTrace) -> float:
    """Largest deviation of ``sum_i lambda_i`` from its initial value."""
    s = trace.lam.sum(axis=1)
    return float(np.abs(s - s[0]).max())


def feasibility_violation(trace: TrajectoryTrace, P: ProblemInstance) -> float:
    """Largest distance of any recorded ``x_i`` from its local set."""
    worst = 0.0
    for i, S in enumerate(P.sets):
        for x in trace.x[:, i]:
            worst = max(worst, float(np.linalg.norm(x - S.project(x))))
    return worst


def equilibrium_residual(P: ProblemInstance, state: SystemState) -> float:
    """``||v_x|| + ||v_lambda||`` of the flow at ``state``."""
    vx, vl = velocity_field(P, state)
    return float(np.linalg.norm(vx) + np.linalg.norm(vl))
