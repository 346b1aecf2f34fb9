"""
Centralised reference solvers and the seeded random-instance generator.

These never touch the distributed dynamics; they minimise ``sum_i f^i`` over
the intersection of the local sets directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ProblemInstance
from .errors import EmptyIntersection, NotBox, NotUnivariate, UnboundedFeasibleSet
from .funcs import AbsDev, Deadzone, MaxAffine, Sum
from .network import build
from .sets import Box, Intersection, WholeSpace, intersect_boxes


@dataclass
class OracleResult:
    x_opt: np.ndarray
    f_opt: float
    method: str
    budget: float
    argmin_interval: tuple | None = None

    @property
    def unique(self):
        if self.argmin_interval is None:
            return None
        lo, hi = self.argmin_interval
        return hi - lo <= 1e-12

    def to_dict(self):
        out = {
            "x_opt": self.x_opt.tolist() if self.x_opt.size > 1 else float(self.x_opt[0]),
            "f_opt": self.f_opt,
            "method": self.method,
        }
        out["resolution" if self.method == "grid-1d" else "iterations"] = self.budget
        if self.argmin_interval is not None:
            out["argmin_interval"] = list(self.argmin_interval)
        return out


def _total(P, x):
    return float(sum(f.value(x) for f in P.costs))


def feasible_interval(P: ProblemInstance):
    if P.q != 1:
        raise NotUnivariate(f"grid oracle needs q=1, got q={P.q}")
    lo, hi = -math.inf, math.inf
    for S in P.sets:
        if isinstance(S, Box):
            lo, hi = max(lo, float(S.lo[0])), min(hi, float(S.hi[0]))
        elif not isinstance(S, WholeSpace):
            raise NotBox(f"grid oracle needs interval sets, got {type(S).__name__}")
    if lo > hi:
        raise EmptyIntersection(f"local intervals do not intersect (max lo {lo} > min hi {hi})")
    return lo, hi


def grid_solve_1d(P: ProblemInstance, resolution: float = 1e-3, bounds=None) -> OracleResult:
    """Minimise on a grid over the feasible interval, including every kink and endpoint.

    Piecewise-linear totals are minimised exactly because their minimisers
    are among the kinks and endpoints.  ``bounds`` overrides the feasible
    interval (used to search a finite window of an unbounded problem).
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    lo, hi = feasible_interval(P) if bounds is None else bounds
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UnboundedFeasibleSet(f"feasible interval [{lo}, {hi}] is unbounded")
    kinks = {k for f in P.costs for k in f.kinks() if lo <= k <= hi}
    m = int(math.floor((hi - lo) / resolution))
    cands = np.unique(np.concatenate([lo + resolution * np.arange(m + 1), [lo, hi], sorted(kinks)]))
    vals = np.array([_total(P, [c]) for c in cands])
    k = int(np.argmin(vals))
    f_opt = float(vals[k])
    near = cands[vals <= f_opt + 1e-12 * max(1.0, abs(f_opt))]
    return OracleResult(
        np.array([cands[k]]), _total(P, [cands[k]]), "grid-1d", resolution, (float(near.min()), float(near.max()))
    )


def common_set(P: ProblemInstance):
    if all(isinstance(S, (Box, WholeSpace)) for S in P.sets):
        boxes = [
            S if isinstance(S, Box) else Box(np.full(S.dim, -np.inf), np.full(S.dim, np.inf))
            for S in P.sets
        ]
        box = intersect_boxes(boxes)
        if box is None:
            raise EmptyIntersection("local boxes do not intersect")
        return box
    return Intersection(tuple(P.sets))


def centralized_solve(P: ProblemInstance, iters: int = 5000, eta0: float = 1.0, x_start=None) -> OracleResult:
    """Projected subgradient method with steps ``eta0 / sqrt(t + 1)``; returns the best iterate."""
    omega = common_set(P)
    x = omega.project(P.x0.mean(axis=0) if x_start is None else np.asarray(x_start, dtype=float))
    best_x, best_f = x.copy(), _total(P, x)
    for t in range(iters):
        g = np.zeros(P.q)
        for f in P.costs:
            g = g + f.subgradient(x)
        x = omega.project(x - (eta0 / math.sqrt(t + 1.0)) * g)
        fx = _total(P, x)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
    return OracleResult(best_x, best_f, "centralized-projected-subgradient", iters)


# -- random instances ---------------------------------------------------------


def _random_primitive(rng):
    kind = rng.integers(3)
    if kind == 0:
        return Deadzone(rng.uniform(-7.0, 7.0), rng.uniform(0.5, 3.0))
    if kind == 1:
        return AbsDev([rng.uniform(-9.5, 9.5)], rng.uniform(0.2, 2.0))
    # convex piecewise-linear with two or three pieces, kinks in (-10, 10)
    npieces = int(rng.integers(2, 4))
    slopes = np.sort(rng.uniform(-2.0, 2.0, npieces))
    kinks = np.sort(rng.uniform(-9.5, 9.5, npieces - 1))
    pieces = [(slopes[0], -slopes[0] * kinks[0])]
    level = 0.0
    for k in range(1, npieces):
        b = kinks[k - 1]
        pieces.append((slopes[k], level - slopes[k] * b))
        if k < npieces - 1:
            level += slopes[k] * (kinks[k] - b)
    return MaxAffine(tuple(([a], c) for a, c in pieces))


def _random_graph(rng, n):
    A = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):
        i, j = order[k], order[rng.integers(k)]
        A[i, j] = A[j, i] = rng.uniform(0.5, 1.5)
    for i in range(n):
        for j in range(i + 1, n):
            if A[i, j] == 0 and rng.random() < 0.3:
                A[i, j] = A[j, i] = rng.uniform(0.5, 1.5)
    return A


def random_instance(seed: int, n: int | None = None, alpha: float = 1.0) -> ProblemInstance:
    """Seeded scalar instance: random intervals with a common interior and random PL costs."""
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(3, 7))
    while True:
        c = rng.uniform(-5.0, 5.0, n)
        w = rng.uniform(2.0, 8.0, n)
        lo, hi = c - w, c + w
        if lo.max() < hi.min():
            break
    sets = tuple(Box([l], [h]) for l, h in zip(lo, hi))
    costs = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        prims = [_random_primitive(rng) for _ in range(k)]
        costs.append(prims[0] if k == 1 else Sum(tuple(prims)))
    net = build(_random_graph(rng, n), 1)
    x0 = (0.5 * (lo + hi)).reshape(n, 1)
    return ProblemInstance(tuple(costs), sets, x0, np.zeros((n, 1)), net, alpha)
