"""
Convex cost oracles.

Each cost supports ``value``, a deterministic least-norm ``subgradient``
selection and, for univariate costs, the exact subdifferential interval
``subdifferential_1d``.  Selections compose additively through ``Sum`` and
``Scaled``.

Quadratic costs follow the convention ``0.5 x^T P x + q^T x + r``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DimensionMismatch, InvalidFunction, NotUnivariate

EPS_KINK = 1e-9


class Interval(NamedTuple):
    """Closed interval of extended reals."""

    lo: float
    hi: float

    def __add__(self, other):
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def scale(self, c):
        if c >= 0:
            return Interval(c * self.lo, c * self.hi)
        return Interval(c * self.hi, c * self.lo)

    def contains(self, v, tol=0.0):
        return self.lo - tol <= v <= self.hi + tol

    @property
    def width(self):
        return self.hi - self.lo


def _vec(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimensionMismatch(f"expected a vector of dimension {dim}, got shape {x.shape}")
    return x


def _scalar(x):
    if isinstance(x, float):
        return x
    x = np.asarray(x, dtype=float)
    if x.size != 1:
        raise NotUnivariate("subdifferential_1d needs a scalar argument")
    return float(x.reshape(-1)[0])


class ConvexFunction:
    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def subdifferential_1d(self, x) -> Interval:
        if self.dim != 1:
            raise NotUnivariate(f"{type(self).__name__} has dimension {self.dim}")
        return self._interval(_scalar(x))

    def _interval(self, x):
        raise NotImplementedError

    def kinks(self):
        """Breakpoints of a univariate piecewise-linear part (empty if smooth)."""
        return []

    def lipschitz_bound(self, radius=1.0):
        """Bound on the subgradient norm over the ball of the given radius."""
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Affine(ConvexFunction):
    a: np.ndarray
    b: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", a.shape[0])

    def value(self, x):
        return float(self.a @ _vec(x, self.dim) + self.b)

    def subgradient(self, x):
        _vec(x, self.dim)
        return self.a.copy()

    def _interval(self, x):
        return Interval(float(self.a[0]), float(self.a[0]))

    def lipschitz_bound(self, radius=1.0):
        return float(np.linalg.norm(self.a))

    def to_spec(self):
        return {"type": "affine", "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Quadratic(ConvexFunction):
    P: np.ndarray
    q: np.ndarray | None = None
    r: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n):
            raise InvalidFunction("P must be square")
        if not np.allclose(P, P.T, rtol=0, atol=1e-12):
            raise InvalidFunction("P must be symmetric")
        if np.linalg.eigvalsh(P).min() < -1e-10:
            raise InvalidFunction("P must be positive semidefinite")
        q = np.zeros(n) if self.q is None else _vec(self.q, n)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "dim", n)

    def value(self, x):
        x = _vec(x, self.dim)
        return float(0.5 * x @ self.P @ x + self.q @ x + self.r)

    def subgradient(self, x):
        return self.P @ _vec(x, self.dim) + self.q

    def _interval(self, x):
        g = float(self.P[0, 0] * x + self.q[0])
        return Interval(g, g)

    def lipschitz_bound(self, radius=1.0):
        return float(np.linalg.norm(self.P, 2) * radius + np.linalg.norm(self.q))

    def to_spec(self):
        return {"type": "quadratic", "P": self.P.tolist(), "q": self.q.tolist(), "r": self.r}


@dataclass(frozen=True, eq=False)
class AbsDev(ConvexFunction):
    """Weighted l1 deviation ``w * ||x - center||_1``."""

    center: np.ndarray
    weight: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.weight < 0:
            raise InvalidFunction("AbsDev weight must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "dim", c.shape[0])

    def value(self, x):
        return float(self.weight * np.abs(_vec(x, self.dim) - self.center).sum())

    def subgradient(self, x):
        d = _vec(x, self.dim) - self.center
        g = np.where(d > EPS_KINK, 1.0, np.where(d < -EPS_KINK, -1.0, 0.0))
        return self.weight * g

    def _interval(self, x):
        d = x - self.center[0]
        w = self.weight
        if d > EPS_KINK:
            return Interval(w, w)
        if d < -EPS_KINK:
            return Interval(-w, -w)
        return Interval(-w, w)

    def kinks(self):
        return [float(self.center[0])] if self.dim == 1 else []

    def lipschitz_bound(self, radius=1.0):
        return self.weight * math.sqrt(self.dim)

    def to_spec(self):
        return {"type": "absdev", "center": self.center.tolist(), "weight": self.weight}


@dataclass(frozen=True, eq=False)
class Deadzone(ConvexFunction):
    """``max(0, c - rho - x, x - c - rho)`` on the real line."""

    center: float
    halfwidth: float
    dim: int = field(init=False, default=1)

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise InvalidFunction("deadzone halfwidth must be positive")
        object.__setattr__(self, "center", float(self.center))
        object.__setattr__(self, "halfwidth", float(self.halfwidth))

    @property
    def left(self):
        return self.center - self.halfwidth

    @property
    def right(self):
        return self.center + self.halfwidth

    def value(self, x):
        x = float(_vec(x, 1)[0])
        return max(0.0, self.left - x, x - self.right)

    def subgradient(self, x):
        x = float(_vec(x, 1)[0])
        if x < self.left - EPS_KINK:
            return np.array([-1.0])
        if x > self.right + EPS_KINK:
            return np.array([1.0])
        return np.array([0.0])

    def _interval(self, x):
        if x < self.left - EPS_KINK:
            return Interval(-1.0, -1.0)
        if x <= self.left + EPS_KINK:
            return Interval(-1.0, 0.0)
        if x < self.right - EPS_KINK:
            return Interval(0.0, 0.0)
        if x <= self.right + EPS_KINK:
            return Interval(0.0, 1.0)
        return Interval(1.0, 1.0)

    def kinks(self):
        return [self.left, self.right]

    def lipschitz_bound(self, radius=1.0):
        return 1.0

    def to_spec(self):
        return {"type": "deadzone", "center": self.center, "halfwidth": self.halfwidth}


@dataclass(frozen=True, eq=False)
class MaxAffine(ConvexFunction):
    """Pointwise maximum of affine pieces ``a_k^T x + b_k``."""

    pieces: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        if not self.pieces:
            raise InvalidFunction("MaxAffine needs at least one piece")
        A = np.array([np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in self.pieces])
        b = np.array([float(bb) for _, bb in self.pieces])
        object.__setattr__(self, "pieces", tuple((tuple(a), bb) for a, bb in zip(A, b)))
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "dim", A.shape[1])

    def value(self, x):
        return float(np.max(self._A @ _vec(x, self.dim) + self._b))

    def _active(self, x):
        vals = self._A @ x + self._b
        return np.flatnonzero(vals >= vals.max() - EPS_KINK)

    def subgradient(self, x):
        x = _vec(x, self.dim)
        return _min_norm_hull(self._A[self._active(x)])

    def _interval(self, x):
        slopes = self._A[self._active(np.array([x])), 0]
        return Interval(float(slopes.min()), float(slopes.max()))

    def kinks(self):
        if self.dim != 1:
            return []
        out = []
        a, b = self._A[:, 0], self._b
        for i, j in itertools.combinations(range(len(b)), 2):
            if a[i] != a[j]:
                x = (b[j] - b[i]) / (a[i] - a[j])
                if abs(self.value([x]) - (a[i] * x + b[i])) <= 1e-9 * (1 + abs(x)):
                    out.append(float(x))
        return out

    def lipschitz_bound(self, radius=1.0):
        return float(np.linalg.norm(self._A, axis=1).max())

    def to_spec(self):
        return {
            "type": "maxaffine",
            "pieces": [{"a": list(map(float, a)), "b": float(b)} for a, b in self.pieces],
        }


@dataclass(frozen=True, eq=False)
class Sum(ConvexFunction):
    members: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InvalidFunction("Sum needs at least one member")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise DimensionMismatch(f"Sum members have dimensions {sorted(dims)}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "dim", dims.pop())

    def value(self, x):
        return float(sum(m.value(x) for m in self.members))

    def subgradient(self, x):
        g = np.zeros(self.dim)
        for m in self.members:
            g = g + m.subgradient(x)
        return g

    def _interval(self, x):
        out = Interval(0.0, 0.0)
        for m in self.members:
            out = out + m._interval(x)
        return out

    def kinks(self):
        return sorted({k for m in self.members for k in m.kinks()})

    def lipschitz_bound(self, radius=1.0):
        return sum(m.lipschitz_bound(radius) for m in self.members)

    def to_spec(self):
        return {"type": "sum", "members": [m.to_spec() for m in self.members]}


@dataclass(frozen=True, eq=False)
class Scaled(ConvexFunction):
    kappa: float
    inner: ConvexFunction
    dim: int = field(init=False)

    def __post_init__(self):
        if not self.kappa >= 0:
            raise InvalidFunction("Scaled factor must be nonnegative")
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "dim", self.inner.dim)

    def value(self, x):
        return self.kappa * self.inner.value(x)

    def subgradient(self, x):
        return self.kappa * self.inner.subgradient(x)

    def _interval(self, x):
        return self.inner._interval(x).scale(self.kappa)

    def kinks(self):
        return self.inner.kinks() if self.kappa > 0 else []

    def lipschitz_bound(self, radius=1.0):
        return self.kappa * self.inner.lipschitz_bound(radius)

    def to_spec(self):
        return {"type": "scaled", "kappa": self.kappa, "inner": self.inner.to_spec()}


def _min_norm_hull(G):
    """Least-norm point of the convex hull of the rows of ``G``.

    Exact for up to a dozen rows: every support subset is tried, the affine
    minimum-norm point is solved on it and kept when its weights are
    nonnegative.  Larger active sets fall back to projected gradient on the
    simplex.
    """
    m = G.shape[0]
    if m == 1:
        return G[0].copy()
    if m <= 12:
        best, best_norm = None, math.inf
        for size in range(1, m + 1):
            for S in itertools.combinations(range(m), size):
                w = _affine_min_norm_weights(G[list(S)])
                if w is None or np.any(w < -1e-12):
                    continue
                p = np.clip(w, 0, None) @ G[list(S)]
                nrm = float(p @ p)
                if nrm < best_norm - 1e-15:
                    best, best_norm = p, nrm
        return best
    w = np.full(m, 1.0 / m)
    step = 1.0 / max(np.linalg.norm(G @ G.T, 2), 1e-12)
    for _ in range(20_000):
        w = _project_simplex(w - step * (G @ (G.T @ w)))
    return w @ G


def _affine_min_norm_weights(G):
    k = G.shape[0]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G @ G.T
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    w = sol[:k]
    if abs(w.sum() - 1.0) > 1e-9:
        return None
    return w


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = ind[u - css / ind > 0][-1]
    return np.maximum(v - css[rho - 1] / rho, 0.0)


# -- functional surface -------------------------------------------------------


def value(F: ConvexFunction, x) -> float:
    return F.value(x)


def subgradient(F: ConvexFunction, x) -> np.ndarray:
    return F.subgradient(x)


def subdifferential_1d(F: ConvexFunction, x) -> Interval:
    return F.subdifferential_1d(x)


@dataclass
class ConvexityReport:
    samples: int
    midpoint_violations: int
    subgradient_violations: int
    worst_midpoint: float
    worst_subgradient: float

    @property
    def violations(self):
        return self.midpoint_violations + self.subgradient_violations

    @property
    def ok(self):
        return self.violations == 0


def validate_convexity(F: ConvexFunction, samples=1000, seed=0, scale=10.0) -> ConvexityReport:
    """Monte-Carlo check of midpoint convexity and the subgradient inequality."""
    rng = np.random.default_rng(seed)
    kinks = F.kinks()
    spread = scale + (max(abs(k) for k in kinks) if kinks else 0.0)
    mid_bad = sub_bad = 0
    worst_mid = worst_sub = 0.0
    for _ in range(samples):
        x = rng.uniform(-spread, spread, F.dim)
        y = rng.uniform(-spread, spread, F.dim)
        fx, fy = F.value(x), F.value(y)
        gap = F.value(0.5 * x + 0.5 * y) - 0.5 * fx - 0.5 * fy
        worst_mid = max(worst_mid, gap)
        if gap > 1e-9:
            mid_bad += 1
        gap = fx + F.subgradient(x) @ (y - x) - fy
        worst_sub = max(worst_sub, gap)
        if gap > 1e-9:
            sub_bad += 1
    return ConvexityReport(samples, mid_bad, sub_bad, worst_mid, worst_sub)


# -- schema -------------------------------------------------------------------


def _num(v, path, positive=False, nonneg=False):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(path, "expected a finite number")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be nonnegative")
    return float(v)


def _nums(v, path):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list of numbers")
    return np.array([_num(e, f"{path}/{k}") for k, e in enumerate(v)])


def function_from_spec(spec, path="") -> ConvexFunction:
    """Build a cost from its tagged-record description."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(path, "expected an object with a 'type' field")
    kind = spec["type"]
    try:
        if kind == "deadzone":
            return Deadzone(
                _num(spec.get("center"), f"{path}/center"),
                _num(spec.get("halfwidth"), f"{path}/halfwidth", positive=True),
            )
        if kind == "affine":
            return Affine(_nums(spec.get("a"), f"{path}/a"), _num(spec.get("b", 0.0), f"{path}/b"))
        if kind == "quadratic":
            P = spec.get("P")
            if not isinstance(P, list) or not P:
                raise ConfigError(f"{path}/P", "expected a square matrix")
            rows = [_nums(row, f"{path}/P/{k}") for k, row in enumerate(P)]
            if any(len(r) != len(rows) for r in rows):
                raise ConfigError(f"{path}/P", "expected a square matrix")
            q = spec.get("q")
            q = None if q is None else _nums(q, f"{path}/q")
            return Quadratic(np.array(rows), q, _num(spec.get("r", 0.0), f"{path}/r"))
        if kind == "absdev":
            return AbsDev(
                _nums(spec.get("center"), f"{path}/center"),
                _num(spec.get("weight", 1.0), f"{path}/weight", nonneg=True),
            )
        if kind == "maxaffine":
            pieces = spec.get("pieces")
            if not isinstance(pieces, list) or not pieces:
                raise ConfigError(f"{path}/pieces", "expected a nonempty list")
            out = []
            for k, p in enumerate(pieces):
                if not isinstance(p, dict):
                    raise ConfigError(f"{path}/pieces/{k}", "expected an object with a and b")
                out.append(
                    (_nums(p.get("a"), f"{path}/pieces/{k}/a"), _num(p.get("b"), f"{path}/pieces/{k}/b"))
                )
            return MaxAffine(tuple(out))
        if kind == "sum":
            members = spec.get("members")
            if not isinstance(members, list) or not members:
                raise ConfigError(f"{path}/members", "expected a nonempty list")
            return Sum(tuple(function_from_spec(m, f"{path}/members/{k}") for k, m in enumerate(members)))
        if kind == "scaled":
            return Scaled(
                _num(spec.get("kappa"), f"{path}/kappa", nonneg=True),
                function_from_spec(spec.get("inner"), f"{path}/inner"),
            )
    except (InvalidFunction, DimensionMismatch) as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}/type", f"unknown function type {kind!r}")
