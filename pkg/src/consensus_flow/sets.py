"""
Closed convex sets with exact Euclidean projection oracles.

Every set exposes four geometric oracles:

- ``project(u)``: the Euclidean projection onto the set,
- ``contains(x, tol)``: distance-based membership,
- ``project_tangent_cone(x, v)``: projection of ``v`` onto the tangent cone at ``x``,
- ``in_normal_cone(x, d, tol)``: normal-cone membership via Moreau decomposition.

Box, Ball and Halfspace have closed-form projections and exact tangent cones.
Intersection projects with Dykstra's alternating projections and does not
support the cone oracles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    DykstraNonConvergence,
    InvalidSet,
    NotInSet,
    UnsupportedSet,
)

EPS_ACT = 1e-9
TOL_DYKSTRA = 1e-10
MAX_DYKSTRA_SWEEPS = 10_000


def _vec(u, dim=None, what="vector"):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1:
        raise DimensionMismatch(f"{what} must be one-dimensional, got shape {u.shape}")
    if dim is not None and u.shape[0] != dim:
        raise DimensionMismatch(f"{what} has dimension {u.shape[0]}, expected {dim}")
    return u


@dataclass(frozen=True)
class ActiveFacet:
    """Activity flags of a set's defining inequalities at a point.

    For a Box, ``lower`` and ``upper`` hold one flag per coordinate.  Ball and
    Halfspace have a single constraint, reported in ``upper``.
    """

    lower: tuple
    upper: tuple
    tol: float = EPS_ACT

    @property
    def any(self):
        return any(self.lower) or any(self.upper)


class ConvexSet:
    """Base class for closed convex subsets of R^dim."""

    dim: int

    def project(self, u):
        raise NotImplementedError

    def contains(self, x, tol=0.0):
        x = _vec(x, self.dim)
        return bool(np.linalg.norm(x - self.project(x)) <= tol)

    def active_facets(self, x, tol=EPS_ACT):
        raise UnsupportedSet(f"{type(self).__name__} has no facet description")

    def project_tangent_cone(self, x, v):
        raise UnsupportedSet(
            f"exact tangent cone of {type(self).__name__} is not available; "
            "use the projected-Euler scheme"
        )

    def in_normal_cone(self, x, d, tol=0.0):
        return bool(np.linalg.norm(self.project_tangent_cone(x, d)) <= tol)

    def interior_witnesses(self):
        """Candidate points expected to lie in the interior of this set."""
        return []

    def strictly_contains(self, x):
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError

    def _check_member(self, x):
        x = _vec(x, self.dim)
        if not self.contains(x, EPS_ACT):
            raise NotInSet(f"point {x} is not in {self!r}")
        return x


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidSet("dimension must be positive")

    def project(self, u):
        return _vec(u, self.dim).copy()

    def contains(self, x, tol=0.0):
        _vec(x, self.dim)
        return True

    def active_facets(self, x, tol=EPS_ACT):
        return ActiveFacet((False,) * self.dim, (False,) * self.dim, tol)

    def project_tangent_cone(self, x, v):
        _vec(x, self.dim)
        return _vec(v, self.dim).copy()

    def interior_witnesses(self):
        return [np.zeros(self.dim)]

    def strictly_contains(self, x):
        return True

    def to_spec(self):
        return {"type": "whole", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Axis-aligned box ``{x : lo <= x <= hi}``; bounds may be infinite."""

    lo: np.ndarray
    hi: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lo = _vec(self.lo, what="lo")
        hi = _vec(self.hi, what="hi")
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi differ in length")
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise InvalidSet("box bounds must not be NaN")
        bad = np.flatnonzero(lo > hi)
        if bad.size:
            raise InvalidSet(f"box has lo > hi at coordinate {int(bad[0])}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dim", lo.shape[0])

    def project(self, u):
        return np.clip(_vec(u, self.dim), self.lo, self.hi)

    def contains(self, x, tol=0.0):
        x = _vec(x, self.dim)
        gap = np.maximum(self.lo - x, 0.0) + np.maximum(x - self.hi, 0.0)
        return bool(np.linalg.norm(gap) <= tol)

    def active_facets(self, x, tol=EPS_ACT):
        x = _vec(x, self.dim)
        return ActiveFacet(
            tuple(bool(b) for b in (x - self.lo <= tol)),
            tuple(bool(b) for b in (self.hi - x <= tol)),
            tol,
        )

    def project_tangent_cone(self, x, v):
        x = self._check_member(x)
        v = _vec(v, self.dim)
        out = v.copy()
        at_lo = x - self.lo <= EPS_ACT
        at_hi = self.hi - x <= EPS_ACT
        out[at_lo] = np.maximum(out[at_lo], 0.0)
        out[at_hi] = np.minimum(out[at_hi], 0.0)
        return out

    def interior_witnesses(self):
        return [_box_center(self.lo, self.hi)]

    def strictly_contains(self, x):
        return bool(np.all(self.lo < x) and np.all(x < self.hi))

    def to_spec(self):
        return {"type": "box", "lo": _bounds_out(self.lo), "hi": _bounds_out(self.hi)}


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float
    dim: int = field(init=False)

    def __post_init__(self):
        c = _vec(self.center, what="center")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidSet("ball radius must be a positive finite number")
        if not np.all(np.isfinite(c)):
            raise InvalidSet("ball center must be finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", c.shape[0])

    def project(self, u):
        u = _vec(u, self.dim)
        d = u - self.center
        r = np.linalg.norm(d)
        if r <= self.radius:
            return u.copy()
        s = self.radius / r
        p = self.center + d * s
        # pull back by a few ulps if rounding left the point just outside
        while np.linalg.norm(p - self.center) > self.radius and s > 0:
            s = s * (1.0 - 2.0**-52)
            p = self.center + d * s
        return p

    def active_facets(self, x, tol=EPS_ACT):
        x = _vec(x, self.dim)
        return ActiveFacet((), (bool(np.linalg.norm(x - self.center) >= self.radius - tol),), tol)

    def project_tangent_cone(self, x, v):
        x = self._check_member(x)
        v = _vec(v, self.dim)
        d = x - self.center
        r = np.linalg.norm(d)
        if r < self.radius - EPS_ACT:
            return v.copy()
        n = d / r
        radial = n @ v
        if radial <= 0.0:
            return v.copy()
        return v - radial * n

    def interior_witnesses(self):
        return [self.center.copy()]

    def strictly_contains(self, x):
        return bool(np.linalg.norm(x - self.center) < self.radius)

    def to_spec(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """Halfspace ``{y : a^T y <= b}``."""

    a: np.ndarray
    b: float
    dim: int = field(init=False)

    def __post_init__(self):
        a = _vec(self.a, what="a")
        if not np.all(np.isfinite(a)) or not np.isfinite(self.b):
            raise InvalidSet("halfspace data must be finite")
        if np.linalg.norm(a) == 0:
            raise InvalidSet("halfspace normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", a.shape[0])

    def project(self, u):
        u = _vec(u, self.dim)
        excess = self.a @ u - self.b
        if excess <= 0:
            return u.copy()
        t = excess / (self.a @ self.a)
        p = u - t * self.a
        bump = abs(t) * 2.0**-52 + 1e-300
        while self.a @ p > self.b:
            t += bump
            bump *= 2.0
            p = u - t * self.a
        return p

    def _slack(self, x):
        return (self.b - self.a @ x) / np.linalg.norm(self.a)

    def active_facets(self, x, tol=EPS_ACT):
        x = _vec(x, self.dim)
        return ActiveFacet((), (bool(self._slack(x) <= tol),), tol)

    def project_tangent_cone(self, x, v):
        x = self._check_member(x)
        v = _vec(v, self.dim)
        if self._slack(x) > EPS_ACT:
            return v.copy()
        along = self.a @ v
        if along <= 0:
            return v.copy()
        return v - (along / (self.a @ self.a)) * self.a

    def interior_witnesses(self):
        # point at unit depth below the boundary, closest to the origin
        aa = self.a @ self.a
        return [self.a * ((self.b - math.sqrt(aa)) / aa)]

    def strictly_contains(self, x):
        return bool(self.a @ x < self.b)

    def to_spec(self):
        return {"type": "halfspace", "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Intersection(ConvexSet):
    """Intersection of convex sets, projected with Dykstra's algorithm."""

    members: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InvalidSet("intersection needs at least one member")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise DimensionMismatch(f"intersection members have dimensions {sorted(dims)}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "dim", dims.pop())

    def project(self, u, tol=TOL_DYKSTRA, max_sweeps=MAX_DYKSTRA_SWEEPS):
        x = _vec(u, self.dim).copy()
        incs = [np.zeros(self.dim) for _ in self.members]
        disp = math.inf
        for _ in range(max_sweeps):
            x_old = x
            moved = 0.0
            for i, m in enumerate(self.members):
                y = m.project(x + incs[i])
                inc = x + incs[i] - y
                moved += float(np.sum((inc - incs[i]) ** 2))
                incs[i] = inc
                x = y
            # the iterate can repeat while the corrections still move, so both must settle
            disp = math.sqrt(float(np.sum((x - x_old) ** 2)) + moved)
            if disp <= tol:
                return x
        raise DykstraNonConvergence(max_sweeps, disp)

    def interior_witnesses(self):
        pts = [p for m in self.members for p in m.interior_witnesses()]
        boxes = [m for m in self.members if isinstance(m, Box)]
        if boxes:
            lo = np.max([b.lo for b in boxes], axis=0)
            hi = np.min([b.hi for b in boxes], axis=0)
            if np.all(lo <= hi):
                pts.append(_box_center(lo, hi))
        return pts

    def strictly_contains(self, x):
        return all(m.strictly_contains(x) for m in self.members)

    def to_spec(self):
        return {"type": "intersection", "members": [m.to_spec() for m in self.members]}


def _box_center(lo, hi):
    c = np.empty_like(lo)
    for j, (l, h) in enumerate(zip(lo, hi)):
        if np.isfinite(l) and np.isfinite(h):
            c[j] = 0.5 * (l + h)
        elif np.isfinite(l):
            c[j] = l + 1.0
        elif np.isfinite(h):
            c[j] = h - 1.0
        else:
            c[j] = 0.0
    return c


def _bounds_out(v):
    return [("inf" if b > 0 else "-inf") if np.isinf(b) else float(b) for b in v]


# -- functional surface -------------------------------------------------------


def project(S: ConvexSet, u) -> np.ndarray:
    return S.project(u)


def contains(S: ConvexSet, x, tol: float = 0.0) -> bool:
    return S.contains(x, tol)


def project_tangent_cone(S: ConvexSet, x, v) -> np.ndarray:
    return S.project_tangent_cone(x, v)


def in_normal_cone(S: ConvexSet, x, d, tol: float = 0.0) -> bool:
    return S.in_normal_cone(x, d, tol)


def check_common_interior(sets: Sequence[ConvexSet], warn=True) -> bool:
    """Probe whether the sets share an interior point.

    Tries box midpoints, ball centers and similar witnesses of every set.  A
    miss only means no witness was found, so it warns rather than raises.
    """
    candidates = []
    for S in sets:
        candidates.extend(S.interior_witnesses())
    candidates.extend(Intersection(tuple(sets)).interior_witnesses())
    for p in candidates:
        if all(S.strictly_contains(p) for S in sets):
            return True
    if warn:
        warnings.warn(
            "no sampled point lies strictly inside every constraint set; "
            "the common interior may be empty",
            RuntimeWarning,
            stacklevel=2,
        )
    return False


def intersect_boxes(boxes: Sequence[Box]) -> Box | None:
    """Exact intersection of boxes, or None when it is empty."""
    lo = np.max([b.lo for b in boxes], axis=0)
    hi = np.min([b.hi for b in boxes], axis=0)
    if np.any(lo > hi):
        return None
    return Box(lo, hi)


# -- schema -------------------------------------------------------------------


def _parse_bounds(values, path):
    if not isinstance(values, list) or not values:
        raise ConfigError(path, "expected a nonempty list of numbers")
    out = []
    for k, v in enumerate(values):
        if isinstance(v, str):
            s = v.strip().lower()
            if s in ("inf", "+inf", "infinity"):
                out.append(math.inf)
            elif s in ("-inf", "-infinity"):
                out.append(-math.inf)
            else:
                raise ConfigError(f"{path}/{k}", f"unrecognised bound {v!r}")
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(float(v))
        else:
            raise ConfigError(f"{path}/{k}", "expected a number or 'inf'/'-inf'")
    return np.array(out)


def _parse_numbers(values, path):
    if isinstance(values, (int, float)) and not isinstance(values, bool):
        values = [values]
    if not isinstance(values, list) or not values:
        raise ConfigError(path, "expected a nonempty list of numbers")
    for k, v in enumerate(values):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ConfigError(f"{path}/{k}", "expected a finite number")
    return np.array(values, dtype=float)


def set_from_spec(spec, path="") -> ConvexSet:
    """Build a set from its tagged-record description.

    Raises ConfigError carrying a JSON-pointer-style path on bad input.
    """
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(path, "expected an object with a 'type' field")
    kind = spec["type"]
    try:
        if kind == "whole":
            dim = spec.get("dim")
            if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
                raise ConfigError(f"{path}/dim", "expected a positive integer")
            return WholeSpace(dim)
        if kind == "box":
            lo = _parse_bounds(spec.get("lo"), f"{path}/lo")
            hi = _parse_bounds(spec.get("hi"), f"{path}/hi")
            return Box(lo, hi)
        if kind == "ball":
            center = _parse_numbers(spec.get("center"), f"{path}/center")
            r = spec.get("radius")
            if not isinstance(r, (int, float)) or isinstance(r, bool):
                raise ConfigError(f"{path}/radius", "expected a positive number")
            return Ball(center, r)
        if kind == "halfspace":
            a = _parse_numbers(spec.get("a"), f"{path}/a")
            b = spec.get("b")
            if not isinstance(b, (int, float)) or isinstance(b, bool):
                raise ConfigError(f"{path}/b", "expected a number")
            return Halfspace(a, b)
        if kind == "intersection":
            members = spec.get("members")
            if not isinstance(members, list) or not members:
                raise ConfigError(f"{path}/members", "expected a nonempty list")
            return Intersection(
                tuple(set_from_spec(m, f"{path}/members/{k}") for k, m in enumerate(members))
            )
    except (InvalidSet, DimensionMismatch) as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}/type", f"unknown set type {kind!r}")
