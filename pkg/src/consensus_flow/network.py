"""
Weighted undirected communication graphs.

The Laplacian is assembled with degrees taken as exact row sums of the
adjacency, so ``1^T L = 0`` holds in floating point.  The Kronecker lift
``L (x) I_q`` is never formed; it is applied blockwise on ``(n, q)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    Disconnected,
    EigenNonConvergence,
    NegativeWeight,
    NotSymmetric,
)

KERNEL_REL_TOL = 1e-10


@dataclass(frozen=True)
class SpectralData:
    Q: np.ndarray
    eigenvalues: np.ndarray

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def kernel_mask(self, rel_tol=KERNEL_REL_TOL):
        """True for eigenvalues treated as zero (relative to the largest)."""
        return self.eigenvalues <= rel_tol * max(self.lambda_max, 1e-300)

    def pinv_apply(self, y):
        """Apply the Moore-Penrose pseudoinverse of the Laplacian to ``(n, q)`` data."""
        inv = np.where(self.kernel_mask(), 0.0, 1.0 / np.where(self.kernel_mask(), 1.0, self.eigenvalues))
        return self.Q @ (inv[:, None] * (self.Q.T @ y))


class Network:
    """Connected weighted undirected graph on ``n`` agents of local dimension ``q``.

    Agents are indexed from 0.
    """

    def __init__(self, adjacency, q=1):
        A = np.asarray(adjacency, dtype=float)
        self.adjacency = A
        self.n = A.shape[0]
        self.q = int(q)
        self.degrees = A.sum(axis=1)
        self.laplacian = np.diag(self.degrees) - A
        self._neighbors = tuple(
            tuple((int(j), float(A[i, j])) for j in np.flatnonzero(A[i] > 0)) for i in range(self.n)
        )
        self.adjacency.setflags(write=False)
        self.laplacian.setflags(write=False)

    def __repr__(self):
        return f"Network(n={self.n}, q={self.q}, edges={int((self.adjacency > 0).sum()) // 2})"

    def __getstate__(self):
        return {"adjacency": np.array(self.adjacency), "q": self.q}

    def __setstate__(self, state):
        self.__init__(state["adjacency"], state["q"])

    def neighbor_view(self, i):
        """Positive-weight neighbors of agent ``i`` as ``(j, a_ij)`` pairs."""
        if not 0 <= i < self.n:
            raise IndexError(f"agent index {i} out of range for {self.n} agents")
        return list(self._neighbors[i])

    def apply_laplacian(self, y):
        """Blockwise ``(L (x) I_q) y``; accepts stacked ``(n*q,)`` or ``(n, q)`` input."""
        y = np.asarray(y, dtype=float)
        flat = y.ndim == 1
        if y.size != self.n * self.q:
            raise DimensionMismatch(f"expected {self.n * self.q} entries, got {y.size}")
        Y = y.reshape(self.n, self.q)
        out = np.empty_like(Y)
        for i, nbrs in enumerate(self._neighbors):
            acc = np.zeros(self.q)
            for j, w in nbrs:
                acc += w * (Y[i] - Y[j])
            out[i] = acc
        return out.reshape(-1) if flat else out

    def dense_lift(self):
        """The explicit ``n*q`` square Kronecker lift (for testing only)."""
        return np.kron(self.laplacian, np.eye(self.q))

    @cached_property
    def spectral(self) -> SpectralData:
        w, V = jacobi_eigh(self.laplacian)
        return SpectralData(V, w)

    @property
    def lambda_max(self) -> float:
        return self.spectral.lambda_max


def build(adjacency, q=1) -> Network:
    """Validate an adjacency matrix and assemble the network.

    Raises
    ------
    NotSymmetric, NegativeWeight, Disconnected, ValueError
    """
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"adjacency must be a nonempty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("adjacency entries must be finite")
    if q < 1:
        raise ValueError("local dimension q must be positive")
    n = A.shape[0]
    diag = np.flatnonzero(np.diag(A) != 0)
    if diag.size:
        raise ValueError(f"adjacency has nonzero diagonal at ({diag[0]}, {diag[0]})")
    neg = np.argwhere(A < 0)
    if neg.size:
        i, j = neg[0]
        raise NegativeWeight(int(i), int(j), float(A[i, j]))
    asym = np.argwhere(np.abs(A - A.T) > 1e-12)
    if asym.size:
        i, j = asym[0]
        raise NotSymmetric(int(i), int(j))
    A = 0.5 * (A + A.T)
    comps = components(A)
    if len(comps) > 1:
        raise Disconnected(comps)
    net = Network(A, q)
    if n > 1 and net.spectral.eigenvalues[1] <= 1e-10:
        raise Disconnected(comps)
    return net


def components(A):
    """Connected components of the positive-weight edge set (union-find)."""
    n = A.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(np.asarray(A) > 0)):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def apply_laplacian(N: Network, y):
    return N.apply_laplacian(y)


def spectral(N: Network) -> SpectralData:
    return N.spectral


def neighbor_view(N: Network, i: int):
    return N.neighbor_view(i)


def jacobi_eigh(S, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns eigenvalues in ascending order and the orthogonal matrix whose
    columns are the matching eigenvectors.

    Raises
    ------
    EigenNonConvergence
        If the off-diagonal mass has not dropped below ``tol`` times the
        Frobenius norm after ``max_sweeps`` sweeps.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0:
        return np.zeros(n), V
    tiny = 1e-300 + 1e-30 * scale
    off = 0.0
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A[~np.eye(n, dtype=bool)]))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = A[p, r]
                if abs(apr) <= tiny:
                    A[p, r] = A[r, p] = 0.0
                    continue
                theta = (A[r, r] - A[p, p]) / (2.0 * apr)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                Ap = A[:, p].copy()
                Ar = A[:, r].copy()
                A[:, p] = c * Ap - s * Ar
                A[:, r] = s * Ap + c * Ar
                Ap = A[p, :].copy()
                Ar = A[r, :].copy()
                A[p, :] = c * Ap - s * Ar
                A[r, :] = s * Ap + c * Ar
                A[p, r] = A[r, p] = 0.0
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, r]
                V[:, r] = s * Vp + c * V[:, r]
    else:
        raise EigenNonConvergence(max_sweeps, off)
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def network_from_spec(spec, q, path="") -> Network:
    if not isinstance(spec, dict) or "adjacency" not in spec:
        raise ConfigError(path, "expected an object with an 'adjacency' matrix")
    A = spec["adjacency"]
    if not isinstance(A, list) or not A or not all(isinstance(r, list) for r in A):
        raise ConfigError(f"{path}/adjacency", "expected a square matrix of numbers")
    n = len(A)
    for i, row in enumerate(A):
        if len(row) != n:
            raise ConfigError(f"{path}/adjacency/{i}", f"expected {n} entries")
        for j, v in enumerate(row):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ConfigError(f"{path}/adjacency/{i}/{j}", "expected a finite number")
    try:
        return build(A, q)
    except (NotSymmetric, NegativeWeight) as exc:
        raise ConfigError(f"{path}/adjacency/{exc.i}/{exc.j}", str(exc)) from exc
    except (Disconnected, ValueError) as exc:
        raise ConfigError(f"{path}/adjacency", str(exc)) from exc
