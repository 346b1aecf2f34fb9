import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_flow.errors import ConfigError, DimensionMismatch, Disconnected, NegativeWeight, NotSymmetric
from consensus_flow.experiment import PAPER_ADJACENCY
from consensus_flow.network import apply_laplacian, build, jacobi_eigh, neighbor_view, network_from_spec, spectral

PATH2 = [[0, 1], [1, 0]]


def random_connected(rng, n):
    A = np.zeros((n, n))
    for k in range(1, n):
        j = rng.integers(k)
        A[k, j] = A[j, k] = rng.uniform(0.1, 3)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                A[i, j] = A[j, i] = rng.uniform(0.1, 3)
    return A


def test_paper_graph_degrees_and_row():
    N = build(PAPER_ADJACENCY)
    assert N.degrees.tolist() == [2, 3, 2, 2, 3]
    assert N.laplacian[0].tolist() == [2, -1, 0, 0, -1]
    assert np.all(N.laplacian.sum(axis=1) == 0)


def test_two_node_path():
    N = build(PATH2)
    assert N.laplacian.tolist() == [[1, -1], [-1, 1]]
    assert apply_laplacian(N, [1.0, 0.0]).tolist() == [1.0, -1.0]
    np.testing.assert_allclose(spectral(N).eigenvalues, [0.0, 2.0], atol=1e-15)
    assert N.lambda_max == pytest.approx(2.0, abs=1e-15)
    assert neighbor_view(N, 1) == [(0, 1.0)]


def test_paper_graph_first_column():
    N = build(PAPER_ADJACENCY)
    e = np.zeros(5)
    e[0] = 1
    assert N.apply_laplacian(e).tolist() == [2, -1, 0, 0, -1]
    np.testing.assert_array_equal(N.apply_laplacian(e), N.dense_lift() @ e)


def test_paper_graph_spectrum_envelope():
    N = build(PAPER_ADJACENCY)
    assert 0 < N.lambda_max <= 2 * N.degrees.max()
    np.testing.assert_allclose(N.spectral.eigenvalues, np.linalg.eigvalsh(N.laplacian), atol=1e-12)


def test_complete_graph_spectrum():
    N = build(np.ones((3, 3)) - np.eye(3))
    np.testing.assert_allclose(N.spectral.eigenvalues, [0, 3, 3], atol=1e-14)


def test_paper_neighbors():
    N = build(PAPER_ADJACENCY)
    # 0-based indices of the printed rows 1 and 3
    assert N.neighbor_view(0) == [(1, 1.0), (4, 1.0)]
    assert N.neighbor_view(2) == [(1, 1.0), (3, 1.0)]


def test_kernel_is_consensus():
    N = build(PAPER_ADJACENCY, q=3)
    y = np.tile([1.5, -2.0, 7.0], (5, 1))
    assert np.all(N.apply_laplacian(y) == 0)
    assert N.apply_laplacian(y.reshape(-1)).shape == (15,)
    with pytest.raises(DimensionMismatch):
        N.apply_laplacian(np.zeros(14))


def test_build_errors():
    with pytest.raises(Disconnected) as exc:
        build([[0, 0], [0, 0]])
    assert exc.value.components == [[0], [1]]
    with pytest.raises(NotSymmetric) as exc:
        build([[0, 1], [2, 0]])
    assert (exc.value.i, exc.value.j) == (0, 1)
    with pytest.raises(NegativeWeight):
        build([[0, -1], [-1, 0]])
    with pytest.raises(ValueError):
        build([[1, 1], [1, 0]])


def test_spec_errors_carry_indices():
    with pytest.raises(ConfigError) as exc:
        network_from_spec({"adjacency": [[0, 1], [2, 0]]}, 1, "/graph")
    assert exc.value.path == "/graph/adjacency/0/1"
    with pytest.raises(ConfigError):
        network_from_spec({"adjacency": [[0, 1]]}, 1, "/graph")


def test_pickle_round_trip():
    N = build(PAPER_ADJACENCY, q=2)
    M = pickle.loads(pickle.dumps(N))
    assert np.array_equal(M.laplacian, N.laplacian) and M.q == 2


def test_jacobi_matches_numpy_on_random_symmetric(rng):
    for _ in range(300):
        n = int(rng.integers(1, 9))
        B = rng.normal(size=(n, n)) * 10.0 ** rng.uniform(-4, 4)
        S = B + B.T
        w, V = jacobi_eigh(S)
        scale = max(np.abs(S).max(), 1e-300)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(S), atol=1e-12 * scale)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, S, atol=1e-12 * scale)
        np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)


def test_jacobi_tiny_off_diagonal():
    S = np.array([[1.0, 1e-200], [1e-200, 2.0]])
    w, _ = jacobi_eigh(S)
    assert w.tolist() == [1.0, 2.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31))
def test_spectral_invariants(n, seed):
    N = build(random_connected(np.random.default_rng(seed), n))
    sp = N.spectral
    L = N.laplacian
    assert np.linalg.norm(sp.Q @ np.diag(sp.eigenvalues) @ sp.Q.T - L) <= 1e-9 * np.linalg.norm(L)
    assert abs(sp.eigenvalues[0]) <= 1e-10
    assert sp.eigenvalues[1] > 1e-10
    y = np.random.default_rng(seed).normal(size=(n, 1))
    y -= y.mean()
    np.testing.assert_allclose(L @ sp.pinv_apply(y), y, atol=1e-9)
