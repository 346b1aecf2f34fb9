import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_flow import certify as C
from consensus_flow.dynamics import ProblemInstance, run
from consensus_flow.errors import DimensionMismatch, Infeasible, InfeasibleSplit, NotBox, NotUnivariate
from consensus_flow.experiment import PAPER_ADJACENCY
from consensus_flow.funcs import AbsDev, Affine, Interval, Quadratic
from consensus_flow.network import build
from consensus_flow.sets import Ball, Box, WholeSpace


def two_node(alpha=1.0):
    costs = (Affine([1.0]), Affine([-1.0]))
    sets = (Box([-5.0], [5.0]), Box([-5.0], [5.0]))
    return ProblemInstance(costs, sets, [[0.0], [0.0]], [[0.0], [0.0]], build([[0, 1], [1, 0]]), alpha)


# -- optimality --------------------------------------------------------------------------


def test_paper_optimum_interval_test(paper):
    chk = C.check_optimal_1d(paper, -1.0)
    assert chk.optimal
    assert chk.subdifferential == Interval(-2.0, -1.0)
    assert chk.normal_cone.lo == 0.0 and chk.normal_cone.hi == np.inf


def test_paper_non_optimal_point(paper):
    # agents 3, 4, 5 slope -1 and agent 2 sits on its kink at -3
    chk = C.check_optimal_1d(paper, -3.0)
    assert not chk.optimal
    assert chk.subdifferential == Interval(-4.0, -3.0)
    assert chk.normal_cone == Interval(0.0, 0.0)


def test_unconstrained_flat_point(paper_free):
    assert C.check_optimal_1d(paper_free, 3.0).optimal
    assert not C.check_optimal_1d(paper_free, 6.5).optimal


def test_check_errors(paper):
    with pytest.raises(Infeasible):
        C.check_optimal_1d(paper, -8.0)
    P = ProblemInstance((Quadratic(np.eye(2)),), (WholeSpace(2),), [[0.0, 0.0]], [[0.0, 0.0]], build([[0]], 2), 1.0)
    with pytest.raises(NotUnivariate):
        C.check_optimal_1d(P, 0.0)
    P = ProblemInstance((Affine([1.0]),), (Ball([0.0], 1.0),), [[0.0]], [[0.0]], build([[0]]), 1.0)
    with pytest.raises(NotBox):
        C.check_optimal_1d(P, 0.0)


def test_optimality_residual(paper):
    assert C.optimality_residual(paper, [-1.0]) <= 1e-9
    assert C.optimality_residual(paper, [-1.0], method="fixed-point") <= 1e-9
    # least-norm subgradient of [-4, -3] at an interior point
    assert C.optimality_residual(paper, [-3.0]) == pytest.approx(3.0)
    P = ProblemInstance((Quadratic([[2.0]], [-4.0]),), (WholeSpace(1),), [[0.0]], [[0.0]], build([[0]]), 1.0)
    assert C.optimality_residual(P, [2.0]) == 0.0
    assert C.optimality_residual(P, [0.5]) == pytest.approx(3.0)


# -- multipliers ----------------------------------------------------------------------------


def test_single_node_multiplier():
    P = ProblemInstance((AbsDev([3.0], 1.0),), (Box([0.0], [1.0]),), [[0.5]], [[0.0]], build([[0]]), 1.0)
    cert = C.reconstruct_lambda_star(P, 1.0)
    assert cert.lambda_star.tolist() == [[0.0]]
    assert cert.verified


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_two_node_multiplier(alpha):
    cert = C.reconstruct_lambda_star(two_node(alpha), 0.0)
    assert cert.g_parts.ravel().tolist() == [1.0, -1.0]
    assert cert.z_parts.ravel().tolist() == [0.0, 0.0]
    np.testing.assert_allclose(cert.lambda_star.ravel(), [-0.5 / alpha, 0.5 / alpha], atol=1e-15)


def test_paper_multiplier(paper):
    cert = C.reconstruct_lambda_star(paper, -1.0)
    assert cert.residual <= 1e-8
    # the equilibrium conditions written out: L lambda* balances the chosen subgradients
    l = cert.g_parts + cert.z_parts
    np.testing.assert_allclose(-paper.alpha * paper.network.laplacian @ cert.lambda_star, l, atol=1e-12)
    assert abs(cert.lambda_star.sum()) <= 1e-12


def test_multiplier_needs_optimal_point(paper):
    with pytest.raises(InfeasibleSplit):
        C.reconstruct_lambda_star(paper, -3.0)


def _split_brute(intervals, grid=401):
    # dense search over the first two coordinates, third fixed by the zero-sum constraint
    a, b, c = intervals
    best, arg = np.inf, None
    for u in np.linspace(a.lo, a.hi, grid):
        for v in np.linspace(b.lo, b.hi, grid):
            w = -u - v
            if c.lo - 1e-12 <= w <= c.hi + 1e-12:
                n = u * u + v * v + w * w
                if n < best:
                    best, arg = n, (u, v, w)
    return best, arg


def test_balanced_split_matches_brute_force(rng):
    for _ in range(10):
        ivs = []
        for _ in range(3):
            lo = rng.uniform(-3, 2)
            ivs.append(Interval(lo, lo + rng.uniform(0, 3)))
        u = C._balanced_split(ivs)
        best, arg = _split_brute(ivs)
        if arg is None:
            continue
        assert u is not None and abs(u.sum()) <= 1e-12
        assert all(I.lo - 1e-12 <= v <= I.hi + 1e-12 for v, I in zip(u, ivs))
        assert float(u @ u) <= best + 1e-12


# -- gain schedule ------------------------------------------------------------------------


def test_two_node_gain_schedule():
    S = C.build_gain_schedule(build([[0, 1], [1, 0]]), 1.0, k_fraction=0.5)
    assert S.k == pytest.approx(0.25)
    np.testing.assert_allclose(S.lambda_bar, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(S.Qn, 0.25 * np.eye(2), atol=1e-15)
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(L @ S.Qn @ L, 0.5 * L, atol=1e-15)


def test_gain_schedule_near_boundary():
    S = C.build_gain_schedule(build(PAPER_ADJACENCY), 1.0, k_fraction=0.999)
    assert S.q_min > 0


def test_paper_gain_schedule():
    S = C.build_gain_schedule(build(PAPER_ADJACENCY), 1.0)
    assert S.identity_residual <= 1e-9
    with pytest.raises(ValueError):
        C.build_gain_schedule(build(PAPER_ADJACENCY), 1.0, k_fraction=1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.floats(0.1, 5.0), st.integers(0, 2**31))
def test_identity_on_random_graphs(n, alpha, seed):
    rng = np.random.default_rng(seed)
    A = np.zeros((n, n))
    for k in range(1, n):
        j = rng.integers(k)
        A[k, j] = A[j, k] = rng.uniform(0.1, 2)
    N = build(A)
    S = C.build_gain_schedule(N, alpha)
    L = N.laplacian
    lhs = alpha * L - S.k * alpha**2 * L @ L
    assert np.linalg.norm(lhs - L @ S.Qn @ L) <= 1e-9
    assert np.linalg.eigvalsh(S.Qn).min() > 0


# -- Lyapunov ----------------------------------------------------------------------------


def test_v1_zero_at_reference(paper):
    cert = C.reconstruct_lambda_star(paper, -1.0)
    S = C.build_gain_schedule(paper.network, 1.0)
    x = np.full((5, 1), -1.0)
    assert C.v1(x, cert.lambda_star, x, cert.lambda_star) == 0.0
    assert C.v_star(paper, x, cert.lambda_star, cert, S) == pytest.approx(0.0, abs=1e-12)


@pytest.fixture(scope="module")
def audited(paper):
    tr = run(paper, 1e-3, 60, 1e-6, "semi-implicit")
    S = C.build_gain_schedule(paper.network, 1.0)
    cert = C.reconstruct_lambda_star(paper, -1.0)
    return tr, S, C.lyapunov_audit(tr, paper, S, cert=cert), C.lyapunov_audit(tr, paper, S)


def test_audit_certified(audited):
    tr, S, rep, _ = audited
    assert rep.certified
    for name in ("V1", "Vstar"):
        m = rep.stats[name]
        assert m.violations == 0
        assert m.cumulative_increase <= 1e-3 * m.initial
    assert rep.min_vstar >= -1e-9


def test_audit_final_state_reference(audited):
    tr, S, _, rep = audited
    assert not rep.certified and rep.Vstar is None
    assert rep.V1[-1] == 0.0
    assert rep.stats["V1"].violating_fraction <= 1e-3


def test_dissipation_bounds(audited):
    tr, S, rep, _ = audited
    assert rep.W.min() >= 0
    assert rep.W[-1] <= 1e-6**2 * (S.k + S.q_max)


def test_audit_dimension_mismatch(audited, paper):
    tr, _, _, _ = audited
    with pytest.raises(DimensionMismatch):
        C.lyapunov_audit(tr, paper, C.build_gain_schedule(build([[0, 1], [1, 0]]), 1.0))


def test_trace_checks(audited, paper):
    tr = audited[0]
    assert C.dual_drift(tr) <= 1e-8
    assert C.feasibility_violation(tr, paper) == 0.0
    assert C.equilibrium_residual(paper, tr.final_state) <= 10 * 1e-6


def test_monotonicity_counts():
    m = C.monotonicity([3.0, 2.0, 2.5, 1.0, 1.05], slack=0.1)
    assert (m.increases, m.violations) == (2, 1)
    assert m.max_jump == pytest.approx(0.5) and m.cumulative_increase == pytest.approx(0.55)
