import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from momix.families import Regularizer, box_set, gaussian_diagonal
from momix.polybasis import atomic_moments, enumerate_basis, riesz
from momix.relax import PsdBlock, RelaxationSpec, SdpProblem, VariableGroup, build_tv, build_w2
from momix.sdp import SolverError, SolverOptions, extract_moment_vector, independent_rows, solve


def scalar_problem():
    # min x  s.t.  x = 3,  [x] >= 0
    blk = PsdBlock("x", 1, np.zeros((1, 1)), sp.csr_matrix(np.array([[1.0]])))
    return SdpProblem(np.array([1.0]), sp.csr_matrix(np.array([[1.0]])), np.array([3.0]), [blk], {})


def trace_problem():
    # min trace(X)  s.t.  X11 = 1,  X >= 0;  variables (x11, x12, x22)
    coeffs = sp.csr_matrix(np.array([[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]], dtype=float))
    blk = PsdBlock("X", 2, np.zeros((2, 2)), coeffs)
    return SdpProblem(np.array([1.0, 0.0, 1.0]), sp.csr_matrix(np.array([[1.0, 0, 0]])), np.array([1.0]), [blk], {})


def identity_tv():
    fam = gaussian_diagonal(1)
    spec = RelaxationSpec("tv", 3, fam, box_set([0, 0.05], [1, 1]))
    return build_tv(fam.mixture_moments([[0.4, 0.15]], [1.0], 6), spec)


def single_atom_w2():
    fam = gaussian_diagonal(1)
    spec = RelaxationSpec("w2", 2, fam, box_set([0, 0.05], [1, 1]))
    return build_w2(fam.mixture_moments([[0.5, 0.1]], [1.0], 4), spec)


def test_scalar_equality():
    sol = solve(scalar_problem())
    assert sol.status == "optimal"
    assert sol.primal_obj == pytest.approx(3.0, abs=1e-7)


def test_trace_minimization_hand_solution():
    sol = solve(trace_problem())
    assert sol.status == "optimal"
    assert sol.primal_obj == pytest.approx(1.0, abs=1e-7)
    X = sol.primal[[0, 1, 1, 2]].reshape(2, 2)
    assert np.allclose(X, np.diag([1.0, 0.0]), atol=1e-6)


def test_identity_tv_value_zero():
    prob = identity_tv()
    sol = solve(prob)
    assert sol.status == "optimal"
    assert abs(sol.primal_obj) <= 1e-7
    psi = extract_moment_vector(sol, "psi_plus")
    assert np.max(np.abs(psi.values)) < 1e-4


def test_moment_vector_recovery():
    prob = single_atom_w2()
    sol = solve(prob)
    phi = extract_moment_vector(sol, "phi")
    assert abs(phi.mass - 1.0) <= 1e-8
    # phi need not be unique; a zero transport cost pins the mixture moments
    # of phi to the data only below the top degree
    fam = gaussian_diagonal(1)
    basis = enumerate_basis(1, 3)
    target = fam.mixture_moments([[0.5, 0.1]], [1.0], 4)
    for alpha in basis:
        poly = fam.moment_map(alpha)
        assert riesz(phi, poly) == pytest.approx(target[alpha], abs=1e-6)
    lam = extract_moment_vector(sol, "lambda")
    assert lam[(2, 0)] == pytest.approx(0.5**2 + 0.1**2, abs=1e-8)
    with pytest.raises(KeyError):
        extract_moment_vector(sol, "psi_plus")


@pytest.mark.parametrize("make", [scalar_problem, trace_problem, identity_tv, single_atom_w2])
def test_weak_duality_and_dual_psd(make):
    prob = make()
    sol = solve(prob)
    assert sol.dual_obj <= sol.primal_obj + 1e-9 * (1 + abs(sol.primal_obj))
    for Z in sol.dual_blocks:
        ev = np.linalg.eigvalsh(Z)
        assert ev[0] >= -1e-9 * max(1.0, ev[-1])


def test_determinism():
    a = solve(single_atom_w2(), SolverOptions(seed=3))
    b = solve(single_atom_w2(), SolverOptions(seed=3))
    assert np.array_equal(a.primal, b.primal)
    assert a.primal_obj == b.primal_obj and a.dual_obj == b.dual_obj


def test_infeasible_problem_detected():
    # x = -1 with x >= 0
    prob = scalar_problem()
    prob.b = np.array([-1.0])
    assert solve(prob).status == "infeasible"


def test_unbounded_problem_detected():
    # min -x  s.t.  [x] >= 0, no equalities
    blk = PsdBlock("x", 1, np.zeros((1, 1)), sp.csr_matrix(np.array([[1.0]])))
    prob = SdpProblem(np.array([-1.0]), sp.csr_matrix((0, 1)), np.zeros(0), [blk], {})
    assert solve(prob).status == "unbounded"


def test_empty_problem_rejected():
    prob = SdpProblem(np.zeros(0), sp.csr_matrix((0, 0)), np.zeros(0), [], {})
    with pytest.raises(SolverError):
        solve(prob)


def test_non_optimal_moments_refused():
    prob = scalar_problem()
    prob.b = np.array([-1.0])
    prob.groups["x"] = VariableGroup("x", 0, 1, 0)
    with pytest.raises(SolverError):
        extract_moment_vector(solve(prob), "x")


def test_options_validated_and_log_written():
    with pytest.raises(ValueError):
        SolverOptions(feas_tol=0)
    with pytest.raises(ValueError):
        SolverOptions(max_iters=0)
    log = io.StringIO()
    solve(single_atom_w2(), SolverOptions(verbose=True, log=log))
    assert "pcost" in log.getvalue()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.integers(-3, 3), min_size=4, max_size=4), min_size=1, max_size=6))
def test_independent_rows_spans_row_space(rows):
    A = np.array(rows, dtype=float)
    keep = independent_rows(A)
    assert len(keep) == np.linalg.matrix_rank(A)
    if len(keep):
        assert np.linalg.matrix_rank(A[keep]) == np.linalg.matrix_rank(A)
