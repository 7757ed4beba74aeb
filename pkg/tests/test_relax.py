import io

import numpy as np
import pytest

from momix.families import Regularizer, box_set, gaussian_diagonal, poisson
from momix.polybasis import atomic_moments, enumerate_basis
from momix.relax import (
    GapUndefinedError,
    RelaxationError,
    RelaxationSpec,
    build,
    build_tv,
    build_univariate_projection,
    build_w2,
    duality_gap,
    marginal_moments,
    projected_spec,
    read_problem,
    write_problem,
)
from momix.sdp import ConicSolution, solve

S1 = box_set([0.0, 0.05], [1.0, 1.0])


def spec1(distance="w2", order=2, eps=0.0):
    return RelaxationSpec(distance, order, gaussian_diagonal(1), S1, Regularizer(eps))


def gaussian_moments(m, s, maxdeg):
    return gaussian_diagonal(1).mixture_moments([[m, s]], [1.0], maxdeg)


def test_w2_sizes_one_dimensional_order_two():
    prob = build_w2(gaussian_moments(0.5, 0.1, 4), spec1())
    assert prob.n_equalities == 11
    assert prob.block("M_d(lambda)").size == 6
    assert prob.block("M_d(phi)").size == 6
    assert prob.groups["lambda"].nvars == 2 and prob.groups["phi"].maxdeg == 4


def test_tv_block_sizes_order_three():
    prob = build_tv(gaussian_moments(0.5, 0.1, 6), spec1("tv", 3))
    for name in ["M_d(mu) - M_d(psi_plus)", "M_d(psi_plus)", "M_d(p;phi) - M_d(psi_minus)", "M_d(psi_minus)"]:
        assert prob.block(name).size == 4
    assert prob.block("M_d(phi)").size == 10
    assert prob.n_equalities == 7 + 1


def test_spec_validation():
    with pytest.raises(RelaxationError):
        RelaxationSpec("kl", 2, gaussian_diagonal(1), S1)
    with pytest.raises(RelaxationError):
        RelaxationSpec("w2", 2, gaussian_diagonal(2), S1)
    with pytest.raises(RelaxationError):
        RelaxationSpec("w2", 0, gaussian_diagonal(1), S1)
    # the trace regularizer at order d has degree 2d
    assert spec1().d_min == 1
    assert spec1(eps=1e-3).d_min == 2
    with pytest.raises(RelaxationError):
        build_w2(gaussian_moments(0.5, 0.1, 2), spec1())
    with pytest.raises(RelaxationError):
        build_w2(gaussian_moments(0.5, 0.1, 4), spec1("tv"))


def test_feasibility_transfer_of_exact_pair():
    # an exactly representable (lambda, phi) pair satisfies every constraint
    m, s = 0.4, 0.2
    mu = gaussian_moments(m, s, 4)
    prob = build_w2(mu, spec1())
    lam_basis = enumerate_basis(2, 4)
    # independent coupling of mu with itself
    lam = np.array([mu[(a,)] * mu[(b,)] for a, b in lam_basis])
    phi = atomic_moments([[m, s]], [1.0], 4).values
    x = np.zeros(prob.nvars)
    x[prob.groups["lambda"].slice] = lam
    x[prob.groups["phi"].slice] = phi
    assert prob.equality_residual(x) < 1e-12
    assert prob.min_block_eigenvalue(x) > -1e-10


def test_zero_cost_single_gaussian_w2():
    prob = build_w2(gaussian_moments(0.5, 0.1, 4), spec1())
    sol = solve(prob)
    assert sol.status == "optimal"
    assert abs(sol.primal_obj) < 1e-6
    assert duality_gap(prob, sol) < 1e-6


def test_tv_bounds_and_identity():
    prob = build_tv(gaussian_moments(0.3, 0.2, 6), spec1("tv", 3))
    sol = solve(prob)
    assert sol.status == "optimal"
    assert -1e-7 <= sol.primal_obj <= 1e-6
    # a law outside the family: TV value stays in [0, 2]
    mu = atomic_moments([[0.1], [0.9]], [0.5, 0.5], 6)
    sol = solve(build_tv(mu, spec1("tv", 3)))
    assert sol.status == "optimal" and -1e-7 <= sol.primal_obj <= 2.0 + 1e-7


def test_gap_requires_optimal_status():
    prob = build_w2(gaussian_moments(0.5, 0.1, 4), spec1())
    bad = ConicSolution("numerical_limit", np.zeros(prob.nvars), np.zeros(prob.n_equalities), [], 0.0, 0.0, 0)
    with pytest.raises(GapUndefinedError):
        duality_gap(prob, bad)


def test_text_round_trip_preserves_problem():
    prob = build(gaussian_moments(0.5, 0.1, 4), spec1("tv", 2, 1e-3))
    buf = io.StringIO()
    write_problem(prob, buf)
    buf.seek(0)
    back = read_problem(buf)
    assert np.array_equal(back.c, prob.c)
    assert np.array_equal(back.b, prob.b)
    assert (back.A != prob.A).nnz == 0
    assert [b.name for b in back.blocks] == [b.name for b in prob.blocks]
    for b1, b2 in zip(back.blocks, prob.blocks):
        assert np.array_equal(b1.const, b2.const)
        assert (b1.coeffs != b2.coeffs).nnz == 0
    assert back.groups == prob.groups
    assert prob.dumps().startswith("# momix sdp v1")


def test_read_problem_rejects_garbage():
    with pytest.raises(ValueError):
        read_problem(io.StringIO("not a problem\n"))


def test_regularizer_enters_objective_only():
    mu = gaussian_moments(0.5, 0.1, 4)
    plain = build_w2(mu, spec1())
    reg = build_w2(mu, spec1(eps=0.5))
    assert plain.n_equalities == reg.n_equalities
    phi = reg.groups["phi"]
    assert np.count_nonzero(reg.c[phi.slice]) > 0
    assert np.count_nonzero(plain.c[phi.slice]) == 0


def test_univariate_projection_matches_direct_one_dimensional_problem():
    fam = gaussian_diagonal(2)
    S = box_set([0, 0, 0.05, 0.05], [1, 1, 1, 1])
    spec = RelaxationSpec("w2", 2, fam, S, Regularizer(1e-3))
    mu2 = fam.mixture_moments([[0.2, 0.7, 0.1, 0.2], [0.8, 0.3, 0.1, 0.2]], [0.5, 0.5], 4)
    mu1 = marginal_moments(mu2, 1)
    direct = gaussian_diagonal(1).mixture_moments([[0.7, 0.2], [0.3, 0.2]], [0.5, 0.5], 4)
    assert np.allclose(mu1.values, direct.values)
    prob = build_univariate_projection(mu1, 1, spec)
    ref = build_w2(direct, RelaxationSpec("w2", 2, gaussian_diagonal(1), box_set([0, 0.05], [1, 1]), Regularizer(1e-3)))
    assert prob.meta["coordinate"] == 1
    assert np.allclose(prob.c, ref.c) and np.allclose(prob.b, ref.b)
    assert projected_spec(spec, 1).set.lowers == (0.0, 0.05)


def test_poisson_relaxation_builds():
    fam = poisson(1)
    spec = RelaxationSpec("w2", 2, fam, box_set([0.0], [5.0]))
    mu = fam.mixture_moments([[1.0], [3.0]], [0.5, 0.5], 4)
    sol = solve(build(mu, spec))
    assert sol.status == "optimal" and abs(sol.primal_obj) < 1e-6
