"""Mixture-order estimation, flatness testing and atom extraction.

``run_algorithm1`` ties everything together: solve a relaxation, test whether
the optimal mixing-measure moments are flat, and if so read off atoms and
weights; otherwise raise the order and try again.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .polybasis import (
    GradedBasis,
    PseudoMomentSequence,
    atomic_moments,
    enumerate_basis,
    moment_matrix,
)
from .relax import (
    RelaxationSpec,
    SdpProblem,
    build,
    add_level_constraint,
    duality_gap,
    moment_matrix_weights,
    moment_residual_cost,
    with_objective,
)
from .sdp import ConicSolution, SolverError, SolverOptions, extract_moment_vector, solve

PIVOT_TOL = 1e-8
MERGE_TOL = 1e-6
FACE_MAX_ITERS = 60
SUPPORT_SLACK = 1e-3  # allowed violation of r_j(atom) >= 0 before an extraction is rejected


class ExtractionError(RuntimeError):
    """Atom extraction broke down; typically the relaxation order must increase."""


@dataclass(frozen=True)
class RankEstimate:
    eigenvalues: np.ndarray
    khat: int
    tol: float

    @property
    def degenerate(self) -> bool:
        return self.khat == 0


def estimate_rank(M: np.ndarray, tol: float) -> RankEstimate:
    """Smallest r whose top-r eigenvalues hold a (1 - tol) share of the spectrum."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not 0 <= tol < 1:
        raise ValueError(f"tol must lie in [0, 1), got {tol}")
    ev = np.clip(np.linalg.eigvalsh(0.5 * (M + M.T))[::-1], 0.0, None)
    total = ev.sum()
    if total <= 0:
        return RankEstimate(ev, 0, tol)
    cum = np.cumsum(ev)
    khat = int(np.searchsorted(cum, (1 - tol) * total, side="left")) + 1
    return RankEstimate(ev, min(khat, ev.size), tol)


def mean_submatrix_rows(basis: GradedBasis, mean_params: list[int]) -> np.ndarray:
    """Rows of a moment matrix whose monomials involve only ``mean_params``."""
    others = [i for i in range(basis.nvars) if i not in mean_params]
    return np.array([k for k, a in enumerate(basis) if all(a[i] == 0 for i in others)], dtype=int)


def flatness_ranks(
    phi: PseudoMomentSequence, d: int, d_min: int, tol: float, rows: list[int] | None = None
) -> tuple[RankEstimate, RankEstimate]:
    """Rank estimates of M_d(phi) and M_{d - d_min}(phi), optionally on a principal submatrix."""
    if d - d_min < 0:
        raise ValueError(f"d - d_min = {d - d_min} is negative")
    big = moment_matrix(phi, d)
    small = moment_matrix(phi, d - d_min)
    if rows is not None:
        rows = np.asarray(rows)
        big = big[np.ix_(rows, rows)]
        keep = rows[rows < small.shape[0]]
        small = small[np.ix_(keep, keep)]
    return estimate_rank(big, tol), estimate_rank(small, tol)


def flatness_check(phi: PseudoMomentSequence, d: int, d_min: int, tol: float) -> bool:
    hi, lo = flatness_ranks(phi, d, d_min, tol)
    return hi.khat == lo.khat


def _pivot_rows(V: np.ndarray, K: int) -> list[int]:
    """Greedy graded pivot selection: the first K rows that add a new direction."""
    norms = np.linalg.norm(V, axis=1)
    scale = norms.max()
    if scale == 0:
        raise ExtractionError("zero moment matrix")
    chosen: list[int] = []
    Q = np.zeros((V.shape[1], 0))
    for i in range(V.shape[0]):
        r = V[i] - Q @ (Q.T @ V[i])
        nr = np.linalg.norm(r)
        if nr > PIVOT_TOL * scale:
            chosen.append(i)
            Q = np.column_stack([Q, r / nr])
            if len(chosen) == K:
                return chosen
    raise ExtractionError(f"found only {len(chosen)} independent rows, expected {K}")


def canonical_order(atoms: np.ndarray) -> np.ndarray:
    """Indices sorting atoms lexicographically (keys rounded so tiny noise does not reorder)."""
    atoms = np.atleast_2d(atoms)
    keys = np.round(atoms, 6)
    return np.lexsort(keys.T[::-1])


def extract_atoms(M: np.ndarray, basis: GradedBasis, K: int, seed: int = 0) -> np.ndarray:
    """Atoms of a flat moment matrix, returned as a (K, p) array in canonical order.

    ``basis`` indexes the rows of ``M``. Uses the top-K eigenpairs in place of a
    Cholesky factor, so ``M`` may be numerically rank deficient.
    """
    M = np.asarray(M, dtype=float)
    if M.shape[0] != len(basis):
        raise ValueError(f"matrix side {M.shape[0]} does not match basis size {len(basis)}")
    if K < 1:
        raise ExtractionError("need at least one atom")
    ev, U = np.linalg.eigh(0.5 * (M + M.T))
    ev, U = ev[::-1][:K], U[:, ::-1][:, :K]
    if ev[-1] <= 0:
        raise ExtractionError(f"moment matrix has fewer than {K} positive eigenvalues")
    V = U * np.sqrt(ev)

    piv = _pivot_rows(V, K)
    # rows of the echelon-like basis change: Uc[piv] == I
    Uc = np.linalg.lstsq(V[piv].T, V.T, rcond=None)[0].T
    p = basis.nvars
    mults = []
    for j in range(p):
        rows = []
        for w in piv:
            shifted = list(basis[w])
            shifted[j] += 1
            shifted = tuple(shifted)
            if shifted not in basis.index:
                raise ExtractionError(
                    f"monomial {shifted} lies beyond the basis degree {basis.maxdeg}; increase d"
                )
            rows.append(basis.index[shifted])
        mults.append(Uc[rows])

    rng = np.random.default_rng(seed)
    kappa = rng.standard_normal(p)
    kappa /= np.linalg.norm(kappa)
    N = sum(k * Nj for k, Nj in zip(kappa, mults))
    _, Q = scipy.linalg.schur(N, output="real")
    atoms = np.array([[Q[:, i] @ Nj @ Q[:, i] for Nj in mults] for i in range(K)])
    return atoms[canonical_order(atoms)]


def _merge_groups(atoms: np.ndarray, tol: float = MERGE_TOL) -> list[list[int]]:
    groups: list[list[int]] = []
    for i in range(atoms.shape[0]):
        for g in groups:
            if np.linalg.norm(atoms[g[0]] - atoms[i]) < tol:
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def merge_close_atoms(atoms: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    return np.array([atoms[g].mean(axis=0) for g in _merge_groups(atoms, tol)])


def recover_weights(atoms, phi: PseudoMomentSequence, d: int) -> np.ndarray:
    """Nonnegative weights with ``sum_i w_i theta_i^gamma ≈ phi_gamma`` for ``|gamma| <= d``.

    Atoms closer than ``MERGE_TOL`` share one unknown; the first of each group
    receives the weight and the rest get zero.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    if atoms.shape[1] != phi.nvars:
        raise ValueError(f"atoms live in R^{atoms.shape[1]}, moments in R^{phi.nvars}")
    groups = _merge_groups(atoms)
    reps = np.array([atoms[g].mean(axis=0) for g in groups])
    basis = enumerate_basis(phi.nvars, d)
    A = basis.evaluate(reps).T
    rhs = phi.values[: len(basis)]
    w = np.linalg.lstsq(A, rhs, rcond=None)[0]
    w = np.clip(w, 0.0, None)
    mass = phi.mass
    if w.sum() > 0:
        w *= mass / w.sum()
    else:
        w = np.full(len(groups), mass / len(groups))
    out = np.zeros(atoms.shape[0])
    for g, wg in zip(groups, w):
        out[g[0]] = wg
    return out


@dataclass
class AtomicMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.atoms.shape[0] != self.weights.shape[0]:
            raise ValueError("atoms and weights differ in length")

    @property
    def K(self) -> int:
        return self.atoms.shape[0]

    def moments(self, maxdeg: int) -> PseudoMomentSequence:
        return atomic_moments(self.atoms, self.weights, maxdeg)

    def drop_empty(self) -> "AtomicMeasure":
        keep = self.weights > 0
        return AtomicMeasure(self.atoms[keep], self.weights[keep])

    def canonical(self) -> "AtomicMeasure":
        order = canonical_order(self.atoms)
        return AtomicMeasure(self.atoms[order], self.weights[order])

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


def extract_measure(phi: PseudoMomentSequence, d: int, K: int, seed: int = 0) -> AtomicMeasure:
    """Atoms from M_d(phi) plus Vandermonde weights, with coincident atoms merged."""
    atoms = extract_atoms(moment_matrix(phi, d), enumerate_basis(phi.nvars, d), K, seed)
    atoms = merge_close_atoms(atoms)
    w = recover_weights(atoms, phi, d)
    return AtomicMeasure(atoms, w).canonical()


def _with_point(solution: ConicSolution, point: ConicSolution) -> ConicSolution:
    # keep objective and dual certificate of the original solve, swap the primal point
    return ConicSolution(
        status="optimal",
        primal=point.primal,
        dual_equalities=solution.dual_equalities,
        dual_blocks=solution.dual_blocks,
        primal_obj=solution.primal_obj,
        dual_obj=solution.dual_obj,
        iterations=solution.iterations,
        annotation=solution.annotation,
        primal_residual=point.primal_residual,
        dual_residual=solution.dual_residual,
        backend_status=point.backend_status,
    )


def _face_solve(problem: SdpProblem, opts: SolverOptions) -> ConicSolution:
    # auxiliary objectives only steer the point; feasibility is what must be tight
    loose = replace(opts, gap_tol=max(opts.gap_tol, 1e-6), max_iters=min(opts.max_iters, FACE_MAX_ITERS))
    res = solve(problem, loose)
    if res.status == "numerical_limit":
        res = solve(problem, replace(loose, feas_tol=max(opts.feas_tol, 1e-7)))
    return res


def _level(value: float, slack: float) -> float:
    return value + slack * max(1.0, abs(value))


def optimal_face(
    problem: SdpProblem, solution: ConicSolution, order: int, opts: SolverOptions, slack: float = 1e-9
) -> tuple[SdpProblem, ConicSolution]:
    """Restrict to (near-)optimal points and pick the one with the smallest moment residual.

    Returns the restricted problem (objective and residual both capped) and a
    solution carrying the selected primal point.
    """
    face = add_level_constraint(problem, problem.c, _level(solution.primal_obj, slack), "objective level")
    resid = moment_residual_cost(problem, order)
    res = _face_solve(with_objective(face, resid), opts)
    if res.status != "optimal":
        return face, solution
    face = add_level_constraint(face, resid, _level(res.primal_obj, slack), "residual level")
    return face, _with_point(solution, res)


def clip_to_set(measure: AtomicMeasure, S) -> AtomicMeasure:
    """Project atoms onto a box parameter set (non-box sets are left alone)."""
    if not S.is_box:
        return measure
    atoms = np.clip(measure.atoms, S.lowers, S.uppers)
    return AtomicMeasure(atoms, measure.weights).canonical()


def refine_low_rank(
    face: SdpProblem, solution: ConicSolution, order: int, opts: SolverOptions
) -> ConicSolution | None:
    """One reweighted-trace step on M_d(phi) inside ``face``; None if the solve fails.

    Interior-point methods land in the relative interior of the optimal face,
    i.e. at maximal rank. Minimizing ``<W, M_d(phi)>`` with
    ``W = (M + delta I)^-1`` moves toward low rank points of the same face.
    """
    group = face.groups["phi"]
    M = moment_matrix(extract_moment_vector(solution, "phi"), order)
    top = float(np.linalg.eigvalsh(M)[-1])
    W = np.linalg.inv(M + max(1e-6 * top, 1e-9) * np.eye(M.shape[0]))
    W /= np.max(np.abs(W))
    res = _face_solve(with_objective(face, moment_matrix_weights(group, order, W, face.nvars)), opts)
    if res.status != "optimal":
        return None
    return _with_point(solution, res)


@dataclass
class Algorithm1Result:
    status: str  # "flat", "approximate" or "failed"
    khat: int
    measure: AtomicMeasure | None
    objective: float
    gap: float
    order: int
    trace: list[dict] = field(default_factory=list)
    rank_rule: str = "tolerance-based ranks on both moment matrices"
    seconds: float = 0.0
    objective_at_point: float = float("nan")
    phi: PseudoMomentSequence | None = None

    @property
    def flat(self) -> bool:
        return self.status == "flat"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "khat": self.khat,
            "measure": None if self.measure is None else self.measure.to_dict(),
            "objective": self.objective,
            "objective_at_point": self.objective_at_point,
            "duality_gap": self.gap,
            "order": self.order,
            "flatness_trace": self.trace,
            "rank_rule": self.rank_rule,
            "seconds": self.seconds,
        }


def run_algorithm1(
    mu_moments: PseudoMomentSequence,
    spec: RelaxationSpec,
    tol: float = 1e-2,
    max_d: int | None = None,
    seed: int = 0,
    opts: SolverOptions | None = None,
    refine_passes: int = 8,
    refine_slack: float = 1e-9,
    mean_submatrix: bool = False,
) -> Algorithm1Result:
    """Solve, test flatness, extract; raise the order while not flat, up to ``max_d``."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    max_d = spec.order if max_d is None else max_d
    if max_d < spec.order:
        raise ValueError(f"max_d={max_d} is below the starting order {spec.order}")
    if 2 * max_d > mu_moments.maxdeg:
        raise ValueError(f"max_d={max_d} needs moments up to degree {2 * max_d}, have {mu_moments.maxdeg}")
    shift = spec.support_order
    trace: list[dict] = []
    last = None
    for d in range(spec.order, max_d + 1):
        sp = spec.with_order(d)
        problem = build(mu_moments.truncate(2 * d), sp)
        sol = solve(problem, opts)
        if sol.status != "optimal":
            raise SolverError(f"relaxation of order {d} ended with status {sol.status}")
        gap = duality_gap(problem, sol)
        rows = None
        if mean_submatrix:
            rows = mean_submatrix_rows(enumerate_basis(sp.family.p, d), sp.family.mean_params())

        def ranks(s):
            return flatness_ranks(extract_moment_vector(s, "phi"), d, shift, tol, rows)

        hi, lo = ranks(sol)
        entry = {"order": d, "objective": sol.primal_obj, "duality_gap": gap,
                 "rank_d": hi.khat, "rank_lower": lo.khat, "refine_passes": 0}
        if hi.khat != lo.khat and refine_passes > 0:
            face, sol = optimal_face(problem, sol, d, opts, refine_slack)
            hi, lo = ranks(sol)
            passes, idle = 0, 0
            # keep reweighting while the rank drops; allow one stalled pass
            while passes < refine_passes and idle < 2:
                refined = refine_low_rank(face, sol, d, opts)
                if refined is None:
                    break
                passes += 1
                new_hi, new_lo = ranks(refined)
                if new_hi.khat > hi.khat:
                    break
                idle = 0 if new_hi.khat < hi.khat else idle + 1
                sol, hi, lo = refined, new_hi, new_lo
            entry["refine_passes"] = passes
        entry.update(rank_d=hi.khat, rank_lower=lo.khat, flat=hi.khat == lo.khat)
        trace.append(entry)
        phi = extract_moment_vector(sol, "phi")
        last = (d, sol, gap, hi, phi, problem)
        if hi.khat == lo.khat and hi.khat > 0:
            try:
                measure = extract_measure(phi, d, hi.khat, seed)
                # a numerically flat matrix that is far from a true flat extension
                # yields atoms scattered outside S; do not certify those
                outside = [i for i, a in enumerate(measure.atoms) if not spec.set.contains(a, SUPPORT_SLACK)]
                if outside:
                    raise ExtractionError(f"{len(outside)} extracted atom(s) lie outside the parameter set")
                measure = clip_to_set(measure, spec.set)
            except ExtractionError as exc:
                entry["extraction_error"] = str(exc)
                continue
            return Algorithm1Result(
                "flat", measure.K, measure, sol.primal_obj, gap, d, trace,
                seconds=time.perf_counter() - t0, objective_at_point=problem.objective(sol.primal), phi=phi,
            )

    d, sol, gap, hi, phi, problem = last
    measure = None
    status = "failed"
    if hi.khat > 0:
        try:
            measure = clip_to_set(extract_measure(phi, d, hi.khat, seed), spec.set)
            status = "approximate"
        except ExtractionError as exc:
            trace[-1]["extraction_error"] = str(exc)
    return Algorithm1Result(
        status, hi.khat, measure, sol.primal_obj, gap, d, trace,
        seconds=time.perf_counter() - t0, objective_at_point=problem.objective(sol.primal), phi=phi,
    )
