"""Solve the block SDPs produced by :mod:`momix.relax`.

The interior-point work is delegated to CVXOPT's conic solver (primal-dual,
Nesterov-Todd scaling). This module handles presolve of redundant equality
rows, maps results back to our sign conventions and re-checks the returned
point against the requested tolerances independently of the solver's own
stopping test.

Conventions: the primal is ``min c@x  s.t.  A@x = b,  F_k(x) ⪰ 0`` and the dual
is ``max b@y - sum_k <F_k0, Z_k>  s.t.  A.T@y + sum_k F_k*(Z_k) = c,  Z_k ⪰ 0``.
"""

from __future__ import annotations

import contextlib
import io
import sys
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.linalg
from cvxopt import matrix, solvers, spmatrix

from .polybasis import PseudoMomentSequence
from .relax import SdpProblem, VariableGroup

STATUSES = ("optimal", "infeasible", "unbounded", "numerical_limit")
DENSE_LIMIT = 20_000_000
BACKEND_TOLERANCE_LADDER = ((1e-2, 1e-1), (1.0, 1.0), (1e-1, 5e-1))


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200
    seed: int = 0  # the backend is deterministic; kept so configs can pin it
    verbose: bool = False
    log: TextIO | None = None

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.gap_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class ConicSolution:
    status: str
    primal: np.ndarray
    dual_equalities: np.ndarray
    dual_blocks: list[np.ndarray]
    primal_obj: float
    dual_obj: float
    iterations: int
    annotation: dict[str, VariableGroup] = field(default_factory=dict)
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    backend_status: str = ""

    @property
    def relative_gap(self) -> float:
        return abs(self.primal_obj - self.dual_obj) / (1.0 + abs(self.primal_obj))

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def independent_rows(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``A``."""
    if A.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = scipy.linalg.qr(A.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > rtol * diag[0]))
    return np.sort(piv[:rank])


def _to_spmatrix(M) -> spmatrix:
    coo = M.tocoo()
    return spmatrix(coo.data.tolist(), coo.row.tolist(), coo.col.tolist(), size=coo.shape)


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def primal_residual(problem: SdpProblem, x: np.ndarray) -> float:
    """Max of the scaled equality residual and the scaled negative part of each block."""
    eq = problem.equality_residual(x) / (1.0 + (np.max(np.abs(problem.b)) if problem.b.size else 0.0))
    worst = eq
    for blk in problem.blocks:
        F = _sym(blk.evaluate(x))
        lo = float(np.linalg.eigvalsh(F)[0])
        worst = max(worst, -lo / (1.0 + np.max(np.abs(F))))
    return float(worst)


def dual_residual(problem: SdpProblem, y: np.ndarray, Z: list[np.ndarray]) -> float:
    r = problem.A.T @ y - problem.c
    for blk, Zk in zip(problem.blocks, Z):
        r = r + blk.adjoint(Zk)
    return float(np.max(np.abs(r)) / (1.0 + np.max(np.abs(problem.c)))) if r.size else 0.0


def dual_objective(problem: SdpProblem, y: np.ndarray, Z: list[np.ndarray]) -> float:
    val = float(problem.b @ y)
    for blk, Zk in zip(problem.blocks, Z):
        val -= float(np.sum(blk.const * Zk))
    return val


def solve(problem: SdpProblem, opts: SolverOptions | None = None) -> ConicSolution:
    opts = opts or SolverOptions()
    n = problem.nvars
    if n == 0 or not problem.blocks:
        raise SolverError("empty problem: need at least one variable and one PSD block")
    problem.check()

    A = problem.A.toarray()
    keep = independent_rows(A)
    c = matrix(np.ascontiguousarray(problem.c, dtype=float))
    # dense block maps are markedly faster in CVXOPT while they fit comfortably in memory
    dense = n * sum(blk.size**2 for blk in problem.blocks) <= DENSE_LIMIT
    Gs = [matrix(-blk.coeffs.toarray()) if dense else _to_spmatrix(-blk.coeffs) for blk in problem.blocks]
    hs = [matrix(np.ascontiguousarray(_sym(blk.const), dtype=float)) for blk in problem.blocks]
    kwargs = {}
    if keep.size:
        kwargs["A"] = matrix(np.ascontiguousarray(A[keep]))
        kwargs["b"] = matrix(np.ascontiguousarray(problem.b[keep], dtype=float))

    log = opts.log if opts.log is not None else (sys.stdout if opts.verbose else io.StringIO())
    result = None
    # Backend stopping tolerances are set tighter than ours for accuracy. Near
    # degenerate optima the NT iterates can then diverge after converging, so
    # the solve is repeated with progressively looser backend tolerances.
    for gap_scale, feas_scale in BACKEND_TOLERANCE_LADDER:
        options = {
            "show_progress": bool(opts.verbose),
            "maxiters": int(opts.max_iters),
            "abstol": opts.gap_tol * gap_scale,
            "reltol": opts.gap_tol * gap_scale,
            "feastol": opts.feas_tol * feas_scale,
            "refinement": 2,
        }
        with contextlib.redirect_stdout(log):
            try:
                res = solvers.sdp(c, Gs=Gs, hs=hs, options=options, **kwargs)
            except (ArithmeticError, ValueError) as exc:
                # singular KKT systems surface as ArithmeticError in CVXOPT
                result = _failed(problem, str(exc))
                continue
        result = _package(problem, opts, keep, res)
        if result.status != "numerical_limit":
            break
    return result


def _package(problem: SdpProblem, opts: SolverOptions, keep: np.ndarray, res: dict) -> ConicSolution:
    n = problem.nvars
    backend = res["status"]
    x = np.zeros(n) if res["x"] is None else np.array(res["x"]).ravel()
    y = np.zeros(problem.n_equalities)
    if keep.size and res["y"] is not None:
        y[keep] = -np.array(res["y"]).ravel()
    Z = [np.zeros((blk.size, blk.size)) for blk in problem.blocks]
    if res["zs"] is not None and all(z is not None for z in res["zs"]):
        Z = [_sym(np.array(z)) for z in res["zs"]]

    pres = primal_residual(problem, x)
    dres = dual_residual(problem, y, Z)
    pobj = problem.objective(x)
    dobj = dual_objective(problem, y, Z)
    rgap = abs(pobj - dobj) / (1.0 + abs(pobj))

    if backend == "primal infeasible":
        status = "infeasible"
    elif backend == "dual infeasible":
        status = "unbounded"
    elif pres <= opts.feas_tol and dres <= opts.feas_tol and rgap <= opts.gap_tol:
        status = "optimal"
    else:
        status = "numerical_limit"
    return ConicSolution(
        status=status,
        primal=x,
        dual_equalities=y,
        dual_blocks=Z,
        primal_obj=pobj,
        dual_obj=dobj,
        iterations=int(res.get("iterations", 0)),
        annotation=dict(problem.groups),
        primal_residual=pres,
        dual_residual=dres,
        backend_status=backend,
    )


def _failed(problem: SdpProblem, message: str) -> ConicSolution:
    n = problem.nvars
    return ConicSolution(
        status="numerical_limit",
        primal=np.full(n, np.nan),
        dual_equalities=np.zeros(problem.n_equalities),
        dual_blocks=[np.zeros((b.size, b.size)) for b in problem.blocks],
        primal_obj=float("nan"),
        dual_obj=float("nan"),
        iterations=0,
        annotation=dict(problem.groups),
        backend_status=message,
    )


def extract_moment_vector(solution: ConicSolution, tag: str) -> PseudoMomentSequence:
    if solution.status != "optimal":
        raise SolverError(f"cannot read moments from a solution with status {solution.status!r}")
    if tag not in solution.annotation:
        raise KeyError(f"unknown variable group {tag!r}; have {sorted(solution.annotation)}")
    g = solution.annotation[tag]
    return PseudoMomentSequence(g.nvars, g.maxdeg, solution.primal[g.slice])
