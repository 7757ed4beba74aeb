"""Moment relaxations of the regularized W2 and TV mixture-fitting problems.

Every builder returns an :class:`SdpProblem` in linear-matrix-inequality form::

    minimize    c @ x
    subject to  A @ x == b
                F_k(x) = F_k0 + sum_i x_i F_ki  is PSD   for every block k

where ``x`` stacks pseudo-moment vectors (groups ``lambda``, ``phi``,
``psi_plus``, ``psi_minus``) in graded-lex order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, TextIO
from urllib.parse import quote, unquote

import numpy as np
import scipy.sparse as sp

from .families import ParametricFamily, Regularizer, SemiAlgebraicSet
from .polybasis import (
    Polynomial,
    PseudoMomentSequence,
    basis_size,
    enumerate_basis,
    localizing_terms,
    moment_index_table,
    moment_matrix,
)

if TYPE_CHECKING:
    from .sdp import ConicSolution

DISTANCES = ("w2", "tv")


class RelaxationError(ValueError):
    """Invalid relaxation order, incomplete data or mismatched inputs."""


class GapUndefinedError(RuntimeError):
    """Duality gap requested for a solution that is not optimal."""


@dataclass(frozen=True)
class RelaxationSpec:
    distance: str
    order: int
    family: ParametricFamily
    set: SemiAlgebraicSet
    regularizer: Regularizer = field(default_factory=Regularizer)

    def __post_init__(self):
        if self.distance not in DISTANCES:
            raise RelaxationError(f"distance must be one of {DISTANCES}, got {self.distance!r}")
        if self.set.pvars != self.family.p:
            raise RelaxationError(
                f"parameter set lives in R^{self.set.pvars} but family {self.family.name} has p={self.family.p}"
            )
        if self.order < self.d_min:
            raise RelaxationError(f"order {self.order} is below the minimal order {self.d_min}")

    @property
    def epsilon(self) -> float:
        return self.regularizer.strength

    @property
    def regularizer_poly(self) -> Polynomial:
        return self.regularizer.polynomial(self.family.p, self.order)

    @property
    def support_order(self) -> int:
        """Largest half-degree among the set constraints (at least 1)."""
        return max(1, self.set.max_half_degree)

    @property
    def d_min(self) -> int:
        reg = 0
        if self.regularizer.strength > 0:
            reg = math.ceil(self.regularizer.polynomial(self.family.p, self.order).degree / 2)
        return max(self.support_order, reg)

    def with_order(self, order: int) -> "RelaxationSpec":
        return replace(self, order=order)


@dataclass(frozen=True)
class VariableGroup:
    """A pseudo-moment vector stored in ``x[start:stop]``."""

    tag: str
    start: int
    nvars: int
    maxdeg: int

    @property
    def size(self) -> int:
        return basis_size(self.nvars, self.maxdeg)

    @property
    def stop(self) -> int:
        return self.start + self.size

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)


@dataclass
class PsdBlock:
    """``F(x) = const + reshape(coeffs @ x, (size, size))``; coeffs rows are row-major entries."""

    name: str
    size: int
    const: np.ndarray
    coeffs: sp.csr_matrix

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.const + (self.coeffs @ x).reshape(self.size, self.size)

    def adjoint(self, Z: np.ndarray) -> np.ndarray:
        """Vector ``(<F_i, Z>)_i`` over the scalar variables."""
        return self.coeffs.T @ np.asarray(Z, dtype=float).ravel()


@dataclass
class SdpProblem:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    blocks: list[PsdBlock]
    groups: dict[str, VariableGroup]
    meta: dict = field(default_factory=dict)

    @property
    def nvars(self) -> int:
        return self.c.shape[0]

    @property
    def n_equalities(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def group_values(self, x: np.ndarray, tag: str) -> PseudoMomentSequence:
        if tag not in self.groups:
            raise KeyError(f"unknown variable group {tag!r}; have {sorted(self.groups)}")
        g = self.groups[tag]
        return PseudoMomentSequence(g.nvars, g.maxdeg, x[g.slice])

    def block(self, name: str) -> PsdBlock:
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise KeyError(name)

    def equality_residual(self, x: np.ndarray) -> float:
        if self.A.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.A @ x - self.b)))

    def min_block_eigenvalue(self, x: np.ndarray) -> float:
        return min(float(np.linalg.eigvalsh(blk.evaluate(x))[0]) for blk in self.blocks)

    def check(self) -> None:
        """Structural sanity: shapes, symmetry of every block map, no dangling variables."""
        n = self.nvars
        if self.A.shape[1] != n or self.b.shape[0] != self.A.shape[0]:
            raise RelaxationError("equality system does not match the variable count")
        used = np.zeros(n, dtype=bool)
        used[np.unique(self.A.indices)] = True
        for blk in self.blocks:
            m = blk.size
            if blk.coeffs.shape != (m * m, n) or blk.const.shape != (m, m):
                raise RelaxationError(f"block {blk.name} has inconsistent shape")
            if not np.array_equal(blk.const, blk.const.T):
                raise RelaxationError(f"block {blk.name} constant is not symmetric")
            perm = np.arange(m * m).reshape(m, m).T.ravel()
            if (blk.coeffs - blk.coeffs[perm]).count_nonzero():
                raise RelaxationError(f"block {blk.name} is not symmetric-valued")
            used[np.unique(blk.coeffs.indices)] = True
        if not used.all():
            raise RelaxationError(f"variables {np.flatnonzero(~used)[:5]} appear in no constraint")

    def dump(self, stream: TextIO) -> None:
        write_problem(self, stream)

    def dumps(self) -> str:
        buf = io.StringIO()
        write_problem(self, buf)
        return buf.getvalue()


class _Builder:
    def __init__(self):
        self.groups: dict[str, VariableGroup] = {}
        self.nvars = 0
        self.c: dict[int, float] = {}
        self.rows: list[dict[int, float]] = []
        self.rhs: list[float] = []
        self.blocks: list[tuple[str, int, np.ndarray, list]] = []

    def add_group(self, tag: str, nvars: int, maxdeg: int) -> VariableGroup:
        g = VariableGroup(tag, self.nvars, nvars, maxdeg)
        self.groups[tag] = g
        self.nvars = g.stop
        return g

    def add_cost(self, var: int, coef: float):
        self.c[var] = self.c.get(var, 0.0) + coef

    def add_riesz_cost(self, group: VariableGroup, poly: Polynomial, scale: float):
        basis = enumerate_basis(group.nvars, group.maxdeg)
        for a, coef in poly.items():
            self.add_cost(group.start + basis.index[a], scale * coef)

    def add_equality(self, terms: dict[int, float], rhs: float):
        self.rows.append(terms)
        self.rhs.append(float(rhs))

    def add_block(self, name: str, size: int, const: np.ndarray | None, terms: list):
        """terms: list of (coef, table, offset); table entries index variables from offset."""
        self.blocks.append((name, size, np.zeros((size, size)) if const is None else const, terms))

    def finish(self, meta: dict) -> SdpProblem:
        n = self.nvars
        c = np.zeros(n)
        for k, v in self.c.items():
            c[k] += v
        ri, ci, vi = [], [], []
        for r, terms in enumerate(self.rows):
            for k, v in terms.items():
                if v != 0.0:
                    ri.append(r)
                    ci.append(k)
                    vi.append(v)
        A = sp.csr_matrix((vi, (ri, ci)), shape=(len(self.rows), n))
        blocks = []
        for name, m, const, terms in self.blocks:
            rows, cols, vals = [], [], []
            flat = np.arange(m * m)
            for coef, table, offset in terms:
                rows.append(flat)
                cols.append(np.asarray(table).ravel() + offset)
                vals.append(np.full(m * m, coef))
            coeffs = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, n)
            )
            coeffs.sum_duplicates()
            coeffs.eliminate_zeros()
            blocks.append(PsdBlock(name, m, np.array(const, dtype=float), coeffs))
        prob = SdpProblem(c, A, np.array(self.rhs), blocks, dict(self.groups), meta)
        prob.check()
        return prob


def _check_moments(mu: PseudoMomentSequence, spec: RelaxationSpec):
    if mu.nvars != spec.family.n:
        raise RelaxationError(f"moments over R^{mu.nvars} but family over R^{spec.family.n}")
    if mu.maxdeg < 2 * spec.order:
        raise RelaxationError(f"order {spec.order} needs moments up to degree {2 * spec.order}, got {mu.maxdeg}")


def _phi_terms(b: _Builder, phi: VariableGroup, poly: Polynomial) -> dict[int, float]:
    basis = enumerate_basis(phi.nvars, phi.maxdeg)
    return {phi.start + basis.index[a]: c for a, c in poly.items()}


def _add_phi_blocks(b: _Builder, phi: VariableGroup, spec: RelaxationSpec):
    d = spec.order
    b.add_block("M_d(phi)", basis_size(phi.nvars, d), None, [(1.0, moment_index_table(phi.nvars, d), phi.start)])
    for j, r in enumerate(spec.set.constraints, start=1):
        terms = [(c, table, phi.start) for c, table in localizing_terms(r, d)]
        size = terms[0][1].shape[0]
        b.add_block(f"M_loc(r{j} phi)", size, None, terms)


def _add_regularizer(b: _Builder, phi: VariableGroup, spec: RelaxationSpec):
    if spec.epsilon == 0:
        return
    R = spec.regularizer_poly
    if R.degree > 2 * spec.order:
        raise RelaxationError(f"regularizer degree {R.degree} exceeds 2d = {2 * spec.order}")
    b.add_riesz_cost(phi, R, spec.epsilon)


def _meta(spec: RelaxationSpec, **extra) -> dict:
    out = {
        "distance": spec.distance,
        "order": spec.order,
        "epsilon": spec.epsilon,
        "family": spec.family.to_dict(),
        "set": spec.set.to_dict(),
        "d_min": spec.d_min,
    }
    out.update(extra)
    return out


def build_w2(mu_moments: PseudoMomentSequence, spec: RelaxationSpec) -> SdpProblem:
    """Order-d relaxation of the regularized W2 mixture problem."""
    if spec.distance != "w2":
        raise RelaxationError(f"build_w2 called with distance {spec.distance!r}")
    _check_moments(mu_moments, spec)
    n, p, d = spec.family.n, spec.family.p, spec.order
    b = _Builder()
    lam = b.add_group("lambda", 2 * n, 2 * d)
    phi = b.add_group("phi", p, 2 * d)
    lam_basis = enumerate_basis(2 * n, 2 * d)
    zero = (0,) * n

    # ||x - y||^2 = sum_i x_i^2 - 2 x_i y_i + y_i^2
    for i in range(n):
        e = [0] * (2 * n)
        e[i] = 2
        b.add_cost(lam.start + lam_basis.index[tuple(e)], 1.0)
        e = [0] * (2 * n)
        e[i] = e[n + i] = 1
        b.add_cost(lam.start + lam_basis.index[tuple(e)], -2.0)
        e = [0] * (2 * n)
        e[n + i] = 2
        b.add_cost(lam.start + lam_basis.index[tuple(e)], 1.0)
    _add_regularizer(b, phi, spec)

    for alpha in enumerate_basis(n, 2 * d):
        b.add_equality({lam.start + lam_basis.index[alpha + zero]: 1.0}, mu_moments[alpha])
        row = {lam.start + lam_basis.index[zero + alpha]: 1.0}
        for k, v in _phi_terms(b, phi, spec.family.moment_map(alpha)).items():
            row[k] = row.get(k, 0.0) - v
        b.add_equality(row, 0.0)
    b.add_equality({phi.start: 1.0}, 1.0)

    b.add_block("M_d(lambda)", basis_size(2 * n, d), None, [(1.0, moment_index_table(2 * n, d), lam.start)])
    _add_phi_blocks(b, phi, spec)
    return b.finish(_meta(spec))


def _mixture_moment_entries(phi: VariableGroup, family: ParametricFamily, n: int, d: int, nvars_total: int):
    """Sparse map ``phi -> vec(M_d(p; phi))`` with entries ``L_phi(p_{a+b})``."""
    table = moment_index_table(n, d)
    full = enumerate_basis(n, 2 * d)
    phi_basis = enumerate_basis(phi.nvars, phi.maxdeg)
    m = table.shape[0]
    flat = table.ravel()
    rows, cols, vals = [], [], []
    for k in np.unique(flat):
        pos = np.flatnonzero(flat == k)
        for gamma, coef in family.moment_map(full[k]).items():
            rows.append(pos)
            cols.append(np.full(pos.shape[0], phi.start + phi_basis.index[gamma]))
            vals.append(np.full(pos.shape[0], coef))
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m * m, nvars_total))


def build_tv(mu_moments: PseudoMomentSequence, spec: RelaxationSpec) -> SdpProblem:
    """Order-d relaxation of the regularized TV mixture problem (Hahn-Jordan form)."""
    if spec.distance != "tv":
        raise RelaxationError(f"build_tv called with distance {spec.distance!r}")
    _check_moments(mu_moments, spec)
    n, p, d = spec.family.n, spec.family.p, spec.order
    b = _Builder()
    pp = b.add_group("psi_plus", n, 2 * d)
    pm = b.add_group("psi_minus", n, 2 * d)
    phi = b.add_group("phi", p, 2 * d)
    b.add_cost(pp.start, 1.0)
    b.add_cost(pm.start, 1.0)
    _add_regularizer(b, phi, spec)

    for k, alpha in enumerate(enumerate_basis(n, 2 * d)):
        row = {pp.start + k: 1.0, pm.start + k: -1.0}
        for var, v in _phi_terms(b, phi, spec.family.moment_map(alpha)).items():
            row[var] = row.get(var, 0.0) + v
        b.add_equality(row, mu_moments[alpha])
    b.add_equality({phi.start: 1.0}, 1.0)

    table = moment_index_table(n, d)
    m = table.shape[0]
    Mmu = moment_matrix(mu_moments.truncate(2 * d), d)
    b.add_block("M_d(mu) - M_d(psi_plus)", m, Mmu, [(-1.0, table, pp.start)])
    b.add_block("M_d(psi_plus)", m, None, [(1.0, table, pp.start)])
    b.add_block("M_d(p;phi) - M_d(psi_minus)", m, None, [(-1.0, table, pm.start)])
    b.add_block("M_d(psi_minus)", m, None, [(1.0, table, pm.start)])
    _add_phi_blocks(b, phi, spec)
    prob = b.finish(_meta(spec))
    _add_mixture_block_terms(prob, phi, spec)
    return prob


def _add_mixture_block_terms(prob: SdpProblem, phi: VariableGroup, spec: RelaxationSpec):
    # the M_d(p;phi) part is assembled directly as a sparse matrix
    n, d = spec.family.n, spec.order
    extra = _mixture_moment_entries(phi, spec.family, n, d, prob.nvars)
    blk = prob.block("M_d(p;phi) - M_d(psi_minus)")
    blk.coeffs = (blk.coeffs + extra).tocsr()
    blk.coeffs.sum_duplicates()
    blk.coeffs.eliminate_zeros()
    prob.check()


def build(mu_moments: PseudoMomentSequence, spec: RelaxationSpec) -> SdpProblem:
    return build_w2(mu_moments, spec) if spec.distance == "w2" else build_tv(mu_moments, spec)


def project_polynomial(poly: Polynomial, coords: Iterable[int]) -> Polynomial:
    """Keep the monomials that only involve ``coords`` and re-index them."""
    coords = list(coords)
    others = [i for i in range(poly.nvars) if i not in coords]
    out = {}
    for a, c in poly.items():
        if all(a[i] == 0 for i in others):
            out[tuple(a[i] for i in coords)] = c
    return Polynomial(len(coords), out)


def projected_spec(spec: RelaxationSpec, coordinate: int) -> RelaxationSpec:
    """The one-dimensional relaxation spec for coordinate ``coordinate``."""
    fam = spec.family
    if not 0 <= coordinate < fam.n:
        raise RelaxationError(f"coordinate {coordinate} out of range for dimension {fam.n}")
    coords = fam.coordinate_params(coordinate)
    reg = spec.regularizer
    if reg.poly is not None:
        reg = Regularizer(reg.strength, project_polynomial(reg.poly, coords))
    return RelaxationSpec(spec.distance, spec.order, fam.marginal(), spec.set.project(coords), reg)


def build_univariate_projection(
    mu_moments_1d: PseudoMomentSequence, coordinate: int, spec: RelaxationSpec
) -> SdpProblem:
    """Relaxation for the marginal of coordinate ``coordinate`` with the projected parameter set.

    ``spec`` may be either the multivariate spec (it is projected here) or an
    already one-dimensional spec.
    """
    if mu_moments_1d.nvars != 1:
        raise RelaxationError(f"expected univariate moments, got nvars={mu_moments_1d.nvars}")
    sub = projected_spec(spec, coordinate) if spec.family.n > 1 else spec
    prob = build(mu_moments_1d, sub)
    prob.meta["coordinate"] = coordinate
    return prob


def marginal_moments(mu: PseudoMomentSequence, coordinate: int) -> PseudoMomentSequence:
    """Moments of the coordinate marginal, read off the multivariate sequence."""
    vals = []
    for k in range(mu.maxdeg + 1):
        e = [0] * mu.nvars
        e[coordinate] = k
        vals.append(mu[tuple(e)])
    return PseudoMomentSequence(1, mu.maxdeg, vals)


def duality_gap(problem: SdpProblem, solution: "ConicSolution") -> float:
    """``|primal - dual| / (1 + |primal|)`` for an optimal solution."""
    if solution.status != "optimal":
        raise GapUndefinedError(f"duality gap undefined for status {solution.status!r}")
    return abs(solution.primal_obj - solution.dual_obj) / (1.0 + abs(solution.primal_obj))


def add_level_constraint(problem: SdpProblem, cost: np.ndarray, level: float, name: str = "level") -> SdpProblem:
    """Same problem with the extra constraint ``cost @ x <= level`` (as a 1x1 PSD block)."""
    n = problem.nvars
    cap = PsdBlock(name, 1, np.array([[float(level)]]), sp.csr_matrix(-np.asarray(cost, dtype=float).reshape(1, n)))
    return SdpProblem(problem.c, problem.A, problem.b, problem.blocks + [cap], problem.groups, dict(problem.meta))


def with_objective(problem: SdpProblem, c: np.ndarray) -> SdpProblem:
    return SdpProblem(np.asarray(c, dtype=float), problem.A, problem.b, problem.blocks, problem.groups, dict(problem.meta))


def objective_level_problem(problem: SdpProblem, level: float, objective: np.ndarray) -> SdpProblem:
    """Same feasible set intersected with ``c @ x <= level``, minimizing ``objective @ x``."""
    return with_objective(add_level_constraint(problem, problem.c, level, "objective level"), objective)


def moment_residual_cost(problem: SdpProblem, order: int) -> np.ndarray:
    """Linear functional that vanishes exactly when the fitted mixture reproduces the data moments.

    TV: ``trace M_d(psi_plus) + trace M_d(psi_minus)``, which is zero iff both
    signed parts vanish up to degree 2d. W2: ``sum_{0<|g|<=d} L_lambda((x^g - y^g)^2)``;
    when zero every ``x^g - y^g`` is in the kernel of ``M_d(lambda)``, so the two
    marginals agree up to degree 2d.
    """
    out = np.zeros(problem.nvars)
    if "psi_plus" in problem.groups:
        for tag in ("psi_plus", "psi_minus"):
            g = problem.groups[tag]
            out += moment_matrix_weights(g, order, np.eye(basis_size(g.nvars, order)), problem.nvars)
        return out
    g = problem.groups["lambda"]
    n = g.nvars // 2
    full = enumerate_basis(g.nvars, g.maxdeg)
    zero = (0,) * n
    for gamma in enumerate_basis(n, order).monomials[1:]:
        two = tuple(2 * a for a in gamma)
        out[g.start + full.index[two + zero]] += 1.0
        out[g.start + full.index[gamma + gamma]] -= 2.0
        out[g.start + full.index[zero + two]] += 1.0
    return out


def moment_matrix_weights(group: VariableGroup, d: int, W: np.ndarray, nvars_total: int) -> np.ndarray:
    """Cost vector ``x -> <W, M_d(x[group])>``."""
    table = moment_index_table(group.nvars, d)
    out = np.zeros(nvars_total)
    np.add.at(out, group.start + table.ravel(), np.asarray(W, dtype=float).ravel())
    return out


# ---------------------------------------------------------------------------
# plain-text sparse format

_HEADER = "# momix sdp v1"


def write_problem(problem: SdpProblem, stream: TextIO) -> None:
    """Write ``problem`` as whitespace-separated records, one per line."""
    w = stream.write
    w(_HEADER + "\n")
    w(f"nvars {problem.nvars}\n")
    for g in problem.groups.values():
        w(f"group {g.tag} {g.start} {g.nvars} {g.maxdeg}\n")
    for k in np.flatnonzero(problem.c):
        w(f"c {k} {float(problem.c[k])!r}\n")
    A = problem.A.tocoo()
    w(f"equalities {problem.A.shape[0]}\n")
    for r, k, v in zip(A.row, A.col, A.data):
        w(f"a {r} {k} {float(v)!r}\n")
    for r, v in enumerate(problem.b):
        w(f"b {r} {float(v)!r}\n")
    for idx, blk in enumerate(problem.blocks):
        w(f"block {idx} {blk.size} {quote(blk.name)}\n")
        m = blk.size
        for i, j in zip(*np.nonzero(blk.const)):
            if i <= j:
                w(f"f {idx} {i} {j} {float(blk.const[i, j])!r}\n")
        G = blk.coeffs.tocoo()
        for e, k, v in zip(G.row, G.col, G.data):
            i, j = divmod(int(e), m)
            if i <= j:
                w(f"g {idx} {i} {j} {k} {float(v)!r}\n")
    w("end\n")


def read_problem(stream: TextIO) -> SdpProblem:
    """Inverse of :func:`write_problem` (metadata is not round-tripped)."""
    lines = [ln.split() for ln in stream.read().splitlines() if ln.strip() and not ln.startswith("#")]
    n = None
    groups, c_entries, a_entries, b_entries = {}, [], [], {}
    neq = 0
    blocks: list[dict] = []
    for parts in lines:
        key = parts[0]
        if key == "nvars":
            n = int(parts[1])
        elif key == "group":
            groups[parts[1]] = VariableGroup(parts[1], int(parts[2]), int(parts[3]), int(parts[4]))
        elif key == "c":
            c_entries.append((int(parts[1]), float(parts[2])))
        elif key == "equalities":
            neq = int(parts[1])
        elif key == "a":
            a_entries.append((int(parts[1]), int(parts[2]), float(parts[3])))
        elif key == "b":
            b_entries[int(parts[1])] = float(parts[2])
        elif key == "block":
            blocks.append({"size": int(parts[2]), "name": unquote(parts[3]), "f": [], "g": []})
        elif key == "f":
            blocks[int(parts[1])]["f"].append((int(parts[2]), int(parts[3]), float(parts[4])))
        elif key == "g":
            blocks[int(parts[1])]["g"].append((int(parts[2]), int(parts[3]), int(parts[4]), float(parts[5])))
        elif key == "end":
            break
        else:
            raise ValueError(f"unrecognized record {key!r}")
    if n is None:
        raise ValueError("missing nvars record")
    c = np.zeros(n)
    for k, v in c_entries:
        c[k] = v
    if a_entries:
        r, k, v = zip(*a_entries)
    else:
        r, k, v = (), (), ()
    A = sp.csr_matrix((v, (r, k)), shape=(neq, n))
    b = np.array([b_entries.get(i, 0.0) for i in range(neq)])
    out_blocks = []
    for blk in blocks:
        m = blk["size"]
        const = np.zeros((m, m))
        for i, j, v in blk["f"]:
            const[i, j] = const[j, i] = v
        rows, cols, vals = [], [], []
        for i, j, k, v in blk["g"]:
            rows.append(i * m + j)
            cols.append(k)
            vals.append(v)
            if i != j:
                rows.append(j * m + i)
                cols.append(k)
                vals.append(v)
        G = sp.csr_matrix((vals, (rows, cols)), shape=(m * m, n))
        out_blocks.append(PsdBlock(blk["name"], m, const, G))
    return SdpProblem(c, A, b, out_blocks, groups)
