"""Multi-indices, sparse polynomials, Riesz functionals and moment/localizing matrices.

Multi-indices are plain tuples of non-negative ints. Bases are graded
lexicographic: degree-major, and inside one degree the exponent tuples are
sorted in decreasing lexicographic order, so the basis for two variables up
to degree 2 reads ``1, x1, x2, x1^2, x1 x2, x2^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

MultiIndex = tuple[int, ...]

# Anything above this is far beyond desk scale and almost certainly a typo.
MAX_BASIS_SIZE = 2_000_000


class BasisSizeError(ValueError):
    """Raised when a requested basis would not fit in memory."""


def degree(alpha: MultiIndex) -> int:
    return sum(alpha)


def add_indices(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex:
    return tuple(a + b for a, b in zip(alpha, beta))


def _compositions(nvars: int, deg: int):
    # tuples of length nvars summing to deg, in decreasing lex order
    if nvars == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _compositions(nvars - 1, deg - first):
            yield (first,) + rest


@dataclass(frozen=True)
class GradedBasis:
    """Ordered monomial basis of R_maxdeg[x_1..x_nvars]."""

    nvars: int
    maxdeg: int
    monomials: tuple[MultiIndex, ...] = field(repr=False)
    index: Mapping[MultiIndex, int] = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.monomials[i]

    def position(self, alpha: MultiIndex) -> int:
        return self.index[alpha]

    def degree_slice(self, deg: int) -> slice:
        """Positions of all monomials of total degree <= deg."""
        return slice(0, basis_size(self.nvars, min(deg, self.maxdeg)))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Monomial (Vandermonde) matrix, one row per point, one column per monomial."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.nvars:
            raise ValueError(f"points have {pts.shape[1]} coordinates, basis has {self.nvars}")
        exps = np.array(self.monomials, dtype=int)
        return np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)


def basis_size(nvars: int, maxdeg: int) -> int:
    return math.comb(nvars + maxdeg, maxdeg)


@lru_cache(maxsize=256)
def enumerate_basis(nvars: int, maxdeg: int) -> GradedBasis:
    """Graded lexicographic basis of all monomials of degree <= maxdeg.

    >>> enumerate_basis(2, 2).monomials
    ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    """
    if nvars < 1 or maxdeg < 0:
        raise ValueError(f"need nvars >= 1 and maxdeg >= 0, got ({nvars}, {maxdeg})")
    size = basis_size(nvars, maxdeg)
    if size > MAX_BASIS_SIZE:
        raise BasisSizeError(f"basis of {nvars} variables up to degree {maxdeg} has {size} monomials")
    monos = tuple(m for k in range(maxdeg + 1) for m in _compositions(nvars, k))
    return GradedBasis(nvars, maxdeg, monos, {m: i for i, m in enumerate(monos)})


class Polynomial:
    """Sparse real polynomial ``{exponent tuple: coefficient}``.

    Zero coefficients are never stored. Instances are treated as immutable.
    """

    __slots__ = ("nvars", "_coeffs")

    def __init__(self, nvars: int, coeffs: Mapping[MultiIndex, float] | None = None):
        self.nvars = nvars
        clean: dict[MultiIndex, float] = {}
        for alpha, c in (coeffs or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != nvars:
                raise ValueError(f"exponent {alpha} does not have {nvars} entries")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
        self._coeffs = {a: c for a, c in clean.items() if c != 0.0}

    @classmethod
    def constant(cls, nvars: int, value: float = 1.0) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def monomial(cls, alpha: Iterable[int], coeff: float = 1.0) -> "Polynomial":
        alpha = tuple(alpha)
        return cls(len(alpha), {alpha: coeff})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Polynomial":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @property
    def coeffs(self) -> dict[MultiIndex, float]:
        return dict(self._coeffs)

    def items(self):
        return self._coeffs.items()

    @property
    def support(self) -> frozenset[MultiIndex]:
        return frozenset(self._coeffs)

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0 by convention here."""
        return max((sum(a) for a in self._coeffs), default=0)

    def coefficient(self, alpha: MultiIndex) -> float:
        return self._coeffs.get(tuple(alpha), 0.0)

    def is_zero(self) -> bool:
        return not self._coeffs

    def _check(self, other: "Polynomial"):
        if other.nvars != self.nvars:
            raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        self._check(other)
        out = dict(self._coeffs)
        for a, c in other.items():
            out[a] = out.get(a, 0.0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {a: -c for a, c in self.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.nvars, {a: c * other for a, c in self.items()})
        self._check(other)
        out: dict[MultiIndex, float] = {}
        for a, ca in self.items():
            for b, cb in other.items():
                ab = add_indices(a, b)
                out[ab] = out.get(ab, 0.0) + ca * cb
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def shift(self, alpha: MultiIndex) -> "Polynomial":
        """Multiply by the monomial x^alpha."""
        return Polynomial(self.nvars, {add_indices(a, alpha): c for a, c in self.items()})

    def __call__(self, point) -> float:
        x = np.asarray(point, dtype=float)
        return float(sum(c * np.prod(x ** np.array(a)) for a, c in self.items()))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for a, c in self.items():
            out += c * np.prod(pts ** np.array(a), axis=1)
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._coeffs == other._coeffs

    def __hash__(self):
        return hash((self.nvars, frozenset(self._coeffs.items())))

    def __repr__(self):
        if not self._coeffs:
            return "Polynomial(0)"
        terms = []
        for a in sorted(self._coeffs, key=lambda e: (sum(e), tuple(-x for x in e))):
            mono = "*".join(
                f"x{i + 1}" if k == 1 else f"x{i + 1}^{k}" for i, k in enumerate(a) if k
            )
            terms.append(f"{self._coeffs[a]:g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(terms) + ")"


class PseudoMomentSequence:
    """Dense truncated sequence ``y_alpha`` for all ``|alpha| <= maxdeg``.

    ``values`` is aligned with ``enumerate_basis(nvars, maxdeg)``.
    """

    __slots__ = ("nvars", "maxdeg", "values", "basis")

    def __init__(self, nvars: int, maxdeg: int, values):
        self.basis = enumerate_basis(nvars, maxdeg)
        vals = np.array(values, dtype=float).ravel()
        if vals.shape[0] != len(self.basis):
            raise ValueError(
                f"expected {len(self.basis)} values for nvars={nvars}, maxdeg={maxdeg}, got {vals.shape[0]}"
            )
        vals.setflags(write=False)
        self.nvars = nvars
        self.maxdeg = maxdeg
        self.values = vals

    @classmethod
    def from_mapping(cls, nvars: int, maxdeg: int, mapping: Mapping[MultiIndex, float]):
        basis = enumerate_basis(nvars, maxdeg)
        missing = [a for a in basis if a not in mapping]
        if missing:
            raise ValueError(f"sequence incomplete, missing {missing[:3]}...")
        return cls(nvars, maxdeg, [mapping[a] for a in basis])

    def __getitem__(self, alpha: MultiIndex) -> float:
        return float(self.values[self.basis.index[tuple(alpha)]])

    def __len__(self):
        return len(self.values)

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def truncate(self, maxdeg: int) -> "PseudoMomentSequence":
        if maxdeg > self.maxdeg:
            raise ValueError(f"cannot truncate degree {self.maxdeg} sequence to {maxdeg}")
        return PseudoMomentSequence(self.nvars, maxdeg, self.values[: basis_size(self.nvars, maxdeg)])

    def __repr__(self):
        return f"PseudoMomentSequence(nvars={self.nvars}, maxdeg={self.maxdeg}, mass={self.mass:g})"


def riesz(y: PseudoMomentSequence, f: Polynomial) -> float:
    """Riesz functional ``L_y(f) = sum_alpha f_alpha y_alpha``."""
    if f.nvars != y.nvars:
        raise ValueError(f"polynomial has {f.nvars} variables, sequence has {y.nvars}")
    if f.degree > y.maxdeg:
        raise ValueError(f"polynomial of degree {f.degree} exceeds sequence degree {y.maxdeg}")
    return float(sum(c * y[a] for a, c in f.items()))


@lru_cache(maxsize=512)
def moment_index_table(nvars: int, d: int) -> np.ndarray:
    """Integer table T with ``M_d(y)[i, j] = y[T[i, j]]`` in the degree-2d basis."""
    row = enumerate_basis(nvars, d)
    full = enumerate_basis(nvars, 2 * d)
    m = len(row)
    table = np.empty((m, m), dtype=np.intp)
    for i, a in enumerate(row):
        for j in range(i, m):
            k = full.index[add_indices(a, row[j])]
            table[i, j] = k
            table[j, i] = k
    table.setflags(write=False)
    return table


def localizing_terms(r: Polynomial, d: int) -> list[tuple[float, np.ndarray]]:
    """Decompose ``M_d(r y)`` as ``sum_k c_k * y[T_k]`` with integer tables T_k.

    Tables index the basis of degree 2d and have side ``s(n, d - ceil(deg r / 2))``.
    """
    n = r.nvars
    half = localizing_order(r, d)
    row = enumerate_basis(n, half)
    full = enumerate_basis(n, 2 * d)
    out = []
    for gamma, c in r.items():
        m = len(row)
        table = np.empty((m, m), dtype=np.intp)
        for i, a in enumerate(row):
            for j in range(i, m):
                k = full.index[add_indices(add_indices(a, row[j]), gamma)]
                table[i, j] = k
                table[j, i] = k
        out.append((c, table))
    return out


def localizing_order(r: Polynomial, d: int) -> int:
    half = d - math.ceil(r.degree / 2)
    if half < 0:
        raise ValueError(f"constraint of degree {r.degree} does not fit at order {d}")
    return half


def moment_matrix(y: PseudoMomentSequence, d: int) -> np.ndarray:
    """Pseudo-moment matrix ``M_d(y)`` with entries ``y_{alpha+beta}``."""
    if 2 * d > y.maxdeg:
        raise ValueError(f"order {d} needs moments up to degree {2 * d}, sequence has {y.maxdeg}")
    full = y.values[: basis_size(y.nvars, 2 * d)]
    return full[moment_index_table(y.nvars, d)]


def localizing_matrix(y: PseudoMomentSequence, r: Polynomial, d: int) -> np.ndarray:
    """Localizing matrix ``M_{d - ceil(deg r/2)}(r y)``."""
    if r.nvars != y.nvars:
        raise ValueError(f"polynomial has {r.nvars} variables, sequence has {y.nvars}")
    if 2 * d > y.maxdeg:
        raise ValueError(f"order {d} needs moments up to degree {2 * d}, sequence has {y.maxdeg}")
    terms = localizing_terms(r, d)
    m = basis_size(y.nvars, localizing_order(r, d))
    full = y.values[: basis_size(y.nvars, 2 * d)]
    out = np.zeros((m, m))
    for c, table in terms:
        out += c * full[table]
    return out


def atomic_moments(atoms, weights, maxdeg: int) -> PseudoMomentSequence:
    """Exact moments of ``sum_i w_i delta_{atom_i}``."""
    pts = np.atleast_2d(np.asarray(atoms, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if pts.shape[0] != w.shape[0]:
        raise ValueError(f"{pts.shape[0]} atoms but {w.shape[0]} weights")
    basis = enumerate_basis(pts.shape[1], maxdeg)
    return PseudoMomentSequence(pts.shape[1], maxdeg, w @ basis.evaluate(pts))


def min_eigenvalue(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(M)[0])


def is_psd(M: np.ndarray, tol: float = 1e-10) -> bool:
    """PSD test relative to the largest eigenvalue magnitude."""
    ev = np.linalg.eigvalsh(M)
    scale = float(np.max(np.abs(ev))) or 1.0
    return bool(ev[0] >= -tol * scale)
