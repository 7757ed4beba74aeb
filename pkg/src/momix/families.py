"""Parametric families with polynomial moment maps, parameter sets and regularizers.

Every family exposes ``moment_map(alpha)``: the polynomial ``p_alpha`` in the
parameters such that ``E_theta[x^alpha] = p_alpha(theta)``. Multivariate
families are coordinate products, so ``p_alpha`` factors over coordinates.

Parameter layouts:

* ``gaussian_diagonal``: ``(m_1..m_n, sigma_1..sigma_n)`` with standard deviations
* ``poisson``: ``(lambda_1..lambda_n)``
* ``exponential``: ``(eta_1..eta_n)`` with ``eta = 1/rate`` (the mean)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .polybasis import MultiIndex, Polynomial, PseudoMomentSequence, enumerate_basis

FAMILY_NAMES = ("gaussian_diagonal", "poisson", "exponential")


def double_factorial(k: int) -> int:
    """k!! with the conventions (-1)!! = 0!! = 1."""
    if k <= 0:
        return 1
    out = 1
    for j in range(k, 0, -2):
        out *= j
    return out


@lru_cache(maxsize=None)
def stirling2(k: int, j: int) -> int:
    """Stirling numbers of the second kind, S(k, j)."""
    if k == j:
        return 1
    if j == 0 or j > k:
        return 0
    return j * stirling2(k - 1, j) + stirling2(k - 1, j - 1)


def bell_number(k: int) -> int:
    return sum(stirling2(k, j) for j in range(k + 1))


@lru_cache(maxsize=None)
def _gaussian1d_coeffs(k: int) -> tuple[tuple[MultiIndex, float], ...]:
    return tuple(
        ((k - 2 * l, 2 * l), float(math.comb(k, 2 * l) * double_factorial(2 * l - 1)))
        for l in range(k // 2 + 1)
    )


def gaussian1d_moment_poly(k: int) -> Polynomial:
    """E[(m + sigma Z)^k] as a polynomial in (m, sigma).

    >>> gaussian1d_moment_poly(3)
    Polynomial(1*x1^3 + 3*x1*x2^2)
    """
    if k < 0:
        raise ValueError(f"moment order must be >= 0, got {k}")
    return Polynomial(2, dict(_gaussian1d_coeffs(k)))


def gaussian_diag_moment_poly(alpha: MultiIndex) -> Polynomial:
    """Moment polynomial of a diagonal Gaussian in ``(m_1..m_n, sigma_1..sigma_n)``."""
    return _gaussian_diag(tuple(int(a) for a in alpha))


@lru_cache(maxsize=100_000)
def _gaussian_diag(alpha: MultiIndex) -> Polynomial:
    n = len(alpha)
    terms: dict[MultiIndex, float] = {(0,) * (2 * n): 1.0}
    for i, k in enumerate(alpha):
        if k == 0:
            continue
        new: dict[MultiIndex, float] = {}
        for expo, c in terms.items():
            for (em, es), ck in _gaussian1d_coeffs(k):
                e = list(expo)
                e[i] += em
                e[n + i] += es
                e = tuple(e)
                new[e] = new.get(e, 0.0) + c * ck
        terms = new
    return Polynomial(2 * n, terms)


def poisson_moment_poly(k: int) -> Polynomial:
    """Touchard polynomial ``sum_j S(k, j) lambda^j``."""
    if k < 0:
        raise ValueError(f"moment order must be >= 0, got {k}")
    return Polynomial(1, {(j,): float(stirling2(k, j)) for j in range(k + 1)})


def exponential_moment_poly(k: int) -> Polynomial:
    """``k! eta^k`` for the exponential law with mean ``eta``."""
    if k < 0:
        raise ValueError(f"moment order must be >= 0, got {k}")
    return Polynomial(1, {(k,): float(math.factorial(k))})


@lru_cache(maxsize=100_000)
def _product_family(kind: str, alpha: MultiIndex) -> Polynomial:
    one = poisson_moment_poly if kind == "poisson" else exponential_moment_poly
    n = len(alpha)
    terms: dict[MultiIndex, float] = {(0,) * n: 1.0}
    for i, k in enumerate(alpha):
        if k == 0:
            continue
        new: dict[MultiIndex, float] = {}
        for expo, c in terms.items():
            for (j,), ck in one(k).items():
                e = list(expo)
                e[i] += j
                e = tuple(e)
                new[e] = new.get(e, 0.0) + c * ck
        terms = new
    return Polynomial(n, terms)


@dataclass(frozen=True)
class ParametricFamily:
    """A family ``{mu_theta}`` on R^n with polynomial moments in theta in R^p."""

    name: str
    n: int

    def __post_init__(self):
        if self.name not in FAMILY_NAMES:
            raise ValueError(f"unknown family {self.name!r}; expected one of {FAMILY_NAMES}")
        if self.n < 1:
            raise ValueError(f"data dimension must be >= 1, got {self.n}")

    @property
    def p(self) -> int:
        return 2 * self.n if self.name == "gaussian_diagonal" else self.n

    @property
    def param_names(self) -> list[str]:
        if self.name == "gaussian_diagonal":
            return [f"m{i + 1}" for i in range(self.n)] + [f"sigma{i + 1}" for i in range(self.n)]
        sym = "lambda" if self.name == "poisson" else "eta"
        return [f"{sym}{i + 1}" for i in range(self.n)]

    def moment_map(self, alpha: MultiIndex) -> Polynomial:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise ValueError(f"multi-index {alpha} does not match data dimension {self.n}")
        if self.name == "gaussian_diagonal":
            return _gaussian_diag(alpha)
        return _product_family(self.name, alpha)

    def coordinate_params(self, i: int) -> list[int]:
        """Parameter positions that describe coordinate i."""
        return [i, self.n + i] if self.name == "gaussian_diagonal" else [i]

    def marginal(self) -> "ParametricFamily":
        """The one-dimensional family of each coordinate marginal."""
        return ParametricFamily(self.name, 1)

    def mean_params(self) -> list[int]:
        """Parameters that are coordinate means (all of them for Poisson/exponential)."""
        return list(range(self.n))

    def means(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta[..., : self.n].copy()

    def variances(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.name == "gaussian_diagonal":
            return theta[..., self.n :] ** 2
        if self.name == "poisson":
            return theta.copy()
        return theta**2

    def moment_value(self, alpha: MultiIndex, theta) -> float:
        return self.moment_map(alpha)(theta)

    def mixture_moments(self, atoms, weights, maxdeg: int) -> PseudoMomentSequence:
        """Exact moments of ``sum_k w_k mu_{theta_k}`` up to ``maxdeg``."""
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        w = np.asarray(weights, dtype=float)
        basis = enumerate_basis(self.n, maxdeg)
        vals = [float(w @ self.moment_map(a).evaluate(atoms)) for a in basis]
        return PseudoMomentSequence(self.n, maxdeg, vals)

    def sample(self, theta, size: int, rng: np.random.Generator) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.name == "gaussian_diagonal":
            return rng.normal(theta[: self.n], theta[self.n :], size=(size, self.n))
        if self.name == "poisson":
            return rng.poisson(theta, size=(size, self.n)).astype(float)
        return rng.exponential(theta, size=(size, self.n))

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "ParametricFamily":
        return cls(d["name"], int(d["n"]))


def gaussian_diagonal(n: int) -> ParametricFamily:
    return ParametricFamily("gaussian_diagonal", n)


def poisson(n: int) -> ParametricFamily:
    return ParametricFamily("poisson", n)


def exponential(n: int) -> ParametricFamily:
    return ParametricFamily("exponential", n)


@dataclass(frozen=True)
class SemiAlgebraicSet:
    """``{theta in R^p : r_j(theta) >= 0}``; boxes also remember their bounds."""

    pvars: int
    constraints: tuple[Polynomial, ...]
    lowers: tuple[float, ...] | None = None
    uppers: tuple[float, ...] | None = None

    def __post_init__(self):
        for r in self.constraints:
            if r.nvars != self.pvars:
                raise ValueError(f"constraint over {r.nvars} variables in a set over {self.pvars}")

    @property
    def half_degrees(self) -> list[int]:
        return [math.ceil(r.degree / 2) for r in self.constraints]

    @property
    def max_half_degree(self) -> int:
        return max(self.half_degrees, default=0)

    @property
    def is_box(self) -> bool:
        return self.lowers is not None

    def contains(self, theta, tol: float = 0.0) -> bool:
        return all(r(theta) >= -tol for r in self.constraints)

    def violations(self, theta) -> np.ndarray:
        return np.array([r(theta) for r in self.constraints])

    def project(self, coords: Sequence[int]) -> "SemiAlgebraicSet":
        """Coordinate projection; exact for boxes only."""
        if not self.is_box:
            raise ValueError("only box parameter sets can be projected")
        return box_set([self.lowers[i] for i in coords], [self.uppers[i] for i in coords])

    def to_dict(self) -> dict:
        if self.is_box:
            return {"kind": "box", "lowers": list(self.lowers), "uppers": list(self.uppers)}
        return {
            "kind": "polynomials",
            "pvars": self.pvars,
            "constraints": [[[list(a), c] for a, c in r.items()] for r in self.constraints],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemiAlgebraicSet":
        if d["kind"] == "box":
            return box_set(d["lowers"], d["uppers"])
        p = int(d["pvars"])
        return cls(p, tuple(Polynomial(p, {tuple(a): c for a, c in terms}) for terms in d["constraints"]))


def box_set(lowers, uppers) -> SemiAlgebraicSet:
    """Box ``prod_i [l_i, u_i]`` as constraints ``(theta_i - l_i)(u_i - theta_i) >= 0``."""
    lo = [float(v) for v in np.atleast_1d(lowers)]
    hi = [float(v) for v in np.atleast_1d(uppers)]
    if len(lo) != len(hi):
        raise ValueError(f"{len(lo)} lower bounds but {len(hi)} upper bounds")
    if any(not (a < b) for a, b in zip(lo, hi)):
        raise ValueError(f"every lower bound must be strictly below its upper bound: {lo} vs {hi}")
    p = len(lo)
    cons = []
    for i, (a, b) in enumerate(zip(lo, hi)):
        t = Polynomial.variable(p, i)
        cons.append((t - a) * (b - t))
    return SemiAlgebraicSet(p, tuple(cons), tuple(lo), tuple(hi))


def trace_regularizer(p: int, d: int) -> Polynomial:
    """``R(theta) = sum_{0 != gamma, |gamma| <= d} theta^(2 gamma)``."""
    if p < 1 or d < 1:
        raise ValueError(f"need p >= 1 and d >= 1, got ({p}, {d})")
    return Polynomial(p, {tuple(2 * g for g in gamma): 1.0 for gamma in enumerate_basis(p, d).monomials[1:]})


@dataclass(frozen=True)
class Regularizer:
    """``epsilon * L_phi(R)``. ``poly=None`` means the trace regularizer at the relaxation order."""

    strength: float = 0.0
    poly: Polynomial | None = field(default=None)

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError(f"regularization strength must be >= 0, got {self.strength}")
        if self.poly is not None:
            if self.poly.coefficient((0,) * self.poly.nvars) != 0.0:
                raise ValueError("regularizer must have zero constant term")
            if any(e % 2 for a in self.poly.support for e in a):
                raise ValueError("regularizer may only contain even powers")

    def polynomial(self, p: int, d: int) -> Polynomial:
        return self.poly if self.poly is not None else trace_regularizer(p, d)


FamilyFactory = Callable[[int], ParametricFamily]
FAMILIES: dict[str, FamilyFactory] = {
    "gaussian_diagonal": gaussian_diagonal,
    "poisson": poisson,
    "exponential": exponential,
}
