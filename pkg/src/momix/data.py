"""Datasets, normalization, empirical moments, PCA and synthetic mixtures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .polybasis import PseudoMomentSequence, enumerate_basis


class DataError(ValueError):
    """Unreadable or unusable input data."""


class GeometryError(ValueError):
    """A mixture spec whose geometry cannot be realized."""


@dataclass(frozen=True)
class AffineMaps:
    """Per-dimension ``original = offset + scale * normalized``."""

    offset: np.ndarray
    scale: np.ndarray
    constant: np.ndarray  # True where the column had zero range

    def to_original(self, points: np.ndarray) -> np.ndarray:
        return self.offset + self.scale * np.asarray(points, dtype=float)

    def to_normalized(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.offset) / self.scale

    def to_dict(self) -> dict:
        return {"offset": self.offset.tolist(), "scale": self.scale.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def identity(cls, n: int) -> "AffineMaps":
        return cls(np.zeros(n), np.ones(n), np.zeros(n, dtype=bool))


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: np.ndarray | None = None
    maps: AffineMaps | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise DataError(f"points must be an N x n matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("points contain NaN or infinite values")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels).astype(int)
            if lab.shape != (pts.shape[0],):
                raise DataError(f"{lab.shape[0]} labels for {pts.shape[0]} points")
            object.__setattr__(self, "labels", lab)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def normalized(self) -> bool:
        return self.maps is not None

    def column(self, i: int) -> "Dataset":
        maps = None
        if self.maps is not None:
            maps = AffineMaps(self.maps.offset[i : i + 1], self.maps.scale[i : i + 1], self.maps.constant[i : i + 1])
        return Dataset(self.points[:, i : i + 1], self.labels, maps)


def normalize(data: Dataset, scaling: str = "column") -> Dataset:
    """Map the data affinely into [0, 1].

    ``scaling="column"`` stretches every column onto [0, 1]; constant columns
    become 0.5 and are flagged. ``scaling="joint"`` uses one offset and scale
    for all columns, so relative spreads survive (a near-constant column stays
    near-constant).
    """
    if data.N == 0:
        raise DataError("empty dataset")
    if scaling not in ("column", "joint"):
        raise DataError(f"unknown scaling {scaling!r}")
    lo = data.points.min(axis=0)
    hi = data.points.max(axis=0)
    span = hi - lo
    constant = span <= 0
    if scaling == "joint":
        width = float(hi.max() - lo.min())
        scale = np.full(data.n, width if width > 0 else 1.0)
        offset = np.full(data.n, lo.min()) if width > 0 else lo - 0.5
        maps = AffineMaps(offset, scale, constant)
        return Dataset(np.clip(maps.to_normalized(data.points), 0.0, 1.0), data.labels, maps)
    scale = np.where(constant, 1.0, span)
    offset = np.where(constant, lo - 0.5, lo)
    maps = AffineMaps(offset, scale, constant)
    pts = np.clip(maps.to_normalized(data.points), 0.0, 1.0)
    pts[:, constant] = 0.5
    return Dataset(pts, data.labels, maps)


def denormalize_gaussian_params(theta: np.ndarray, maps: AffineMaps) -> np.ndarray:
    """(means, sigmas) from the normalized scale back to data units."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = maps.offset.shape[0]
    out = theta.copy()
    out[:, :n] = maps.offset + maps.scale * theta[:, :n]
    out[:, n:] = maps.scale * theta[:, n:]
    return out


def empirical_moments(data: Dataset, maxdeg: int) -> PseudoMomentSequence:
    """``mu_alpha = mean_i x_i^alpha`` for all ``|alpha| <= maxdeg``."""
    if data.N == 0:
        raise DataError("empty dataset")
    basis = enumerate_basis(data.n, maxdeg)
    vals = np.zeros(len(basis))
    # chunked so large N does not build a huge Vandermonde matrix at once
    for start in range(0, data.N, 20000):
        vals += basis.evaluate(data.points[start : start + 20000]).sum(axis=0)
    return PseudoMomentSequence(data.n, maxdeg, vals / data.N)


def coordinate_moments(data: Dataset, i: int, maxdeg: int) -> PseudoMomentSequence:
    x = data.points[:, i]
    return PseudoMomentSequence(1, maxdeg, [np.mean(x**k) for k in range(maxdeg + 1)])


@dataclass(frozen=True)
class Projection:
    mean: np.ndarray
    components: np.ndarray  # k x n, orthonormal rows
    explained_variance: np.ndarray
    total_variance: float

    @property
    def retained(self) -> float:
        if self.total_variance == 0:
            return 1.0
        return float(self.explained_variance.sum() / self.total_variance)

    def transform(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.mean) @ self.components.T

    def inverse(self, scores: np.ndarray) -> np.ndarray:
        return self.mean + np.asarray(scores, dtype=float) @ self.components


def pca_reduce(data: Dataset, k: int, normalize_output: bool = True) -> tuple[Dataset, Projection]:
    """Project centered data on the top-k principal directions (then normalize by default)."""
    if not 1 <= k <= data.n:
        raise DataError(f"cannot keep {k} components of {data.n}-dimensional data")
    mean = data.points.mean(axis=0)
    X = data.points - mean
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    var = s**2 / max(data.N - 1, 1)
    proj = Projection(mean, Vt[:k], var[:k], float(var.sum()))
    out = Dataset(proj.transform(data.points), data.labels)
    return (normalize(out) if normalize_output else out), proj


@dataclass(frozen=True)
class MixtureSpec:
    """Diagonal Gaussian mixture with recorded geometry controls."""

    means: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray
    separability: float = 0.0
    eccentricity: float = 1.0
    reciprocal_eccentricity: bool = False

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        s = np.atleast_2d(np.asarray(self.sigmas, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if m.shape != s.shape or m.shape[0] != w.shape[0]:
            raise GeometryError(f"inconsistent shapes: means {m.shape}, sigmas {s.shape}, weights {w.shape}")
        if np.any(s <= 0) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise GeometryError("sigmas must be positive and weights a probability vector")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sigmas", s)
        object.__setattr__(self, "weights", w)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def n(self) -> int:
        return self.means.shape[1]

    def min_separation(self) -> float:
        """``min_{i != j} |m_i - m_j| / max_k sqrt(lambda_max(Sigma_k))``."""
        if self.K < 2:
            return float("inf")
        diff = self.means[:, None, :] - self.means[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        dist[np.diag_indices(self.K)] = np.inf
        return float(dist.min() / self.sigmas.max())

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "means": self.means.tolist(),
            "sigmas": self.sigmas.tolist(),
            "weights": self.weights.tolist(),
            "separability": self.separability,
            "eccentricity": self.eccentricity,
            "reciprocal_eccentricity": self.reciprocal_eccentricity,
            "separability_convention": "min pairwise mean distance >= c * max_k sqrt(lambda_max(Sigma_k))",
            "eccentricity_convention": "per component sigma_min^2 / sigma_max^2"
            + (" (reciprocal)" if self.reciprocal_eccentricity else ""),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        return cls(d["means"], d["sigmas"], d["weights"], d.get("separability", 0.0),
                   d.get("eccentricity", 1.0), d.get("reciprocal_eccentricity", False))


def random_mixture_spec(
    K: int,
    n: int,
    separability: float,
    eccentricity: float,
    rng: np.random.Generator,
    sigma: float = 0.05,
    reciprocal: bool = False,
    max_attempts: int = 1000,
) -> MixtureSpec:
    """Random means in [0,1]^n at least ``separability * sigma`` apart; equal weights.

    Each component gets standard deviation ``sigma`` on one random axis and
    ``sigma * sqrt(eccentricity)`` on the others (variance ratio = eccentricity).
    """
    if K < 1 or n < 1:
        raise GeometryError("K and n must be positive")
    if eccentricity <= 0 or sigma <= 0:
        raise GeometryError("eccentricity and sigma must be positive")
    ratio = 1.0 / eccentricity if reciprocal else eccentricity
    minor = sigma * np.sqrt(min(ratio, 1.0))
    major = sigma * np.sqrt(max(ratio, 1.0)) if ratio > 1 else sigma
    sigmas = np.full((K, n), minor)
    if n == 1:
        sigmas[:] = major
    else:
        sigmas[np.arange(K), rng.integers(0, n, size=K)] = major
    need = separability * sigmas.max()
    for _ in range(max_attempts):
        means = rng.uniform(0.0, 1.0, size=(K, n))
        if K == 1:
            break
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        if dist[~np.eye(K, dtype=bool)].min() >= need:
            break
    else:
        raise GeometryError(f"could not place {K} means {need:.3g} apart in [0,1]^{n} after {max_attempts} attempts")
    return MixtureSpec(means, sigmas, np.full(K, 1.0 / K), separability, eccentricity, reciprocal)


def sample_gmm(spec: MixtureSpec, N: int, seed: int) -> Dataset:
    if N < 1:
        raise DataError("N must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.choice(spec.K, size=N, p=spec.weights)
    pts = spec.means[labels] + spec.sigmas[labels] * rng.standard_normal((N, spec.n))
    return Dataset(pts, labels)


def read_csv(path: str | Path, header: bool = False, labels: bool = False) -> Dataset:
    """Comma-separated numbers, one row per sample; optional trailing integer label column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if header and rows:
        rows = rows[1:]
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} contains no data rows")
    width = len(rows[0])
    values = []
    for lineno, r in enumerate(rows, start=2 if header else 1):
        if len(r) != width:
            raise DataError(f"{path}: row {lineno} has {len(r)} fields, expected {width}")
        try:
            values.append([float(c) for c in r])
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: {exc}") from exc
    arr = np.array(values)
    if labels:
        if width < 2:
            raise DataError("label column requested but rows have a single field")
        lab = arr[:, -1]
        if np.any(lab != np.round(lab)):
            raise DataError("label column must hold integers")
        return Dataset(arr[:, :-1], lab.astype(int))
    return Dataset(arr)


def write_csv(data: Dataset, path: str | Path, labels: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i, row in enumerate(data.points):
            out = [repr(float(v)) for v in row]
            if labels and data.labels is not None:
                out.append(str(int(data.labels[i])))
            w.writerow(out)


def write_spec(spec: MixtureSpec, path: str | Path, extra: dict | None = None) -> None:
    payload = spec.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
