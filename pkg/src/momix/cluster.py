"""k-means and diagonal-GMM EM baselines, plus the initialization benchmark."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .data import Dataset, MixtureSpec, empirical_moments, normalize, random_mixture_spec, sample_gmm
from .extract import Algorithm1Result, run_algorithm1
from .families import box_set, gaussian_diagonal, Regularizer
from .relax import RelaxationSpec

VAR_FLOOR = 1e-6


class ClusterError(ValueError):
    pass


@dataclass
class GmmParams:
    means: np.ndarray  # K x n
    variances: np.ndarray  # K x n
    weights: np.ndarray  # K


@dataclass
class ClusterRun:
    method: str  # "kmeans" or "em"
    init: str  # "extracted_w2", "extracted_tv" or "random"
    iterations: int
    objective: float  # inertia for k-means, total log-likelihood for EM
    assignments: np.ndarray
    centers: np.ndarray
    converged: bool
    history: list[float] = field(default_factory=list)
    misclassification: float | None = None
    params: GmmParams | None = None


def _check_k(X: np.ndarray, K: int):
    if K < 1:
        raise ClusterError("K must be positive")
    if K > X.shape[0]:
        raise ClusterError(f"K={K} exceeds the number of points {X.shape[0]}")


def _sqdist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(-1)


def _points(data) -> np.ndarray:
    return data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))


def kmeans(data, K: int, init_centers=None, max_iter: int = 300, seed: int = 0, init_name: str = "random") -> ClusterRun:
    """Lloyd iterations until the assignment is a fixpoint.

    ``iterations`` counts center updates; a perfect initialization converges in 1.
    """
    X = _points(data)
    _check_k(X, K)
    if init_centers is None:
        rng = np.random.default_rng(seed)
        C = X[rng.choice(X.shape[0], size=K, replace=False)].copy()
    else:
        C = np.array(init_centers, dtype=float).reshape(K, X.shape[1])
    labels = _sqdist(X, C).argmin(1)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for k in range(K):
            members = labels == k
            if members.any():
                C[k] = X[members].mean(0)
            else:
                # reseed an empty cluster at the point worst served by its center
                far = int(np.argmax(((X - C[labels]) ** 2).sum(1)))
                C[k] = X[far]
                labels[far] = k
        D = _sqdist(X, C)
        new = D.argmin(1)
        history.append(float(D[np.arange(X.shape[0]), new].sum()))
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    return ClusterRun("kmeans", init_name, it, history[-1], labels, C, converged, history)


def _m_step(X: np.ndarray, R: np.ndarray) -> GmmParams:
    nk = R.sum(0) + 1e-300
    means = (R.T @ X) / nk[:, None]
    var = (R.T @ X**2) / nk[:, None] - means**2
    return GmmParams(means, np.maximum(var, VAR_FLOOR), nk / X.shape[0])


def _log_resp(X: np.ndarray, p: GmmParams) -> tuple[np.ndarray, float]:
    diff = X[:, None, :] - p.means[None, :, :]
    logpdf = -0.5 * ((diff**2) / p.variances[None] + np.log(2 * math.pi * p.variances[None])).sum(-1)
    joint = logpdf + np.log(np.maximum(p.weights, 1e-300))[None, :]
    norm = logsumexp(joint, axis=1)
    return joint - norm[:, None], float(norm.sum())


def em_gmm(
    data,
    K: int,
    init: GmmParams | None = None,
    max_iter: int = 100,
    tol: float = 1e-5,
    seed: int = 0,
    init_name: str = "random",
) -> ClusterRun:
    """EM for a diagonal Gaussian mixture; stops when the relative log-likelihood change < tol.

    ``iterations`` counts EM updates that changed the likelihood by more than tol
    (at least 1), so starting at the optimum reports 1.
    """
    X = _points(data)
    _check_k(X, K)
    if init is None:
        rng = np.random.default_rng(seed)
        R = rng.random((X.shape[0], K))
        R /= R.sum(1, keepdims=True)
        params = _m_step(X, R)
    else:
        params = GmmParams(
            np.array(init.means, dtype=float).reshape(K, X.shape[1]),
            np.maximum(np.array(init.variances, dtype=float).reshape(K, X.shape[1]), VAR_FLOOR),
            np.asarray(init.weights, dtype=float) / np.sum(init.weights),
        )
    history: list[float] = []
    converged = False
    iterations = max_iter
    for it in range(1, max_iter + 1):
        logR, ll = _log_resp(X, params)
        if history and abs(ll - history[-1]) < tol * abs(history[-1]):
            history.append(ll)
            converged = True
            iterations = max(1, it - 1)
            break
        history.append(ll)
        params = _m_step(X, np.exp(logR))
    logR, ll = _log_resp(X, params)
    return ClusterRun("em", init_name, iterations, ll, logR.argmax(1), params.means, converged, history, params=params)


def misclassification(assignments, labels, K: int | None = None) -> float:
    """Smallest error fraction over relabelings of ``assignments`` (optimal matching)."""
    if labels is None:
        raise ClusterError("misclassification needs ground-truth labels")
    a = np.asarray(assignments, dtype=int)
    b = np.asarray(labels, dtype=int)
    if a.shape != b.shape:
        raise ClusterError("assignments and labels differ in length")
    if a.size == 0:
        return 0.0
    size = max(K or 0, a.max() + 1, b.max() + 1)
    conf = np.zeros((size, size), dtype=int)
    np.add.at(conf, (a, b), 1)
    rows, cols = linear_sum_assignment(-conf)
    return float(1.0 - conf[rows, cols].sum() / a.size)


def bic_sweep(data, Ks=range(1, 9), seed: int = 0, restarts: int = 3) -> list[dict]:
    """BIC of the best of ``restarts`` EM fits for each K (lower is better)."""
    X = _points(data)
    out = []
    for K in Ks:
        if K > X.shape[0]:
            break
        best = max(em_gmm(X, K, seed=seed * 1000 + r).objective for r in range(restarts))
        nparams = (K - 1) + 2 * X.shape[1] * K
        out.append({"K": K, "loglik": best, "bic": -2 * best + nparams * math.log(X.shape[0])})
    return out


def farthest_point_padding(X: np.ndarray, centers: np.ndarray, K: int) -> np.ndarray:
    """Add data points farthest from the current centers until there are K."""
    C = [c for c in np.atleast_2d(centers)] if len(centers) else []
    if not C:
        C = [X.mean(0)]
        C[0] = X[np.argmin(((X - C[0]) ** 2).sum(1))]
    while len(C) < K:
        d = _sqdist(X, np.array(C)).min(1)
        C.append(X[int(np.argmax(d))])
    return np.array(C[:K])


def init_from_measure(X: np.ndarray, result: Algorithm1Result, K: int) -> tuple[GmmParams, str]:
    """Turn extracted atoms into K initial components.

    Too many atoms: keep the K heaviest. Too few: keep them all and add the
    data points farthest from the chosen centers (variances from the data).
    """
    n = X.shape[1]
    m = result.measure
    if m is not None and m.K >= K:
        keep = np.sort(np.argsort(-m.weights, kind="stable")[:K])
        atoms, w = m.atoms[keep], m.weights[keep]
        w = np.where(w > 0, w, 1e-3)
        note = "exact" if m.K == K else "trimmed"
        return GmmParams(atoms[:, :n].copy(), atoms[:, n:] ** 2, w / w.sum()), note
    base = m.atoms[:, :n] if m is not None else np.zeros((0, n))
    means = farthest_point_padding(X, base, K)
    var = np.tile(X.var(0), (K, 1))
    if m is not None:
        var[: m.K] = m.atoms[:, n:] ** 2
    return GmmParams(means, var, np.full(K, 1.0 / K)), "padded"


@dataclass
class BenchmarkConfig:
    K: int = 2
    n: int = 2
    separability: float = 5.0
    eccentricity: float = 0.25
    N: int = 1000
    mixtures: int = 10
    repeats: int = 100
    seed: int = 0
    order: int = 3
    epsilon: float = 1e-3
    tol: float = 1e-2
    sigma: float = 0.05
    sigma_bounds: tuple[float, float] = (0.05, 1.0)
    distances: tuple[str, ...] = ("w2", "tv")
    methods: tuple[str, ...] = ("kmeans", "em")
    kmeans_max_iter: int = 300
    em_max_iter: int = 100
    em_tol: float = 1e-5

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_bounds"] = list(self.sigma_bounds)
        d["distances"] = list(self.distances)
        d["methods"] = list(self.methods)
        return d


@dataclass
class BenchmarkReport:
    config: dict
    rows: list[dict]
    mixtures: list[dict]
    summary: dict

    def write_csv(self, path) -> None:
        fields = ["mixture", "method", "init", "repeat", "iterations", "objective", "misclassification",
                  "khat", "init_note", "converged"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow(r)

    def to_dict(self) -> dict:
        return {"config": self.config, "mixtures": self.mixtures, "summary": self.summary}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _rng_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _run(method: str, X, K, init: GmmParams | None, seed: int, name: str, cfg: BenchmarkConfig) -> ClusterRun:
    if method == "kmeans":
        return kmeans(X, K, None if init is None else init.means, cfg.kmeans_max_iter, seed, name)
    return em_gmm(X, K, init, cfg.em_max_iter, cfg.em_tol, seed, name)


def run_mixture(data: Dataset, K: int, cfg: BenchmarkConfig, index: int = 0, spec_info: dict | None = None):
    """All runs for one (already normalized) dataset: extracted inits and random repeats."""
    X = data.points
    n = data.n
    fam = gaussian_diagonal(n)
    S = box_set([0.0] * n + [cfg.sigma_bounds[0]] * n, [1.0] * n + [cfg.sigma_bounds[1]] * n)
    rows: list[dict] = []
    info = {"mixture": index, "extraction": {}}
    if spec_info:
        info["spec"] = spec_info
    mu = empirical_moments(data, 2 * cfg.order)
    for dist in cfg.distances:
        spec = RelaxationSpec(dist, cfg.order, fam, S, Regularizer(cfg.epsilon))
        t0 = time.perf_counter()
        res = run_algorithm1(mu, spec, tol=cfg.tol, seed=cfg.seed)
        init, note = init_from_measure(X, res, K)
        info["extraction"][dist] = {"status": res.status, "khat": res.khat, "objective": res.objective,
                                    "duality_gap": res.gap, "init_note": note,
                                    "seconds": time.perf_counter() - t0}
        for method in cfg.methods:
            run = _run(method, X, K, init, cfg.seed, f"extracted_{dist}", cfg)
            rows.append(_row(index, run, -1, data.labels, K, res.khat, note))
    for r in range(cfg.repeats):
        for method in cfg.methods:
            run = _run(method, X, K, None, _rng_seed(cfg.seed, index, r), "random", cfg)
            rows.append(_row(index, run, r, data.labels, K, None, ""))
    return rows, info


def _row(index, run: ClusterRun, repeat, labels, K, khat, note) -> dict:
    mis = None if labels is None else misclassification(run.assignments, labels, K)
    return {"mixture": index, "method": run.method, "init": run.init, "repeat": repeat,
            "iterations": run.iterations, "objective": run.objective, "misclassification": mis,
            "khat": khat, "init_note": note, "converged": run.converged}


def summarize(rows: list[dict], infos: list[dict], cfg: BenchmarkConfig) -> tuple[list[dict], dict]:
    per_mix = []
    for info in infos:
        i = info["mixture"]
        entry = dict(info)
        for method in cfg.methods:
            rnd = np.array([r["iterations"] for r in rows if r["mixture"] == i and r["method"] == method
                            and r["init"] == "random"], dtype=float)
            stats = {"random_mean": float(rnd.mean()) if rnd.size else None,
                     "random_std": float(rnd.std(ddof=1)) if rnd.size > 1 else 0.0}
            for dist in cfg.distances:
                ext = [r for r in rows if r["mixture"] == i and r["method"] == method
                       and r["init"] == f"extracted_{dist}"]
                if ext and rnd.size:
                    it = ext[0]["iterations"]
                    stats[f"extracted_{dist}"] = it
                    stats[f"improvement_{dist}_pct"] = float(100.0 * (rnd.mean() - it) / rnd.mean())
                    stats[f"beats_random_{dist}"] = bool(it < rnd.mean())
            entry[method] = stats
        per_mix.append(entry)
    # x-axis of the comparison plot: mixtures by W2-initialized iteration count
    key_method = cfg.methods[0]
    key_dist = "w2" if "w2" in cfg.distances else cfg.distances[0]
    per_mix.sort(key=lambda e: (e[key_method].get(f"extracted_{key_dist}", math.inf), e["mixture"]))
    summary = {}
    for method in cfg.methods:
        for dist in cfg.distances:
            beats = [e[method].get(f"beats_random_{dist}") for e in per_mix]
            beats = [b for b in beats if b is not None]
            imps = [e[method][f"improvement_{dist}_pct"] for e in per_mix if f"improvement_{dist}_pct" in e[method]]
            summary[f"{method}_{dist}"] = {
                "fraction_beating_random_mean": float(np.mean(beats)) if beats else None,
                "mean_improvement_pct": float(np.mean(imps)) if imps else None,
                "mixtures": len(beats),
            }
    return per_mix, summary


def run_benchmark(cfg: BenchmarkConfig) -> BenchmarkReport:
    if cfg.repeats < 1:
        raise ClusterError("repeats must be at least 1")
    rows: list[dict] = []
    infos = []
    for m in range(cfg.mixtures):
        rng = np.random.default_rng(_rng_seed(cfg.seed, m, 7919))
        spec: MixtureSpec = random_mixture_spec(cfg.K, cfg.n, cfg.separability, cfg.eccentricity, rng, cfg.sigma)
        data = normalize(sample_gmm(spec, cfg.N, _rng_seed(cfg.seed, m, 104729)))
        r, info = run_mixture(data, cfg.K, cfg, m, spec.to_dict())
        rows.extend(r)
        infos.append(info)
    per_mix, summary = summarize(rows, infos, cfg)
    return BenchmarkReport(cfg.to_dict(), rows, per_mix, summary)
