"""Command-line entry point: ``momix fit | project | bench | gen``.

Every command writes a JSON report that echoes the fully resolved
configuration, the seed and the package version. Exit codes: 0 on success,
1 when a solve or an extraction fails, 2 for bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .cluster import BenchmarkConfig, BenchmarkReport, ClusterError, _rng_seed, run_benchmark, run_mixture, summarize
from .data import (
    DataError,
    Dataset,
    GeometryError,
    coordinate_moments,
    denormalize_gaussian_params,
    empirical_moments,
    normalize,
    pca_reduce,
    random_mixture_spec,
    read_csv,
    sample_gmm,
    write_csv,
    write_spec,
)
from .extract import ExtractionError, run_algorithm1
from .families import FAMILIES, Regularizer, box_set
from .relax import DISTANCES, RelaxationError, RelaxationSpec, projected_spec
from .sdp import SolverError

SCHEMA = "momix-report/1"
EXIT_OK, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    """Bad flags or configuration."""


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report path (default: stdout)")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="CSV file, one sample per row")
    p.add_argument("--header", action="store_true", help="skip the first CSV row")
    p.add_argument("--labels", action="store_true", help="last CSV column holds integer labels")


def _add_relaxation(p: argparse.ArgumentParser, order: int, sigma_bounds: str, scaling: str = "column") -> None:
    p.add_argument("--family", choices=sorted(FAMILIES), default="gaussian_diagonal")
    p.add_argument("--distance", choices=DISTANCES, default="w2")
    p.add_argument("--order", type=int, default=order, help="relaxation order d")
    p.add_argument("--max-order", type=int, help="raise d up to this value while not flat (default: --order)")
    p.add_argument("--epsilon", type=float, default=1e-3, help="regularization strength")
    p.add_argument("--tol", type=float, default=1e-2, help="rank tolerance")
    p.add_argument("--sigma-bounds", type=_floats, default=_floats(sigma_bounds),
                   help="lo,hi box for Gaussian standard deviations on the normalized scale")
    p.add_argument("--scaling", choices=("column", "joint"), default=scaling,
                   help="normalize each column onto [0,1], or all columns with one shared map")
    p.add_argument("--lower", type=_floats, help="explicit parameter box lower corner (overrides defaults)")
    p.add_argument("--upper", type=_floats, help="explicit parameter box upper corner")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momix", description="Mixture fitting through moment relaxations.")
    parser.add_argument("--version", action="version", version=f"momix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="estimate mixture order and parameters from a CSV")
    _add_common(fit)
    _add_data(fit)
    _add_relaxation(fit, 4, "0,1")
    fit.add_argument("--density-out", help="CSV of fitted marginal densities on a grid")
    fit.add_argument("--grid", type=int, default=200, help="density grid points per coordinate")

    proj = sub.add_parser("project", help="per-coordinate order estimates and their mode")
    _add_common(proj)
    _add_data(proj)
    _add_relaxation(proj, 4, "0,1", "joint")

    bench = sub.add_parser("bench", help="k-means / EM initialization benchmark")
    _add_common(bench)
    _add_data(bench)
    _add_relaxation(bench, 3, "0.05,1")
    bench.set_defaults(distance=None)
    bench.add_argument("--K", type=int, default=2)
    bench.add_argument("--dim", type=int, default=2)
    bench.add_argument("--separability", type=float, default=5.0)
    bench.add_argument("--eccentricity", type=float, default=0.25)
    bench.add_argument("--N", type=int, default=1000)
    bench.add_argument("--mixtures", type=int, default=10)
    bench.add_argument("--repeats", type=int, default=100)
    bench.add_argument("--pca", type=int, help="reduce --data to this many principal components first")
    bench.add_argument("--rows-out", help="per-run CSV (default: report path with .csv suffix)")

    gen = sub.add_parser("gen", help="write a labeled synthetic Gaussian mixture CSV")
    _add_common(gen)
    gen.add_argument("--K", type=int, default=2)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--separability", type=float, default=5.0)
    gen.add_argument("--eccentricity", type=float, default=0.25)
    gen.add_argument("--reciprocal", action="store_true", help="use 1/eccentricity as the variance ratio")
    gen.add_argument("--sigma", type=float, default=0.05)
    gen.add_argument("--N", type=int, default=1000)
    return parser


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(overrides, dict):
            raise InputError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise InputError(f"unknown config keys: {unknown}")
        # flags given on the command line win over the file
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    return args


def resolved_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


def _report(args, body: dict) -> dict:
    return {"schema": SCHEMA, "version": __version__, "command": args.command, "seed": args.seed,
            "config": resolved_config(args), **body}


def _emit(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _load(args) -> Dataset:
    if not args.data:
        raise InputError("--data is required")
    return read_csv(args.data, header=args.header, labels=args.labels)


def _prepare(args, data: Dataset) -> tuple[Dataset, RelaxationSpec]:
    """Normalize (Gaussian family only) and assemble the relaxation spec."""
    if args.order < 1:
        raise InputError("--order must be at least 1")
    if args.max_order is not None and args.max_order < args.order:
        raise InputError("--max-order must be >= --order")
    fam = FAMILIES[args.family](data.n)
    if args.family == "gaussian_diagonal":
        data = normalize(data, args.scaling)
        lo, hi = args.sigma_bounds
        lowers = [0.0] * data.n + [lo] * data.n
        uppers = [1.0] * data.n + [hi] * data.n
    else:
        if np.any(data.points < 0):
            raise InputError(f"the {args.family} family needs nonnegative data")
        lowers = [0.0] * data.n
        uppers = [max(1.0, float(v)) for v in data.points.max(axis=0)]
    if args.lower is not None or args.upper is not None:
        lowers = args.lower if args.lower is not None else lowers
        uppers = args.upper if args.upper is not None else uppers
    if len(lowers) != fam.p or len(uppers) != fam.p:
        raise InputError(f"parameter box needs {fam.p} bounds per corner")
    if any(lo > hi for lo, hi in zip(lowers, uppers)):
        raise InputError("parameter box has lower > upper")
    spec = RelaxationSpec(args.distance, args.order, fam, box_set(lowers, uppers), Regularizer(args.epsilon))
    return data, spec


def _to_data_units(atoms: np.ndarray, data: Dataset, family: str) -> np.ndarray:
    if family == "gaussian_diagonal" and data.maps is not None:
        return denormalize_gaussian_params(atoms, data.maps)
    return atoms


def _density_rows(atoms, weights, family: str, raw: np.ndarray, grid: int) -> list[list[float]]:
    n = raw.shape[1]
    rows = []
    for i in range(n):
        lo, hi = raw[:, i].min(), raw[:, i].max()
        pad = 0.1 * (hi - lo) if hi > lo else 1.0
        if family == "poisson":
            xs = np.arange(max(0, int(np.floor(lo))), int(np.ceil(hi)) + 1, dtype=float)
        else:
            xs = np.linspace(lo - pad if family == "gaussian_diagonal" else max(lo, 0.0), hi + pad, grid)
        dens = np.zeros_like(xs)
        for theta, w in zip(atoms, weights):
            if family == "gaussian_diagonal":
                dens += w * stats.norm.pdf(xs, theta[i], max(theta[n + i], 1e-12))
            elif family == "poisson":
                dens += w * stats.poisson.pmf(xs, max(theta[i], 1e-12))
            else:
                dens += w * stats.expon.pdf(xs, scale=max(theta[i], 1e-12))
        rows.extend([i, float(x), float(v)] for x, v in zip(xs, dens))
    return rows


def cmd_fit(args) -> int:
    raw = _load(args)
    data, spec = _prepare(args, raw)
    max_d = args.max_order or args.order
    t0 = time.perf_counter()
    mu = empirical_moments(data, 2 * max_d)
    t_moments = time.perf_counter() - t0
    result = run_algorithm1(mu, spec, tol=args.tol, max_d=max_d, seed=args.seed)
    body = result.to_dict()
    atoms = weights = None
    if result.measure is not None:
        atoms = _to_data_units(result.measure.atoms, data, args.family)
        weights = result.measure.weights
        body["measure"] = {"atoms": atoms.tolist(), "weights": weights.tolist(),
                           "normalized_atoms": result.measure.atoms.tolist(),
                           "parameters": spec.family.param_names}
    body["normalization"] = data.maps.to_dict() if data.maps is not None else None
    body["timings"] = {"moments": t_moments, "algorithm": result.seconds}
    body["N"] = data.N
    _emit(_report(args, body), args.out)
    if args.density_out and atoms is not None:
        rows = _density_rows(atoms, weights, args.family, raw.points, args.grid)
        with open(args.density_out, "w") as fh:
            fh.write("coordinate,x,density\n")
            fh.writelines(f"{int(c)},{x!r},{v!r}\n" for c, x, v in rows)
    return EXIT_OK if result.status != "failed" else EXIT_FAILURE


def mode_of_estimates(khats: list[int]) -> tuple[int | None, list[int], dict[int, int]]:
    """Most frequent estimate; ``None`` plus every tied value when there is no unique mode."""
    hist = Counter(khats)
    if not hist:
        return None, [], {}
    top = max(hist.values())
    cands = sorted(k for k, c in hist.items() if c == top)
    return (cands[0] if len(cands) == 1 else None), cands, dict(sorted(hist.items()))


def cmd_project_univariate(args) -> int:
    raw = _load(args)
    data, spec = _prepare(args, raw)
    max_d = args.max_order or args.order
    coords = []
    for i in range(data.n):
        entry = {"coordinate": i}
        try:
            sub = projected_spec(spec, i)
            res = run_algorithm1(coordinate_moments(data, i, 2 * max_d), sub, tol=args.tol, max_d=max_d,
                                 seed=args.seed)
            entry.update(khat=res.khat, status=res.status, objective=res.objective, duality_gap=res.gap)
            if res.measure is not None:
                entry["atoms"] = _to_data_units(res.measure.atoms, data.column(i), args.family).tolist()
                entry["weights"] = res.measure.weights.tolist()
        except (SolverError, ExtractionError) as exc:
            entry.update(khat=None, status="error", error=str(exc))
        if data.maps is not None:
            entry["constant_column"] = bool(data.maps.constant[i])
        coords.append(entry)
    khats = [c["khat"] for c in coords if c["khat"]]
    mode, cands, hist = mode_of_estimates(khats)
    body = {"coordinates": coords, "histogram": {str(k): v for k, v in hist.items()},
            "mode": mode, "mode_candidates": cands, "tie": len(cands) > 1}
    _emit(_report(args, body), args.out)
    return EXIT_OK if khats else EXIT_FAILURE


def _bench_config(args) -> BenchmarkConfig:
    lo, hi = args.sigma_bounds
    dists = (args.distance,) if args.distance else DISTANCES
    if args.repeats < 1 or args.mixtures < 1 or args.K < 1:
        raise InputError("--K, --mixtures and --repeats must be positive")
    return BenchmarkConfig(K=args.K, n=args.dim, separability=args.separability, eccentricity=args.eccentricity,
                           N=args.N, mixtures=args.mixtures, repeats=args.repeats, seed=args.seed,
                           order=args.order, epsilon=args.epsilon, tol=args.tol, sigma_bounds=(lo, hi),
                           distances=dists)


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    if args.data:
        data = _load(args)
        if data.labels is None:
            raise InputError("benchmarking a CSV needs --labels for misclassification rates")
        extra = {}
        if args.pca:
            data, proj = pca_reduce(data, args.pca)
            extra["pca_retained_variance"] = proj.retained
        else:
            data = normalize(data)
        cfg.n = data.n
        rows, info = run_mixture(data, cfg.K, cfg, 0, {"source": args.data, **extra})
        per_mix, summary = summarize(rows, [info], cfg)
        report = BenchmarkReport(cfg.to_dict(), rows, per_mix, summary)
    else:
        report = run_benchmark(cfg)
    _emit(_report(args, {"benchmark": report.to_dict()}), args.out)
    rows_out = args.rows_out or (str(Path(args.out).with_suffix(".csv")) if args.out else None)
    if rows_out:
        report.write_csv(rows_out)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.N < 1:
        raise InputError("--N must be positive")
    if not args.out:
        raise InputError("--out is required for gen")
    rng = np.random.default_rng(_rng_seed(args.seed, 0))
    spec = random_mixture_spec(args.K, args.dim, args.separability, args.eccentricity, rng, args.sigma,
                               args.reciprocal)
    data = sample_gmm(spec, args.N, _rng_seed(args.seed, 1))
    out = Path(args.out)
    write_csv(data, out, labels=True)
    write_spec(spec, out.with_suffix(".json"),
               {"schema": SCHEMA, "version": __version__, "seed": args.seed, "N": args.N,
                "config": resolved_config(args)})
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "project": cmd_project_univariate, "bench": cmd_bench, "gen": cmd_gen}


def _error(kind: str, exc: Exception, code: int, out: str | None) -> int:
    record = {"schema": SCHEMA, "version": __version__, "error": kind, "message": str(exc), "exit_code": code}
    text = json.dumps(record, sort_keys=True)
    sys.stderr.write(text + "\n")
    if out:
        try:
            Path(out).write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except InputError as exc:
        return _error("input", exc, EXIT_INPUT, None)
    out = getattr(args, "out", None)
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        return _error("parse", exc, EXIT_INPUT, out)
    except (InputError, GeometryError, RelaxationError, ClusterError) as exc:
        return _error("input", exc, EXIT_INPUT, out)
    except (SolverError, ExtractionError) as exc:
        return _error("solver", exc, EXIT_FAILURE, out)


if __name__ == "__main__":
    sys.exit(main())
