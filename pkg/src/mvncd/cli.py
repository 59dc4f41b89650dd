"""Command line interface.

Subcommands: ``run`` fits one configuration and writes a report, ``sweep``
covers a lambda1 x lambda2 grid, ``synth`` writes a synthetic dataset,
``eval`` scores an external assignment file. Exit codes: 0 on success, 2 on
validation or I/O problems, 3 when a fit violates an internal invariant.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

import mvncd
from mvncd import oracle
from mvncd.dataset import (
    DatasetError,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    write_dataset,
)
from mvncd.metrics import clustering_accuracy, nmi, purity
from mvncd import solver
from mvncd.solver import SolverConfig, fit, is_monotone

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVARIANT = 3
DEFAULT_GRID = tuple(10.0**p for p in range(6))


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvncd",
        description="Multi-view novel class discovery solver",
    )
    parser.add_argument("--version", action="version", version=mvncd.__version__)
    sub = parser.add_subparsers(dest="command", metavar="{run,sweep,synth,eval}")

    run = sub.add_parser("run", help="fit one configuration and write a report")
    _add_data_flags(run)
    _add_solver_flags(run)
    run.add_argument("--lambda1", type=float, default=1.0)
    run.add_argument("--lambda2", type=float, default=1.0)
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="grid search over lambda1 and lambda2")
    _add_data_flags(sweep)
    _add_solver_flags(sweep)
    sweep.add_argument("--lambda1-grid", type=_parse_floats, default=DEFAULT_GRID)
    sweep.add_argument("--lambda2-grid", type=_parse_floats, default=DEFAULT_GRID)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.set_defaults(func=cmd_sweep)

    synth = sub.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--views", type=int, default=2)
    synth.add_argument("--classes", type=int, default=4)
    synth.add_argument("--per-class", type=int, default=30)
    synth.add_argument("--dims", type=_parse_ints, default=(8,))
    synth.add_argument("--separation", type=float, default=6.0)
    synth.add_argument("--noise", type=_parse_floats, default=(1.0,))
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output directory")
    synth.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="score an external assignment file")
    _add_data_flags(ev)
    ev.add_argument("--assignment", required=True,
                    help="CSV with one cluster id per unlabeled sample")
    ev.set_defaults(func=cmd_eval)

    verify = sub.add_parser("verify")
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(func=cmd_verify)
    return parser


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data", required=True,
                     help="dataset directory or manifest path")
    sub.add_argument("--known-classes", type=_parse_ints, default=None,
                     help="override the default first-half known split, e.g. 0,1,2")


def _add_solver_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--max-iter", type=int, default=100)
    sub.add_argument("--tol", type=float, default=1e-7)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--normalize", choices=("zscore", "l2", "none"),
                     default="zscore")
    sub.add_argument("--init-y", choices=("kmeans", "random"), default="kmeans")
    sub.add_argument("--ablate-alpha", action="store_true")
    sub.add_argument("--ablate-labeled", action="store_true")
    sub.add_argument("--hard-restrict-novel", action="store_true")


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok != "")


def _parse_floats(text) -> tuple[float, ...]:
    if isinstance(text, tuple):
        return text
    return tuple(float(tok) for tok in str(text).split(",") if tok != "")


def _config_from_args(args, lambda1: float, lambda2: float) -> SolverConfig:
    return SolverConfig(
        lambda1=lambda1,
        lambda2=lambda2,
        max_iter=args.max_iter,
        tol=args.tol,
        seed=args.seed,
        init_y_novel=args.init_y,
        normalize=args.normalize,
        ablate_alpha=args.ablate_alpha,
        ablate_labeled=args.ablate_labeled,
        hard_restrict_novel=args.hard_restrict_novel,
    )


def _execute(ds, cfg) -> tuple[dict, "solver.FitResult"]:
    result = fit(ds, cfg)
    truth = ds.labels[ds.unlabeled_indices]
    pred = result.novel_assignment
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": mvncd.__version__,
        "seed": cfg.seed,
        "dataset": {
            "num_samples": ds.num_samples,
            "num_labeled": ds.num_labeled,
            "num_unlabeled": ds.num_unlabeled,
            "num_views": ds.num_views,
            "view_dims": list(ds.view_dims),
            "num_known_classes": ds.num_known,
            "num_novel_classes": ds.num_novel,
        },
        "config": dataclasses.asdict(cfg),
        "metrics": {
            "acc": clustering_accuracy(pred, truth),
            "nmi": nmi(pred, truth),
            "purity": purity(pred, truth),
        },
        "alpha": [float(a) for a in result.alpha_trace[-1]],
        "objective_trace": [float(x) for x in result.objective_trace],
        "iterations": result.iterations,
        "converged": result.converged,
        "wall_time": result.wall_time,
    }
    return report, result


def cmd_run(args) -> int:
    ds = load_dataset(args.data, known_classes=args.known_classes)
    cfg = _config_from_args(args, args.lambda1, args.lambda2)
    report, result = _execute(ds, cfg)
    if not _descent_ok(result):
        print("error: objective trace is not monotonically non-increasing; "
              "refusing to write a report", file=sys.stderr)
        return EXIT_INVARIANT
    out = Path(args.out)
    _write_atomic(out / "report.json", json.dumps(report, indent=2) + "\n")
    _write_atomic(out / "trace.csv", _trace_csv(result))
    _write_atomic(out / "assignment.csv",
                  "".join(f"{int(c)}\n" for c in result.novel_assignment))
    m = report["metrics"]
    print(f"acc={m['acc']:.4f} nmi={m['nmi']:.4f} purity={m['purity']:.4f} "
          f"iterations={report['iterations']} converged={report['converged']}")
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


def _descent_ok(result) -> bool:
    if not is_monotone(result.objective_trace):
        return False
    if result.block_objective_trace is not None:
        return is_monotone(result.block_objective_trace)
    return True


def _trace_csv(result) -> str:
    num_views = result.alpha_trace[0].size
    header = "iter,objective," + ",".join(
        f"alpha_{v}" for v in range(num_views))
    lines = [header]
    for i, (obj, alpha) in enumerate(zip(result.objective_trace,
                                         result.alpha_trace)):
        cells = [str(i), f"{obj:.12g}"] + [f"{a:.12g}" for a in alpha]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    ds = load_dataset(args.data, known_classes=args.known_classes)
    out = Path(args.out)
    cells = [(l1, l2) for l1 in args.lambda1_grid for l2 in args.lambda2_grid]

    def one_cell(cell):
        l1, l2 = cell
        try:
            cfg = _config_from_args(args, l1, l2)
            report, result = _execute(ds, cfg)
            if not _descent_ok(result):
                return cell, None, "error: non-monotone objective trace"
            return cell, report, "ok"
        except Exception as exc:  # record the failure, keep sweeping
            return cell, None, f"error: {exc}"

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(one_cell, cells))
    else:
        outcomes = [one_cell(cell) for cell in cells]

    rows = ["lambda1,lambda2,acc,nmi,purity,status"]
    for (l1, l2), report, status in outcomes:
        if report is not None:
            name = f"run_l1_{l1:g}_l2_{l2:g}.json"
            _write_atomic(out / name, json.dumps(report, indent=2) + "\n")
            m = report["metrics"]
            rows.append(f"{l1:g},{l2:g},{m['acc']:.12g},{m['nmi']:.12g},"
                        f"{m['purity']:.12g},{status}")
        else:
            rows.append(f"{l1:g},{l2:g},,,,\"{status}\"")
            print(f"cell lambda1={l1:g} lambda2={l2:g}: {status}",
                  file=sys.stderr)
    _write_atomic(out / "summary.csv", "\n".join(rows) + "\n")
    print(f"sweep of {len(cells)} cells written to {out / 'summary.csv'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        views=args.views,
        classes=args.classes,
        per_class=args.per_class,
        dims=args.dims if len(args.dims) > 1 else int(args.dims[0]),
        separation=args.separation,
        noise=args.noise if len(args.noise) > 1 else float(args.noise[0]),
        seed=args.seed,
    )
    ds = generate_synthetic(spec)
    manifest = write_dataset(ds, args.out)
    print(f"dataset written to {manifest}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_dataset(args.data, known_classes=args.known_classes)
    path = Path(args.assignment)
    if not path.is_file():
        raise DatasetError(f"assignment file not found: {path}")
    try:
        values = np.loadtxt(path, ndmin=1, dtype=float)
    except ValueError as exc:
        raise DatasetError(f"could not parse assignment file: {exc}") from exc
    if values.ndim != 1 or not np.all(values == np.floor(values)):
        raise DatasetError("assignment file must hold one integer per line")
    pred = values.astype(int)
    if pred.size != ds.num_unlabeled:
        raise DatasetError(
            f"assignment has {pred.size} entries, dataset has "
            f"{ds.num_unlabeled} unlabeled samples"
        )
    truth = ds.labels[ds.unlabeled_indices]
    scores = {
        "acc": clustering_accuracy(pred, truth),
        "nmi": nmi(pred, truth),
        "purity": purity(pred, truth),
    }
    print(json.dumps(scores))
    return EXIT_OK


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# verification suite (unadvertised subcommand)

def cmd_verify(args) -> int:
    checks = run_verification(seed=args.seed)
    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        print(f"{'ok' if ok else 'FAIL'}: {name}")
    if failed:
        print(f"{len(failed)} of {len(checks)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def run_verification(seed: int = 0) -> list[tuple[str, bool]]:
    """Certify the solver's fast paths against the oracle module."""
    rng = np.random.default_rng(seed)
    checks = [
        ("labeled assignment updates match brute force (200 columns)",
         _check_label_updates(rng, 200, labeled=True)),
        ("unlabeled assignment updates match brute force (200 columns)",
         _check_label_updates(rng, 200, labeled=False)),
        ("assignment block matches exhaustive enumeration (40 instances)",
         _check_exhaustive(rng, 40)),
        ("view-weight update matches numeric simplex minimizer (100 draws)",
         _check_view_weights(rng, 100)),
        ("basis update passes the Procrustes bound (50 targets)",
         _check_procrustes(rng, 50)),
        ("fits descend monotonically per block (3 instances)",
         _check_descent(rng, 3)),
    ]
    return checks


def _random_tiny(rng, num_views=None, k=None, n=None):
    num_views = num_views or int(rng.integers(1, 4))
    k = k or int(rng.integers(2, 4))
    n = n or int(rng.integers(2, 9))
    d = int(rng.integers(k, k + 4))
    xs = [rng.standard_normal((d, n)) for _ in range(num_views)]
    bases = [np.linalg.qr(rng.standard_normal((d, k)))[0]
             for _ in range(num_views)]
    centroids = [rng.standard_normal((k, k)) for _ in range(num_views)]
    weights = rng.dirichlet(np.ones(num_views))
    state = solver.ModelState(bases=bases, centroids=centroids,
                              y=rng.integers(0, k, size=n),
                              view_weights=weights)
    return state, xs


def _check_label_updates(rng, total: int, labeled: bool) -> bool:
    done = 0
    while done < total:
        state, xs = _random_tiny(rng)
        k = state.num_classes
        n = state.y.size
        lam = float(rng.choice([0.0, 0.3, 1.0, 10.0]))
        counts = rng.integers(0, 5, size=k).astype(float)
        buffers = solver.make_buffers(state, xs, counts)
        cols = np.arange(n)
        if labeled:
            truth = rng.integers(0, k, size=n)
            solver.update_labels_known(state, buffers, cols, truth, lam)
        else:
            solver.update_labels_novel(state, buffers, cols, lam)
        for i in range(n):
            sample = [x[:, i] for x in xs]
            if labeled:
                expect = oracle.brute_force_label(
                    sample, buffers.maps, state.view_weights,
                    lambda1=lam, truth_row=int(truth[i]))
            else:
                expect = oracle.brute_force_label(
                    sample, buffers.maps, state.view_weights,
                    lambda2=lam, label_counts=counts)
            if state.y[i] != expect:
                return False
            done += 1
            if done >= total:
                return True
    return True


def _check_exhaustive(rng, total: int) -> bool:
    for _ in range(total):
        state, xs = _random_tiny(rng, k=int(rng.integers(2, 4)),
                                 n=int(rng.integers(2, 6)))
        k = state.num_classes
        counts = rng.integers(0, 4, size=k).astype(float)
        lam = float(rng.choice([0.0, 0.5, 2.0]))
        buffers = solver.make_buffers(state, xs, counts)
        cols = np.arange(state.y.size)
        solver.update_labels_novel(state, buffers, cols, lam)
        best, _ = oracle.exhaustive_novel_fit(
            xs, buffers.maps, state.view_weights, lam, counts)
        fast_score = _novel_block_score(state.y, xs, buffers.maps,
                                        state.view_weights, lam, counts)
        best_score = _novel_block_score(best, xs, buffers.maps,
                                        state.view_weights, lam, counts)
        if fast_score > best_score + 1e-9 * (abs(best_score) + 1.0):
            return False
    return True


def _novel_block_score(y, xs, maps, weights, lam, counts) -> float:
    total = 0.0
    for v, x in enumerate(xs):
        diff = x - maps[v][:, y]
        total += float(weights[v]) ** 2 * float(np.sum(diff * diff))
    n_l = float(counts.sum())
    total -= lam * 2.0 * (n_l * y.size - float(counts[y].sum()))
    return total


def _check_view_weights(rng, total: int) -> bool:
    for _ in range(total):
        num_views = int(rng.integers(1, 6))
        residuals = rng.uniform(0.05, 20.0, size=num_views)
        state, _ = _random_tiny(rng, num_views=num_views)
        solver.update_view_weights(state, residuals)
        numeric = oracle.simplex_minimize_numeric(residuals)
        if np.max(np.abs(state.view_weights - numeric)) > 1e-6:
            return False
    return True


def _check_procrustes(rng, total: int) -> bool:
    for i in range(total):
        state, xs = _random_tiny(rng)
        solver.update_basis(state, xs)
        ymat = state.y_matrix()
        for v, x in enumerate(xs):
            target = x @ ymat.T @ state.centroids[v].T
            if not oracle.procrustes_bound_check(target, state.bases[v],
                                                 draws=100, seed=i):
                return False
    return True


def _check_descent(rng, total: int) -> bool:
    for i in range(total):
        spec = SyntheticSpec(views=2, classes=4, per_class=12,
                             dims=6, separation=2.5, noise=1.0,
                             seed=int(rng.integers(2**32)))
        ds = generate_synthetic(spec)
        cfg = SolverConfig(lambda1=1.0, lambda2=1.0, max_iter=30,
                           seed=i, track_block_objective=True)
        result = fit(ds, cfg)
        if not (is_monotone(result.objective_trace)
                and is_monotone(result.block_objective_trace)):
            return False
    return True


if __name__ == "__main__":
    sys.exit(main())
