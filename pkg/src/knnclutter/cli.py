"""Command-line interface: ``knnclutter <command> ...``.

Exit codes: 0 success, 2 usage, 3 unreadable input (parse or config), 4
numerical or data degeneracy (too few points, EM collapse, ...), 5 I/O.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .bench import BENCH_COLUMNS, rates, run_benchmark
from .errors import (
    ConfigError,
    DegenerateComponent,
    DegenerateDistances,
    InvalidK,
    InvalidParams,
    KSetTooLarge,
    LengthMismatch,
    MissingTruth,
    NonFinite,
    PatternParseError,
    PatternTooSmall,
    TooFewPoints,
)
from .io import (
    atomic_write,
    curve_csv_text,
    file_digest,
    read_json,
    read_labels_csv,
    read_pattern_csv,
    read_truth_csv,
    table_csv_text,
    write_json,
    write_labels_csv,
    write_pattern_csv,
)
from .iterative import AUTO, run_iterative
from .kselect import clip_k_set, default_k_set, entropy_curve, fit_segmented, select_k
from .mixture import EMConfig, em_fit
from .pattern import knn_distances
from .simulate import SCENARIOS, make_scenario, scenario_spec

log = logging.getLogger("knnclutter")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

_EXIT_FOR = (
    ((PatternParseError, ConfigError, json.JSONDecodeError), EXIT_PARSE),
    ((InvalidK,), EXIT_USAGE),
    ((TooFewPoints, KSetTooLarge, PatternTooSmall, DegenerateDistances,
      DegenerateComponent, NonFinite, LengthMismatch, MissingTruth, InvalidParams), EXIT_NUMERIC),
    ((OSError,), EXIT_IO),
    ((ValueError,), EXIT_USAGE),
)


def _k_set_from(k_min: int, k_max: int, k_list: Optional[Sequence[int]] = None):
    if k_list:
        return tuple(sorted(set(int(k) for k in k_list)))
    if k_min < 1 or k_max < k_min:
        raise InvalidK(f"need 1 <= k-min <= k-max, got {k_min}..{k_max}")
    return tuple(range(k_min, k_max + 1))


def _clipped(k_set, n: int):
    """K values usable on ``n`` points (``K <= n - 2``), warning when some are dropped."""
    kept, clipped = clip_k_set(k_set, n - 1)
    if clipped:
        if not kept:
            raise TooFewPoints(f"no K in {list(k_set)} is usable with {n} points")
        log.warning("K set clipped to %d..%d for %d points", kept[0], kept[-1], n)
    return kept


def _fit_summary(fit) -> dict:
    if fit is None:
        return {"lambda1": None, "lambda2": None, "p": None,
                "converged": False, "em_iterations": None, "degenerate": True}
    return {"lambda1": fit.lambda1, "lambda2": fit.lambda2, "p": fit.p,
            "converged": bool(fit.converged), "em_iterations": int(fit.n_iter),
            "degenerate": False}


def _metrics(pred, truth) -> Optional[dict]:
    if truth is None:
        return None
    r = rates(pred, truth)
    return {"tpr": r.tpr, "fpr": r.fpr, "acc": r.acc, "tp": r.tp, "fp": r.fp, "tn": r.tn, "fn": r.fn}


def _report(command, in_path, pattern, k_mode, k_set, em_config) -> dict:
    return {
        "command": command,
        "version": __version__,
        "input": {"file": Path(in_path).name, "digest": file_digest(in_path), "n": pattern.n},
        "k_mode": k_mode,
        "k_set": list(k_set),
        "em": {"tol": em_config.tol, "max_iter": em_config.max_iter},
        "wall_time_s": None,
    }


def cmd_simulate(scenario, seed: int, out_path, plot: bool = False) -> Path:
    """Simulate a scenario and write it as a pattern CSV with truth labels."""
    pattern = make_scenario(scenario_spec(scenario, seed))
    write_pattern_csv(pattern, out_path)
    if plot:
        from .figures import figure_path, save_classification

        save_classification(figure_path(out_path), pattern, pattern.truth,
                            f"scenario {scenario}, seed {seed} (truth)")
    return Path(out_path)


def cmd_classify(in_path, k=AUTO, out_labels_path=None, report_path=None,
                 k_set=None, em_config: EMConfig = EMConfig(), plot: bool = False,
                 record_time: bool = False) -> dict:
    """Single-pass classification at a fixed or automatically selected K."""
    started = time.perf_counter()
    pattern = read_pattern_csv(in_path)
    k_set = default_k_set() if k_set is None else tuple(k_set)
    seg = curve = None
    if k == AUTO:
        k_set = _clipped(k_set, pattern.n)
        k_used, curve, seg = select_k(pattern, k_set, em_config)
        fit = curve.fits[k_used]
        delta = curve.posterior(k_used)
    else:
        k_used = int(k)
        fit = em_fit(knn_distances(pattern, k_used), tol=em_config.tol, max_iter=em_config.max_iter)
        delta = np.asarray(fit.delta)
    is_feature = delta >= 0.5

    report = _report("classify", in_path, pattern, k if k == AUTO else int(k),
                     k_set if k == AUTO else [k_used], em_config)
    record = {"iteration": 1, "n": pattern.n, "k_used": k_used,
              "s_j": None if curve is None else curve.total,
              "n_feature": int(np.count_nonzero(is_feature))}
    record.update(_fit_summary(fit))
    report["iterations"] = [record]
    report["j_hat"] = 1
    if seg is not None:
        report["k_selection"] = {"psi": seg.psi, "alpha": seg.alpha, "beta": seg.beta,
                                 "rss": seg.rss, "k_hat": seg.k_hat, "flat": seg.flat,
                                 "entropy": curve.s.tolist(),
                                 "degenerate_k": [kk for kk, bad in zip(curve.k_set, curve.degenerate) if bad]}
    report["metrics"] = _metrics(is_feature, pattern.truth)
    if record_time:
        report["wall_time_s"] = round(time.perf_counter() - started, 6)

    if out_labels_path is not None:
        write_labels_csv(out_labels_path, pattern, is_feature, delta)
    if report_path is not None:
        write_json(report_path, report)
    if plot and out_labels_path is not None:
        from .figures import figure_path, save_classification, save_entropy_curve

        save_classification(figure_path(out_labels_path), pattern, is_feature, f"K = {k_used}")
        if curve is not None:
            save_entropy_curve(figure_path(out_labels_path, "_entropy"), curve, seg)
    return report


def iteration_paths(prefix, n_records: int):
    prefix = str(prefix)
    labels = [Path(f"{prefix}iter{j}.csv") for j in range(1, n_records + 1)]
    return labels, Path(f"{prefix}final.csv"), Path(f"{prefix}report.json")


def cmd_iterate(in_path, k_mode=AUTO, max_iter: int = 10, out_prefix="knnclutter_",
                k_set=None, min_points=None, em_config: EMConfig = EMConfig(),
                plot: bool = False, record_time: bool = False) -> dict:
    """Iterated removal with the overall-entropy stopping rule.

    Writes ``<prefix>iter<j>.csv`` per computed iteration (rows of that
    iteration's input, ``index`` pointing at the original row),
    ``<prefix>final.csv`` with the composed labels for every input row, and
    ``<prefix>report.json``.
    """
    started = time.perf_counter()
    pattern = read_pattern_csv(in_path)
    k_set = default_k_set() if k_set is None else tuple(k_set)
    k_set = _clipped(k_set, pattern.n)
    trace = run_iterative(pattern, k_mode, k_set, max_iter, min_points, em_config)

    report = _report("iterate", in_path, pattern, k_mode, k_set, em_config)
    report["max_iter"] = max_iter
    report["min_points"] = max(k_set) + 2 if min_points is None else min_points
    iters = []
    alive = np.arange(pattern.n)
    per_iter_index = []
    for rec in trace.records:
        per_iter_index.append(alive)
        entry = {"iteration": rec.index, "n": rec.n, "k_used": rec.k_used,
                 "s_j": rec.s_j, "n_feature": rec.n_feature}
        entry.update(_fit_summary(rec.fit))
        iters.append(entry)
        alive = alive[rec.labels.is_feature]
    report["iterations"] = iters
    report["s_sequence"] = trace.s_sequence
    report["j_hat"] = trace.j_hat
    report["criterion_triggered"] = trace.criterion_triggered
    report["final_n_feature"] = trace.final_labels.n_feature
    report["metrics"] = _metrics(trace.final_labels.is_feature, pattern.truth)
    if record_time:
        report["wall_time_s"] = round(time.perf_counter() - started, 6)

    label_paths, final_path, report_path = iteration_paths(out_prefix, len(trace.records))
    for rec, idx, path in zip(trace.records, per_iter_index, label_paths):
        write_labels_csv(path, rec.pattern, rec.labels.is_feature, rec.delta, index=idx)
    write_labels_csv(final_path, pattern, trace.final_labels.is_feature, None)
    write_json(report_path, report)
    if plot:
        from .figures import figure_path, save_iterations, save_overall_entropy

        save_iterations(figure_path(final_path), trace)
        save_overall_entropy(figure_path(report_path, "_entropy"), trace.s_sequence, trace.j_hat)
    return report


def cmd_entropy_curve(in_path, k_set=None, out_csv=None, em_config: EMConfig = EMConfig(),
                      plot: bool = False):
    """Entropy for each K as a two-column CSV (k, entropy)."""
    pattern = read_pattern_csv(in_path)
    k_set = _clipped(default_k_set() if k_set is None else tuple(k_set), pattern.n)
    curve = entropy_curve(pattern, k_set, em_config)
    if out_csv is not None:
        atomic_write(out_csv, curve_csv_text(curve.k_set, curve.s))
        if plot:
            from .figures import figure_path, save_entropy_curve

            seg = fit_segmented(curve) if len(curve) >= 4 else None
            save_entropy_curve(figure_path(out_csv), curve, seg)
    return curve


def cmd_metrics(pred_path, truth_path, out_csv=None):
    """TPR, FPR and accuracy of a labels file against a truth file."""
    pred = read_labels_csv(pred_path)
    truth = read_truth_csv(truth_path)
    if truth is None:
        raise MissingTruth(f"{truth_path} carries no labels")
    if len(pred) != len(truth):
        raise LengthMismatch(f"{pred_path} has {len(pred)} rows, {truth_path} has {len(truth)}")
    r = rates(pred, truth)
    row = {"tpr": r.tpr, "fpr": r.fpr, "acc": r.acc, "tp": r.tp, "fp": r.fp, "tn": r.tn, "fn": r.fn, "n": r.n}
    if out_csv is not None:
        atomic_write(out_csv, table_csv_text(list(row), [row]))
    return r


BENCH_KEYS = {"scenarios", "k_modes", "iterations", "replicates", "seed", "k_max"}


def _read_bench_json(path) -> dict:
    cfg = read_json(path)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(cfg) - BENCH_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    return cfg


def load_bench_config(path) -> dict:
    """Read and validate a benchmark configuration before any simulation."""
    return validate_bench_config(_read_bench_json(path), str(path))


def validate_bench_config(cfg: dict, where: str = "config") -> dict:
    out = {}
    scen = cfg.get("scenarios", [1, 2, 3, 4])
    if not isinstance(scen, list) or not scen:
        raise ConfigError(f"{where}: 'scenarios' must be a non-empty list")
    for s in scen:
        key = int(s) if isinstance(s, str) and s.isdigit() else s
        if isinstance(key, bool) or key not in SCENARIOS:
            raise ConfigError(f"{where}: 'scenarios' has unknown scenario {s!r}")
    out["scenarios"] = [int(s) if isinstance(s, str) and s.isdigit() else s for s in scen]

    modes = cfg.get("k_modes", [10, 20, 30, AUTO])
    if not isinstance(modes, list) or not modes:
        raise ConfigError(f"{where}: 'k_modes' must be a non-empty list")
    for m in modes:
        if m != AUTO and (isinstance(m, bool) or not isinstance(m, int) or m < 1):
            raise ConfigError(f"{where}: 'k_modes' entry {m!r} is neither a positive integer nor 'auto'")
    out["k_modes"] = list(modes)

    its = cfg.get("iterations", [1, 2, 3])
    if (not isinstance(its, list) or not its
            or any(isinstance(i, bool) or not isinstance(i, int) or i < 1 for i in its)):
        raise ConfigError(f"{where}: 'iterations' must be a list of positive integers")
    out["iterations"] = list(its)

    reps = cfg.get("replicates", 200)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError(f"{where}: 'replicates' must be a positive integer")
    out["replicates"] = reps

    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{where}: 'seed' must be a non-negative integer")
    out["seed"] = seed

    k_max = cfg.get("k_max", 35)
    if isinstance(k_max, bool) or not isinstance(k_max, int) or k_max < 4:
        raise ConfigError(f"{where}: 'k_max' must be an integer >= 4")
    out["k_max"] = k_max
    return out


def cmd_bench(config, out_csv=None, em_config: EMConfig = EMConfig(), plot: bool = False) -> List[dict]:
    """Monte-Carlo table of mean rates; ``config`` is a path or a dict."""
    cfg = load_bench_config(config) if not isinstance(config, dict) else validate_bench_config(config)
    rows = run_benchmark(
        cfg["scenarios"], cfg["k_modes"], cfg["iterations"], cfg["replicates"], cfg["seed"],
        k_set=default_k_set(k_max=cfg["k_max"]), em_config=em_config,
        progress=lambda sc, r: log.debug("scenario %s replicate %d done", sc, r),
    )
    if out_csv is not None:
        atomic_write(out_csv, table_csv_text(BENCH_COLUMNS, rows))
        if plot:
            from .figures import figure_path, save_benchmark

            save_benchmark(figure_path(out_csv), rows)
    return rows


def _int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_k_args(p, allow_auto=True):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=int, help="fixed number of neighbours K")
    if allow_auto:
        g.add_argument("--auto-k", action="store_true", help="select K automatically (default)")
    p.add_argument("--k-min", type=int, default=1, help="smallest candidate K (default 1)")
    p.add_argument("--k-max", type=int, default=35, help="largest candidate K (default 35)")


def _add_em_args(p):
    p.add_argument("--tol", type=float, default=1e-8, help="EM relative tolerance")
    p.add_argument("--em-max-iter", type=int, default=1000, help="EM step limit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knnclutter",
        description="Feature/clutter separation by Kth nearest-neighbour mixtures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a benchmark scenario to CSV")
    p.add_argument("--scenario", required=True, help=f"one of {list(SCENARIOS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true", help="also write a PNG next to the CSV")

    p = sub.add_parser("classify", help="single-pass classification")
    p.add_argument("--in", dest="in_path", required=True)
    _add_k_args(p)
    p.add_argument("--out", required=True, help="labels CSV")
    p.add_argument("--report", help="JSON report path (default: <out stem>.json)")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--record-time", action="store_true", help="store wall time in the report")
    _add_em_args(p)

    p = sub.add_parser("iterate", help="iterated removal with the entropy stopping rule")
    p.add_argument("--in", dest="in_path", required=True)
    _add_k_args(p)
    p.add_argument("--max-iter", type=int, default=10)
    p.add_argument("--min-points", type=int)
    p.add_argument("--out", required=True, help="output prefix, e.g. results/run_")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--record-time", action="store_true")
    _add_em_args(p)

    p = sub.add_parser("entropy-curve", help="entropy for each K as CSV")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--k-set", type=_int_list, help="explicit K values, e.g. 2,4,8")
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=35)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    _add_em_args(p)

    p = sub.add_parser("metrics", help="TPR/FPR/ACC of labels against truth")
    p.add_argument("--pred", required=True, help="labels CSV (is_feature column)")
    p.add_argument("--truth", required=True, help="pattern CSV with a label column")
    p.add_argument("--out", help="write the rates as CSV")

    p = sub.add_parser("bench", help="Monte-Carlo benchmark table")
    p.add_argument("--config", help="JSON config: scenarios, k_modes, iterations, replicates, seed")
    p.add_argument("--scenario", action="append", help="override scenarios (repeatable)")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    _add_em_args(p)
    return parser


def _dispatch(args) -> int:
    em = EMConfig(args.tol, args.em_max_iter) if hasattr(args, "tol") else EMConfig()
    if args.command == "simulate":
        cmd_simulate(args.scenario, args.seed, args.out, args.plot)
    elif args.command == "classify":
        k = AUTO if args.k is None else args.k
        report = args.report or str(Path(args.out).with_suffix(".json"))
        rep = cmd_classify(args.in_path, k, args.out, report, _k_set_from(args.k_min, args.k_max),
                           em, args.plot, args.record_time)
        print(f"K={rep['iterations'][0]['k_used']} features={rep['iterations'][0]['n_feature']}/{rep['input']['n']}")
    elif args.command == "iterate":
        k = AUTO if args.k is None else args.k
        rep = cmd_iterate(args.in_path, k, args.max_iter, args.out,
                          _k_set_from(args.k_min, args.k_max), args.min_points, em,
                          args.plot, args.record_time)
        s = ", ".join(f"{v:.6g}" for v in rep["s_sequence"])
        print(f"j_hat={rep['j_hat']} S=[{s}] features={rep['final_n_feature']}/{rep['input']['n']}")
    elif args.command == "entropy-curve":
        cmd_entropy_curve(args.in_path, _k_set_from(args.k_min, args.k_max, args.k_set), args.out, em, args.plot)
    elif args.command == "metrics":
        r = cmd_metrics(args.pred, args.truth, args.out)
        print(f"tpr={r.tpr:.6g} fpr={r.fpr:.6g} acc={r.acc:.6g}")
    elif args.command == "bench":
        cfg = _read_bench_json(args.config) if args.config else {}
        if args.scenario:
            cfg["scenarios"] = args.scenario
        if args.replicates is not None:
            cfg["replicates"] = args.replicates
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg = validate_bench_config(cfg, args.config or "command line")
        rows = cmd_bench(cfg, args.out, em, args.plot)
        print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _dispatch(args)
    except Exception as exc:
        for types, code in _EXIT_FOR:
            if isinstance(exc, types):
                print(f"knnclutter {args.command}: error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
