"""Command-line entry point wiring the library into reproducible pipelines.

Exit codes: 0 success, 1 invalid data or runtime failure, 2 usage errors.
Every artifact-producing run writes a manifest next to its primary output so
results can be traced back to inputs, flags, and seeds.  Figures are emitted
as CSV first and SVG second; a failed SVG never fails the run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__, analyze, benchmark, classifier, collector, core, gbdt, metrics, simgen


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def _write_manifest(
    primary_output, subcommand: str, args_obj: dict, inputs: List[str],
    outputs: List[str], seed: Optional[int] = None,
) -> None:
    path = Path(primary_output)
    manifest_path = path / "manifest.json" if path.is_dir() else Path(str(path) + ".manifest.json")
    manifest = {
        "subcommand": subcommand,
        "config_digest": _digest(args_obj),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "rng_seed": seed,
        "tool_version": __version__,
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _write_csv(path, rows: List[dict], fieldnames: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _render(fn, *args) -> None:
    """Best-effort SVG rendering; data files already exist by the time we draw."""
    try:
        from . import plots  # deferred: matplotlib import is slow

        getattr(plots, fn)(*args)
    except Exception as exc:  # noqa: BLE001 - figures are strictly optional
        print(f"warning: figure rendering failed: {exc}", file=sys.stderr)


def _default_jobs() -> int:
    return os.cpu_count() or 1


def _gen_channel(payload):
    config, ci = payload
    return simgen.generate_channel(config, ci)


def _pmap_channels(config: simgen.SimConfig, jobs: int):
    payloads = [(config, ci) for ci in range(config.num_channels)]
    if jobs <= 1:
        chunks = [_gen_channel(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_gen_channel, payloads))
    corpus = []
    for chunk in chunks:
        corpus.extend(chunk)
    return corpus


def _window_from_args(args) -> benchmark.WindowSpec:
    return benchmark.WindowSpec(args.half_width, benchmark.Statistic(args.stat))


def _estimator_from_args(args):
    """Build the estimator callable named by --method."""
    if args.method == "naive":
        return metrics.naive_estimate
    if args.method == "benchmark":
        window = _window_from_args(args)
        return lambda obs: benchmark.benchmark_estimate(obs, window)
    if args.method == "model":
        if not args.model:
            raise SystemExit("--model is required for method 'model'")
        model = gbdt.load_model(args.model)
        window = _window_from_args(args)
        return lambda obs: classifier.reconstruct(obs, model, window)
    raise SystemExit(f"unknown method {args.method!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.config:
        config = simgen.config_from_file(args.config)
    else:
        config = simgen.SimConfig()
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if args.channels is not None:
        overrides["num_channels"] = args.channels
    if args.videos_per_channel is not None:
        overrides["videos_per_channel"] = args.videos_per_channel
    if overrides:
        config = dataclasses.replace(config, **overrides)
    config.validate()
    corpus = _pmap_channels(config, args.jobs)
    core.write_ground_truth(args.out, corpus)
    _write_manifest(
        args.out, "simulate", dataclasses.asdict(config),
        [args.config] if args.config else [], [args.out], seed=config.rng_seed,
    )
    print(f"wrote {len(corpus)} ground-truth series to {args.out}")
    return 0


def cmd_aggregate(args) -> int:
    truths = core.read_ground_truth(args.infile)
    hourly = [core.hourly_truth(t) for t in truths]
    if args.observe:
        core.write_view_series(args.out, [core.observe(t) for t in hourly])
    else:
        core.write_ground_truth(args.out, hourly)
    _write_manifest(args.out, "aggregate", vars(args), [args.infile], [args.out])
    print(f"wrote {len(hourly)} hourly series to {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    observed = core.read_view_series(args.infile)
    estimator = _estimator_from_args(args)
    estimates = [estimator(s) for s in observed]
    core.write_estimates(args.out, estimates)
    _write_manifest(
        args.out, "reconstruct", vars(args),
        [args.infile] + ([args.model] if args.model else []), [args.out],
    )
    print(f"wrote estimates for {len(estimates)} videos to {args.out}")
    return 0


def cmd_train(args) -> int:
    truths = core.read_ground_truth(args.truth)
    params = gbdt.ModelParams(
        max_depth=args.max_depth,
        learning_rate=args.learning_rate,
        l1_regularization=args.l1,
        num_rounds=args.rounds,
    )
    model = classifier.fit_on_corpus(
        truths, params, val_fraction=args.val_fraction, seed=args.seed
    )
    gbdt.save_model(model, args.out)
    _write_manifest(args.out, "train", vars(args), [args.truth], [args.out], seed=args.seed)
    print(
        f"trained model on {len(truths)} videos; "
        f"decision threshold {model.params.decision_threshold}"
    )
    return 0


def _parse_list(text: str, cast) -> list:
    return [cast(part) for part in text.split(",") if part.strip()]


def cmd_tune(args) -> int:
    truths = core.read_ground_truth(args.truth)
    dataset = classifier.build_training_set(truths)
    grid = classifier.make_grid(
        _parse_list(args.max_depths, int),
        _parse_list(args.learning_rates, float),
        _parse_list(args.l1_values, float),
        args.rounds,
    )
    best, table = classifier.cross_validate(dataset, grid, k=args.folds)
    fieldnames = [
        "max_depth", "learning_rate", "l1_regularization", "num_rounds",
        "decision_threshold", "mean_f1",
    ]
    _write_csv(args.out, table, fieldnames)
    _render("plot_cv_table", table, str(Path(args.out).with_suffix(".svg")))
    outputs = [args.out]
    if args.model_out:
        model = classifier.train(dataset, best)
        gbdt.save_model(model, args.model_out)
        outputs.append(args.model_out)
    _write_manifest(args.out, "tune", vars(args), [args.truth], outputs)
    print(
        f"best params: depth={best.max_depth} lr={best.learning_rate} "
        f"l1={best.l1_regularization} threshold={best.decision_threshold}"
    )
    return 0


def cmd_evaluate(args) -> int:
    truths = core.read_ground_truth(args.truth)
    reports: Dict[str, metrics.ReconstructionReport] = {}
    for method in args.method:
        sub = argparse.Namespace(
            method=method, model=args.model, half_width=args.half_width, stat=args.stat
        )
        estimator = _estimator_from_args(sub)
        reports[method] = metrics.evaluate(truths, estimator)
    print(metrics.format_report_table(reports))
    if args.report:
        obj = {name: rep.to_obj() for name, rep in reports.items()}
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")
        _write_manifest(
            args.report, "evaluate", vars(args),
            [args.truth] + ([args.model] if args.model else []), [args.report],
        )
    return 0


def cmd_sweep(args) -> int:
    truths = core.read_ground_truth(args.truth)
    results = benchmark.window_sweep(
        truths,
        _parse_list(args.half_widths, int),
        [benchmark.Statistic(s) for s in _parse_list(args.stats, str)],
    )
    rows = benchmark.sweep_rows(results)
    _write_csv(
        args.out, rows,
        ["half_width_hours", "statistic", "lost_corrections", "added_corrections",
         "lost_interventions", "added_interventions", "total_corrections",
         "total_intervention_slots"],
    )
    _render("plot_sweep", rows, str(Path(args.out).with_suffix(".svg")))
    _write_manifest(args.out, "sweep", vars(args), [args.truth], [args.out])
    best = min(rows, key=lambda r: r["lost_corrections"])
    print(
        f"best window: half_width={best['half_width_hours']} "
        f"statistic={best['statistic']} lost={best['lost_corrections']:.4f}"
    )
    return 0


def _load_pairs(args):
    observed = core.read_view_series(args.observed)
    estimates = core.read_estimates(args.estimates)
    return observed, estimates


def cmd_analyze(args) -> int:
    observed, estimates = _load_pairs(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs: List[str] = []

    def emit(name: str, rows: List[dict], fieldnames: Sequence[str]) -> Path:
        path = outdir / name
        _write_csv(path, rows, fieldnames)
        outputs.append(str(path))
        return path

    kind = args.kind
    if kind == "coverage":
        stats = analyze.coverage_stats(observed, estimates)
        rows = [dataclasses.asdict(stats)]
        emit("coverage.csv", rows, list(rows[0]))
        print(
            f"channels with interventions: {stats.channel_fraction:.1%}; "
            f"videos: {stats.video_fraction:.1%}; "
            f"total corrections: {stats.total_corrections}; "
            f"corrections/views: {stats.correction_view_ratio:.2%}"
        )
    elif kind == "lorenz":
        import numpy as np

        by_id = {e.video_id: e for e in estimates}
        corr = [float(by_id[s.video_id].estimates_array().sum()) for s in observed]
        views = [
            float(by_id[s.video_id].estimates_array().sum())
            + float(np.nansum(s.deltas_array()))
            for s in observed
        ]
        curves = {}
        rows = []
        for label, values in (("corrections", corr), ("views", views)):
            curve = analyze.lorenz(values)
            curves[label] = curve.points
            rows.extend(
                {"series": label, "population_fraction": x, "mass_fraction": y}
                for x, y in curve.points
            )
            print(f"gini({label}) = {curve.gini:.4f}")
        emit("fig1d.csv", rows, ["series", "population_fraction", "mass_fraction"])
        _render("plot_lorenz", curves, str(outdir / "fig1d.svg"))
    elif kind == "rhythm":
        for name, quantity, ylabel in (
            ("fig2a.csv", "corrected_videos", "corrected videos per hour"),
            ("fig2b.csv", "corrections", "corrections per hour"),
            ("fig2c.csv", "views", "views per hour"),
        ):
            rows = analyze.hourly_rhythm(observed, estimates, quantity, args.hour_shift)
            emit(name, rows, ["hour", "q1", "median", "q3"])
            _render("plot_rhythm", rows, str(outdir / name.replace(".csv", ".svg")), ylabel)
        print(f"wrote rhythm tables to {outdir}")
    elif kind == "midnight":
        profile = analyze.midnight_profile(observed, estimates)
        rows = [
            {
                "offset_hours": o,
                "views": v,
                "corrections": c,
                "corrected_videos": cv,
            }
            for o, v, c, cv in zip(
                profile.offsets, profile.views, profile.corrections, profile.corrected_videos
            )
        ]
        emit("fig2d.csv", rows, ["offset_hours", "views", "corrections", "corrected_videos"])
        _render(
            "plot_midnight", profile.offsets, profile.views, profile.corrections,
            profile.corrected_videos, str(outdir / "fig2d.svg"),
        )
        print(f"wrote midnight profile to {outdir}")
    elif kind == "timing":
        report = analyze.corrections_vs_popularity(observed, estimates)
        rows = [
            {"view_percentile": p, "fraction_corrections_before": f}
            for p, f in zip(report.percentiles, report.fraction_before)
        ]
        emit("fig3left.csv", rows, ["view_percentile", "fraction_corrections_before"])
        _render(
            "plot_timing", report.percentiles, report.fraction_before,
            report.fraction_after_stop, str(outdir / "fig3left.svg"),
        )
        print(
            f"corrections after views stop: {report.fraction_after_stop:.1%} "
            f"({report.n_videos} videos)"
        )
    elif kind == "regression":
        totals = analyze.channel_totals(observed, estimates)
        usable = [(v, c) for _, v, c in totals if v > 0 and c > 0]
        fit = analyze.loglog_regression(usable)
        rows = [
            {"channel_id": cid, "real_views": v, "corrections": c}
            for cid, v, c in totals
        ]
        emit("fig3right.csv", rows, ["channel_id", "real_views", "corrections"])
        fit_path = outdir / "regression.json"
        with open(fit_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(
                {
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "slope_ci_95": list(fit.slope_ci_95),
                    "n_channels": fit.n,
                    "n_excluded": len(totals) - fit.n,
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        outputs.append(str(fit_path))
        _render("plot_regression", usable, fit.slope, fit.intercept, str(outdir / "fig3right.svg"))
        print(
            f"slope {fit.slope:.4f} (95% CI {fit.slope_ci_95[0]:.4f}..{fit.slope_ci_95[1]:.4f}), "
            f"intercept {fit.intercept:.4f}, R^2 {fit.r_squared:.3f}, n={fit.n}"
        )
    else:  # pragma: no cover - argparse restricts choices
        raise SystemExit(f"unknown analysis {kind!r}")

    _write_manifest(outdir, f"analyze {kind}", vars(args),
                    [args.observed, args.estimates], outputs)
    return 0


def cmd_collect(args) -> int:
    truths = core.read_ground_truth(args.truth)
    config = collector.config_from_file(args.config) if args.config else collector.CollectorConfig()
    store = collector.PollStore()
    jobs = collector.jobs_from_truths(
        truths, store, poll_interval=config.poll_interval, horizon=config.horizon
    )
    budget = collector.QuotaBudget(
        requests_per_day=config.requests_per_day,
        timezone_offset_hours=config.timezone_offset_hours,
    )
    fetch = collector.SimulatedFetcher(truths)
    start = datetime.fromisoformat(args.start) if args.start else min(
        j.next_poll_at for j in jobs
    )
    if args.loop:
        end = max(j.last_due for j in jobs)
    else:
        end = start + timedelta(hours=args.hours)
    log_path = args.out_log
    if os.path.exists(log_path):
        raise SystemExit(f"refusing to append to existing log {log_path}")
    report = collector.run_simulated(
        jobs, budget, fetch, store, start=start, end=end,
        cycle=config.poll_interval, log_path=log_path,
    )
    core.write_view_series(args.out_store, store.compact())
    report_path = Path(args.out_store).with_suffix(".starvation.json")
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_obj(), fh, indent=2)
        fh.write("\n")
    _write_manifest(
        args.out_store, "collect", vars(args),
        [args.truth] + ([args.config] if args.config else []),
        [log_path, args.out_store, str(report_path)],
    )
    total_missed = sum(report.missed_by_day.values())
    print(
        f"polled {sum(report.polls_by_day.values())} times over "
        f"{len(report.polls_by_day)} days; missed {total_missed} due polls"
    )
    return 0


_PLOT_KINDS = {
    "lorenz": "plot_lorenz",
    "rhythm": "plot_rhythm",
    "midnight": "plot_midnight",
    "timing": "plot_timing",
    "sweep": "plot_sweep",
    "cv": "plot_cv_table",
}


def cmd_plot(args) -> int:
    rows = []
    with open(args.csv, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    k: (float(v) if v not in (None, "") and _is_number(v) else v)
                    for k, v in row.items()
                }
            )
    kind = args.kind
    if kind == "auto":
        name = Path(args.csv).name
        if name.startswith("fig1d"):
            kind = "lorenz"
        elif name.startswith("fig2d"):
            kind = "midnight"
        elif name.startswith("fig2"):
            kind = "rhythm"
        elif name.startswith("fig3left"):
            kind = "timing"
        elif name.startswith("fig3right"):
            kind = "regression"
        else:
            raise SystemExit(f"cannot infer plot kind from {name!r}; pass --kind")
    out = args.out or str(Path(args.csv).with_suffix(".svg"))
    from . import plots

    if kind == "lorenz":
        curves: Dict[str, list] = {}
        for r in rows:
            curves.setdefault(str(r["series"]), []).append(
                (r["population_fraction"], r["mass_fraction"])
            )
        plots.plot_lorenz(curves, out)
    elif kind == "rhythm":
        plots.plot_rhythm(rows, out, "per-hour total")
    elif kind == "midnight":
        plots.plot_midnight(
            [r["offset_hours"] for r in rows],
            [r["views"] for r in rows],
            [r["corrections"] for r in rows],
            [r["corrected_videos"] for r in rows],
            out,
        )
    elif kind == "timing":
        plots.plot_timing(
            [r["view_percentile"] for r in rows],
            [r["fraction_corrections_before"] for r in rows],
            0.0,
            out,
        )
    elif kind == "regression":
        pairs = [(r["real_views"], r["corrections"]) for r in rows
                 if r["real_views"] > 0 and r["corrections"] > 0]
        fit = analyze.loglog_regression(pairs)
        plots.plot_regression(pairs, fit.slope, fit.intercept, out)
    elif kind == "sweep":
        plots.plot_sweep(rows, out)
    elif kind == "cv":
        plots.plot_cv_table(rows, out)
    else:
        raise SystemExit(f"unknown plot kind {kind!r}")
    print(f"wrote {out}")
    return 0


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewrecon",
        description="Reconstruct hidden view-count corrections from coarse telemetry.",
    )
    parser.add_argument("--version", action="version", version=f"viewrecon {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic ground-truth corpus")
    p.add_argument("--config", help="flat key-value simulation config file")
    p.add_argument("--seed", type=int, help="override the config RNG seed")
    p.add_argument("--channels", type=int, help="override channel count")
    p.add_argument("--videos-per-channel", type=int)
    p.add_argument("--jobs", type=int, default=_default_jobs(),
                   help="parallel workers (results identical for any value)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("aggregate", help="aggregate 5-minute ground truth to hourly")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--observe", action="store_true",
                   help="emit the observed delta series instead of ground truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("reconstruct", help="estimate corrections from observed series")
    p.add_argument("--in", dest="infile", required=True,
                   help="hourly observed series (JSONL)")
    p.add_argument("--method", choices=("naive", "benchmark", "model"), required=True)
    p.add_argument("--model", help="model JSON (method=model)")
    p.add_argument("--half-width", type=int, default=1)
    p.add_argument("--stat", choices=("minimum", "mean"), default="minimum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="train the concealed-correction classifier")
    p.add_argument("--truth", required=True)
    p.add_argument("--max-depth", type=int, default=25)
    p.add_argument("--learning-rate", type=float, default=0.2)
    p.add_argument("--l1", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=60)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=17)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="cross-validated hyperparameter grid search")
    p.add_argument("--truth", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--max-depths", default="5,15,25")
    p.add_argument("--learning-rates", default="0.05,0.2,0.5")
    p.add_argument("--l1-values", default="0,1,10")
    p.add_argument("--rounds", type=int, default=60)
    p.add_argument("--out", required=True, help="CV table CSV")
    p.add_argument("--model-out", help="also train the best model on all rows")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="score estimators against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--method", action="append", required=True,
                   choices=("naive", "benchmark", "model"),
                   help="repeatable; one column per method")
    p.add_argument("--model")
    p.add_argument("--half-width", type=int, default=1)
    p.add_argument("--stat", choices=("minimum", "mean"), default="minimum")
    p.add_argument("--report", help="write the reports as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="benchmark window calibration sweep")
    p.add_argument("--truth", required=True)
    p.add_argument("--half-widths", default="1,2,3,4,5,6")
    p.add_argument("--stats", default="minimum,mean")
    p.add_argument("--out", required=True, help="sweep CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="corpus analyses (CSV + SVG)")
    p.add_argument("kind", choices=("coverage", "lorenz", "rhythm", "midnight",
                                    "timing", "regression"))
    p.add_argument("--observed", required=True, help="hourly observed series (JSONL)")
    p.add_argument("--estimates", required=True, help="correction estimates (JSONL)")
    p.add_argument("--hour-shift", type=int, default=0,
                   help="shift the clock by whole hours for hour-of-day analyses")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("collect", help="run the simulated quota-limited collector")
    p.add_argument("--truth", required=True, help="corpus backing the simulated fetcher")
    p.add_argument("--config", help="collector key-value config")
    p.add_argument("--start", help="ISO timestamp of the first cycle")
    p.add_argument("--hours", type=int, default=72, help="cycles to run (non-loop)")
    p.add_argument("--loop", action="store_true",
                   help="keep polling until every job passes its horizon")
    p.add_argument("--out-log", required=True, help="append-only poll log")
    p.add_argument("--out-store", required=True, help="compacted observed series JSONL")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("plot", help="render an emitted CSV to SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--kind", default="auto",
                   choices=("auto", "lorenz", "rhythm", "midnight", "timing",
                            "regression", "sweep", "cv"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return int(exc.code or 0)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
