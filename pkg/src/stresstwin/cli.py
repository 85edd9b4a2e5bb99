"""Command-line entry point.

Subcommands mirror the pipeline stages: ingest, baseline, features, label,
train, eval, explain, simulate, report, plus ``run`` which chains them all
(optionally over a generated synthetic dataset, so nothing depends on
having the real recordings on disk).

Exit codes: 0 success, 1 internal error, 2 usage error, 3 data error.
"""

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import ENV_DATA_DIR, ENV_OUT_DIR, RunConfig, load_config
from .errors import StressTwinError
from .forest import (
    Dataset,
    ForestParams,
    evaluate,
    load_forest,
    record_level_split,
    save_forest,
    stratified_split,
    train_forest,
)
from .hrv import FEATURE_COLUMNS
from .ingest import load_record
from .pipeline import (
    FEATURE_CSV_COLUMNS,
    LABELED_CSV_COLUMNS,
    REPORT_CSV_COLUMNS,
    baseline_from_clean,
    baseline_from_json,
    baseline_to_json,
    build_report_rows,
    discover_records,
    extract_record_rows,
    label_rows,
    load_series,
    read_rows_csv,
    rows_to_dataset,
    split_from_json,
    split_to_json,
    svg_bar_chart,
    write_confusion_csv,
    write_rows_csv,
)
from .shapley import shap_summary
from .simulator import SimulatorConfig, export_trace, run_simulation
from .synth import SYNTHETIC_CLEAN_RECORD, make_synthetic_nst

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data-dir", help=f"record directory (or ${ENV_DATA_DIR})")
    parser.add_argument("--out-dir", help=f"artifact directory (or ${ENV_OUT_DIR})")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--clean-record", help="name of the clean reference record")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stresstwin",
        description="ECG stress scoring and environmental intervention simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate records and write a summary")
    _add_common(p)

    p = sub.add_parser("baseline", help="compute the clean-record baseline profile")
    _add_common(p)
    p.add_argument("--out", help="baseline JSON path")

    p = sub.add_parser("features", help="extract windowed features to CSV")
    _add_common(p)
    p.add_argument("--out", help="features CSV path")

    p = sub.add_parser("label", help="append stress scores and levels to features")
    _add_common(p)
    p.add_argument("--features", help="features CSV path")
    p.add_argument("--baseline", help="baseline JSON path")
    p.add_argument("--out", help="labeled CSV path")

    p = sub.add_parser("train", help="train the forest on labeled windows")
    _add_common(p)
    p.add_argument("--labeled", help="labeled CSV path")
    p.add_argument("--model", help="model JSON output path")
    p.add_argument("--split", help="split JSON output path")

    p = sub.add_parser("eval", help="confusion matrix and metrics on the test split")
    _add_common(p)
    p.add_argument("--labeled", help="labeled CSV path")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--split", help="split JSON path")

    p = sub.add_parser("explain", help="per-feature attribution summary and beeswarm CSV")
    _add_common(p)
    p.add_argument("--labeled", help="labeled CSV path")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--split", help="split JSON path")
    p.add_argument("--svg", action="store_true", help="also emit an SVG bar chart")

    p = sub.add_parser("simulate", help="run the closed-loop simulator")
    _add_common(p)
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--baseline", help="baseline JSON path")
    p.add_argument("--out", help="trace JSONL path")
    p.add_argument("--records", nargs="*", help="noisy record names (default: all)")
    p.add_argument("--max-duration-s", type=float, help="cap per-record simulated time")
    p.add_argument(
        "--scripted",
        help='scripted levels as JSON, e.g. "[[0,1],[100,4]]" (bypasses the model)',
    )

    p = sub.add_parser("report", help="per-record time series of levels and errors")
    _add_common(p)
    p.add_argument("--labeled", help="labeled CSV path")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--out", help="report CSV path")

    p = sub.add_parser("run", help="full pipeline: ingest through report")
    _add_common(p)
    p.add_argument("--synthetic", action="store_true", help="generate and use synthetic records")
    p.add_argument("--svg", action="store_true", help="emit the SVG chart too")

    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {
        "data_dir": getattr(args, "data_dir", None),
        "output_dir": getattr(args, "out_dir", None),
        "seed": getattr(args, "seed", None),
        "baseline_record": getattr(args, "clean_record", None),
    }
    return load_config(getattr(args, "config", None), overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _forest_params(cfg: RunConfig) -> ForestParams:
    return ForestParams(
        n_trees=cfg.n_trees,
        mtry=cfg.mtry,
        min_samples_leaf=cfg.min_samples_leaf,
        max_depth=cfg.max_depth,
    )


# --- subcommand bodies ----------------------------------------------------------


def _cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    clean_path, noisy = discover_records(cfg.data_dir, cfg.baseline_record)
    summary = []
    for name, path in [(cfg.baseline_record, clean_path)] + noisy:
        rec = load_record(path)
        summary.append(
            {
                "record": rec.record_name,
                "fs": rec.fs,
                "n_channels": len(rec.channels),
                "n_samples": int(rec.channel(0).size),
                "duration_s": rec.duration_s,
                "snr_db": rec.snr_db,
            }
        )
    target = out / "ingest_summary.json"
    target.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"ingest: {len(summary)} records ok -> {target}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    clean, _ = load_series(cfg.data_dir, cfg.baseline_record)
    baseline = baseline_from_clean(clean, cfg)
    target = Path(args.out) if args.out else out / "baseline.json"
    baseline_to_json(baseline, target)
    print(
        f"baseline[{baseline.source_record}]: sdnn={baseline.sdnn:.1f} bpm={baseline.bpm:.1f} "
        f"qtc={baseline.qtc:.1f} lfhf={baseline.lfhf:.2f} -> {target}"
    )
    return EXIT_OK


def _cmd_features(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    clean, noisy = load_series(cfg.data_dir, cfg.baseline_record)
    baseline = baseline_from_clean(clean, cfg)
    rows = []
    for rec in noisy:
        rows.extend(extract_record_rows(rec, clean, baseline, cfg))
    target = Path(args.out) if args.out else out / "features.csv"
    write_rows_csv(rows, FEATURE_CSV_COLUMNS, target)
    n_valid = sum(1 for r in rows if r["valid"])
    print(f"features: {len(rows)} windows ({n_valid} valid) -> {target}")
    return EXIT_OK


def _cmd_label(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    features_path = Path(args.features) if args.features else out / "features.csv"
    baseline_path = Path(args.baseline) if args.baseline else out / "baseline.json"
    rows = read_rows_csv(features_path)
    baseline = baseline_from_json(baseline_path)
    labeled = label_rows(rows, baseline, cfg.eps)
    target = Path(args.out) if args.out else out / "labeled.csv"
    write_rows_csv(labeled, LABELED_CSV_COLUMNS, target)
    print(f"label: {len(labeled)} rows -> {target}")
    return EXIT_OK


def _split(dataset: Dataset, cfg: RunConfig):
    if cfg.split_unit == "record":
        return record_level_split(dataset, cfg.train_fraction, cfg.seed)
    return stratified_split(dataset, cfg.train_fraction, cfg.seed)


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    labeled_path = Path(args.labeled) if args.labeled else out / "labeled.csv"
    dataset = rows_to_dataset(read_rows_csv(labeled_path))
    train_ds, test_ds = _split(dataset, cfg)
    forest = train_forest(train_ds, _forest_params(cfg), cfg.seed)
    model_path = Path(args.model) if args.model else out / "model.json"
    split_path = Path(args.split) if args.split else out / "split.json"
    save_forest(forest, model_path)
    split_to_json(train_ds, test_ds, split_path)
    print(
        f"train: {len(train_ds)} train / {len(test_ds)} test windows, "
        f"{cfg.n_trees} trees -> {model_path}"
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    labeled_path = Path(args.labeled) if args.labeled else out / "labeled.csv"
    model_path = Path(args.model) if args.model else out / "model.json"
    split_path = Path(args.split) if args.split else out / "split.json"
    dataset = rows_to_dataset(read_rows_csv(labeled_path))
    forest = load_forest(model_path)
    _, test_ds = split_from_json(dataset, split_path)
    report = evaluate(forest, test_ds)
    (out / "eval_report.json").write_text(
        json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n"
    )
    write_confusion_csv(report.confusion, out / "confusion_matrix.csv")
    print(f"eval: accuracy={report.accuracy:.4f} on {len(test_ds)} held-out windows")
    return EXIT_OK


def _cmd_explain(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    labeled_path = Path(args.labeled) if args.labeled else out / "labeled.csv"
    model_path = Path(args.model) if args.model else out / "model.json"
    split_path = Path(args.split) if args.split else out / "split.json"
    dataset = rows_to_dataset(read_rows_csv(labeled_path))
    forest = load_forest(model_path)
    if cfg.shap_on != "all" and split_path.exists():
        train_ds, test_ds = split_from_json(dataset, split_path)
        dataset = train_ds if cfg.shap_on == "train" else test_ds
    summary, beeswarm = shap_summary(forest, dataset, list(FEATURE_COLUMNS))
    summary_cols = ("feature", "total_mean_abs_phi") + tuple(f"class_{c}" for c in range(1, 6))
    write_rows_csv(summary, summary_cols, out / "shap_summary.csv")
    bee_cols = ("feature", "sample_index", "phi", "feature_value", "predicted_class")
    write_rows_csv(beeswarm, bee_cols, out / "shap_beeswarm.csv")
    if args.svg:
        svg_bar_chart(summary, out / "shap_summary.svg")
    top = ", ".join(r["feature"] for r in summary[:2])
    print(f"explain: {len(dataset)} samples, top features: {top}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    clean, noisy = load_series(cfg.data_dir, cfg.baseline_record)
    if args.records:
        wanted = set(args.records)
        noisy = [r for r in noisy if r.record_name in wanted]
    scripted = None
    model = None
    baseline = None
    if args.scripted:
        scripted = tuple((float(t), int(lvl)) for t, lvl in json.loads(args.scripted))
    else:
        model_path = Path(args.model) if args.model else out / "model.json"
        baseline_path = Path(args.baseline) if args.baseline else out / "baseline.json"
        model = load_forest(model_path)
        baseline = baseline_from_json(baseline_path)
    sim_cfg = SimulatorConfig(
        window_s=cfg.window_s,
        stride_s=cfg.stride_s,
        tick_ms=cfg.tick_ms,
        dwell_windows=cfg.dwell_windows,
        chunk_s=cfg.chunk_s,
        context_s=cfg.context_s,
        eps=cfg.eps,
        scripted_levels=scripted,
        max_duration_s=args.max_duration_s or cfg.sim_max_duration_s,
        latency_table=cfg.sim_latency_table,
    )
    trace = run_simulation(noisy, clean, model, baseline, sim_cfg, cfg.seed)
    target = Path(args.out) if args.out else out / "trace.jsonl"
    export_trace(trace, target)
    n_cmds = len(trace.of_kind("CommandIssued"))
    print(f"simulate: {len(trace)} events, {n_cmds} commands -> {target}")
    return EXIT_OK


def _cmd_report(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    labeled_path = Path(args.labeled) if args.labeled else out / "labeled.csv"
    model_path = Path(args.model) if args.model else out / "model.json"
    rows = read_rows_csv(labeled_path)
    forest = load_forest(model_path)
    report_rows = build_report_rows(rows, forest)
    target = Path(args.out) if args.out else out / "report.csv"
    write_rows_csv(report_rows, REPORT_CSV_COLUMNS, target)
    n_err = sum(1 for r in report_rows if r["error"])
    print(f"report: {len(report_rows)} windows, {n_err} mismatches -> {target}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    if args.synthetic:
        data_dir = out / "synthetic_records"
        make_synthetic_nst(data_dir, seed=cfg.seed)
        args.data_dir = str(data_dir)
        args.clean_record = SYNTHETIC_CLEAN_RECORD
        if cfg.sim_max_duration_s is None:
            cfg.sim_max_duration_s = 120.0

    ns = argparse.Namespace(**vars(args))
    ns.out = None
    ns.features = None
    ns.baseline = None
    ns.labeled = None
    ns.model = None
    ns.split = None
    ns.records = None
    ns.scripted = None
    ns.max_duration_s = cfg.sim_max_duration_s

    for step in (
        _cmd_ingest,
        _cmd_baseline,
        _cmd_features,
        _cmd_label,
        _cmd_train,
        _cmd_eval,
        _cmd_explain,
        _cmd_report,
        _cmd_simulate,
    ):
        code = step(ns)
        if code != EXIT_OK:
            return code
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "baseline": _cmd_baseline,
    "features": _cmd_features,
    "label": _cmd_label,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StressTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
