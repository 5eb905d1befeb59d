"""Command-line entry point: ``generate``, ``evaluate`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import INTERVENTION_THRESHOLD, Cohort, FeatureSet, load_cohort, save_cohort
from .errors import DataError, DiaryForecastError, InvalidConfig, UsageError
from .eval import LEARNERS, MODEL_KINDS, EvalResult, HyperGrid, Task, evaluate_models, lag_sweep
from .features import MAX_LAG
from .preprocess import FilterRule, label_mask
from .synth import SynthConfig, generate_cohort, missing_day_fraction

log = logging.getLogger("diary_forecast")

EXIT_OK = 0


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this tool reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def _sweep_range(text: str) -> list[int]:
    try:
        lo, _, hi = text.partition(":")
        ks = list(range(int(lo), int(hi or lo) + 1))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not ks or ks[0] < 1 or ks[-1] > MAX_LAG:
        raise argparse.ArgumentTypeError(f"lag range must lie within 1:{MAX_LAG}")
    return ks


def _add_synth_args(p: argparse.ArgumentParser) -> None:
    d = SynthConfig()
    p.add_argument("--subjects", type=int, default=d.n_subjects)
    p.add_argument("--days", type=int, default=d.n_days)
    p.add_argument("--missing-rate", type=float, default=d.missing_rate)
    p.add_argument("--ar", type=float, default=d.ar_coefficient, help="AR(1) coefficient of the latent state")
    p.add_argument("--noise-sd", type=float, default=d.noise_sd)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diary-forecast", description="PHQ-2 prediction from daily diary and ESM data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic cohort CSV")
    _add_synth_args(gen)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="check a cohort CSV and summarize it")
    val.add_argument("--data", required=True)
    val.add_argument("--filter-min-days", type=int, default=5)
    val.add_argument("--filter-window", type=int, default=7)
    val.add_argument("--json", action="store_true", help="print the summary as JSON")

    ev = sub.add_parser("evaluate", help="leave-one-subject-out evaluation")
    src = ev.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="cohort CSV")
    src.add_argument("--synthetic", action="store_true", help="generate the cohort in memory")
    _add_synth_args(ev)
    ev.add_argument("--synth-seed", type=int, default=0, help="generator seed with --synthetic")
    ev.add_argument("--features", default="combined", help="esm | diary | combined")
    ev.add_argument("--task", choices=("sameday", "forecast"), default="sameday")
    lag = ev.add_mutually_exclusive_group()
    lag.add_argument("--k", type=int, help="number of past days for --task forecast")
    lag.add_argument("--sweep", type=_sweep_range, help="lag range LO:HI for --task forecast")
    ev.add_argument("--model", choices=MODEL_KINDS + ("all",), default="all")
    ev.add_argument("--grid", help="JSON file overriding hyperparameter grids")
    ev.add_argument("--filter-min-days", type=int, default=5)
    ev.add_argument("--filter-window", type=int, default=7)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--alert-threshold", type=float, default=INTERVENTION_THRESHOLD)
    ev.add_argument("--out", required=True, help="results JSON")
    ev.add_argument("--figure", help="figure CSV for --sweep (default: <out>.figure.csv)")
    return parser


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


class _Outputs:
    """Stage output files next to their targets; publish all or none."""

    def __init__(self):
        self._staged: list[tuple[Path, Path]] = []

    def stage(self, path: str | Path) -> Path:
        """Temporary path that becomes ``path`` on commit."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        os.close(fd)
        # mkstemp creates 0600 files; give the result the usual umask-based mode
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        self._staged.append((Path(tmp), path))
        return Path(tmp)

    def write(self, path: str | Path, text: str) -> None:
        self.stage(path).write_text(text, encoding="utf-8", newline="")

    def commit(self) -> None:
        for tmp, path in self._staged:
            os.replace(tmp, path)
        self._staged.clear()

    def discard(self) -> None:
        for tmp, _ in self._staged:
            tmp.unlink(missing_ok=True)
        self._staged.clear()


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_cohort(path: str) -> Cohort:
    try:
        return load_cohort(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# commands


def _synth_config(args, seed: int) -> SynthConfig:
    cfg = SynthConfig(n_subjects=args.subjects, n_days=args.days, missing_rate=args.missing_rate,
                      ar_coefficient=args.ar, noise_sd=args.noise_sd, seed=seed)
    cfg.validate()
    return cfg


def cmd_generate(args, out: _Outputs) -> int:
    cohort = generate_cohort(_synth_config(args, args.seed))
    save_cohort(cohort, out.stage(args.out))
    log.info("wrote %d subjects, %d records to %s", len(cohort), cohort.n_records, args.out)
    return EXIT_OK


def cohort_summary(cohort: Cohort, rule: FilterRule) -> dict:
    retained = {}
    for fs in FeatureSet:
        retained[fs.value] = sum(int(label_mask(s.view(fs), rule).sum()) for s in cohort.subjects)
    labels = np.concatenate([s.phq2[s.labeled] for s in cohort.subjects]) if len(cohort) else np.empty(0)
    return {
        "subjects": len(cohort),
        "records": cohort.n_records,
        "labels": int(len(labels)),
        "label_mean": float(labels.mean()) if len(labels) else None,
        "missing_day_fraction": missing_day_fraction(cohort),
        "retained_labels": retained,
        "columns": list(cohort.columns),
    }


def cmd_validate(args, out: _Outputs) -> int:
    cohort = _read_cohort(args.data)
    rule = FilterRule(args.filter_window, args.filter_min_days)
    summary = cohort_summary(cohort, rule)
    if args.json:
        sys.stdout.write(dump_json(summary))
    else:
        print(f"{args.data}: OK")
        for key in ("subjects", "records", "labels", "label_mean", "missing_day_fraction"):
            print(f"  {key}: {summary[key]}")
        for fs, n in summary["retained_labels"].items():
            print(f"  retained labels ({fs}): {n}")
    return EXIT_OK


def _load_grid(path: str | None) -> HyperGrid:
    if path is None:
        return HyperGrid()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read grid file {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"grid file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidConfig("grid file must hold a JSON object keyed by model")
    return HyperGrid.from_dict(raw)


def _alerts(res: EvalResult, threshold: float) -> list[dict]:
    return [{"subject": s, "date": d, "y_pred": yp} for s, d, _, yp in res.predictions if yp >= threshold]


def _result_block(res: EvalResult, threshold: float) -> dict:
    block = res.to_dict()
    if res.task.kind == "forecast":
        alerts = _alerts(res, threshold)
        block["intervention_alerts"] = {"threshold": threshold, "count": len(alerts), "alerts": alerts}
    return block


def figure_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "pooled_mae", "mae_stddev_over_subjects"])
    for k, pooled, sd in rows:
        w.writerow([k, repr(float(pooled)), repr(float(sd))])
    return buf.getvalue()


def cmd_evaluate(args, out: _Outputs) -> int:
    if args.task == "sameday" and (args.k is not None or args.sweep is not None):
        raise UsageError("--k and --sweep only apply to --task forecast")
    if args.task == "forecast" and args.k is None and args.sweep is None:
        raise UsageError("--task forecast needs --k or --sweep")
    if args.sweep is not None and args.model == "all":
        raise UsageError("--sweep evaluates one model at a time; pick it with --model")
    if args.figure and args.sweep is None:
        raise UsageError("--figure only applies to --sweep")
    fs = FeatureSet.parse(args.features)
    rule = FilterRule(args.filter_window, args.filter_min_days)
    grid = _load_grid(args.grid)

    if args.data is not None:
        cohort = _read_cohort(args.data)
        source = {"path": args.data, "sha256": _file_digest(args.data)}
    else:
        cfg = _synth_config(args, args.synth_seed)
        cohort = generate_cohort(cfg)
        source = {"synthetic": dataclasses.asdict(cfg)}

    config = {
        "data": source,
        "feature_set": fs.value,
        "task": args.task,
        "k": args.k,
        "sweep": args.sweep,
        "model": args.model,
        "grid": grid.to_dict(),
        "filter": {"window_days": rule.window_days, "min_present_days": rule.min_present_days},
        "seed": args.seed,
        "alert_threshold": args.alert_threshold,
    }
    report = {"tool": "diary-forecast", "version": __version__, "seed": args.seed, "config": config}

    if args.sweep is not None:
        sweep = lag_sweep(cohort, fs, args.model, args.sweep, grid, rule, args.seed)
        ref = args.sweep[0]
        report["sweep"] = {
            "model": sweep.model,
            "rows": [
                {"k": r.k, "pooled_mae": r.pooled_mae, "mae_stddev_over_subjects": r.mae_stddev_over_subjects,
                 "per_subject_mae": r.per_subject_mae}
                for r in sweep.rows
            ],
            "best_k": sweep.best_k,
            "ttests": [
                {"k_a": ref, "k_b": k, "significant_at_0.05": t.p_value < 0.05, **t.to_dict()}
                for k, t in sweep.ttests.items()
            ],
            "results": {str(k): _result_block(r, args.alert_threshold) for k, r in sweep.results.items()},
        }
        out.write(args.out, dump_json(report))
        out.write(args.figure or f"{args.out}.figure.csv", figure_csv(sweep.figure_rows()))
        for r in sweep.rows:
            log.info("k=%d pooled MAE %.4f", r.k, r.pooled_mae)
        return EXIT_OK

    task = Task(args.task, args.k)
    kinds = list(LEARNERS) + ["baseline"] if args.model == "all" else [args.model]
    results = evaluate_models(cohort, fs, task, kinds, grid, rule, args.seed)
    report["models"] = {k: _result_block(r, args.alert_threshold) for k, r in results.items()}
    out.write(args.out, dump_json(report))
    for k, r in results.items():
        log.info("%s pooled MAE %.4f", k, r.pooled_mae)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "validate": cmd_validate, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = _Outputs()
    try:
        code = COMMANDS[args.command](args, out)
        out.commit()
        return code
    except DiaryForecastError as exc:
        out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return UsageError.exit_code
    except BaseException:
        out.discard()
        raise


if __name__ == "__main__":
    sys.exit(main())
