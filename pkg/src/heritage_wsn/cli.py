"""Command line: ``heritage-wsn run|report|eval|query|audit|dataset``.

Exit codes: 0 success, 1 invalid input (config, script, arguments), 2 fatal
error during execution.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .audit import audit_run
from .cloud import CloudError, CloudPipeline, QueryError, parse_where
from .config import ConfigError
from .nodes import EnvironmentExhausted
from .report import ReportError, report_cost, report_ledger, report_power
from .scenario import ScenarioSpec, run_scenario
from .sim import SimulationError
from .status import StatusServerError
from .vision import Scheme, VisionError, make_synthetic_dataset, run_evaluation, write_dataset

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FATAL = 2

log = logging.getLogger("heritage_wsn")


class InputError(Exception):
    """Bad user input discovered after argument parsing."""


def _accel(value: str):
    if value == "max":
        return value
    try:
        x = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive number or 'max'") from None
    if not x > 0:
        raise argparse.ArgumentTypeError("acceleration must be positive")
    return x


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    try:
        spec = ScenarioSpec(Path(args.config), Path(args.env), args.duration, args.seed, args.accel, Scheme[args.scheme.upper()])
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = run_scenario(spec, args.out, serve_port=args.serve, upload_failures=args.upload_failures)
    print(report.to_text(), end="")
    print(f"artifacts in {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    fn = {"power": report_power, "ledger": report_ledger, "cost": report_cost}[args.what]
    text, _ = fn(args.run)
    print(text, end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    rep = run_evaluation(args.dataset, args.scheme, args.seed, use_oracle=args.oracle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "confusion_matrix.csv").write_text(rep.confusion.to_csv(rep.classes))
    _write_json(out / "eval_report.json", rep.to_dict())
    print(f"{'classifier':<28}{'scheme':<12}{'train':>6}{'test':>6}{'accuracy':>10}{'train time (s)':>16}")
    print(f"{rep.classifier:<28}{rep.scheme.name.lower():<12}{rep.train_size:>6}{rep.test_size:>6}{rep.accuracy:>10.4f}{rep.train_time_s:>16.4f}")
    print(rep.confusion.to_csv(rep.classes), end="")
    print(rep.summary())
    return EXIT_OK


def cmd_query(args) -> int:
    store = Path(args.store)
    if not (store / "manifest.jsonl").exists() and not (store / "tables").exists():
        raise InputError(f"{store} is not a cloud store")
    pipeline = CloudPipeline(store)
    try:
        where = [parse_where(w) for w in args.where]
        rows = pipeline.query(args.table, where, order_by=args.order_by, descending=args.desc, limit=args.limit)
    except QueryError as exc:
        raise InputError(str(exc)) from exc
    if args.json:
        print(json.dumps(rows, indent=2, sort_keys=True))
        return EXIT_OK
    if rows:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"# {len(rows)} row(s)", file=sys.stderr)
    return EXIT_OK


def cmd_audit(args) -> int:
    result = audit_run(args.run)
    data = {
        "images": result.images,
        "files_scanned": result.files_scanned,
        "bytes_scanned": result.bytes_scanned,
        "fingerprint_hits": [list(h) for h in result.hits],
        "magic_hits": result.magic_hits,
        "clean": result.clean,
    }
    _write_json(Path(args.run) / "audit_report.json", data)
    print(
        f"{result.images} frames fingerprinted, {result.files_scanned} files / {result.bytes_scanned} bytes scanned: "
        f"{len(result.hits)} fingerprint hits, {len(result.magic_hits)} magic hits"
    )
    for where, image_id in result.hits:
        print(f"  {image_id} found in {where}")
    return EXIT_OK if result.clean else EXIT_FATAL


def cmd_dataset(args) -> int:
    ds = make_synthetic_dataset(args.n, Scheme[args.scheme.upper()], args.seed)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds)} {args.scheme} frames to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heritage-wsn", description="Desk-scale heritage-site sensor network emulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario end to end")
    r.add_argument("--config", required=True, help="wsn_config.json")
    r.add_argument("--env", required=True, help="environment script CSV")
    r.add_argument("--duration", required=True, type=int, help="simulated seconds")
    r.add_argument("--seed", required=True, type=int)
    r.add_argument("--accel", type=_accel, default="max", help="simulated seconds per wall second, or 'max'")
    r.add_argument("--serve", type=int, metavar="PORT", help="expose /status and /ledger during the run")
    r.add_argument("--scheme", choices=["binary", "multimodal"], default="binary")
    r.add_argument("--out", default="run", help="run directory (default: ./run)")
    r.add_argument("--upload-failures", type=int, default=0, metavar="N", help="fail the first N upload attempts of every batch")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="rebuild a report from a run directory")
    rp.add_argument("what", choices=["power", "ledger", "cost"])
    rp.add_argument("--run", required=True)
    rp.set_defaults(func=cmd_report)

    e = sub.add_parser("eval", help="evaluate a classifier on a labelled dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--scheme", required=True, choices=["binary", "multimodal"])
    e.add_argument("--seed", required=True, type=int)
    e.add_argument("--oracle", action="store_true", help="use the ground-truth oracle instead of the baseline")
    e.add_argument("--out", default="eval", help="where confusion_matrix.csv and eval_report.json go")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("query", help="query the record store of a run")
    q.add_argument("table", choices=["readings", "events", "image_labels"])
    q.add_argument("--where", action="append", default=[], metavar="FIELD=VALUE")
    q.add_argument("--limit", type=int)
    q.add_argument("--order-by")
    q.add_argument("--desc", action="store_true")
    q.add_argument("--json", action="store_true", help="print rows as JSON")
    q.add_argument("--store", required=True, help="cloud_store directory of a run")
    q.set_defaults(func=cmd_query)

    a = sub.add_parser("audit", help="scan a run directory for image payload bytes")
    a.add_argument("--run", required=True)
    a.set_defaults(func=cmd_audit)

    d = sub.add_parser("dataset", help="write a synthetic labelled dataset")
    d.add_argument("--out", required=True)
    d.add_argument("--n", type=int, default=750)
    d.add_argument("--scheme", choices=["binary", "multimodal"], default="binary")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_dataset)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SimulationError, CloudError, StatusServerError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (InputError, ConfigError, VisionError, ReportError, EnvironmentExhausted, FileNotFoundError, ValueError) as exc:
        # ValueError here comes from parsing user files (environment script, dataset labels)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
