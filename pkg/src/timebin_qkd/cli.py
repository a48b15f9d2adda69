"""Command-line front end.

    timebin-qkd sweep  --distances 0,25,50,75,100,125,150 --gates 100000000
    timebin-qkd fringe --temp-range 25:25.4133:41 --gates 750000000
    timebin-qkd bb84   --gates 1000000

Every run writes plot-ready data plus ``manifest_<command>.json`` into the
output directory (``--out``, else ``$TIMEBIN_QKD_OUT``, else the current
directory).  Exit codes: 0 success, 1 usage or configuration error,
2 internal error.  The manifest timestamp honours ``SOURCE_DATE_EPOCH`` so
repeated runs can be byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import traceback
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ScenarioConfig, config_to_dict, load_config, parse_config
from .errors import ConfigError, FringeFitError, InvalidParameterError
from .experiments import (estimate_visibility, run_bb84_session, run_distance_sweep,
                          run_fringe_scan)
from .optics import fringe_period_C
from .protocol import qber_from_visibility
from .stats import wilson_interval

OUT_ENV = "TIMEBIN_QKD_OUT"
SWEEP_COLUMNS = ("length_km", "p_analytic", "p_mc", "ci_low", "ci_high", "dark_floor")
FRINGE_COLUMNS = ("temperature_C", "phase_rad", "counts_A", "counts_B", "gates")
KEY_SAMPLE_BITS = 64

log = logging.getLogger("timebin_qkd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _temp_range(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, steps = text.split(":")
        return float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEPS, got {text!r}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scenario file (empty = reference setup)")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--gates", type=_positive_int, help="gates per point (overrides the config)")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--workers", type=_positive_int, default=1)
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of the curve data file")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="timebin-qkd", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sweep = sub.add_parser("sweep", parents=[common], help="counting probability vs distance")
    sweep.add_argument("--distances", type=_float_list,
                       default=[0.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0])
    fringe = sub.add_parser("fringe", parents=[common], help="temperature fringe scan")
    fringe.add_argument("--temp-range", type=_temp_range,
                        help="LO:HI:STEPS in deg C (default: two fringe periods, 41 steps)")
    sub.add_parser("bb84", parents=[common], help="BB84 session with sifting and QBER")
    return parser


def _resolve_config(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else parse_config("")
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.gates is not None:
        changes["n_gates"] = args.gates
    return config.replace(**changes) if changes else config


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _num(x):
    """JSON-safe float: NaN becomes null."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_table(out: Path, stem: str, fmt: str, columns, rows, manifest: str) -> Path:
    if fmt == "csv":
        path = out / f"{stem}.csv"
        _write_csv(path, columns, rows)
    else:
        path = out / f"{stem}.json"
        _write_json(path, {"schema_version": SCHEMA_VERSION, "manifest": manifest,
                           "columns": list(columns), "rows": [list(r) for r in rows]})
    return path


def _write_manifest(out: Path, command: str, config: ScenarioConfig, files, extra=None) -> Path:
    path = out / f"manifest_{command}.json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "tool": "timebin-qkd",
        "version": __version__,
        "command": command,
        "timestamp": _timestamp(),
        "master_seed": config.master_seed,
        "config": config_to_dict(config),
        "outputs": [p.name for p in files],
    }
    if extra:
        payload.update(extra)
    _write_json(path, payload)
    return path


def cmd_sweep(args, config: ScenarioConfig, out: Path) -> None:
    rows = run_distance_sweep(config, args.distances, workers=args.workers)
    manifest = "manifest_sweep.json"
    table = [tuple(getattr(r, c) for c in SWEEP_COLUMNS) for r in rows]
    path = _write_table(out, "sweep", args.format, SWEEP_COLUMNS, table, manifest)
    _write_manifest(out, "sweep", config, [path], {"distances_km": list(args.distances)})
    log.info("wrote %s", path)


def _fit_payload(fit, estimate) -> dict:
    payload = {
        "status": fit.status,
        "visibility": _num(estimate.value) if estimate else None,
        "visibility_err": _num(fit.visibility_err),
        "visibility_clamped": estimate.clamped if estimate else None,
        "raw_visibility": _num(fit.raw_visibility),
        "offset": _num(fit.offset),
        "offset_err": _num(fit.offset_err),
        "amplitude": _num(fit.amplitude),
        "amplitude_err": _num(fit.amplitude_err),
        "phase_rad": _num(fit.phase),
        "phase_err": _num(fit.phase_err),
        "reference_temperature_C": _num(fit.x_ref),
        "period_C": _num(fit.period),
        "period_err": _num(fit.period_err),
    }
    if estimate:
        payload["qber_from_visibility"] = qber_from_visibility(estimate.value)
    return payload


def cmd_fringe(args, config: ScenarioConfig, out: Path) -> None:
    if args.temp_range is None:
        t0 = config.bob.temperature_C
        lo, hi, steps = t0, t0 + 2 * fringe_period_C(config.bob), 41
    else:
        lo, hi, steps = args.temp_range
    if steps < 2:
        raise UsageError("--temp-range needs at least 2 steps")
    temps = np.linspace(lo, hi, steps)
    result = run_fringe_scan(config, temps, workers=args.workers)
    try:
        est_a, est_b = estimate_visibility(result)
    except FringeFitError:
        est_a = est_b = None
    manifest = "manifest_fringe.json"
    rows = [(p.temperature_C, p.phase_rad, p.counts_a, p.counts_b, p.gates)
            for p in result.points]
    data = _write_table(out, "fringe", args.format, FRINGE_COLUMNS, rows, manifest)
    fit_path = out / "fringe_fit.json"
    _write_json(fit_path, {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "status": "ok" if result.fit_a.ok and result.fit_b.ok else "fit_failed",
        "nominal_period_C": result.nominal_period_C,
        "apd_A": _fit_payload(result.fit_a, est_a),
        "apd_B": _fit_payload(result.fit_b, est_b),
    })
    _write_manifest(out, "fringe", config, [data, fit_path],
                    {"temperature_range_C": [lo, hi, steps]})


def cmd_bb84(args, config: ScenarioConfig, out: Path) -> None:
    session = run_bb84_session(config, workers=args.workers)
    report = session.report
    sift_ci = (wilson_interval(report.sifted_count, session.n_resolved)
               if session.n_resolved else (None, None))
    path = out / "bb84.json"
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "manifest": "manifest_bb84.json",
        "n_gates": session.n_gates,
        "n_clicks": session.n_clicks,
        "n_resolved": session.n_resolved,
        "raw_rate_per_gate": report.raw_rate_per_gate,
        "analytic_raw_rate": session.analytic_raw_rate,
        "sift_fraction": report.sift_fraction,
        "sift_fraction_ci": list(sift_ci),
        "sifted_count": report.sifted_count,
        "error_count": report.error_count,
        "qber_status": "ok" if report.defined else "undefined",
        "qber": report.qber,
        "qber_ci": [report.ci_low, report.ci_high],
        "analytic_qber": session.analytic_qber,
        "analytic_visibility": {"A": session.analytic_visibility[0],
                                "B": session.analytic_visibility[1]},
        "qber_from_visibility": session.qber_from_visibility,
        "key_length": int(session.alice_key.size),
        "key_sample_alice": "".join(map(str, session.alice_key[:KEY_SAMPLE_BITS])),
        "key_sample_bob": "".join(map(str, session.bob_key[:KEY_SAMPLE_BITS])),
    })
    _write_manifest(out, "bb84", config, [path])


COMMANDS = {"sweep": cmd_sweep, "fringe": cmd_fringe, "bb84": cmd_bb84}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _resolve_config(args)
        out = args.out or Path(os.environ.get(OUT_ENV, "."))
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
            COMMANDS[args.command](args, config, out)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, InvalidParameterError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
