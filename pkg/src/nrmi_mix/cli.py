"""Command-line interface: ``nrmi-mix {fit,calibrate,simulate,evaluate}``.

Exit codes: 0 success, 2 invalid configuration or flags, 3 unreadable or
out-of-support data, 4 numerical failure, 5 calibration target out of range.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .benchmark import StudySpec, run_study
from .calibration import CalibrationTarget, calibrate
from .config import load_json, parse_run_config, parse_study_config
from .diagnostics import FitResult, write_csv
from .exceptions import (CalibrationRangeError, ConfigError, DataError, InvalidParametersError,
                         NrmiError, SamplerError)
from .gibbs import run_chain

logger = logging.getLogger("nrmi_mix")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_CALIBRATION = 0, 2, 3, 4, 5
_PROCESS_PARAM = {"dirichlet": "a", "nig": "kappa", "nstable": "gamma"}


def read_data(path) -> np.ndarray:
    """Read one numeric value per row, allowing a single header line.

    Raises
    ------
    DataError
        With ``row`` set to the 0-based index of the first bad data row.
    """
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    values = []
    start = 0
    if lines:
        try:
            float(lines[0].split(",")[0])
        except ValueError:
            start = 1
    for row, line in enumerate(lines[start:]):
        s = line.strip()
        if not s:
            continue
        if "," in s:
            raise DataError(f"row {row} (line {row + start + 1}): expected one value, got {s!r}",
                            row=row)
        try:
            v = float(s)
        except ValueError:
            raise DataError(f"row {row} (line {row + start + 1}): not a number: {s!r}",
                            row=row) from None
        if not np.isfinite(v):
            raise DataError(f"row {row} (line {row + start + 1}): non-finite value", row=row)
        values.append(v)
    if not values:
        raise DataError(f"no data rows in {path}")
    return np.asarray(values)


def _emit(payload: dict, as_json: bool, lines: List[str]) -> None:
    if as_json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print("\n".join(lines))


def cmd_fit(args) -> int:
    cfg = parse_run_config(load_json(args.config)).with_seed(args.seed)
    x = read_data(args.data)
    x = cfg.model.check_data(x)
    out = Path(args.out or cfg.output.directory or "nrmi-fit")
    result = run_chain(x, cfg.model, cfg.chain)
    result.config = cfg.raw
    result.save(out, save_paths=args.save_paths, level=cfg.output.level)
    s = result.summary(cfg.output.level)
    _emit({"n": s["n"], "rn_mode": s["rn_mode"], "alcpo": s["alcpo"], "mlcpo": s["mlcpo"],
           "ess_total_jump": s["ess_total_jump"], "output": str(out)}, args.json,
          [f"n = {s['n']}, kept iterations = {s['kept_iterations']}",
           f"posterior mode of R_n = {s['rn_mode']}",
           f"ALCPO = {s['alcpo']:.4f}, MLCPO = {s['mlcpo']:.4f}",
           f"ESS (total jump mass) = {s['ess_total_jump']:.1f}",
           f"artifacts written to {out}"])
    return EXIT_OK


def cmd_calibrate(args) -> int:
    free = _PROCESS_PARAM[args.process]
    target = CalibrationTarget(args.n, args.target_c, free, args.replicates)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = calibrate(target, seed=args.seed if args.seed is not None else 0,
                        threads=args.threads)
    msgs = [str(w.message) for w in caught]
    for m in msgs:
        logger.warning(m)
    _emit({"process": args.process, "parameter": res.parameter, "value": res.value,
           "expected_clusters": res.expected, "se": res.se, "at_boundary": res.at_boundary,
           "warnings": msgs}, args.json,
          [f"{res.parameter} = {res.value:.6g}",
           f"E(R_n) = {res.expected:.4f} (se {res.se:.4f})"]
          + [f"warning: {m}" for m in msgs])
    return EXIT_OK


def cmd_simulate(args) -> int:
    path = Path(args.study)
    sc = parse_study_config(load_json(path), path.parent)
    seed = args.seed if args.seed is not None else sc.seed
    spec = StudySpec(sc.truth, sc.replicates, sc.n, sc.run.model, sc.run.chain, sc.grid_points)
    report = run_study(spec, seed=seed, threads=args.threads)
    report["config"] = sc.raw
    out = Path(args.out or sc.run.output.directory or "nrmi-study")
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    reps = report["replicates"]
    nan = float("nan")
    write_csv(out / "replicates.csv", ["replicate", "mise_model", "mise_kde", "rmise"],
              [np.array([r["replicate"] for r in reps]),
               np.array([nan if r["mise_model"] is None else r["mise_model"] for r in reps]),
               np.array([r["mise_kde"] for r in reps]),
               np.array([nan if r["rmise"] is None else r["rmise"] for r in reps])])
    agg = report["aggregate"]
    rm = agg["rmise"]
    _emit({"aggregate": agg, "output": str(out)}, args.json,
          [f"replicates: {agg['n_ok']} ok, {agg['n_failed']} failed",
           f"RMISE = {rm:.4f}" if rm is not None else "RMISE unavailable",
           f"report written to {out / 'study.json'}"])
    return EXIT_OK if agg["n_ok"] >= 1 else EXIT_NUMERICAL


def cmd_evaluate(args) -> int:
    try:
        result = FitResult.load(args.directory)
    except FileNotFoundError as exc:
        raise DataError(f"missing artifact (was the fit run with --save-paths?): {exc}") from exc
    except ValueError as exc:
        raise DataError(f"unreadable artifact in {args.directory}: {exc}") from exc
    out = Path(args.out) if args.out else Path(args.directory)
    result.save(out, save_paths=False, level=args.level)
    s = result.summary(args.level)
    _emit(s, args.json, [f"posterior mode of R_n = {s['rn_mode']}",
                         f"ALCPO = {s['alcpo']:.4f}, MLCPO = {s['mlcpo']:.4f}",
                         f"ESS (total jump mass) = {s['ess_total_jump']:.1f}"])
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nrmi-mix", description="NGG mixture density estimation and clustering")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root random seed")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", parents=[common], help="run the Gibbs sampler on a data file")
    f.add_argument("data", help="CSV with one value per row and an optional header")
    f.add_argument("config", help="JSON run configuration")
    f.add_argument("--out", help="output directory")
    f.add_argument("--save-paths", action="store_true",
                   help="also write density paths and chain traces")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("calibrate", parents=[common],
                       help="match the prior expected number of clusters")
    c.add_argument("--process", choices=sorted(_PROCESS_PARAM), required=True)
    c.add_argument("--n", type=_positive_int, required=True)
    c.add_argument("--target-c", type=float, required=True)
    c.add_argument("--replicates", type=_positive_int, default=2000)
    c.add_argument("--threads", type=_positive_int, default=1)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    s.add_argument("study", help="JSON study configuration")
    s.add_argument("--out", help="output directory")
    s.add_argument("--threads", type=_positive_int, default=1)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", parents=[common],
                       help="recompute diagnostics from a saved fit")
    e.add_argument("directory", help="output directory of 'fit --save-paths'")
    e.add_argument("--out", help="where to write refreshed artifacts")
    e.add_argument("--level", type=float, default=0.95)
    e.set_defaults(func=cmd_evaluate)
    return p


def _configure_logging() -> None:
    level = os.environ.get("NRMI_MIX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CalibrationRangeError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, InvalidParametersError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplerError as exc:
        print(f"numerical error at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NrmiError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
