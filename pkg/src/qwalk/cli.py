"""Command line runner: ``qwalk <subcommand> -c config.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import BandDiscontinuity, ConfigError, FileIOError, QWalkError, VerificationFailed
from .fourier import resolve_threads, return_amplitude_series
from .recurrence import classify, monte_carlo_polya, polya_number
from .spectral import analyse
from .walk import return_series_direct

log = logging.getLogger("qwalk")

VERIFY_TOL = 1e-10

EXIT_CODES = """exit codes:
  0  success
  1  unexpected internal error
  2  command line usage error
  3  configuration error (the error record names the offending field)
  4  file input/output error
  5  invalid walk definition (shifts, coin or initial state)
  6  numerical failure (grid too small, eigensolver failure)
  7  analysis failure (too few points to fit, no stationary feature survives)
  8  verification failed (direct and fourier engines disagree)

On failure a JSON error record {"error", "message", "exit_code"[, "field"]}
is written to stderr."""


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _finite(x):
    """JSON has no inf/nan; map them to strings."""
    if isinstance(x, float) and not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise FileIOError(f"cannot write {p}: {exc}") from exc
    log.info("wrote %s", p)


def _series_csv(series) -> str:
    lines = ["t,p_o"]
    lines += [f"{t},{p:.17g}" for t, p in enumerate(series.p)]
    return "\n".join(lines) + "\n"


def _eigenphase_csv(report) -> str:
    bands = report.bands
    d = bands.d
    pts = bands.grid.points
    omega = np.angle(bands.lam)
    head = ",".join([f"k{a + 1}" for a in range(d)] + ["band", "omega"])
    lines = [head]
    for m in range(pts.shape[0]):
        ks = ",".join(f"{x:.17g}" for x in pts[m])
        for j in range(bands.c):
            lines.append(f"{ks},{j},{omega[m, j]:.17g}")
    return "\n".join(lines) + "\n"


def compute_series(cfg: cfgmod.ExperimentConfig):
    spec, T = cfg.spec, cfg.steps
    if cfg.engine == "direct":
        return return_series_direct(spec, T)
    series = return_amplitude_series(spec, T, N=cfg.N, approximate=cfg.approximate,
                                     threads=cfg.threads)
    if series.warning:
        log.warning("%s: %s", cfg.label, series.warning)
    if cfg.engine == "both":
        direct = return_series_direct(spec, T)
        dev = float(np.max(np.abs(series.p - direct.p)))
        if dev > VERIFY_TOL and series.exact:
            raise VerificationFailed(f"{cfg.label}: engines differ by {dev:.3e}")
    return series


def _engine_meta(cfg, series) -> dict:
    return {
        "engine": cfg.engine,
        "method": series.method,
        "grid": series.grid,
        "exact": bool(series.exact),
        "threads": resolve_threads(cfg.threads),
        "version": _version(),
        "warning": series.warning,
    }


def _spectral(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandDiscontinuity)
        return analyse(cfg.spec, cfg.spectral_grid)


def _unverified_note(cfg) -> list:
    state = cfg.raw.get("initial_coin_state")
    if isinstance(state, dict) and state.get("named") == "fourier_family":
        return ["no published reference value for this Fourier-family Polya number (unverified)"]
    return []


def _outputs(cfg, key, override, n_runs, suffix):
    """Output path for one run: explicit flag, config field or stdout."""
    target = override if override is not None else cfg.output.get(key)
    if target in (None, "-"):
        if n_runs > 1 and suffix == ".csv":
            raise ConfigError(f"a sweep needs an output directory for {key}", f"output.{key}")
        return None
    if n_runs > 1:
        return str(Path(target) / f"{cfg.label}{suffix}")
    return target


def cmd_simulate(args, raw, runs):
    for cfg in runs:
        series = compute_series(cfg)
        _write(_outputs(cfg, "series_csv", args.output, len(runs), ".csv"), _series_csv(series))
    return 0


def _summary_doc(raw, records):
    if len(records) == 1:
        return records[0]
    return {"config_hash": cfgmod.config_hash(raw), "runs": records}


def cmd_polya(args, raw, runs):
    records = []
    for cfg in runs:
        series = compute_series(cfg)
        report = None if args.no_spectral else _spectral(cfg)
        pred = None if report is None else report.prediction
        est = polya_number(series, cfg.tail_policy, spectral=pred, window=cfg.fit_window)
        cls = classify(series, pred, cfg.fit_window)
        rec = {
            "label": cfg.label,
            "config_hash": cfg.config_hash(),
            "steps": cfg.steps,
            "engine": _engine_meta(cfg, series),
            "polya": est.to_dict(),
            "classification": {
                "verdict": cls.verdict,
                "fit_verdict": cls.fit_verdict,
                "spectral_verdict": cls.spectral_verdict,
                "reason": cls.reason,
            },
            "fit": None if cls.fit is None else cls.fit.__dict__.copy(),
            "spectral_prediction": None if pred is None else pred.to_dict(),
            "notes": _unverified_note(cfg),
        }
        records.append(rec)
    _write(args.output if args.output is not None else runs[0].output.get("summary"),
           _dump_json(_finite(_summary_doc(raw, records))))
    return 0


def cmd_spectrum(args, raw, runs):
    records = []
    for cfg in runs:
        report = _spectral(cfg)
        rec = {"label": cfg.label, "config_hash": cfg.config_hash(), **report.to_dict()}
        records.append(rec)
        target = args.eigenphases if args.eigenphases is not None else cfg.output.get("eigenphases_csv")
        if target not in (None, "-"):
            path = str(Path(target) / f"{cfg.label}_eigenphases.csv") if len(runs) > 1 else target
            _write(path, _eigenphase_csv(report))
    _write(args.output if args.output is not None else runs[0].output.get("report"),
           _dump_json(_finite(_summary_doc(raw, records))))
    return 0


def cmd_montecarlo(args, raw, runs):
    records = []
    for cfg in runs:
        series = compute_series(cfg)
        R = args.records if args.records is not None else cfg.records
        seed = args.seed if args.seed is not None else cfg.seed
        mc = monte_carlo_polya(series, R, seed, threads=cfg.threads)
        exact = polya_number(series, "none").truncated
        records.append({
            "label": cfg.label,
            "config_hash": cfg.config_hash(),
            "engine": _engine_meta(cfg, series),
            "montecarlo": mc.to_dict(),
            "generator": "numpy Philox4x64-10, key=seed, block b of 1024 records uses jumped(b)",
            "truncated_polya": exact,
            "deviation_in_stderr": None if mc.stderr == 0 else (mc.P_hat - exact) / mc.stderr,
        })
    _write(args.output if args.output is not None else runs[0].output.get("summary"),
           _dump_json(_finite(_summary_doc(raw, records))))
    return 0


def cmd_verify(args, raw, runs):
    worst = 0.0
    lines = []
    for cfg in runs:
        T = min(cfg.steps, args.max_steps)
        direct = return_series_direct(cfg.spec, T)
        fourier = return_amplitude_series(cfg.spec, T, threads=cfg.threads)
        dev = float(np.max(np.abs(fourier.p - direct.p)))
        worst = max(worst, dev)
        lines.append(f"{cfg.label or 'run'}: max |p_fourier - p_direct| = {dev:.3e} "
                     f"over t <= {T} (N = {fourier.grid})")
    lines.append(f"max deviation {worst:.3e} ({'ok' if worst < VERIFY_TOL else 'FAILED'})")
    _write(args.output, "\n".join(lines) + "\n")
    if worst >= VERIFY_TOL:
        raise VerificationFailed(f"engines differ by {worst:.3e} (tolerance {VERIFY_TOL:g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qwalk",
        description="Return probabilities, Polya numbers and spectral diagnostics "
                    "for coined quantum walks on Z^d.",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress to stderr (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text, output_help):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=EXIT_CODES,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("-c", "--config", required=True, help="JSON experiment config")
        p.add_argument("-o", "--output", default=None, help=output_help)
        return p

    add("simulate", "write the return-probability series p_o(t) as CSV",
        "CSV path ('-' for stdout); a directory for sweep configs")
    p = add("polya", "Polya number, fitted exponent and verdict as a JSON summary",
            "summary path (default: config output.summary or stdout)")
    p.add_argument("--no-spectral", action="store_true",
                   help="skip the spectral prediction (fit-only verdict)")
    p = add("spectrum", "stationary points, saddle curves and flat bands as a JSON report",
            "report path (default: config output.report or stdout)")
    p.add_argument("--eigenphases", default=None,
                   help="also write the eigenphase table k1..kd,band,omega to this CSV")
    p = add("montecarlo", "simulate the measure-and-discard protocol",
            "summary path (default: config output.summary or stdout)")
    p.add_argument("-R", "--records", type=int, default=None, help="number of records")
    p.add_argument("--seed", type=int, default=None, help="generator key")
    p = add("verify", "compare the direct and fourier engines on every run",
            "report path (default stdout)")
    p.add_argument("--max-steps", type=int, default=64,
                   help="compare t = 0..min(steps, MAX_STEPS) (default 64)")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "polya": cmd_polya,
    "spectrum": cmd_spectrum,
    "montecarlo": cmd_montecarlo,
    "verify": cmd_verify,
}


def _error_record(exc: Exception, code: int) -> str:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    field = getattr(exc, "field", None)
    if field is not None:
        rec["field"] = field
    return json.dumps(rec, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        raw, runs = cfgmod.load(args.config)
        return COMMANDS[args.command](args, raw, runs)
    except QWalkError as exc:
        err, code = exc, exc.exit_code
    except (ValueError, TypeError, KeyError) as exc:
        # malformed values that slipped past validation are configuration problems
        err, code = exc, ConfigError.exit_code
    except Exception as exc:  # noqa: BLE001 - report anything else as internal
        log.debug("internal error", exc_info=True)
        err, code = exc, 1
    sys.stderr.write(_error_record(err, code) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
