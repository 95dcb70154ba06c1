"""Command-line front end.

Subcommands::

    boardsim bcm     --config exp.cfg --out DIR [--seed S]
    boardsim ident   --config ident.cfg --out DIR [--seed S]
    boardsim predict --config ale.cfg --out DIR [--seed S]
    boardsim vme     --script bus.txt --out DIR
    boardsim budget  TAPS {fir,iir} RATE_HZ [--na NA]

Exit codes: 0 success, 1 a conformance expectation failed, 2 usage or
config error, 3 runtime error. ``BOARD_SIM_LOG`` sets the log level
(``DEBUG``, ``INFO``, ...). Every run that writes files also writes
``manifest.json``; set ``SOURCE_DATE_EPOCH`` to pin its timestamp.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import scipy.signal as sps

from . import __version__, apps
from . import config as cfgmod
from . import kernels
from .adaptive import (
    DivergenceError, FilterCoefficients, run_iir_equation_error, run_identification,
    run_predictor, write_coefficients_csv, write_run_csv,
)
from .dualcore import (
    CoefficientRangeError, HandshakeTimeout, HazardError, mac_budget, run_dual_pipeline,
)
from .signal import InvalidSpecError, SampleStream, measure_snr, synthesize
from .vme import ScriptError, SlaveState, parse_script, run_conformance, write_report_csv

log = logging.getLogger("boardsim")

EXIT_OK, EXIT_EXPECT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
_RUNTIME = (DivergenceError, HandshakeTimeout, HazardError, CoefficientRangeError,
            apps.InvalidReadingError, OSError)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
    else:
        when = dt.datetime.now(dt.timezone.utc).replace(microsecond=0)
    return when.isoformat()


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, input_path, seeds: dict, extra=None) -> None:
    manifest = {
        "command": command,
        "config": str(input_path) if input_path is not None else None,
        "config_sha256": _digest(input_path) if input_path is not None else None,
        "out_dir": str(out),
        "seeds": seeds,
        "timestamp": _timestamp(),
        "version": __version__,
        "backend": kernels.BACKEND,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _component_seeds(spec) -> list:
    return [c.seed for c in spec.components if hasattr(c, "seed")]


def _inf_norm(a, b) -> float:
    n = max(len(a), len(b))
    if n == 0:
        return 0.0
    pa = np.zeros(n)
    pb = np.zeros(n)
    pa[:len(a)] = a
    pb[:len(b)] = b
    return float(np.max(np.abs(pa - pb)))


# -- commands ---------------------------------------------------------------

def cmd_bcm(args) -> int:
    cp = cfgmod.read_file(args.config)
    exp = apps.load_bcm_experiment(cp, args.seed)
    report = apps.run_bcm_experiment(exp)
    out = _outdir(args.out)
    apps.write_report_csv(report, out / "report.csv")
    write_run_csv(report.runs, out / "run.csv")
    (out / "summary.txt").write_text(report.summary())
    write_manifest(out, "bcm", args.config, {
        "seed_override": args.seed,
        "component_seeds": _component_seeds(exp.signal),
        "scheduler_seed": exp.topology.scheduler_seed,
    })
    print(report.summary(), end="")
    return EXIT_OK


def _adaptive_run(x, d, adaptive, pipe, na):
    if pipe is not None:
        return run_dual_pipeline(x, d, pipe)
    if adaptive.topology == "predictor":
        return run_predictor(x, adaptive.predictor(), stride=0)
    if na:
        return run_iir_equation_error(x, d, adaptive.lms, adaptive.lms.num_taps, na, stride=0)
    return run_identification(x, d, adaptive.lms, stride=0)


def cmd_ident(args) -> int:
    cp = cfgmod.read_file(args.config)
    spec = cfgmod.signal_spec(cp, args.seed)
    adaptive = cfgmod.adaptive_section(cp, default_topology="identification")
    if adaptive.topology != "identification":
        raise cfgmod.ConfigError("adaptive.topology", "ident needs identification")
    plant = cfgmod.plant(cp)
    pipe = cfgmod.pipeline_config(cp, adaptive, required=False)
    x = synthesize(spec)
    # equation-error sign convention: d_k = sum b_i x_{k-i} + sum a_j d_{k-j}
    den = np.concatenate([[1.0], -np.asarray(plant["a"], dtype=np.float64)])
    d = SampleStream(sps.lfilter(plant["b"], den, x.samples), x.rate_hz)
    run = _adaptive_run(x, d, adaptive, pipe, adaptive.na)
    out = _outdir(args.out)
    write_run_csv(run, out / "run.csv")
    write_coefficients_csv(run.final, out / "coefficients.csv")
    err_b = _inf_norm(run.final.b, plant["b"])
    err_a = _inf_norm(run.final.a if run.final.a is not None else [], plant["a"])
    true = FilterCoefficients(plant["b"], plant["a"] or None)
    lines = [
        "system identification",
        f"  samples {len(x)}, taps nb={run.final.nb} na={run.final.na}, "
        f"{'dual-core' if pipe else 'serial'}",
        f"  plant  {' '.join(repr(v) for v in true.vector().tolist())}",
        f"  final  {' '.join(repr(v) for v in run.final.vector().tolist())}",
        f"  |b - h|inf = {err_b:.6g}",
    ]
    if plant["a"] or adaptive.na:
        lines.append(f"  |a - a_plant|inf = {err_a:.6g}")
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    write_manifest(out, "ident", args.config, {
        "seed_override": args.seed,
        "component_seeds": _component_seeds(spec),
        "scheduler_seed": pipe.scheduler_seed if pipe else None,
    })
    print(summary, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    cp = cfgmod.read_file(args.config)
    spec = cfgmod.signal_spec(cp, args.seed)
    adaptive = cfgmod.adaptive_section(cp, default_topology="predictor")
    if adaptive.topology != "predictor":
        raise cfgmod.ConfigError("adaptive.topology", "predict needs predictor")
    pipe = cfgmod.pipeline_config(cp, adaptive, required=False)
    x = synthesize(spec)
    run = _adaptive_run(x, None, adaptive, pipe, 0)
    out = _outdir(args.out)
    write_run_csv(run, out / "run.csv")
    write_coefficients_csv(run.final, out / "coefficients.csv")
    lines = ["adaptive line enhancer",
             f"  samples {len(x)}, taps {run.final.nb}, delay {adaptive.delay}, "
             f"{'dual-core' if pipe else 'serial'}"]
    beam = spec.only("beam")
    if beam.components and spec.only("noise").components:
        clean = synthesize(beam)
        snr_in = measure_snr(clean, x).snr_db
        snr_out = measure_snr(clean, run.y).snr_db
        lines += [f"  input SNR   {snr_in:9.3f} dB",
                  f"  output SNR  {snr_out:9.3f} dB",
                  f"  improvement {snr_out - snr_in:9.3f} dB"]
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    write_manifest(out, "predict", args.config, {
        "seed_override": args.seed,
        "component_seeds": _component_seeds(spec),
        "scheduler_seed": pipe.scheduler_seed if pipe else None,
    })
    print(summary, end="")
    return EXIT_OK


def cmd_vme(args) -> int:
    try:
        text = Path(args.script).read_text()
    except OSError as exc:
        raise cfgmod.ConfigError(str(args.script), f"cannot read script: {exc.strerror}") from None
    script = parse_script(text)
    report = run_conformance(SlaveState(), script)
    out = _outdir(args.out)
    write_report_csv(report, out / "report.csv")
    summary = report.summary()
    for r in report.failures:
        summary += f"  line {r.line.lineno}: {r.line.text} -> {r.outcome}"
        summary += f" ({r.reason})\n" if r.reason else "\n"
    (out / "summary.txt").write_text(summary)
    write_manifest(out, "vme", args.script, {})
    print(summary, end="")
    return EXIT_OK if report.passed else EXIT_EXPECT


def cmd_budget(args) -> int:
    try:
        budget = mac_budget(args.taps, args.topology, args.rate, na=args.na)
    except ValueError as exc:
        raise cfgmod.ConfigError("budget", str(exc)) from None
    print(budget.table(), end="")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boardsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("bcm", cmd_bcm, "beam current monitor experiment"),
                            ("ident", cmd_ident, "adaptive system identification"),
                            ("predict", cmd_predict, "adaptive line enhancer")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, default=None,
                        help="override noise seeds (the i-th seeded component gets SEED+i)")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("vme", help="run a VME conformance script")
    sp.add_argument("--script", "--config", dest="script", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_vme)
    sp = sub.add_parser("budget", help="MAC budget for filter plus LMS update")
    sp.add_argument("taps", type=int)
    sp.add_argument("topology", choices=("fir", "iir"))
    sp.add_argument("rate", type=float)
    sp.add_argument("--na", type=int, default=0)
    sp.set_defaults(func=cmd_budget)
    return p


def main(argv=None) -> int:
    level = os.environ.get("BOARD_SIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, ScriptError, InvalidSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _RUNTIME as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError) as exc:
        log.debug("unexpected failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
