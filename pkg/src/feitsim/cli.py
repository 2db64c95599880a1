"""``feitsim`` command-line front end.

Each subcommand writes ``<sub>.csv``, a gnuplot script ``<sub>.gp`` and
``metadata.txt`` (the resolved configuration plus RWA diagnostics) into the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import protocols as pr
from .config import ConfigError, RunConfig, dump_config, parse_config
from .errors import FeitsimError
from .floquet import MHZ, calibrate_alpha, check_rwa
from .spectroscopy import sweep_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3
EXIT_IO = 4

SUBCOMMANDS = ("spectrum", "phase-scan", "time-trace", "amplitude-scan", "accuracy", "calibrate-alpha")
LOCKFILE = ".feitsim.lock"


class OutputError(FeitsimError):
    """Output directory cannot be used."""


@contextmanager
def _locked(outdir: Path):
    lock = outdir / LOCKFILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputError(f"{outdir} is locked by another run ({lock} exists)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _gnuplot(
    csv_name: str, xlabel: str, ylabel: str, columns: list[tuple[int, str]], xscale: float = 1.0, skip: int = 2
) -> str:
    # scan CSVs open with a tag comment and a header row, plain tables with the header only
    lines = [
        "set datafile separator ','",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key outside",
    ]
    xexpr = "1" if xscale == 1.0 else f"($1*{xscale!r})"
    plots = [f"'{csv_name}' skip {skip} using {xexpr}:{col} with lines title '{title}'" for col, title in columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def _write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def _spectrum(cfg: RunConfig, outdir: Path):
    res = sweep_spectrum(
        cfg.drive, cfg.modulation, cfg.medium, cfg.lasers, cfg.detuning_grid(),
        cfg.band_range, cfg.run_scheme, rule=cfg.rule,
    )
    res.to_csv(outdir / "spectrum.csv")
    bands = sorted(res.per_band)
    cols = [(2, "total")] + [(3 + i, f"T_{n}") for i, n in enumerate(bands)]
    script = _gnuplot("spectrum.csv", "Delta_c / 2pi (MHz)", "transmission", cols, 1e-6, skip=1)
    return script, [f"peak Delta_c/2pi = {res.peak_detuning() / MHZ:.6f} MHz"]


def _need_modulation(cfg: RunConfig, what: str):
    if cfg.modulation is None:
        raise ConfigError(f"{what} needs run.scheme = FEIT")
    return cfg.modulation


def _phase_scan(cfg: RunConfig, outdir: Path):
    _need_modulation(cfg, "phase-scan")
    res = pr.phase_scan(cfg.drive, cfg.modulation, cfg.medium, cfg.lasers, cfg.phase_grid(), cfg.rule)
    res.to_csv(outdir / "phase-scan.csv")
    return _gnuplot("phase-scan.csv", "Phi_s (rad)", "T_-1 - T_1", [(2, res.tag)]), []


def _time_trace(cfg: RunConfig, outdir: Path):
    _need_modulation(cfg, "time-trace")
    res = pr.time_trace(
        cfg.drive, cfg.modulation, cfg.medium, cfg.lasers, cfg.delta_omega, cfg.time_grid(), cfg.rule
    )
    res.to_csv(outdir / "time-trace.csv")
    return _gnuplot("time-trace.csv", "t (us)", "T_1 - T_-1", [(2, res.tag)], 1e6), []


def _amplitude_scan(cfg: RunConfig, outdir: Path):
    eps = cfg.eps_rf_grid()
    if cfg.run_scheme == "FEIT":
        res = pr.amplitude_scan(
            cfg.drive, cfg.modulation, cfg.medium, cfg.lasers, cfg.delta_omega, eps,
            cfg.grid_time_points, cfg.rule,
        )
    else:
        res = pr.eit_amplitude_scan(cfg.drive, cfg.medium, cfg.lasers, eps, cfg.rule)
    res.to_csv(outdir / "amplitude-scan.csv")
    return _gnuplot("amplitude-scan.csv", "eps_rf (V/cm)", "Delta T", [(2, res.tag)]), []


def _accuracy(cfg: RunConfig, outdir: Path):
    if cfg.run_accuracy == "phase":
        _need_modulation(cfg, "phase accuracy")
        res = pr.phase_accuracy(
            cfg.phase_grid(), cfg.noise, cfg.drive, cfg.modulation, cfg.medium, cfg.lasers,
            cfg.threads, rule=cfg.rule,
        )
        xlabel = "Phi_s (rad)"
    else:
        res = pr.amplitude_accuracy(
            cfg.eps_rf_grid(), cfg.noise, cfg.drive, cfg.modulation, cfg.medium, cfg.lasers,
            cfg.run_scheme, cfg.delta_omega, cfg.grid_time_points, cfg.threads, rule=cfg.rule,
        )
        xlabel = "eps_rf (V/cm)"
    res.to_csv(outdir / "accuracy.csv")
    notes = []
    worst = max((c.relative_gap for c in res.derivative_checks if np.isfinite(c.relative_gap)), default=0.0)
    notes.append(f"largest Richardson gap of the finite differences: {worst:.3g}")
    if worst > 0.01:
        notes.append("warning: finite-difference derivative disagrees with its Richardson check by > 1%")
    return _gnuplot("accuracy.csv", xlabel, res.tag, [(2, res.tag)]), notes


def _calibrate_alpha(cfg: RunConfig, outdir: Path):
    drive = cfg.drive
    alpha = calibrate_alpha(drive, cfg.calibrate_target_stark_shift_mhz * MHZ) / MHZ
    _write_rows(
        outdir / "calibrate-alpha.csv",
        ["eps_dc_v_per_cm", "eps_rf_v_per_cm", "target_stark_shift_mhz", "alpha_mhz_cm2_per_v2"],
        [[drive.eps_dc, drive.eps_rf, cfg.calibrate_target_stark_shift_mhz, alpha]],
    )
    script = _gnuplot("calibrate-alpha.csv", "eps_dc (V/cm)", "alpha/(2 pi hbar)", [(4, "alpha")], skip=1)
    return script, [f"alpha/(2 pi hbar) = {alpha:.6f} MHz/(V/cm)^2"]


_HANDLERS = {
    "spectrum": _spectrum,
    "phase-scan": _phase_scan,
    "time-trace": _time_trace,
    "amplitude-scan": _amplitude_scan,
    "accuracy": _accuracy,
    "calibrate-alpha": _calibrate_alpha,
}


def _metadata(cfg: RunConfig, name: str) -> str:
    report = check_rwa(cfg.drive, cfg.modulation, cfg.medium, cfg.lasers)
    head = [f"# feitsim {name}", "# RWA diagnostics"] + [f"# {line}" for line in report.lines()]
    return "\n".join(head) + "\n\n" + dump_config(cfg)


def run_subcommand(name: str, cfg: RunConfig, outdir: Path | str | None = None) -> list[str]:
    """Run one subcommand and write its files; returns the lines printed for the user."""
    if name not in _HANDLERS:
        raise ConfigError(f"unknown subcommand {name!r}")
    outdir = Path(cfg.run_out if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with _locked(outdir):
        script, notes = _HANDLERS[name](cfg, outdir)
        (outdir / f"{name}.gp").write_text(script, encoding="utf-8")
        (outdir / "metadata.txt").write_text(_metadata(cfg, name), encoding="utf-8")
    report = check_rwa(cfg.drive, cfg.modulation, cfg.medium, cfg.lasers)
    return report.lines() + notes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feitsim", description="Floquet EIT Rydberg interferometry simulator")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="key = value configuration file (defaults if omitted)")
    parser.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    parser.add_argument("--seed", type=int, help="Monte-Carlo seed (overrides noise.seed)")
    parser.add_argument(
        "--quadrature-order", type=int,
        help="Gauss-Hermite order for the velocity integral; 0 selects the closed form",
    )
    parser.add_argument("--threads", type=int, help="worker threads (fallback: FEITSIM_THREADS)")
    return parser


def _fail(code: int, kind: str, exc: BaseException) -> int:
    payload = {"error": kind, "exit_code": code, "message": getattr(exc, "message", None) or str(exc)}
    for attr in ("line", "col"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = "" if args.config is None else args.config.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return _fail(EXIT_IO, "io", exc)
    try:
        cfg = parse_config(text)
        overrides = {}
        if args.seed is not None:
            overrides["noise_seed"] = args.seed
        if args.quadrature_order is not None:
            overrides["run_quadrature_order"] = args.quadrature_order
        if args.threads is not None:
            overrides["run_threads"] = args.threads
        if args.out is not None:
            overrides["run_out"] = str(args.out)
        if overrides:
            cfg = cfg.updated(**overrides)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    try:
        lines = run_subcommand(args.subcommand, cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (OSError, OutputError) as exc:
        return _fail(EXIT_IO, "io", exc)
    except Exception as exc:  # any other failure happened inside a computation
        return _fail(EXIT_COMPUTE, "computation", exc)
    for line in lines:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
