"""Command line entry point: ``kerrlattice {run,sweep,response,converge,spinref}``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
import time
from dataclasses import replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .config import ConfigError, SweepConfig, load_config
from .io import OutputError, emit_outputs, write_summary
from .observables import collect_observables
from .runner import (
    FitError,
    PointOutcome,
    fit_power_law,
    point_status,
    run_drive_response,
    run_sweep,
    solve_point,
)
from .spin_ref import SpinXYParams, ising_brute_force, xy_ground_state
from .steady_state import METHODS, converge_cutoffs

log = logging.getLogger("kerrlattice")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--workers", type=int, default=1, help="parallel sweep points")
    common.add_argument("--deterministic", action="store_true",
                        help="cold starts, one BLAS thread, no timing in outputs")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. model.pump_g_over_gamma=30")
    common.add_argument("--solver", choices=METHODS, help="steady-state method")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="kerrlattice", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single parameter point")
    sub.add_parser("sweep", parents=[common], help="sweep the two-photon pump G")
    sub.add_parser("response", parents=[common], help="sweep the coherent drive |F|")
    sub.add_parser("converge", parents=[common], help="cutoff convergence study at one point")
    sub.add_parser("spinref", parents=[common], help="Ising / XY reference values")
    return parser


def _blas_single_thread(enabled: bool):
    if not enabled:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - optional
        log.warning("threadpoolctl missing; BLAS thread count not pinned")
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def _paths(config: SweepConfig, out: Path) -> dict:
    return {"csv": out / config.csv_name, "json": out / config.json_name}


def _fits(config: SweepConfig, records) -> list:
    section = config.raw.get("fit", {})
    out = []
    for quantity in section.get("quantities", []):
        window = tuple(section["window"]) if "window" in section else None
        try:
            out.append(fit_power_law(records, quantity, window, section.get("asymptotes", {}).get(quantity)))
        except FitError as exc:
            log.warning("fit %s failed: %s", quantity, exc)
            out.append({"quantity": quantity, "error": str(exc)})
    return out


def _emit(config: SweepConfig, args, outcomes, fits=(), extra=None, started=None) -> None:
    records = [o.record for o in outcomes]
    extra = dict(extra or {})
    extra["command"] = args.command
    if not args.deterministic and started is not None:
        extra["wall_time_seconds"] = time.perf_counter() - started
    emit_outputs(records, fits, _paths(config, args.out), n_sites=config.lattice.n_sites,
                 config_raw=config.raw, config_text=config.text, config_sha256=config.sha256,
                 convergence=[o.convergence for o in outcomes], extra=extra)


def _all_failed(outcomes) -> bool:
    return bool(outcomes) and all(o.record.status != "ok" for o in outcomes)


def _cmd_points(config: SweepConfig, args) -> int:
    started = time.perf_counter()
    warm = False if args.deterministic else None
    if args.command == "run":
        value = complex(config.params.pump_g).real / config.unit_rate
        outcomes = [solve_point(config, config.params, value)]
        _emit(config, args, outcomes, started=started)
    elif args.command == "sweep":
        outcomes = run_sweep(config, workers=args.workers, warm_start=warm)
        _emit(config, args, outcomes, _fits(config, [o.record for o in outcomes]), started=started)
    else:
        response = run_drive_response(config, workers=args.workers, warm_start=warm)
        outcomes = response.outcomes
        extra = {"reference_alpha0": response.alpha0,
                 "normalized_response": response.normalized_response,
                 "reference_status": response.reference.record.status}
        _emit(config, args, outcomes, extra=extra, started=started)
    for o in outcomes:
        log.info("%s = %g: status %s", config.axis, o.record.axis_value, o.record.status)
    return EXIT_NOT_CONVERGED if _all_failed(outcomes) else EXIT_OK


def _cmd_converge(config: SweepConfig, args) -> int:
    started = time.perf_counter()
    result, report = converge_cutoffs(config.lattice, config.params, config.solver, config.schedule,
                                      config.observable_tol)
    unit = config.unit_rate
    record = collect_observables(result.rho, axis_value=complex(config.params.pump_g).real / unit,
                                 pump_g=complex(config.params.pump_g) / unit,
                                 drive_f=complex(config.params.drive_f) / unit,
                                 residual=result.residual,
                                 status=point_status(result, report.converged))
    trunc = result.rho.basis.trunc
    record.extra.update(dim=result.rho.basis.dim, cutoffs=[trunc.n_max_per_mode, trunc.n_max_total],
                        method=result.method_used, min_eigenvalue=result.rho.min_eigenvalue())
    outcome = PointOutcome(record, report.table)
    _emit(config, args, [outcome], extra={"converged": report.converged, "converged_at": report.converged_at,
                                          "warnings": report.warnings}, started=started)
    for row in report.table:
        log.info("N_m=%d N_mT=%d D=%d n=%.6g S=%.6g change=%.3g", row["n_max_per_mode"], row["n_max_total"],
                 row["dim"], row["mean_occupancy"], row["entropy"], row["change"])
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _cmd_spinref(config: SweepConfig, args) -> int:
    section = config.raw.get("spinref", {})
    n = int(section.get("n_spins", config.lattice.n_sites))
    bonds = [tuple(b) for b in section.get("bonds", config.lattice.edges if n == config.lattice.n_sites else [])]
    # decimal strings keep 0.2 exact as 1/5
    j = Fraction(str(section.get("j_ising", 1.0)))
    rows = []
    for h in section.get("h_values", [0.0]):
        res = ising_brute_force(n, bonds, j, Fraction(str(h)))
        rows.append({"h_field": float(h), "ground_energy": str(res.ground_energy), "degeneracy": res.degeneracy,
                     "pair_correlation": str(res.pair_correlation), "magnetization": str(res.magnetization),
                     "ground_configs": res.ground_configs})
        log.info("h=%g degeneracy=%d corr=%s m=%s", h, res.degeneracy, res.pair_correlation, res.magnetization)
    summary = {"command": "spinref", "n_spins": n, "bonds": bonds, "j_ising": str(j), "ising": rows,
               "config": config.raw}
    if "xy" in section:
        xy = section["xy"]
        params = SpinXYParams(n, tuple(bonds), float(xy.get("h_z", 0.0)), float(xy.get("j_xy", 1.0)),
                              float(xy.get("eta_x", 1.0)), float(xy.get("eta_y", 1.0)))
        gs = xy_ground_state(params)
        summary["xy"] = {"energy": gs.energy, "degeneracy": gs.degeneracy, "corr_xx": gs.corr_xx,
                         "corr_yy": gs.corr_yy, "sz": gs.sz, "low_energies": gs.low_energies}
    write_summary(args.out / "spinref.json", summary)
    path = args.out / "spinref.csv"
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["h_field", "ground_energy", "degeneracy", "pair_correlation", "magnetization"])
            for r in rows:
                writer.writerow([r["h_field"], r["ground_energy"], r["degeneracy"], r["pair_correlation"],
                                 r["magnetization"]])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.override)
        if args.solver:
            overrides.append(f'solver.method="{args.solver}"')
        config = load_config(args.config, overrides, require_truncation=args.command != "spinref")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.command == "response" and config.axis != "drive_f_magnitude":
            config = replace(config, axis="drive_f_magnitude")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with _blas_single_thread(args.deterministic):
            if args.command in ("run", "sweep", "response"):
                return _cmd_points(config, args)
            if args.command == "converge":
                return _cmd_converge(config, args)
            return _cmd_spinref(config, args)
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
