"""Sweep orchestration: pump sweeps, drive-response sweeps and power-law fits."""

from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .config import SweepConfig
from .hilbert import enumerate_basis
from .liouvillian import ModelParams, assemble_liouvillian
from .observables import DensityMatrix, ObservableRecord, collect_observables, embed_density
from .steady_state import SteadyStateResult, converge_cutoffs, solve

__all__ = [
    "PointOutcome",
    "FitResult",
    "FitError",
    "solve_point",
    "run_sweep",
    "run_drive_response",
    "fit_power_law",
    "point_status",
    "ASYMPTOTES",
]

log = logging.getLogger(__name__)

# default asymptotes of the frustrated three-site array
ASYMPTOTES = {"g1_offset": -1.0 / 3.0, "entropy_offset": math.log(6.0)}


@dataclass
class PointOutcome:
    record: ObservableRecord
    convergence: list[dict] = field(default_factory=list)
    rho: DensityMatrix | None = None


def point_status(result: SteadyStateResult, cutoffs_ok: bool) -> str:
    if not result.converged:
        return "solver_not_converged"
    if not cutoffs_ok:
        return "cutoffs_not_converged"
    return "ok"


def solve_point(config: SweepConfig, params: ModelParams, axis_value: float,
                initial_guess: DensityMatrix | None = None, keep_rho: bool = False) -> PointOutcome:
    """Steady state and observables at one parameter point.

    Runs the cutoff-convergence protocol when the schedule has several
    levels.  Failures are caught and returned as a NaN record with an
    ``error: ...`` status so that sweeps keep going.
    """
    unit = config.unit_rate
    try:
        if len(config.schedule) > 1:
            result, report = converge_cutoffs(config.lattice, params, config.solver, config.schedule,
                                              config.observable_tol, initial_guess=initial_guess)
            table, cutoffs_ok = report.table, report.converged
        else:
            basis = enumerate_basis(config.lattice, config.schedule[0])
            liouv = assemble_liouvillian(basis, params, materialize="auto")
            guess = embed_density(initial_guess, basis) if initial_guess is not None else None
            result = solve(liouv, config.solver, guess)
            table, cutoffs_ok = [], True
        record = collect_observables(
            result.rho,
            axis_value=axis_value,
            pump_g=complex(params.pump_g) / unit,
            drive_f=complex(params.drive_f) / unit,
            residual=result.residual,
            status=point_status(result, cutoffs_ok),
        )
        record.extra["dim"] = result.rho.basis.dim
        record.extra["cutoffs"] = [result.rho.basis.trunc.n_max_per_mode, result.rho.basis.trunc.n_max_total]
        record.extra["method"] = result.method_used
        record.extra["min_eigenvalue"] = result.rho.min_eigenvalue()
        return PointOutcome(record, table, result.rho if keep_rho else None)
    except Exception as exc:  # noqa: BLE001 - one bad point must not abort a sweep
        log.exception("point %s failed", axis_value)
        nan = float("nan")
        cnan = complex(nan, nan)
        record = ObservableRecord(
            axis_value=float(axis_value),
            pump_g=complex(params.pump_g) / unit,
            drive_f=complex(params.drive_f) / unit,
            mean_occupancy=tuple([nan] * config.lattice.n_sites),
            g1=cnan, entropy=nan, negativity=nan, fidelity_ansatz=nan,
            alpha0=cnan, induced_coherence=cnan, residual=nan,
            status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "),
        )
        return PointOutcome(record)


def _run_points(config: SweepConfig, param_list: Sequence[ModelParams], axis_values: Sequence[float],
                workers: int, warm_start: bool) -> list[PointOutcome]:
    if workers > 1 and len(param_list) > 1:
        # independent cold starts; map() keeps axis order
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(solve_point, [config] * len(param_list), param_list, axis_values))
    outcomes = []
    guess = None
    for params, value in zip(param_list, axis_values):
        outcome = solve_point(config, params, value, initial_guess=guess, keep_rho=warm_start)
        if warm_start and outcome.rho is not None and outcome.record.status == "ok":
            guess = outcome.rho
        outcome.rho = None
        outcomes.append(outcome)
    return outcomes


def run_sweep(config: SweepConfig, workers: int = 1, warm_start: bool | None = None) -> list[PointOutcome]:
    """Steady states along the pump axis (``sweep.values`` in units of the loss rate)."""
    warm = config.warm_start if warm_start is None else warm_start
    values = config.values or [complex(config.params.pump_g).real / config.unit_rate]
    params = [replace(config.params, pump_g=v * config.unit_rate) for v in values]
    return _run_points(config, params, values, workers, warm and workers <= 1)


@dataclass
class DriveResponse:
    outcomes: list[PointOutcome]
    reference: PointOutcome
    alpha0: complex

    @property
    def normalized_response(self) -> np.ndarray:
        """``|<a_0>| / |alpha0|`` per drive amplitude."""
        scale = abs(self.alpha0)
        return np.array([abs(o.record.induced_coherence) / scale for o in self.outcomes])


def run_drive_response(config: SweepConfig, workers: int = 1, warm_start: bool | None = None) -> DriveResponse:
    """Response to a coherent drive of growing amplitude at fixed pump.

    The undriven steady state fixes ``alpha0``; with ``phase_rule =
    "lock_to_alpha0"`` every drive gets ``arg F = arg alpha0`` so that
    ``conj(F) * alpha0`` is real and positive.
    """
    warm = config.warm_start if warm_start is None else warm_start
    base = replace(config.params, drive_f=0.0)
    reference = solve_point(config, base, 0.0)
    alpha0 = reference.record.alpha0
    if config.phase_rule == "lock_to_alpha0":
        if not (abs(alpha0) > 0 and cmath.isfinite(alpha0)):
            raise ValueError("cannot lock the drive phase: alpha0 vanishes")
        phase = cmath.phase(alpha0)
    else:
        phase = config.drive_phase
    values = config.values or [abs(complex(config.params.drive_f)) / config.unit_rate]
    params = [replace(base, drive_f=v * config.unit_rate * cmath.exp(1j * phase)) for v in values]
    outcomes = _run_points(config, params, values, workers, warm and workers <= 1)
    for o in outcomes:
        if abs(alpha0) > 0:
            o.record.extra["a1_over_alpha0"] = abs(o.record.induced_coherence) / abs(alpha0)
    return DriveResponse(outcomes, reference, alpha0)


class FitError(ValueError):
    """Power-law fit impossible in the requested window."""


@dataclass(frozen=True)
class FitResult:
    exponent: float
    uncertainty: float
    window: tuple[float, float]
    r_squared: float
    prefactor: float
    quantity: str
    n_points: int


def fit_power_law(records: Sequence[ObservableRecord], quantity: str,
                  window: tuple[float, float] | None = None, asymptote: float | None = None) -> FitResult:
    """Fit ``|y - asymptote| ~ G**exponent`` by least squares in log-log space.

    ``quantity`` is ``"g1_offset"`` (y = Re g1) or ``"entropy_offset"``
    (y = S); the uncertainty is the standard error of the slope.
    """
    if quantity not in ASYMPTOTES:
        raise ValueError(f"quantity must be one of {sorted(ASYMPTOTES)}")
    target = ASYMPTOTES[quantity] if asymptote is None else asymptote
    xs, ys = [], []
    for r in records:
        g = complex(r.pump_g).real
        if window is not None and not (window[0] <= g <= window[1]):
            continue
        y = r.g1.real if quantity == "g1_offset" else r.entropy
        if math.isfinite(g) and math.isfinite(y):
            xs.append(g)
            ys.append(y - target)
    if len(xs) < 4:
        raise FitError(f"need at least 4 points in the window, got {len(xs)}")
    x = np.asarray(xs)
    signed = np.asarray(ys)
    if np.any(signed == 0) or (np.any(signed > 0) and np.any(signed < 0)):
        raise FitError("offset vanishes or changes sign inside the window (asymptote crossed)")
    if np.any(x <= 0):
        raise FitError("pump values must be positive for a log-log fit")
    fit = stats.linregress(np.log(x), np.log(np.abs(signed)))
    return FitResult(
        exponent=float(fit.slope),
        uncertainty=float(fit.stderr),
        window=(float(x.min()), float(x.max())),
        r_squared=float(fit.rvalue ** 2),
        prefactor=float(math.exp(fit.intercept)),
        quantity=quantity,
        n_points=int(x.size),
    )
