"""CSV records and JSON run summaries."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy

from .observables import ObservableRecord

__all__ = ["csv_columns", "emit_outputs", "read_records", "write_csv", "write_summary", "OutputError"]


class OutputError(OSError):
    """File output failed; the message names the offending path."""


def csv_columns(n_sites: int) -> list[str]:
    return (
        ["axis_value", "G_over_gamma", "F_over_gamma_re", "F_over_gamma_im"]
        + [f"n_mean_site{j}" for j in range(n_sites)]
        + ["g1_re", "g1_im", "entropy", "negativity", "fidelity_ansatz",
           "alpha0_re", "alpha0_im", "a1_re", "a1_im", "residual", "status"]
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _row(r: ObservableRecord) -> list[str]:
    g, f = complex(r.pump_g), complex(r.drive_f)
    values = [r.axis_value, g.real, f.real, f.imag, *r.mean_occupancy,
              r.g1.real, r.g1.imag, r.entropy, r.negativity, r.fidelity_ansatz,
              r.alpha0.real, r.alpha0.imag, r.induced_coherence.real, r.induced_coherence.imag,
              r.residual]
    return [_fmt(v) for v in values] + [r.status]


def write_csv(path: str | Path, records: Sequence[ObservableRecord], n_sites: int) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(csv_columns(n_sites))
            for r in records:
                writer.writerow(_row(r))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_records(path: str | Path) -> list[ObservableRecord]:
    """Inverse of :func:`write_csv` (``extra`` is not stored in the CSV)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        n_sites = sum(1 for k in row if k.startswith("n_mean_site"))
        c = lambda a, b: complex(float(row[a]), float(row[b]))  # noqa: E731
        out.append(ObservableRecord(
            axis_value=float(row["axis_value"]),
            pump_g=complex(float(row["G_over_gamma"]), 0.0),
            drive_f=c("F_over_gamma_re", "F_over_gamma_im"),
            mean_occupancy=tuple(float(row[f"n_mean_site{j}"]) for j in range(n_sites)),
            g1=c("g1_re", "g1_im"),
            entropy=float(row["entropy"]),
            negativity=float(row["negativity"]),
            fidelity_ansatz=float(row["fidelity_ansatz"]),
            alpha0=c("alpha0_re", "alpha0_im"),
            induced_coherence=c("a1_re", "a1_im"),
            residual=float(row["residual"]),
            status=row["status"],
        ))
    return out


def _jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def versions() -> dict:
    from . import __version__

    return {
        "kerrlattice": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_summary(path: str | Path, summary: dict) -> Path:
    path = Path(path)
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True, allow_nan=False) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def emit_outputs(records: Sequence[ObservableRecord], fits: Iterable, paths: dict, *,
                 n_sites: int, config_raw: dict | None = None, config_text: str = "",
                 config_sha256: str = "", convergence: Sequence | None = None,
                 extra: dict | None = None) -> dict:
    """Write the CSV table and the JSON summary; returns the paths written.

    ``paths`` maps ``"csv"`` and ``"json"`` to file locations.  Nothing
    time-dependent is written unless the caller passes it in ``extra``.
    """
    written = {"csv": write_csv(paths["csv"], records, n_sites)}
    summary = {
        "config": config_raw or {},
        "config_text": config_text,
        "config_sha256": config_sha256,
        "columns": csv_columns(n_sites),
        "n_records": len(records),
        "fits": list(fits),
        "convergence": list(convergence or []),
        "record_details": [r.extra for r in records],
        "versions": versions(),
    }
    if extra:
        summary.update(extra)
    written["json"] = write_summary(paths["json"], summary)
    return written
