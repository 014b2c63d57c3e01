"""CSV/JSON persistence with lossless round trips.

Floats go out with 17 significant digits, which reproduces every double
exactly on re-read.  JSON documents use sorted keys and fixed indentation
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .asymptotics import ExpansionReport
from .errors import ConfigError, OutOfRange
from .integrator import IntegrationControls, Termination, Trajectory
from .negpower import ExtinctionRecord
from .radial_system import ProblemSpec, make_rhs
from .shooting import Classification, ScanRecord

__all__ = [
    "fmt",
    "dump_json",
    "load_json",
    "trajectory_columns",
    "write_trajectory",
    "read_trajectory",
    "write_scan",
    "read_scan",
    "write_extinction_scan",
    "read_extinction_scan",
    "write_expansion",
    "read_expansion",
    "write_residuals",
    "read_residuals",
    "prepare_output_dir",
]

SCAN_COLUMNS = ("beta", "kind", "R_est", "sigma", "log_R_est", "evidence", "init")
EXTINCTION_COLUMNS = ("p", "a", "b", "outcome", "rho", "min_u", "first_negative_laplacian_r")
RESIDUAL_COLUMNS = ("r", "u", "fit", "residual")


def fmt(x) -> str:
    """17 significant digits; empty for None."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _num(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def _clean(obj):
    # JSON has no inf/nan; encode them as strings so files stay strict
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _restore(obj):
    if isinstance(obj, str) and obj in ("nan", "inf", "-inf"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path):
    return _restore(json.loads(Path(path).read_text(encoding="utf-8")))


def prepare_output_dir(path, force: bool = False, expect: Sequence[str] = ()) -> Path:
    """Create ``path``; refuse to overwrite existing outputs unless ``force``."""
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    clash = [name for name in expect if (out / name).exists()]
    if clash and not force:
        raise ConfigError(f"output directory {out} already holds {', '.join(clash)}; use --force")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- trajectories -----------------------------------------------------------

def trajectory_columns(m: int) -> list:
    # the CSV adds a trailing ``err`` column: the scaled local error of the step ending at that node
    cols = ["r"]
    for k in range(1, 2 * m + 1):
        cols += [f"v{k}", f"v{k}p"]
    return cols


def write_trajectory(traj: Trajectory, csv_path, json_path=None) -> None:
    csv_path = Path(csv_path)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_columns(traj.spec.m) + ["err"])
        errs = traj.error_estimates if traj.error_estimates is not None else np.zeros(len(traj.r))
        for r, y, e in zip(traj.r, traj.y, errs):
            w.writerow([fmt(r)] + [fmt(v) for v in y] + [fmt(e)])
    dump_json(
        {
            "spec": traj.spec.to_dict(),
            "controls": traj.controls.to_dict(),
            "termination": traj.termination.to_dict(),
            "nodes": int(len(traj.r)),
            "stats": {k: v for k, v in traj.stats.items() if isinstance(v, (int, float, str, bool))},
            "csv": csv_path.name,
            "max_error_estimate": float(np.max(errs)) if len(errs) else 0.0,
        },
        json_path,
    )


def read_trajectory(csv_path, json_path=None) -> Trajectory:
    """Re-read nodes exactly; between nodes a cubic Hermite interpolant with slopes from the equation."""
    csv_path = Path(csv_path)
    meta = load_json(Path(json_path) if json_path else csv_path.with_suffix(".json"))
    spec = ProblemSpec.from_dict(meta["spec"])
    with csv_path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != trajectory_columns(spec.m) + ["err"]:
        raise ConfigError(f"unexpected trajectory header {rows[0]}")
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    r, y, errs = data[:, 0].copy(), data[:, 1:-1].copy(), data[:, -1].copy()
    rhs = make_rhs(spec)
    dy = np.array([rhs(ri, yi) for ri, yi in zip(r, y)])
    spline = CubicHermiteSpline(r, y, dy, axis=0)
    lo, hi = float(r[0]), float(r[-1])

    def interp(x):
        if not lo <= x <= hi:
            raise OutOfRange(x)
        return spline(x)

    r.setflags(write=False)
    y.setflags(write=False)
    return Trajectory(spec, IntegrationControls.from_dict(meta["controls"]), r, y,
                      Termination.from_dict(meta["termination"]), interp, errs,
                      dict(meta.get("stats", {}), reloaded=True))


# --- scans -------------------------------------------------------------------

def write_scan(records: Iterable[ScanRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for rec in records:
            c = rec.classification
            w.writerow([fmt(rec.beta), c.kind.value, fmt(c.R_est), fmt(c.sigma), fmt(c.log_R_est),
                        c.evidence or "", " ".join(fmt(x) for x in rec.init)])


def read_scan(path) -> list:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            c = Classification.from_dict({
                "kind": row["kind"],
                "R_est": _num(row["R_est"]),
                "sigma": _num(row["sigma"]),
                "log_R_est": _num(row["log_R_est"]),
                "evidence": row["evidence"] or None,
            })
            init = tuple(float(x) for x in row["init"].split())
            out.append(ScanRecord(init, c, falsification=c.is_global))
    return out


def write_extinction_scan(records: Iterable[ExtinctionRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXTINCTION_COLUMNS)
        for rec in records:
            row = rec.row()
            w.writerow([row[k] if k == "outcome" else fmt(row[k]) for k in EXTINCTION_COLUMNS])


def read_extinction_scan(path) -> list:
    """Rows only; N, horizon and escalation flags live in the JSON report."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [ExtinctionRecord.from_dict(row) for row in csv.DictReader(fh)]


# --- expansion -----------------------------------------------------------------

def write_expansion(report: ExpansionReport, path) -> None:
    dump_json(report.to_dict(), path)


def read_expansion(path) -> ExpansionReport:
    return ExpansionReport.from_dict(load_json(path))


def write_residuals(samples: Sequence[Sequence[float]], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESIDUAL_COLUMNS)
        for s in samples:
            w.writerow([fmt(x) for x in s])


def read_residuals(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != RESIDUAL_COLUMNS:
        raise ConfigError(f"unexpected residual header {rows[0]}")
    return [tuple(float(x) for x in row) for row in rows[1:]]
