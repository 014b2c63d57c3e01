"""Command-line entry point: ``polylab <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 bracket
failure, 5 verification failure.
"""

from __future__ import annotations

import datetime as _dt
import functools
import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import storage
from .errors import (
    BracketFailure,
    ConfigError,
    IndeterminateShot,
    InvalidSpec,
    NonfiniteState,
    NonpositiveU,
    NotSeparatrix,
    NotSurvived,
    OutOfRange,
    TailNotIntegrable,
)
from .integrator import IntegrationControls, TerminationKind, evaluate, integrate
from .radial_system import Exp, NegPower, ProblemSpec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BRACKET, EXIT_VERIFY = 0, 2, 3, 4, 5

NUMERIC_ERRORS = (NotSeparatrix, NonfiniteState, NonpositiveU, IndeterminateShot, TailNotIntegrable,
                  OutOfRange, NotSurvived)


class Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code, message):
    raise Failure(code, message)


def with_config(fn):
    """Merge a ``--config`` JSON file over the flags; unknown keys are rejected."""

    @functools.wraps(fn)
    def wrapper(**kwargs):
        path = kwargs.pop("config", None)
        try:
            if path is not None:
                try:
                    data = json.loads(Path(path).read_text(encoding="utf-8"))
                except (OSError, json.JSONDecodeError) as exc:
                    raise ConfigError(f"cannot read config {path}: {exc}") from exc
                if not isinstance(data, dict):
                    raise ConfigError("config must be a JSON object")
                # "seed" is accepted for forward compatibility; nothing here is random
                data.pop("seed", None)
                unknown = sorted(set(data) - set(kwargs))
                if unknown:
                    raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
                kwargs.update(data)
            return fn(**kwargs)
        except Failure as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.code)
        except (ConfigError, InvalidSpec) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except BracketFailure as exc:
            click.echo(f"bracket failure: {exc}", err=True)
            sys.exit(EXIT_BRACKET)
        except NUMERIC_ERRORS as exc:
            click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)

    return wrapper


def _require(name, value):
    if value is None:
        raise ConfigError(f"missing required field '{name}'")
    return value


def _controls(rtol, atol, rmax, default_rmax) -> IntegrationControls:
    kw = {"r_max": float(rmax if rmax is not None else default_rmax)}
    if rtol is not None:
        kw["rtol"] = float(rtol)
    if atol is not None:
        kw["atol"] = float(atol)
    try:
        return IntegrationControls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _floats(text) -> Optional[list]:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"not a list of numbers: {text!r}") from exc


def _emit(obj) -> None:
    click.echo(json.dumps(storage._clean(obj), sort_keys=True, indent=2))


def common(fn):
    for opt in reversed([
        click.option("--rtol", type=float, default=None, help="Relative tolerance."),
        click.option("--atol", type=float, default=None, help="Absolute tolerance."),
        click.option("--rmax", type=float, default=None, help="Integration horizon."),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
        click.option("--force", is_flag=True, default=False, help="Overwrite existing outputs."),
        click.option("--config", type=click.Path(dir_okay=False), default=None,
                     help="JSON file; its keys override the flags."),
    ]):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Radial solutions of polyharmonic equations with exponential and negative-power nonlinearities."""


@main.command("integrate")
@click.option("--dim", type=int, default=None, help="Space dimension N.")
@click.option("--order", type=int, default=1, help="Polyharmonic order m.")
@click.option("--beta", type=float, default=None, help="Delta u(0) for m = 1.")
@click.option("--alpha", type=float, default=0.0, help="u(0) for the exponential case.")
@click.option("--p", "p", type=float, default=None, help="Negative power p (selects -u^{-p}).")
@click.option("--init", default=None, help="Full init (u(0), Delta u(0), ...), comma separated.")
@common
@with_config
def cmd_integrate(dim, order, beta, alpha, p, init, rtol, atol, rmax, out, force):
    """Integrate one radial shot and write trajectory.csv + trajectory.json."""
    N = int(_require("dim", dim))
    values = _floats(init)
    if values is None:
        if p is not None:
            raise ConfigError("negative power runs need --init a,b")
        values = [float(alpha), float(_require("beta", beta))]
    nonlin = NegPower(float(p)) if p is not None else Exp()
    spec = ProblemSpec(N, int(order), nonlin, tuple(values))
    controls = _controls(rtol, atol, rmax, 40.0)
    outdir = storage.prepare_output_dir(out or "polylab_out", force, ["trajectory.csv", "trajectory.json"])
    traj = integrate(spec, controls)
    storage.write_trajectory(traj, outdir / "trajectory.csv")
    click.echo(f"{traj.termination} nodes={len(traj.r)} out={outdir}")
    if traj.termination.kind in (TerminationKind.STEP_UNDERFLOW, TerminationKind.STEP_LIMIT):
        _fail(EXIT_NUMERIC, f"integration failed: {traj.termination}")


@main.command("shoot")
@click.option("--dim", type=int, default=None, help="Space dimension N >= 3.")
@click.option("--tol-beta", "--tol", "tol_beta", type=float, default=1e-8, help="Bracket width.")
@common
@with_config
def cmd_shoot(dim, tol_beta, rtol, atol, rmax, out, force):
    """Bisect for the separatrix value beta_0 and print the bracket as JSON."""
    from .shooting import default_horizon, find_separatrix

    N = int(_require("dim", dim))
    controls = _controls(rtol, atol, rmax, default_horizon(N))
    res = find_separatrix(N, controls.r_max, float(tol_beta), controls)
    doc = res.to_dict()
    if out:
        names = ["separatrix.json", "separatrix_trajectory.csv", "witness_lo.csv", "witness_hi.csv"]
        outdir = storage.prepare_output_dir(out, force, names)
        storage.write_trajectory(res.trajectory(), outdir / "separatrix_trajectory.csv")
        storage.write_trajectory(res.witness_lo, outdir / "witness_lo.csv")
        storage.write_trajectory(res.witness_hi, outdir / "witness_hi.csv")
        doc["trajectory_files"] = {"midpoint": "separatrix_trajectory.csv", "lo": "witness_lo.csv", "hi": "witness_hi.csv"}
        storage.dump_json(doc, outdir / "separatrix.json")
    _emit(doc)


@main.command("scan-n2")
@click.option("--order", type=int, default=1, help="m = 1 (beta grid) or m = 2 (fixed lattice).")
@click.option("--beta-min", type=float, default=-100.0)
@click.option("--beta-max", type=float, default=10.0)
@click.option("--count", type=int, default=31)
@click.option("--workers", type=int, default=1)
@common
@with_config
def cmd_scan_n2(order, beta_min, beta_max, count, workers, rtol, atol, rmax, out, force):
    """Shots in dimension two; every one should blow up."""
    from .shooting import blowup_radii_nonincreasing, m2_lattice, scan_n2

    controls = _controls(rtol, atol, rmax, 200.0)
    inits = np.linspace(beta_min, beta_max, int(count)).tolist() if order == 1 else m2_lattice()
    outdir = storage.prepare_output_dir(out or "polylab_out", force, ["scan_n2.csv"])
    recs = scan_n2(inits, controls, m=int(order), workers=int(workers))
    storage.write_scan(recs, outdir / "scan_n2.csv")
    falsified = [r.init for r in recs if r.falsification]
    _emit({"records": len(recs), "blowup": sum(r.classification.is_blowup for r in recs),
           "falsifications": [list(x) for x in falsified],
           "radii_nonincreasing": blowup_radii_nonincreasing(recs) if order == 1 else None})


@main.command("negpower-scan")
@click.option("--p", "p", default=None, help="One or more powers, comma separated.")
@click.option("--dim", type=int, default=3)
@click.option("--a-grid", default=None, help="u(0) values (default 0.5,1,2,4).")
@click.option("--b-grid", default=None, help="Delta u(0) values (default -2,-1,0,1,2,4).")
@click.option("--workers", type=int, default=1)
@common
@with_config
def cmd_negpower_scan(p, dim, a_grid, b_grid, workers, rtol, atol, rmax, out, force):
    """Extinction scans for Delta^2 u = -u^{-p}."""
    from .negpower import DEFAULT_A_GRID, DEFAULT_B_GRID, SURVIVAL_HORIZON, extinction_scan

    powers = _floats(_require("p", p))
    controls = _controls(rtol, atol, rmax, SURVIVAL_HORIZON)
    names = [f"extinction_p{x:g}.csv" for x in powers] + ["falsifications.json"]
    outdir = storage.prepare_output_dir(out or "polylab_out", force, names)
    a = _floats(a_grid) or list(DEFAULT_A_GRID)
    b = _floats(b_grid) or list(DEFAULT_B_GRID)
    summary, flagged = {}, []
    for x in powers:
        recs = extinction_scan(x, a, b, controls, N=int(dim), workers=int(workers))
        storage.write_extinction_scan(recs, outdir / f"extinction_p{x:g}.csv")
        counts = {}
        for r in recs:
            counts[r.outcome.value] = counts.get(r.outcome.value, 0) + 1
        summary[f"{x:g}"] = counts
        flagged += [r.to_dict() for r in recs if r.falsification]
    storage.dump_json({"falsification_candidates": flagged}, outdir / "falsifications.json")
    _emit({"outcomes": summary, "falsification_candidates": len(flagged)})


@main.command("expand")
@click.option("--dim", type=int, default=3, help="3 for the linear expansion, >= 5 for the log limit.")
@click.option("--tol-beta", "--tol", "tol_beta", type=float, default=None)
@click.option("--trajectory", type=click.Path(dir_okay=False), default=None,
              help="Use a saved trajectory CSV instead of bisecting.")
@common
@with_config
def cmd_expand(dim, tol_beta, trajectory, rtol, atol, rmax, out, force):
    """Separatrix asymptotics: expansion.json and residuals.csv (N = 3) or log_limit.json (N >= 5)."""
    from .asymptotics import (
        expansion_coefficients,
        integral_representation_check,
        log_limit_check,
        richardson_log_limit,
    )
    from .shooting import default_horizon, find_separatrix

    companion = None
    if trajectory is not None:
        traj = storage.read_trajectory(trajectory)
        if traj.termination.kind is not TerminationKind.REACHED_HORIZON:
            raise NotSeparatrix(f"input trajectory ended with {traj.termination}")
        N = traj.spec.N
    else:
        N = int(dim)
        if N != 3 and N < 5:
            raise ConfigError("expand supports N = 3 and N >= 5")
        controls = _controls(rtol, atol, rmax, default_horizon(N))
        tol = tol_beta if tol_beta is not None else (1e-8 if N == 3 else 1e-12)
        res = find_separatrix(N, controls.r_max, float(tol), controls)
        traj, companion = res.witness_lo, res.witness_hi
    outdir = storage.prepare_output_dir(out or "polylab_out", force,
                                        ["expansion.json", "residuals.csv", "representation.csv", "log_limit.json", "log_limit.csv"])
    if N == 3:
        rep = expansion_coefficients(traj, companion)
        storage.write_expansion(rep, outdir / "expansion.json")
        storage.write_residuals(rep.residual_samples, outdir / "residuals.csv")
        radii = [x for x in (1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 60.0, 80.0) if x <= traj.r_last]
        rc = integral_representation_check(traj, radii)
        with (outdir / "representation.csv").open("w", encoding="utf-8") as fh:
            fh.write("r,u,u_rep,v,v_rep\n")
            for row in rc.rows:
                fh.write(",".join(storage.fmt(x) for x in row) + "\n")
        _emit({"alpha1": rep.alpha1, "alpha2": rep.alpha2, "alpha3": rep.alpha3, "a": rep.a,
               "a_consistent": rep.a_consistent, "decay_ratio": rep.decay_ratio})
    elif N >= 5:
        ll = log_limit_check(traj)
        rich = richardson_log_limit(traj)
        doc = {"N": N, "estimate": ll.estimate, "target": ll.target, "gap": ll.gap,
               "richardson_estimate": rich.estimate, "richardson_gap": rich.gap,
               "samples": [list(s) for s in ll.samples], "r_max": traj.r_last}
        storage.dump_json(doc, outdir / "log_limit.json")
        rs = np.geomspace(1.0, traj.r_last, 200)
        with (outdir / "log_limit.csv").open("w", encoding="utf-8") as fh:
            fh.write("r,u_plus_4_ln_r\n")
            for r in rs:
                fh.write(f"{storage.fmt(r)},{storage.fmt(evaluate(traj, float(r)).u + 4 * np.log(r))}\n")
        _emit(doc)
    else:
        raise ConfigError("expand supports N = 3 and N >= 5")


@main.command("verify")
@click.option("--checks", default=None, help="Comma-separated check names (default: the full suite).")
@click.option("--list", "list_only", is_flag=True, default=False, help="List check names and exit.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report path (default stdout).")
@click.option("--force", is_flag=True, default=False)
@click.option("--config", type=click.Path(dir_okay=False), default=None)
@with_config
def cmd_verify(checks, list_only, out, force):
    """Run named invariant checks and emit a JSON report."""
    from .checks import DEFAULT_CHECKS, REGISTRY, run_checks

    if list_only:
        for name in REGISTRY:
            click.echo(name + ("" if name in DEFAULT_CHECKS else " (optional)"))
        return
    if checks is None:
        names = list(DEFAULT_CHECKS)
    elif isinstance(checks, (list, tuple)):
        names = [str(x) for x in checks]
    else:
        names = [x.strip() for x in str(checks).split(",") if x.strip()]
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}")
    if out and Path(out).exists() and not force:
        raise ConfigError(f"{out} exists; use --force")
    results = run_checks(names)
    report = {
        "checks": [r.to_dict() for r in results],
        "passed": all(r.passed for r in results),
        "metadata": {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }
    if out:
        storage.dump_json(report, out)
    else:
        _emit(report)
    failing = [r.name for r in results if not r.passed]
    if failing:
        _fail(EXIT_VERIFY, "failing checks: " + ", ".join(failing))


if __name__ == "__main__":  # pragma: no cover
    main()
