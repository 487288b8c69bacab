"""Command-line front end.

Commands
--------
run          solve one case with the spectral or the IMEX solver
compare      spectral and IMEX against the reference oracle
sweep        reference error versus the number of modes
export-case  write a builtin case as a JSON config

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bench_cases import (
    BUILTIN_CASES,
    CaseConfig,
    ParseError,
    SolverRun,
    builtin_case,
    convergence_sweep,
    oracle_agreement,
    reference_solution,
    run_fd,
    run_spectral,
    write_csv_table,
)
from .postproc import compute_errors, fluxes, fluxes_from_fields, tail_diagnostics
from .problem import ConfigurationError

log = logging.getLogger("hygrospec")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

DETERMINISM_NOTE = "no random components; identical config and software give bit-identical CSV files"


class SolverError(RuntimeError):
    """Wraps any numerical failure so main() can map it to exit code 3."""


def load_case(arg: str) -> tuple[CaseConfig, str]:
    """A config path, or the name of a builtin case when no such file exists."""
    path = Path(arg)
    if path.is_file():
        return CaseConfig.load(path), str(path.resolve())
    if arg in BUILTIN_CASES:
        return builtin_case(arg), f"builtin:{arg}"
    raise ConfigurationError(f"config file not found: {arg}")


class Manifest:
    """Collects produced files and stage timings; written last."""

    def __init__(self, command: str, config: str, out: Path, solver: Optional[str] = None):
        self.out = out
        self.data = {
            "command": command,
            "config": config,
            "solver": solver,
            "version": __version__,
            "determinism": DETERMINISM_NOTE,
            "output_dir": str(out.resolve()),
            "artifacts": [],
            "wall_time_s": {},
        }

    def stage(self, name: str, seconds: float) -> None:
        self.data["wall_time_s"][name] = round(float(seconds), 6)

    def add(self, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.data["artifacts"].append({"file": path.name, "sha256": digest})

    def write(self) -> Path:
        path = self.out / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2) + "\n", encoding="utf-8")
        return path


# --------------------------------------------------------------------------
# writers


def write_fields(path: Path, run: SolverRun, cfg: CaseConfig) -> None:
    """Long format: one row per (time, position)."""
    s = cfg.scales
    fs = run.fields
    nt, nx = fs.u.shape
    write_csv_table(path, {
        "time_s": np.repeat(fs.t * s.t_ref, nx),
        "position_m": np.tile(fs.x * s.L_ref, nt),
        "T_K": fs.temperature(s).ravel(),
        "P_v_Pa": fs.vapour_pressure(s).ravel(),
    })


def write_fluxes(path: Path, run: SolverRun, cfg: CaseConfig) -> None:
    """Surface fluxes at both faces of the wall, positive towards +x."""
    s = cfg.scales
    series = []
    for x0 in (0.0, 1.0):
        if run.system is not None:
            series.append(fluxes(run.trajectory, run.system, x0))
        else:
            series.append(fluxes_from_fields(run.fields, run.problem, x0))
    write_csv_table(path, {
        "time_s": np.concatenate([f.t * s.t_ref for f in series]),
        "position_m": np.concatenate([np.full(f.t.size, f.x0 * s.L_ref) for f in series]),
        "q_s_W_per_m2": np.concatenate([f.q_s for f in series]),
        "q_l_W_per_m2": np.concatenate([f.q_l for f in series]),
        "g_kg_per_m2s": np.concatenate([f.g for f in series]),
    })


def write_coefficients(path: Path, run: SolverRun, cfg: CaseConfig) -> None:
    """Highest retained Chebyshev coefficient of each field, per layer."""
    tails = tail_diagnostics(run.trajectory, run.system)
    nt, nl = tails["a_n"].shape
    write_csv_table(path, {
        "time_s": np.repeat(run.trajectory.t * cfg.scales.t_ref, nl),
        "layer": np.tile(np.arange(nl), nt),
        "abs_a_n": tails["a_n"].ravel(),
        "abs_b_n": tails["b_n"].ravel(),
    })


# --------------------------------------------------------------------------
# commands


def _solve(cfg: CaseConfig, solver: str) -> SolverRun:
    try:
        if solver == "spectral":
            return run_spectral(cfg)
        return run_fd(cfg)
    except ConfigurationError:
        raise
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"{solver} solver failed: {exc}") from exc


def _reference(cfg: CaseConfig, kind: str) -> SolverRun:
    try:
        return reference_solution(cfg, kind)
    except ConfigurationError:
        raise
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"reference ({kind}) failed: {exc}") from exc


def cmd_run(args) -> int:
    cfg, src = load_case(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("run", src, out, args.solver)
    run = _solve(cfg, args.solver)
    man.stage("solve", run.wall_s)
    t0 = time.perf_counter()
    for name, writer in (("fields.csv", write_fields), ("fluxes.csv", write_fluxes)):
        writer(out / name, run, cfg)
        man.add(out / name)
    if run.system is not None:
        write_coefficients(out / "coefficients.csv", run, cfg)
        man.add(out / "coefficients.csv")
    man.data["dof"] = run.dof
    man.stage("write", time.perf_counter() - t0)
    man.write()
    log.info("%s: %s solver, %d DOF, %.2f s", cfg.name, args.solver, run.dof, run.wall_s)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg, src = load_case(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("compare", src, out, "spectral,imex")
    spec = _solve(cfg, "spectral")
    man.stage("spectral", spec.wall_s)
    imex = _solve(cfg, "imex")
    man.stage("imex", imex.wall_s)
    ref = _reference(cfg, args.reference)
    man.stage("reference", ref.wall_s)
    summary = {"case": cfg.name, "reference": args.reference}
    profile = {"position_m": ref.fields.x * cfg.scales.L_ref}
    for name, run in (("spectral", spec), ("imex", imex)):
        rep = compute_errors(run.fields, ref.fields)
        summary[name] = {**rep.as_dict(), "wall_s": run.wall_s, "dof": run.dof}
        profile[f"{name}_eps2_u"] = rep.eps2_profile["u"]
        profile[f"{name}_eps2_v"] = rep.eps2_profile["v"]
    summary["ratio_imex_over_spectral"] = imex.wall_s / spec.wall_s
    if args.check_oracles:
        other = _reference(cfg, "imex" if args.reference == "spectral" else "spectral")
        man.stage("second_oracle", other.wall_s)
        agree = oracle_agreement(ref, other)
        limit = cfg.data["oracle"]["agreement"]
        summary["oracle_agreement"] = {**{f"eps_inf_{k}": v for k, v in agree.items()},
                                       "limit": limit, "ok": max(agree.values()) <= limit}
    write_csv_table(out / "eps2_profile.csv", profile)
    man.add(out / "eps2_profile.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    man.add(out / "summary.json")
    man.write()
    for name in ("spectral", "imex"):
        log.info("%s: eps_inf_u=%.3g eps_inf_v=%.3g (%.2f s)", name, summary[name]["eps_inf_u"],
                 summary[name]["eps_inf_v"], summary[name]["wall_s"])
    return EXIT_OK


def _parse_modes(text: str) -> list[int]:
    try:
        modes = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigurationError(f"--modes must be a comma-separated list of integers, got {text!r}") from None
    if not modes or min(modes) < 3:
        raise ConfigurationError("--modes needs at least one value, each >= 3")
    return modes


def cmd_sweep(args) -> int:
    cfg, src = load_case(args.config)
    modes = _parse_modes(args.modes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest("sweep", src, out, "spectral")
    ref = _reference(cfg, args.reference)
    man.stage("reference", ref.wall_s)
    t0 = time.perf_counter()
    rows = convergence_sweep(cfg, modes, reference=ref.fields, workers=args.workers)
    man.stage("sweep", time.perf_counter() - t0)
    write_csv_table(out / "sweep.csv", {
        "N": np.array([r.N for r in rows]),
        "eps_inf_u": np.array([r.eps_inf_u for r in rows]),
        "eps_inf_v": np.array([r.eps_inf_v for r in rows]),
        "wall_s": np.array([r.wall_s for r in rows]),
        "status": np.array([r.status for r in rows]),
    })
    man.add(out / "sweep.csv")
    axes = {"x": {"column": "N", "label": "number of modes"},
            "y": {"columns": ["eps_inf_u", "eps_inf_v"], "label": "eps_inf", "scale": "log"}}
    (out / "sweep_axes.json").write_text(json.dumps(axes, indent=2) + "\n", encoding="utf-8")
    man.add(out / "sweep_axes.json")
    man.write()
    failed = [r.N for r in rows if r.status != "ok"]
    if failed:
        log.warning("runs failed for N=%s", failed)
    return EXIT_OK


def cmd_export_case(args) -> int:
    cfg = builtin_case(args.name)
    if args.out == "-":
        sys.stdout.write(cfg.to_json())
    else:
        cfg.save(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    p = argparse.ArgumentParser(prog="hygrospec", description="1D coupled heat and moisture transfer in walls",
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve one case", parents=[common])
    r.add_argument("config", help="JSON config path or builtin case name")
    r.add_argument("--solver", choices=("spectral", "imex"), default="spectral")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="spectral and IMEX errors against the reference oracle", parents=[common])
    c.add_argument("config")
    c.add_argument("--reference", choices=("spectral", "imex"), default="spectral")
    c.add_argument("--check-oracles", action="store_true", help="also run the other oracle and report their agreement")
    c.add_argument("--out", default="out")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="reference error versus number of modes", parents=[common])
    s.add_argument("config")
    s.add_argument("--modes", default="4,6,8,10,13,16")
    s.add_argument("--reference", choices=("spectral", "imex"), default="spectral")
    s.add_argument("--workers", type=int, default=None, help="parallel runs (default: HYGROSPEC_THREADS or 1)")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("export-case", help="write a builtin case as JSON", parents=[common])
    e.add_argument("name", choices=sorted(BUILTIN_CASES))
    e.add_argument("--out", default="-", help="output path, '-' for stdout")
    e.set_defaults(func=cmd_export_case)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
