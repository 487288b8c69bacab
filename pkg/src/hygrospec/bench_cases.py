"""Benchmark case definitions, configuration files, measured data and sweeps."""

from __future__ import annotations

import copy
import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .cheb_core import QuadratureRule
from .dae_integrator import IntegratorConfig, Trajectory, solve_dae
from .imex_fd import FDGrid, run_imex
from .materials import BUILTIN_FITS, DimlessCoefficientSet, saturation_pressure
from .postproc import FieldSolution, compute_errors, reconstruct
from .problem import (
    BUILTIN_AMBIENTS,
    BUILTIN_RAIN,
    ConfigurationError,
    ConstantAmbient,
    DimensionlessProblem,
    PhysicalBoundary,
    PhysicalCase,
    PolynomialProfile,
    ReferenceScales,
    TabulatedAmbient,
    nondimensionalize,
)
from .spectral_rom import SpectralSystem, assemble_dae

log = logging.getLogger(__name__)

DEFAULT_SECTIONS = {
    "output": {"dt_star": 0.1, "n_x": 101},
    "spectral": {"modes": 10, "quad_nodes": None, "rtol": 1e-5, "atol": 1e-5},
    "imex": {"dx_star": 1e-2, "dt_star": 1e-2},
    "oracle": {"modes": 20, "tol": 1e-8, "imex_dx_star": 2.5e-3, "imex_dt_star": 1e-3, "agreement": 5e-4},
}


class ParseError(ValueError):
    """Malformed measurement file; the message names the offending line."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


# --------------------------------------------------------------------------
# configuration


def load_schema() -> dict:
    text = resources.files("hygrospec").joinpath("case_config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_config(data: dict) -> None:
    """Schema plus semantic checks; raises ConfigurationError."""
    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid case config at {where}: {exc.message}") from exc
    for layer in data["layers"]:
        m = layer["material"]
        if isinstance(m, str) and m not in BUILTIN_FITS:
            raise ConfigurationError(f"unknown material {m!r}; builtin: {sorted(BUILTIN_FITS)}")
    for side in ("left", "right"):
        b = data["boundaries"][side]
        amb = b["ambient"]
        if "builtin" in amb and amb["builtin"] not in BUILTIN_AMBIENTS:
            raise ConfigurationError(f"unknown ambient {amb['builtin']!r}")
        rain = b.get("rain")
        if rain is not None and rain["builtin"] not in BUILTIN_RAIN:
            raise ConfigurationError(f"unknown rain model {rain['builtin']!r}")
        if b["kind"] == "robin" and ("h_M_s_per_m" not in b or "h_T_W_per_m2K" not in b):
            raise ConfigurationError(f"{side} Robin boundary needs h_M_s_per_m and h_T_W_per_m2K")


@dataclass
class CaseConfig:
    """A validated case description (plain JSON data plus its base directory)."""

    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "CaseConfig":
        d = copy.deepcopy(data)
        validate_config(d)
        for sec, defaults in DEFAULT_SECTIONS.items():
            merged = dict(defaults)
            merged.update(d.get(sec, {}))
            d[sec] = merged
        for side in ("left", "right"):
            d["boundaries"][side].setdefault("rain", None)
        validate_config(d)
        return cls(d, Path(base_dir) if base_dir is not None else Path.cwd())

    @classmethod
    def load(cls, path) -> "CaseConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    # convenience accessors
    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def scales(self) -> ReferenceScales:
        r = self.data["reference"]
        return ReferenceScales(
            T_ref=r["T_ref_K"], P_v_ref=r["P_v_ref_Pa"], L_ref=self.total_length,
            t_ref=r["t_ref_s"], k_M_ref=r["k_M_ref_s"], k_T_ref=r["k_T_ref_W_per_mK"],
        )

    @property
    def total_length(self) -> float:
        return float(sum(l["length_m"] for l in self.data["layers"]))

    @property
    def horizon_star(self) -> float:
        return self.data["horizon_s"] / self.data["reference"]["t_ref_s"]

    def output_times(self) -> np.ndarray:
        dt = self.data["output"]["dt_star"]
        n = int(round(self.horizon_star / dt))
        if abs(n * dt - self.horizon_star) > 1e-9 * max(1.0, self.horizon_star):
            raise ConfigurationError("horizon is not a multiple of the output step")
        return np.round(np.arange(n + 1) * dt, 12)

    def output_x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.data["output"]["n_x"])

    def with_overrides(self, **sections) -> "CaseConfig":
        d = self.to_dict()
        for sec, vals in sections.items():
            d[sec].update(vals)
        return CaseConfig.from_dict(d, self.base_dir)


# --------------------------------------------------------------------------
# builtin cases

_REF_LOAD_BEARING = {
    "T_ref_K": 293.15, "P_v_ref_Pa": 1166.9, "t_ref_s": 3600.0,
    "k_M_ref_s": 5.4712e-9, "k_T_ref_W_per_mK": 0.5021,
}


def _case1() -> dict:
    return {
        "name": "case1",
        "description": "single load-bearing layer under sinusoidal ambient conditions",
        "reference": dict(_REF_LOAD_BEARING),
        "layers": [{"length_m": 0.1, "material": "load_bearing_fit"}],
        "boundaries": {
            "left": {"kind": "robin", "h_M_s_per_m": 2e-7, "h_T_W_per_m2K": 25.0,
                     "ambient": {"builtin": "case1_left"}, "rain": None},
            "right": {"kind": "robin", "h_M_s_per_m": 3e-8, "h_T_W_per_m2K": 8.0,
                      "ambient": {"builtin": "case1_right"}, "rain": None},
        },
        "initial": {"uniform": {"T_K": 293.0, "P_v_Pa": 1160.0}},
        "horizon_s": 7 * 24 * 3600.0,
        "output": {"dt_star": 0.1, "n_x": 101},
        "spectral": {"modes": 10, "quad_nodes": 15, "rtol": 1e-5, "atol": 1e-5},
        "imex": {"dx_star": 1e-2, "dt_star": 1e-2},
    }


def _case2() -> dict:
    d = _case1()
    d["name"] = "case2"
    d["description"] = "load-bearing layer with a finishing layer, driving rain on the left"
    d["layers"] = [
        {"length_m": 0.08, "material": "load_bearing_fit"},
        {"length_m": 0.02, "material": "finishing_fit"},
    ]
    d["boundaries"]["left"]["rain"] = {"builtin": "case2"}
    d["initial"] = {"uniform": {"T_K": 293.15, "P_v_Pa": 1160.0}}
    d["spectral"] = {"modes": 8, "quad_nodes": 13, "rtol": 1e-5, "atol": 1e-5}
    return d


VALIDATION_U0 = (1.015, -0.01621, -0.1143, 0.1688, -0.08806)
VALIDATION_V0 = (1.092, 0.08969, -1.053, 1.188, -0.408)


def _validation() -> dict:
    return {
        "name": "validation",
        "description": "wood-fibre wall with Dirichlet data (synthetic stand-in for measurements)",
        "reference": {
            "T_ref_K": 293.15, "P_v_ref_Pa": 1166.9, "t_ref_s": 3600.0,
            "k_M_ref_s": 3.34e-11, "k_T_ref_W_per_mK": 6.98e-2,
        },
        "layers": [{"length_m": 0.16, "material": "wood_fibre_fit"}],
        "boundaries": {
            "left": {"kind": "dirichlet", "ambient": {"builtin": "validation_synthetic_left"}, "rain": None},
            "right": {"kind": "dirichlet", "ambient": {"builtin": "validation_synthetic_right"}, "rain": None},
        },
        "initial": {"polynomial": {"u": list(VALIDATION_U0), "v": list(VALIDATION_V0)}},
        "horizon_s": 14 * 24 * 3600.0,
        "output": {"dt_star": 0.1, "n_x": 101},
        "spectral": {"modes": 8, "quad_nodes": 13, "rtol": 1e-5, "atol": 1e-5},
        "imex": {"dx_star": 1e-2, "dt_star": 1e-2},
    }


BUILTIN_CASES = {"case1": _case1, "case2": _case2, "validation": _validation}


def builtin_case(name: str) -> CaseConfig:
    """Fully populated configuration of a builtin benchmark."""
    try:
        factory = BUILTIN_CASES[name]
    except KeyError:
        raise ConfigurationError(f"unknown case {name!r}; choose from {sorted(BUILTIN_CASES)}") from None
    return CaseConfig.from_dict(factory())


def rain_peak_physical(cfg: CaseConfig, side: str = "left", t_star: float = 42.0) -> float:
    """Dimensional rain flow [kg/(m^2 s)] at t_star."""
    rain = cfg.data["boundaries"][side]["rain"]
    if rain is None:
        return 0.0
    return float(BUILTIN_RAIN[rain["builtin"]](t_star)) * cfg.scales.flow_scale


# --------------------------------------------------------------------------
# measured series


@dataclass(frozen=True)
class MeasuredSeries:
    time_s: np.ndarray
    values: np.ndarray
    position_m: float
    uncertainty: Optional[np.ndarray] = None
    quantity: str = "value"

    def __call__(self, t_s):
        t = np.asarray(t_s, dtype=float)
        if np.any(t < self.time_s[0] - 1e-9) or np.any(t > self.time_s[-1] + 1e-9):
            raise ValueError(f"time outside [{self.time_s[0]}, {self.time_s[-1]}] s")
        out = np.interp(t, self.time_s, self.values)
        return float(out) if out.ndim == 0 else out


def read_csv_table(path) -> dict[str, np.ndarray]:
    """Read a numeric CSV with a header row into column arrays.

    Non-numeric columns are returned as string arrays.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(path, 1, "empty file")
    header = [h.strip() for h in rows[0]]
    cols: dict[str, list] = {h: [] for h in header}
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(path, ln, f"expected {len(header)} fields, got {len(row)}")
        for h, val in zip(header, row):
            cols[h].append(val)
    out = {}
    for h, vals in cols.items():
        try:
            out[h] = np.array([float(v) for v in vals])
        except ValueError:
            out[h] = np.array(vals)
    return out


def write_csv_table(path, columns: dict, fmt: str = "%.10g") -> None:
    """Write equal-length columns with a header; deterministic formatting."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("columns must have equal length")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([fmt % a[i] if np.issubdtype(a.dtype, np.number) else a[i] for a in arrays])


def ingest_measurements(path, value_column: str = "value", quantity: str = "value") -> list[MeasuredSeries]:
    """Parse a ``time_s,value,position_m[,uncertainty]`` file, one series per position.

    ``quantity='relative_humidity'`` additionally requires values in [0, 1].
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ParseError(path, 0, "file not found") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError(path, 1, "empty file")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    needed = ["time_s", value_column, "position_m"]
    missing = [c for c in needed if c not in header]
    if missing:
        raise ParseError(path, 1, f"missing columns {missing}")
    ic = {c: header.index(c) for c in header}
    has_unc = "uncertainty" in ic
    data: dict[float, dict[str, list]] = {}
    last_t: dict[float, tuple[float, int]] = {}
    n_rows = 0
    for ln, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(path, ln, f"expected {len(header)} fields, got {len(row)}")
        try:
            t = float(row[ic["time_s"]])
            val = float(row[ic[value_column]])
            pos = float(row[ic["position_m"]])
            unc = float(row[ic["uncertainty"]]) if has_unc else None
        except ValueError as exc:
            raise ParseError(path, ln, f"non-numeric field ({exc})") from None
        if not all(np.isfinite(z) for z in (t, val, pos) + ((unc,) if unc is not None else ())):
            raise ParseError(path, ln, "non-finite value")
        if quantity == "relative_humidity" and not (0.0 <= val <= 1.0):
            raise ParseError(path, ln, f"relative humidity {val} outside [0, 1]")
        if pos in last_t and t <= last_t[pos][0]:
            raise ParseError(path, ln, f"time {t} s is not increasing (previous {last_t[pos][0]} s on line {last_t[pos][1]})")
        last_t[pos] = (t, ln)
        s = data.setdefault(pos, {"t": [], "v": [], "u": []})
        s["t"].append(t)
        s["v"].append(val)
        s["u"].append(unc)
        n_rows += 1
    if n_rows == 0:
        raise ParseError(path, 2, "no data rows")
    out = []
    for pos in sorted(data):
        s = data[pos]
        unc = np.array(s["u"], dtype=float) if has_unc else None
        out.append(MeasuredSeries(np.array(s["t"]), np.array(s["v"]), pos, unc, quantity))
    return out


def _select(series: list[MeasuredSeries], position: Optional[float], path) -> MeasuredSeries:
    if position is None:
        if len(series) != 1:
            raise ConfigurationError(f"{path}: several positions present; set position_m")
        return series[0]
    for s in series:
        if abs(s.position_m - position) < 1e-9:
            return s
    raise ConfigurationError(f"{path}: no series at position {position} m")


def tabulated_ambient(spec: dict, scales: ReferenceScales, base_dir: Path) -> TabulatedAmbient:
    """Dimensionless ambient from temperature and humidity CSV files."""
    pos = spec.get("position_m")
    tpath = (base_dir / spec["temperature_csv"]).resolve()
    hpath = (base_dir / spec["humidity_csv"]).resolve()
    hq = spec.get("humidity_quantity", "vapour_pressure_Pa")
    T = _select(ingest_measurements(tpath, quantity="temperature"), pos, tpath)
    H = _select(ingest_measurements(hpath, quantity="relative_humidity" if hq == "relative_humidity" else "vapour_pressure"), pos, hpath)
    if hq == "relative_humidity":
        T_at_h = np.interp(H.time_s, T.time_s, T.values)
        P_v = H.values * saturation_pressure(T_at_h)
    else:
        P_v = H.values
    return TabulatedAmbient(
        t_u=T.time_s / scales.t_ref, u=T.values / scales.T_ref,
        t_v=H.time_s / scales.t_ref, v=P_v / scales.P_v_ref,
        source=f"{tpath.name},{hpath.name}",
    )


# --------------------------------------------------------------------------
# problem construction and solver drivers


def _material(spec) -> DimlessCoefficientSet:
    if isinstance(spec, str):
        return BUILTIN_FITS[spec]()
    return DimlessCoefficientSet.from_dict(spec)


def build_problem(cfg: CaseConfig) -> DimensionlessProblem:
    d = cfg.data
    scales = cfg.scales

    def ambient(spec):
        if "builtin" in spec:
            return BUILTIN_AMBIENTS[spec["builtin"]]()
        if "constant" in spec:
            c = spec["constant"]
            return ConstantAmbient(c["T_K"] / scales.T_ref, c["P_v_Pa"] / scales.P_v_ref)
        return tabulated_ambient(spec["tabulated"], scales, cfg.base_dir)

    def boundary(b):
        rain = BUILTIN_RAIN[b["rain"]["builtin"]] if b.get("rain") else None
        return PhysicalBoundary(
            kind=b["kind"], h_M=b.get("h_M_s_per_m", 0.0), h_T=b.get("h_T_W_per_m2K", 0.0),
            ambient=ambient(b["ambient"]), rain=rain,
        )

    init = d["initial"]
    if "uniform" in init:
        T0, P0 = init["uniform"]["T_K"], init["uniform"]["P_v_Pa"]
    else:
        T0 = PolynomialProfile(tuple(init["polynomial"]["u"]))
        P0 = PolynomialProfile(tuple(init["polynomial"]["v"]))
    mats = []
    for layer in d["layers"]:
        m = _material(layer["material"])
        if abs(m.k_M_ref - scales.k_M_ref) > 1e-9 * scales.k_M_ref or abs(m.k_T_ref - scales.k_T_ref) > 1e-9 * scales.k_T_ref:
            raise ConfigurationError(f"material {m.name} uses reference values different from the case")
        mats.append(m)
    case = PhysicalCase(
        layer_lengths=tuple(l["length_m"] for l in d["layers"]),
        materials=tuple(mats),
        left=boundary(d["boundaries"]["left"]),
        right=boundary(d["boundaries"]["right"]),
        horizon_s=d["horizon_s"],
        scales=scales,
        T0=T0,
        P_v0=P0,
        name=d["name"],
    )
    return nondimensionalize(case)


@dataclass
class SolverRun:
    fields: FieldSolution
    wall_s: float
    solver: str
    dof: int
    system: Optional[SpectralSystem] = None
    trajectory: Optional[Trajectory] = None
    problem: Optional[DimensionlessProblem] = None


def run_spectral(cfg: CaseConfig, modes: Optional[int] = None, quad_nodes: Optional[int] = None,
                 rtol: Optional[float] = None, atol: Optional[float] = None,
                 problem: Optional[DimensionlessProblem] = None) -> SolverRun:
    sp = cfg.data["spectral"]
    N = int(modes if modes is not None else sp["modes"])
    if quad_nodes is None:
        quad_nodes = sp["quad_nodes"] if (modes is None or modes == sp["modes"]) else None
    m = int(quad_nodes) if quad_nodes else N + 5
    rtol = float(rtol if rtol is not None else sp["rtol"])
    atol = float(atol if atol is not None else sp["atol"])
    problem = problem or build_problem(cfg)
    t_out = cfg.output_times()
    start = time.perf_counter()
    system = assemble_dae(problem, N - 1, QuadratureRule(m))
    traj = solve_dae(system.rhs, system.mass, system.initial_state(), t_out,
                     IntegratorConfig(rtol=rtol, atol=atol), constraint=system.algebraic_residuals,
                     jac=system.jacobian)
    fields_ = reconstruct(traj, system, cfg.output_x())
    wall = time.perf_counter() - start
    fields_.meta.update({"modes": N, "quad_nodes": m, "rtol": rtol, "atol": atol})
    return SolverRun(fields_, wall, "spectral", system.size, system, traj, problem)


def run_fd(cfg: CaseConfig, dx: Optional[float] = None, dt: Optional[float] = None,
           problem: Optional[DimensionlessProblem] = None) -> SolverRun:
    im = cfg.data["imex"]
    grid = FDGrid(float(dx if dx is not None else im["dx_star"]), float(dt if dt is not None else im["dt_star"]))
    problem = problem or build_problem(cfg)
    start = time.perf_counter()
    fs = run_imex(problem, grid, cfg.output_times())
    wall = time.perf_counter() - start
    return SolverRun(fs.sample(cfg.output_x()), wall, "imex", grid.dof, problem=problem)


def reference_solution(cfg: CaseConfig, kind: str = "spectral") -> SolverRun:
    """High-resolution oracle: spectral (many modes, tight tolerance) or fine IMEX."""
    o = cfg.data["oracle"]
    if kind == "spectral":
        return run_spectral(cfg, modes=o["modes"], rtol=o["tol"], atol=o["tol"])
    if kind == "imex":
        return run_fd(cfg, dx=o["imex_dx_star"], dt=o["imex_dt_star"])
    raise ConfigurationError(f"unknown reference kind {kind!r}")


def oracle_agreement(spectral_ref: SolverRun, imex_ref: SolverRun) -> dict:
    """eps_inf between the two oracles, per field."""
    return compute_errors(spectral_ref.fields, imex_ref.fields).eps_inf


# --------------------------------------------------------------------------
# convergence sweep


@dataclass
class SweepRow:
    N: int
    eps_inf_u: float
    eps_inf_v: float
    wall_s: float
    status: str = "ok"


def _sweep_worker(args):
    data, base_dir, N, ref_u, ref_v = args
    cfg = CaseConfig(data, Path(base_dir))
    try:
        run = run_spectral(cfg, modes=N)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        return SweepRow(N, float("nan"), float("nan"), float("nan"), f"failed: {exc}")
    rep = compute_errors({"u": run.fields.u, "v": run.fields.v}, {"u": ref_u, "v": ref_v})
    return SweepRow(N, rep.eps_inf["u"], rep.eps_inf["v"], run.wall_s)


def sweep_workers() -> int:
    try:
        return max(1, int(os.environ.get("HYGROSPEC_THREADS", "1")))
    except ValueError:
        return 1


def convergence_sweep(cfg: CaseConfig, modes: Sequence[int], reference="spectral",
                      workers: Optional[int] = None) -> list[SweepRow]:
    """eps_inf against a reference for each mode count; failures are recorded, not raised.

    ``reference`` is 'spectral', 'imex' or a precomputed :class:`FieldSolution`.
    """
    if isinstance(reference, FieldSolution):
        ref = reference
    else:
        ref = reference_solution(cfg, reference).fields
    workers = workers or sweep_workers()
    jobs = [(cfg.data, str(cfg.base_dir), int(N), ref.u, ref.v) for N in modes]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            rows = list(ex.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    return sorted(rows, key=lambda r: r.N)
