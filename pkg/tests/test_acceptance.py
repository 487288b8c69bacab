"""Acceptance criteria, each at its stated tolerance, with one PASS/FAIL line per criterion."""

import copy
import time

import numpy as np

from hygrospec.bench_cases import (
    CaseConfig,
    builtin_case,
    convergence_sweep,
    oracle_agreement,
    rain_peak_physical,
    reference_solution,
    run_spectral,
    write_csv_table,
)
from hygrospec.cheb_core import QuadratureRule, derivative_coeffs, eval_series, quadrature
from hygrospec.dae_integrator import IntegratorConfig, solve_dae
from hygrospec.imex_fd import FDGrid
from hygrospec.materials import constant_fit
from hygrospec.postproc import compute_errors, relative_error, tail_diagnostics
from hygrospec.problem import rain_case2
from hygrospec.spectral_rom import assemble_dae, interface_residuals

from conftest import make_problem, robin, state_from_linear, steady_piecewise_linear


def report(capsys, criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_case1_cross_solver(capsys, case1_spectral, case1_imex, case1_reference, case1_fine_imex):
    spec = compute_errors(case1_spectral.fields, case1_reference.fields).eps_inf
    imex = compute_errors(case1_imex.fields, case1_reference.fields).eps_inf
    agree = oracle_agreement(case1_reference, case1_fine_imex)
    wall = case1_spectral.wall_s + case1_imex.wall_s + case1_reference.wall_s + case1_fine_imex.wall_s
    ok = (spec["u"] <= 1e-4 and spec["v"] <= 1e-3 and imex["u"] <= 5e-5 and imex["v"] <= 5e-4
          and max(agree.values()) <= 5e-4 and wall < 120.0)
    report(capsys, 1, ok,
           f"spectral eps_inf u={spec['u']:.3g} v={spec['v']:.3g} (<=1e-4, 1e-3); "
           f"imex u={imex['u']:.3g} v={imex['v']:.3g} (<=5e-5, 5e-4); "
           f"oracle agreement u={agree['u']:.3g} v={agree['v']:.3g} (<=5e-4); wall {wall:.1f} s (<120)")


def test_criterion_2_spectral_convergence(capsys, case1_cfg, case1_reference):
    modes = list(range(4, 14))
    start = time.perf_counter()
    rows = convergence_sweep(case1_cfg, modes, reference=case1_reference.fields, workers=4)
    wall = time.perf_counter() - start + case1_reference.wall_s
    ok = all(r.status == "ok" for r in rows) and wall < 300.0
    detail = []
    for f in ("eps_inf_u", "eps_inf_v"):
        e = np.array([getattr(r, f) for r in rows])
        shape_ok = bool(np.all(e[1:] <= 2.0 * e[:-1]) and e[-1] < e[0])
        plateau_ok = bool(e[-1] <= 1e-4)
        ok = ok and shape_ok and plateau_ok
        detail.append(f"{f}: " + " ".join(f"{v:.2g}" for v in e))
    report(capsys, 2, ok, f"N={modes[0]}..{modes[-1]} " + "; ".join(detail) + f"; wall {wall:.1f} s (<300)")


def _interface_jumps(run):
    s = run.system
    L1, L2 = s.layers
    worst = np.zeros(4)
    for y in run.trajectory.y:
        (a1, b1), (a2, b2) = s.split(y)
        th = np.abs(interface_residuals(a1, b1, a2, b2, L1.coeffs, L2.coeffs, L1, L2))
        worst = np.maximum(worst, th)
    return worst


def test_criterion_3_case2_multilayer(capsys, case2_cfg, case2_spectral, case2_reference):
    start = time.perf_counter()
    fine_imex = reference_solution(case2_cfg, "imex")
    wall = case2_spectral.wall_s + case2_reference.wall_s + (time.perf_counter() - start)
    eps = compute_errors(case2_spectral.fields, case2_reference.fields).eps_inf
    agree = oracle_agreement(case2_reference, fine_imex)
    th = _interface_jumps(case2_spectral)
    field_jump, flux_jump = max(th[0], th[2]), max(th[1], th[3])
    ok = (eps["v"] <= 1e-2 and eps["u"] <= 1e-3 and field_jump <= 1e-5 and flux_jump <= 1e-4
          and max(agree.values()) <= 5e-4 and wall < 180.0)
    report(capsys, 3, ok,
           f"eps_inf u={eps['u']:.3g} v={eps['v']:.3g} (<=1e-3, 1e-2); interface field jump {field_jump:.2g} "
           f"(<=1e-5), flux jump {flux_jump:.2g} (<=1e-4); oracle agreement u={agree['u']:.3g} "
           f"v={agree['v']:.3g}; wall {wall:.1f} s (<180)")


def test_criterion_4_dof(capsys, case1_problem):
    spectral = assemble_dae(case1_problem, 9).size
    imex = FDGrid(1e-2, 1e-2).dof
    report(capsys, 4, spectral == 20 and imex == 200, f"spectral DOF {spectral} (=20), IMEX DOF {imex} (=200)")


def test_criterion_5_rain(capsys, case2_cfg):
    peaks = [float(rain_case2(t)) for t in (42.0, 126.0)]
    phys = rain_peak_physical(case2_cfg)
    ok = peaks == [2.4, 2.4] and abs(phys / 1.53e-4 - 1) <= 0.01
    report(capsys, 5, ok, f"g* at 42, 126 = {peaks} (=2.4); physical peak {phys:.4g} kg/m2s (1.53e-4 within 1%)")


def test_criterion_6_tail_bound(capsys, case1_spectral, case1_reference):
    eps = compute_errors(case1_spectral.fields, case1_reference.fields).eps_inf
    tails = tail_diagnostics(case1_spectral.trajectory, case1_spectral.system)
    ra = float(tails["max_a_n"].max()) / eps["v"]
    rb = float(tails["max_b_n"].max()) / eps["u"]
    ok = 0.1 <= ra <= 10 and 0.1 <= rb <= 10
    report(capsys, 6, ok, f"max|a_n|/eps_v = {ra:.3g}, max|b_n|/eps_u = {rb:.3g} (within [0.1, 10])")


def test_criterion_7a_synthetic_dirichlet_roundtrip(capsys, tmp_path):
    base = builtin_case("validation").to_dict()
    truth = copy.deepcopy(base)
    truth["boundaries"]["left"] = {"kind": "robin", "h_M_s_per_m": 2e-7, "h_T_W_per_m2K": 25.0,
                                   "ambient": {"builtin": "validation_synthetic_left"}, "rain": None}
    truth["boundaries"]["right"] = {"kind": "robin", "h_M_s_per_m": 3e-8, "h_T_W_per_m2K": 8.0,
                                    "ambient": {"builtin": "validation_synthetic_right"}, "rain": None}
    tcfg = CaseConfig.from_dict(truth)
    ref = reference_solution(tcfg, "spectral").fields
    sc = tcfg.scales
    t_s = ref.t * sc.t_ref
    dirichlet = copy.deepcopy(base)
    for side, j in (("left", 0), ("right", -1)):
        pos = np.full(t_s.size, ref.x[j] * sc.L_ref)
        write_csv_table(tmp_path / f"{side}_T.csv", {"time_s": t_s, "value": ref.u[:, j] * sc.T_ref, "position_m": pos},
                        fmt="%.12g")
        write_csv_table(tmp_path / f"{side}_P.csv", {"time_s": t_s, "value": ref.v[:, j] * sc.P_v_ref, "position_m": pos},
                        fmt="%.12g")
        dirichlet["boundaries"][side] = {"kind": "dirichlet", "rain": None, "ambient": {"tabulated": {
            "temperature_csv": f"{side}_T.csv", "humidity_csv": f"{side}_P.csv",
            "humidity_quantity": "vapour_pressure_Pa"}}}
    run = run_spectral(CaseConfig.from_dict(dirichlet, base_dir=tmp_path)).fields
    worst_T = worst_P = 0.0
    for x_m in (0.04, 0.08, 0.12):
        k = int(np.argmin(np.abs(ref.x * sc.L_ref - x_m)))
        assert abs(ref.x[k] * sc.L_ref - x_m) < 1e-12
        worst_T = max(worst_T, relative_error(run.u[:, k] * sc.T_ref, ref.u[:, k] * sc.T_ref).max())
        worst_P = max(worst_P, relative_error(run.v[:, k] * sc.P_v_ref, ref.v[:, k] * sc.P_v_ref).max())
    ok = worst_T <= 5e-3 and worst_P <= 2e-2
    report(capsys, "7a", ok, f"max relative error at 4/8/12 cm: T {worst_T:.3g} (<=0.5%), P_v {worst_P:.3g} (<=2%)")


def test_criterion_7b_property_checks(capsys, rng):
    checks = {}
    # steady-state exactness of the projected system
    p = make_problem(coeffs=[constant_fit(k_M=1.0, k_T=2.0, k_TM=0.1), constant_fit(k_M=3.0, k_T=4.0, k_TM=0.3)],
                     lengths=(0.6, 0.4), left=robin("left", 1.02, 0.8, 2.0, 5.0, 0.3),
                     right=robin("right", 0.97, 1.3, 0.5, 1.5, 0.1))
    s = assemble_dae(p, 6)
    checks["steady"] = float(np.max(np.abs(s.rhs(0.0, state_from_linear(s, steady_piecewise_linear(p))))))
    # Chebyshev derivative against central differences
    a = rng.normal(size=12)
    x = np.linspace(-0.9, 0.9, 41)
    fd = (eval_series(a, x + 1e-6) - eval_series(a, x - 1e-6)) / 2e-6
    checks["derivative"] = float(np.max(np.abs(fd - eval_series(derivative_coeffs(a).first, x))) / np.max(np.abs(fd)))
    # quadrature orthogonality
    rule = QuadratureRule(12)
    gram = np.array([[quadrature(rule, lambda z: eval_series(np.eye(8)[i], z) * eval_series(np.eye(8)[j], z))
                      for j in range(8)] for i in range(8)])
    checks["orthogonality"] = float(np.max(np.abs(gram - np.diag([np.pi] + [np.pi / 2] * 7))))
    # fixed-step BDF2 order
    errs = [abs(solve_dae(lambda t, y: -y, [1.0], [1.0], [0.0, 1.0], IntegratorConfig(fixed_step=h)).y[-1, 0]
                - np.exp(-1.0)) for h in (0.05, 0.025)]
    order = float(np.log2(errs[0] / errs[1]))
    ok = (checks["steady"] <= 1e-10 and checks["derivative"] <= 1e-6 and checks["orthogonality"] <= 1e-12
          and 1.8 <= order <= 2.2)
    report(capsys, "7b", ok, ", ".join(f"{k} {v:.2g}" for k, v in checks.items()) + f", BDF2 order {order:.3f}")


def test_criterion_8_runtime_ratio(capsys, case1_spectral, case1_imex, case2_spectral, case2_imex):
    r1 = case1_imex.wall_s / case1_spectral.wall_s
    r2 = case2_imex.wall_s / case2_spectral.wall_s
    report(capsys, 8, r1 > 1 and r2 > 1,
           f"IMEX/spectral wall time: case1 {r1:.2f} ({case1_imex.wall_s:.2f}/{case1_spectral.wall_s:.2f} s), "
           f"case2 {r2:.2f} ({case2_imex.wall_s:.2f}/{case2_spectral.wall_s:.2f} s); reference ratio about 7")
