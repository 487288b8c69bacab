"""Shared fixtures: builtin cases and cached solver runs (each solved once per session)."""

from __future__ import annotations

import numpy as np
import pytest

from hygrospec.bench_cases import build_problem, builtin_case, reference_solution, run_fd, run_spectral
from hygrospec.materials import constant_fit
from hygrospec.problem import (
    BoundaryForcing,
    ConstantAmbient,
    DimensionlessProblem,
    ReferenceScales,
    layers_from_lengths,
)


def make_problem(
    coeffs=None,
    lengths=(1.0,),
    left=None,
    right=None,
    u0=1.0,
    v0=1.0,
    horizon=1.0,
):
    """Small dimensionless problem with constant coefficients by default."""
    coeffs = coeffs if coeffs is not None else [constant_fit()] * len(lengths)
    if not isinstance(coeffs, (list, tuple)):
        coeffs = [coeffs] * len(lengths)
    left = left or BoundaryForcing("left", ConstantAmbient(1.0, 1.0), Bi_M=1.0, Bi_T=1.0)
    right = right or BoundaryForcing("right", ConstantAmbient(1.0, 1.0), Bi_M=1.0, Bi_T=1.0)
    return DimensionlessProblem(
        layers=tuple(layers_from_lengths(lengths, coeffs)),
        left=left,
        right=right,
        u0=u0,
        v0=v0,
        horizon=horizon,
        scales=ReferenceScales(),
        name="test",
    )


def robin(side, u, v, Bi_M, Bi_T, Bi_TM=0.0, rain=None):
    return BoundaryForcing(side, ConstantAmbient(u, v), Bi_M=Bi_M, Bi_T=Bi_T, Bi_TM=Bi_TM, rain=rain)


def steady_piecewise_linear(problem):
    """Exact steady state of a layered wall with constant coefficients and Robin data.

    Returns per-layer (A, B, C, D) with v = A + B x*, u = C + D x*.
    """
    L = problem.layers
    nl = len(L)
    k = [l.coeffs.evaluate(1.0) for l in L]
    rows, rhs = [], []

    def vrow(i, x, dv=0.0):
        r = np.zeros(4 * nl)
        r[4 * i] = 1.0 if dv == 0.0 else 0.0
        r[4 * i + 1] = x if dv == 0.0 else 1.0
        return r

    lf, rf = problem.left, problem.right
    uL, vL = lf.ambient(0.0)
    uR, vR = rf.ambient(0.0)
    # moisture: left Bi_M (v - vL) - k_M v' = 0 ; right Bi_M (v - vR) + k_M v' = 0
    rows.append(lf.Bi_M * vrow(0, 0.0) - float(k[0]["k_M"]) * vrow(0, 0.0, 1))
    rhs.append(lf.Bi_M * vL)
    rows.append(rf.Bi_M * vrow(nl - 1, 1.0) + float(k[-1]["k_M"]) * vrow(nl - 1, 1.0, 1))
    rhs.append(rf.Bi_M * vR)
    for i in range(nl - 1):
        xi = L[i].x_b
        rows.append(vrow(i, xi) - vrow(i + 1, xi))
        rhs.append(0.0)
        rows.append(float(k[i]["k_M"]) * vrow(i, xi, 1) - float(k[i + 1]["k_M"]) * vrow(i + 1, xi, 1))
        rhs.append(0.0)

    def urow(i, x, du=0.0):
        r = vrow(i, x, du)
        return np.roll(r, 2)

    # heat, coupled through Bi_TM and k_TM
    rows.append(lf.Bi_T * urow(0, 0.0) + lf.Bi_TM * vrow(0, 0.0)
                - float(k[0]["k_T"]) * urow(0, 0.0, 1) - float(k[0]["k_TM"]) * vrow(0, 0.0, 1))
    rhs.append(lf.Bi_T * uL + lf.Bi_TM * vL)
    rows.append(rf.Bi_T * urow(nl - 1, 1.0) + rf.Bi_TM * vrow(nl - 1, 1.0)
                + float(k[-1]["k_T"]) * urow(nl - 1, 1.0, 1) + float(k[-1]["k_TM"]) * vrow(nl - 1, 1.0, 1))
    rhs.append(rf.Bi_T * uR + rf.Bi_TM * vR)
    for i in range(nl - 1):
        xi = L[i].x_b
        rows.append(urow(i, xi) - urow(i + 1, xi))
        rhs.append(0.0)
        rows.append(float(k[i]["k_T"]) * urow(i, xi, 1) + float(k[i]["k_TM"]) * vrow(i, xi, 1)
                    - float(k[i + 1]["k_T"]) * urow(i + 1, xi, 1) - float(k[i + 1]["k_TM"]) * vrow(i + 1, xi, 1))
        rhs.append(0.0)
    sol = np.linalg.solve(np.array(rows), np.array(rhs))
    return sol.reshape(nl, 4)


def state_from_linear(system, coeffs):
    """Spectral state of piecewise-linear fields given per-layer (A, B, C, D)."""
    y = np.zeros(system.size)
    for l, (A, B, Cc, D) in enumerate(coeffs):
        lay = system.layers[l]
        sa, sb = system.block_slices(l)
        mid, half = 0.5 * (lay.x_a + lay.x_b), 0.5 * lay.length
        y[sa][:2] = (A + B * mid, B * half)
        y[sb][:2] = (Cc + D * mid, D * half)
    return y


@pytest.fixture
def problem_factory():
    return make_problem


@pytest.fixture(scope="session")
def case1_cfg():
    return builtin_case("case1")


@pytest.fixture(scope="session")
def case2_cfg():
    return builtin_case("case2")


@pytest.fixture(scope="session")
def validation_cfg():
    return builtin_case("validation")


@pytest.fixture(scope="session")
def case1_problem(case1_cfg):
    return build_problem(case1_cfg)


@pytest.fixture(scope="session")
def case2_problem(case2_cfg):
    return build_problem(case2_cfg)


@pytest.fixture(scope="session")
def case1_spectral(case1_cfg):
    return run_spectral(case1_cfg)


@pytest.fixture(scope="session")
def case1_imex(case1_cfg):
    return run_fd(case1_cfg)


@pytest.fixture(scope="session")
def case1_reference(case1_cfg):
    return reference_solution(case1_cfg, "spectral")


@pytest.fixture(scope="session")
def case1_fine_imex(case1_cfg):
    return reference_solution(case1_cfg, "imex")


@pytest.fixture(scope="session")
def case2_spectral(case2_cfg):
    return run_spectral(case2_cfg)


@pytest.fixture(scope="session")
def case2_imex(case2_cfg):
    return run_fd(case2_cfg)


@pytest.fixture(scope="session")
def case2_reference(case2_cfg):
    return reference_solution(case2_cfg, "spectral")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
