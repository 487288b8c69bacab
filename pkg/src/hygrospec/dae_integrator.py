"""Variable-step BDF(1,2) integrator for  mass * y' = F(t, y)  with diagonal mass.

Rows with zero mass are algebraic constraints and are solved exactly (to Newton
tolerance) at every step. The local error estimate compares the corrector with
a polynomial predictor and is applied to differential components only. Output
at requested instants is obtained by cubic Hermite interpolation between
accepted steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

log = logging.getLogger(__name__)

# failures raised by a right-hand side that we treat as "step too large"
_RECOVERABLE = (ArithmeticError, FloatingPointError, np.linalg.LinAlgError)


class StiffnessFailure(RuntimeError):
    """The step size fell below its floor; carries the time of failure."""

    def __init__(self, t: float, msg: str = ""):
        super().__init__(f"integration failed at t*={t:.6g}" + (f": {msg}" if msg else ""))
        self.t = t


class ConsistencyError(ValueError):
    """Initial algebraic residual cannot be brought below tolerance."""


class SingularConstraintError(ValueError):
    """The algebraic Jacobian is singular."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-5
    atol: float = 1e-5
    h0: Optional[float] = None
    max_step: float = np.inf
    min_step: float = 1e-12
    max_newton: int = 8
    newton_tol: float = 0.03
    safety: float = 0.9
    max_growth: float = 2.0
    min_shrink: float = 0.1
    max_order: int = 2
    fixed_step: Optional[float] = None
    project_initial: bool = True
    project_output: bool = True
    track_constraints: bool = False
    error_norm: str = "max"  # "max" (componentwise) or "rms" over differential components

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_order not in (1, 2):
            raise ValueError("max_order must be 1 or 2")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValueError("fixed_step must be positive")
        if self.error_norm not in ("max", "rms"):
            raise ValueError("error_norm must be 'max' or 'rms'")


@dataclass
class StepStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_newton: int = 0
    n_newton_fail: int = 0
    n_fev: int = 0
    n_jac: int = 0
    n_lu: int = 0
    max_constraint_residual: float = 0.0


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # shape (n_times, n_state)
    stats: StepStats = field(default_factory=StepStats)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.t.ndim != 1 or self.y.shape[0] != self.t.size:
            raise ValueError("trajectory times and states disagree in length")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def _maxabs(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def fd_jacobian(fun: Callable, t: float, y: np.ndarray, f0: np.ndarray) -> np.ndarray:
    n = y.size
    J = np.empty((f0.size, n))
    for j in range(n):
        h = 1.5e-8 * max(1.0, abs(y[j]))
        yp = y.copy()
        yp[j] += h
        J[:, j] = (fun(t, yp) - f0) / h
    return J


def make_consistent(y_guess, fun: Callable, mass, t0: float, atol: float = 1e-10,
                    max_iter: int = 30) -> np.ndarray:
    """Solve the algebraic rows for the algebraic unknowns, differential ones fixed.

    The algebraic unknowns are the components with zero mass (for the spectral
    system, the two highest coefficients of each field block).
    """
    mass = np.asarray(mass, dtype=float)
    alg = np.flatnonzero(mass == 0.0)
    y = np.array(y_guess, dtype=float)
    if alg.size == 0:
        return y
    for _ in range(max_iter):
        f = fun(t0, y)
        r = f[alg]
        if np.max(np.abs(r)) <= atol:
            return y
        J = fd_jacobian(lambda t, z: fun(t, _inject(y, alg, z)), t0, y[alg], f)[alg]
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularConstraintError(f"singular algebraic Jacobian (cond={cond:.3g})")
        y[alg] -= np.linalg.solve(J, r)
    r = fun(t0, y)[alg]
    if np.max(np.abs(r)) > atol:
        raise ConsistencyError(f"algebraic residual {np.max(np.abs(r)):.3g} > {atol:.3g}")
    return y


def _inject(y, idx, z):
    out = y.copy()
    out[idx] = z
    return out


def _hermite(t0, y0, d0, t1, y1, d1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def solve_dae(fun: Callable, mass, y0, t_eval, cfg: IntegratorConfig = IntegratorConfig(),
              constraint: Optional[Callable] = None, jac: Optional[Callable] = None) -> Trajectory:
    """Integrate  mass * y' = fun(t, y)  from t_eval[0], reporting at every t_eval.

    Parameters
    ----------
    fun : callable
        ``fun(t, y) -> F`` of the same shape as ``y``.
    mass : array_like
        Diagonal of the (possibly singular) mass matrix.
    y0 : array_like
        Initial state. Algebraic components are made consistent first when
        ``cfg.project_initial`` is set.
    t_eval : array_like
        Strictly increasing output instants; the first one is the initial time.
    cfg : IntegratorConfig
        Tolerances and step control.
    constraint : callable, optional
        ``constraint(t, y)`` returning only the algebraic rows of ``fun``; a
        cheaper alternative used to project interpolated outputs.
    jac : callable, optional
        ``jac(t, y, f) -> dF/dy`` given ``f = fun(t, y)``; column-by-column
        forward differences of ``fun`` by default.
    """
    mass = np.asarray(mass, dtype=float)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size == 0:
        raise ValueError("t_eval must be a non-empty 1D array")
    if t_eval.size > 1 and np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    stats = StepStats()
    diff = mass != 0.0
    alg = ~diff

    def F(t, y):
        stats.n_fev += 1
        return fun(t, y)

    if constraint is None:
        def C(t, y):
            return F(t, y)[alg]
    else:
        C = constraint

    t0, tf = float(t_eval[0]), float(t_eval[-1])
    y = np.array(y0, dtype=float)
    if alg.any():
        if cfg.project_initial:
            y = make_consistent(y, F, mass, t0, atol=1e-10)
        r = F(t0, y)[alg]
        if np.max(np.abs(r)) > cfg.atol:
            raise ConsistencyError(f"initial algebraic residual {np.max(np.abs(r)):.3g} exceeds atol")

    out = np.empty((t_eval.size, y.size))
    out[0] = y
    k_out = 1
    if t_eval.size == 1:
        return Trajectory(t_eval, out, stats)

    f0 = F(t0, y)
    yp = np.zeros_like(y)
    yp[diff] = f0[diff] / mass[diff]

    scale0 = cfg.atol + cfg.rtol * np.abs(y)
    err_norm = _maxabs if cfg.error_norm == "max" else _rms
    if cfg.fixed_step is not None:
        h = cfg.fixed_step
    elif cfg.h0 is not None:
        h = cfg.h0
    else:
        d0 = _rms((y / scale0)[diff])
        d1 = _rms((yp / scale0)[diff])
        h = 0.01 * d0 / d1 if (d0 > 1e-5 and d1 > 1e-5) else 1e-4
        h = min(h, 1e-2 * (tf - t0))
    h = min(h, cfg.max_step, tf - t0)

    t = t0
    # history: previous accepted point (for BDF2)
    t_prev: Optional[float] = None
    y_prev: Optional[np.ndarray] = None
    J = None
    J_fresh = False
    slow = False
    consecutive_fail = 0

    while t < tf - 1e-12 * max(1.0, abs(tf)):
        if cfg.fixed_step is None and t + h > tf - 1e-10 * h:
            h = tf - t
        elif cfg.fixed_step is not None:
            h = min(cfg.fixed_step, tf - t)
        if h < cfg.min_step:
            raise StiffnessFailure(t, f"step size {h:.3g} below floor")
        t_new = t + h
        order = 1 if (y_prev is None or cfg.max_order == 1) else 2

        if order == 1:
            alpha = 1.0
            beta = y
            y_pred = y + h * yp
            Cc = h * h
            Cp = h * h
        else:
            h1 = t - t_prev
            w = h / h1
            alpha = (1.0 + 2.0 * w) / (1.0 + w)
            beta = (1.0 + w) * y - (w * w / (1.0 + w)) * y_prev
            c = (y_prev - y + yp * h1) / (h1 * h1)
            y_pred = y + yp * h + c * h * h
            Cc = h * h * (h + h1) / alpha
            Cp = h * h * (h + h1)

        if J is None or slow:
            try:
                f_pred = F(t_new, y_pred)
                J = jac(t_new, y_pred, f_pred) if jac is not None else fd_jacobian(F, t_new, y_pred, f_pred)
                stats.n_jac += 1
                J_fresh = True
            except _RECOVERABLE:
                J = None
        ok = False
        if J is not None:
            A = np.diag(mass * (alpha / h)) - J
            try:
                lu = lu_factor(A, check_finite=True)
                stats.n_lu += 1
            except (ValueError, np.linalg.LinAlgError):
                lu = None
            if lu is not None:
                ok, y_new, iters, rate = _newton(F, lu, mass, alpha, h, beta, t_new, y_pred, cfg, stats, alg)
                slow = iters >= 5 or rate > 0.5
        if not ok:
            stats.n_newton_fail += 1
            consecutive_fail += 1
            if not J_fresh:
                J = None  # retry with a fresh Jacobian at the same h
                J_fresh = True
                continue
            if cfg.fixed_step is not None:
                raise StiffnessFailure(t, "Newton failed at fixed step size")
            h *= 0.25
            J = None
            if consecutive_fail > 20:
                raise StiffnessFailure(t, "repeated Newton failures")
            continue
        consecutive_fail = 0
        J_fresh = False

        # local error estimate, differential components only
        est = (y_new - y_pred) * (Cc / (Cc + Cp))
        sc = cfg.atol + cfg.rtol * np.maximum(np.abs(y_new), np.abs(y))
        err = err_norm((est / sc)[diff])
        if cfg.fixed_step is None and err > 1.0:
            stats.n_rejected += 1
            fac = max(cfg.min_shrink, cfg.safety * err ** (-1.0 / (order + 1)))
            h *= min(fac, 0.9)
            if h < cfg.min_step:
                raise StiffnessFailure(t, f"step size {h:.3g} below floor")
            continue

        # accept
        stats.n_steps += 1
        if order == 1:
            yp_new = (y_new - y) / h
        else:
            yp_new = (alpha * y_new - beta) / h
        if y_prev is None:
            yp[alg] = yp_new[alg]  # first step: fill unknown algebraic slopes
        if cfg.track_constraints and alg.any():
            r = C(t_new, y_new)
            stats.max_constraint_residual = max(stats.max_constraint_residual, float(np.max(np.abs(r))))
        lu_aa = None
        while k_out < t_eval.size and t_eval[k_out] <= t_new + 1e-12 * max(1.0, abs(t_new)):
            te = t_eval[k_out]
            if abs(te - t_new) <= 1e-12 * max(1.0, abs(t_new)):
                out[k_out] = y_new
            else:
                yi = _hermite(t, y, yp, t_new, y_new, yp_new, te)
                if cfg.project_output and alg.any() and J is not None:
                    if lu_aa is None:
                        lu_aa = lu_factor(J[np.ix_(alg, alg)])
                    yi = _project_algebraic(C, te, yi, alg, lu_aa, cfg.atol)
                out[k_out] = yi
            k_out += 1
        t_prev, y_prev = t, y
        t, y, yp = t_new, y_new, yp_new

        if cfg.fixed_step is None:
            fac = cfg.safety * err ** (-1.0 / (order + 1)) if err > 0 else cfg.max_growth
            h = h * min(cfg.max_growth, max(cfg.min_shrink, fac))
            h = min(h, cfg.max_step)

    while k_out < t_eval.size:  # round-off at the end of the horizon
        out[k_out] = y
        k_out += 1
    if not np.all(np.isfinite(out)):
        raise StiffnessFailure(t, "non-finite state")
    return Trajectory(t_eval.copy(), out, stats)


def _project_algebraic(C, t, y, alg, lu_aa, atol, max_iter: int = 4):
    """Pull interpolated algebraic components back onto the constraints."""
    y = y.copy()
    for _ in range(max_iter):
        r = C(t, y)
        if np.max(np.abs(r)) <= 1e-3 * atol:
            break
        y[alg] -= lu_solve(lu_aa, r)
    return y


def _newton(F, lu, mass, alpha, h, beta, t_new, y_pred, cfg, stats, alg):
    """Simplified Newton on  mass * (alpha y - beta) / h - F(t, y) = 0.

    Converged once the scaled update is small and the algebraic residual,
    evaluated at the returned iterate, is below 0.1 * atol.
    """
    y = y_pred.copy()
    dy_prev = None
    rate = 0.0
    small = False
    for it in range(1, cfg.max_newton + 1):
        stats.n_newton += 1
        try:
            f = F(t_new, y)
        except _RECOVERABLE:
            return False, y, it, 1.0
        G = mass * (alpha * y - beta) / h - f
        if not np.all(np.isfinite(G)):
            return False, y, it, 1.0
        if small and (not alg.any() or np.max(np.abs(G[alg])) <= 0.1 * cfg.atol):
            return True, y, it, rate
        dy = lu_solve(lu, -G)
        y = y + dy
        sc = cfg.atol + cfg.rtol * np.abs(y)
        dn = _rms(dy / sc)
        if dy_prev is not None:
            rate = dn / dy_prev if dy_prev > 0 else 0.0
            if rate >= 1.0:
                return False, y, it, rate
            small = rate / (1.0 - rate) * dn <= cfg.newton_tol
        else:
            small = dn <= 1e-3 * cfg.newton_tol
        dy_prev = dn
    return False, y, cfg.max_newton, rate
