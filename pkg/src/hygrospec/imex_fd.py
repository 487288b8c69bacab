"""Semi-implicit (IMEX) finite-difference solver on a uniform node grid.

Node-centred finite volumes: node j owns [x_j - dx/2, x_j + dx/2] clipped to the
wall, so boundary nodes carry half cells. Face transport coefficients are
harmonic means of the two adjacent nodal values, each evaluated with the
material of that face; an interface node stores the average of both
materials' capacities. Within a step all coefficients are frozen at t_n, each
field's own diffusion is implicit, the moisture-to-heat cross term is explicit
and the boundary exchange terms are implicit with forcing at t_{n+1}. The
moisture equation and then the heat equation are solved as tridiagonal systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dgtsv

from .postproc import FieldSolution
from .problem import ConfigurationError, DimensionlessProblem


class StepFailure(ArithmeticError):
    """A tridiagonal system was singular or produced non-finite values."""


@dataclass(frozen=True)
class FDGrid:
    dx: float = 1e-2
    dt: float = 1e-2

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise ConfigurationError("dx and dt must be positive")
        n = 1.0 / self.dx
        if abs(n - round(n)) > 1e-9 * n:
            raise ConfigurationError(f"dx={self.dx} does not divide the unit wall")

    @property
    def n_nodes(self) -> int:
        return int(round(1.0 / self.dx)) + 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_nodes)

    @property
    def dof(self) -> int:
        """Unknowns per step: two fields on every node."""
        return 2 * self.n_nodes


class IMEXSolver:
    def __init__(self, problem: DimensionlessProblem, grid: FDGrid):
        self.problem = problem
        self.grid = grid
        x = grid.x
        nx = x.size
        self.x = x
        for xi in problem.interfaces:
            j = xi / grid.dx
            if abs(j - round(j)) > 1e-8:
                raise ConfigurationError(f"interface x*={xi} does not coincide with a grid node")
        mid = 0.5 * (x[:-1] + x[1:])
        self.face_layer = problem.layer_index(mid)
        # material on the left / right half cell of each node (-1: none)
        self.left_mat = np.concatenate([[-1], self.face_layer])
        self.right_mat = np.concatenate([self.face_layer, [-1]])
        self.nx = nx
        self.mats = [l.coeffs for l in problem.layers]

        dx = grid.dx
        nm = len(self.mats)
        # weights of each material in the nodal storage and on each face
        self._w_store = np.array([0.5 * dx * ((self.left_mat == k).astype(float) + (self.right_mat == k)) for k in range(nm)])
        self._w_face = np.array([(self.face_layer == k).astype(float) for k in range(nm)])

    def _coefficients(self, v: np.ndarray) -> dict:
        """Nodal storage terms and face conductances, all frozen at v."""
        out = {}
        for name in ("c_M", "c_T"):
            out[name] = sum(w * getattr(c, name)(v) for c, w in zip(self.mats, self._w_store))
        for name in ("k_M", "k_T", "k_TM"):
            kl = 0.0
            kr = 0.0
            for c, w in zip(self.mats, self._w_face):
                kv = getattr(c, name)(v)
                kl = kl + w * kv[:-1]
                kr = kr + w * kv[1:]
            den = kl + kr
            safe = np.where(den != 0.0, den, 1.0)
            out[name] = np.where(den != 0.0, 2.0 * kl * kr / safe, 0.0) / self.grid.dx
        return out

    def _diffusion_operator(self, K: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tridiagonal of  -div(K grad)  as (lower, diag, upper)."""
        nx = self.nx
        diag = np.zeros(nx)
        diag[:-1] += K
        diag[1:] += K
        return -K, diag, -K

    def _solve(self, lower, diag, upper, rhs):
        _, _, _, out, info = dgtsv(lower, diag, upper, rhs)
        if info != 0 or not np.all(np.isfinite(out)):
            raise StepFailure(f"tridiagonal solve failed (info={info})")
        return out

    def step(self, u: np.ndarray, v: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Advance (u, v) from t to t + dt."""
        dt = self.grid.dt
        p = self.problem
        t1 = t + dt
        co = self._coefficients(v)
        CM, CT, KM, KT, KTM = co["c_M"], co["c_T"], co["k_M"], co["k_T"], co["k_TM"]
        if CM.min() <= 0 or CT.min() <= 0:
            raise StepFailure(f"non-positive storage at t*={t:.6g}")
        forcing = {0: p.left.evaluate(t1), self.nx - 1: p.right.evaluate(t1)}

        # moisture
        lo, di, up = self._diffusion_operator(KM)
        di = di + CM / dt
        rhs = CM / dt * v
        dir_v = {}
        for j, side in ((0, p.left), (self.nx - 1, p.right)):
            u_inf, v_inf, g, H = forcing[j]
            if side.kind == "dirichlet":
                dir_v[j] = v_inf
            else:
                di[j] += side.Bi_M
                rhs[j] += side.Bi_M * v_inf + g
        lo, di, up, rhs = self._apply_dirichlet(lo, di, up, rhs, dir_v)
        v_new = self._solve(lo, di, up, rhs)

        # heat, cross term explicit in v^n
        lo, di, up = self._diffusion_operator(KT)
        di = di + CT / dt
        flux_TM = KTM * np.diff(v)
        rhs = CT / dt * u
        rhs[:-1] += flux_TM
        rhs[1:] -= flux_TM
        dir_u = {}
        for j, side in ((0, p.left), (self.nx - 1, p.right)):
            u_inf, v_inf, g, H = forcing[j]
            if side.kind == "dirichlet":
                dir_u[j] = u_inf
            else:
                di[j] += side.Bi_T
                rhs[j] += side.Bi_T * u_inf + side.Bi_TM * (v_inf - v_new[j]) + H * g
        lo, di, up, rhs = self._apply_dirichlet(lo, di, up, rhs, dir_u)
        u_new = self._solve(lo, di, up, rhs)
        return u_new, v_new

    @staticmethod
    def _apply_dirichlet(lo, di, up, rhs, fixed: dict):
        lo, di, up, rhs = lo.copy(), di.copy(), up.copy(), rhs.copy()
        for j, val in fixed.items():
            di[j] = 1.0
            rhs[j] = val
            if j == 0:
                up[0] = 0.0
            else:
                lo[-1] = 0.0
        return lo, di, up, rhs

    def initial(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.asarray(self.problem.u0(self.x), dtype=float) * np.ones(self.nx),
                np.asarray(self.problem.v0(self.x), dtype=float) * np.ones(self.nx))


def imex_step(solver: IMEXSolver, u, v, t: float):
    """One IMEX step; see :meth:`IMEXSolver.step`."""
    return solver.step(np.asarray(u, float), np.asarray(v, float), t)


def run_imex(problem: DimensionlessProblem, grid: FDGrid, t_out=None) -> FieldSolution:
    """March from 0 to the horizon, storing nodal fields at the instants t_out.

    Output instants must be multiples of dt (within round-off); by default every
    step is stored.
    """
    solver = IMEXSolver(problem, grid)
    dt = grid.dt
    n_steps = int(round(problem.horizon / dt))
    if abs(n_steps * dt - problem.horizon) > 1e-9 * max(1.0, problem.horizon):
        raise ConfigurationError("horizon is not a multiple of dt")
    if t_out is None:
        t_out = np.arange(n_steps + 1) * dt
    t_out = np.asarray(t_out, dtype=float)
    idx_out = np.round(t_out / dt).astype(int)
    if np.any(np.abs(idx_out * dt - t_out) > 1e-8) or np.any(idx_out > n_steps) or np.any(idx_out < 0):
        raise ConfigurationError("output instants must be multiples of dt within the horizon")
    u, v = solver.initial()
    U = np.empty((t_out.size, solver.nx))
    V = np.empty_like(U)
    want = {}
    for k, i in enumerate(idx_out):
        want.setdefault(int(i), []).append(k)
    for k in want.get(0, []):
        U[k], V[k] = u, v
    for s in range(n_steps):
        try:
            u, v = solver.step(u, v, s * dt)
        except ArithmeticError as exc:
            raise StepFailure(f"IMEX step failed at t*={s * dt:.6g}: {exc}") from exc
        for k in want.get(s + 1, []):
            U[k], V[k] = u, v
    return FieldSolution(t_out, solver.x.copy(), U, V, meta={"solver": "imex", "dx": grid.dx, "dt": dt,
                                                            "steps": n_steps, "dof": grid.dof})
