"""Field reconstruction, error norms, surface fluxes and spectral diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .cheb_core import chebyshev_vandermonde, derivative_matrix
from .materials import C_W, T_ENTHALPY_REF
from .problem import BoundaryForcing, DimensionlessProblem, ReferenceScales, SpatialDomainError
from .spectral_rom import tail_coefficients


class GridMismatchError(ValueError):
    """Candidate and reference samples are not on the same space-time grid."""


class ResampleError(ValueError):
    """A series that must be uniformly sampled is not."""


@dataclass
class FieldSolution:
    """Dimensionless fields u(t, x), v(t, x) on a space-time grid."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray  # (n_t, n_x)
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        shape = (self.t.size, self.x.size)
        if self.u.shape != shape or self.v.shape != shape:
            raise GridMismatchError(f"fields must have shape {shape}, got {self.u.shape} and {self.v.shape}")

    def temperature(self, scales: ReferenceScales) -> np.ndarray:
        return self.u * scales.T_ref

    def vapour_pressure(self, scales: ReferenceScales) -> np.ndarray:
        return self.v * scales.P_v_ref

    def sample(self, x) -> "FieldSolution":
        """Linear interpolation onto other positions (exact on shared nodes)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x[0] - 1e-12) or np.any(x > self.x[-1] + 1e-12):
            raise SpatialDomainError("sampling positions outside the solution grid")
        u = np.array([np.interp(x, self.x, row) for row in self.u])
        v = np.array([np.interp(x, self.x, row) for row in self.v])
        return FieldSolution(self.t, x, u, v, dict(self.meta))


def reconstruct(trajectory, system, x, t=None) -> FieldSolution:
    """Evaluate a spectral trajectory on positions x* (and a subset of its times).

    Parameters
    ----------
    trajectory : Trajectory
        Output of :func:`hygrospec.dae_integrator.solve_dae`.
    system : SpectralSystem
        The assembled system that produced the trajectory.
    x : array_like
        Positions in [0, 1].
    t : array_like, optional
        Times to keep; each must be one of the trajectory's output instants.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise SpatialDomainError("reconstruction points outside the wall")
    rows = np.arange(trajectory.t.size)
    if t is not None:
        t = np.asarray(t, dtype=float)
        rows = np.searchsorted(trajectory.t, t - 1e-9)
        if np.any(rows >= trajectory.t.size) or np.any(np.abs(trajectory.t[rows] - t) > 1e-9):
            raise GridMismatchError("requested times are not trajectory output instants")
    U = np.empty((rows.size, x.size))
    V = np.empty_like(U)
    for k, r in enumerate(rows):
        U[k], V[k] = system.evaluate(trajectory.y[r], x)
    return FieldSolution(trajectory.t[rows], x, U, V, {"solver": "spectral", "modes": system.N})


# --------------------------------------------------------------------------
# error norms


@dataclass
class ErrorReport:
    x: np.ndarray
    eps2_profile: dict
    eps_inf: dict
    relative: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {f"eps_inf_{k}": float(v) for k, v in self.eps_inf.items()}


def _fields(obj) -> Mapping[str, np.ndarray]:
    if isinstance(obj, FieldSolution):
        return {"u": obj.u, "v": obj.v}
    return obj


def compute_errors(candidate, reference, x=None) -> ErrorReport:
    """eps_2(x) = sqrt(mean_t (Y - Y_ref)^2) and eps_inf = max_x eps_2, per field.

    ``candidate`` and ``reference`` are FieldSolutions or mappings from field
    name to arrays of shape (n_t, n_x).
    """
    c = _fields(candidate)
    r = _fields(reference)
    if set(c) != set(r):
        raise GridMismatchError(f"field sets differ: {sorted(c)} vs {sorted(r)}")
    if isinstance(candidate, FieldSolution) and isinstance(reference, FieldSolution):
        if candidate.t.shape != reference.t.shape or not np.allclose(candidate.t, reference.t, atol=1e-9):
            raise GridMismatchError("candidate and reference output times differ")
        if candidate.x.shape != reference.x.shape or not np.allclose(candidate.x, reference.x, atol=1e-12):
            raise GridMismatchError("candidate and reference positions differ")
        x = candidate.x
    eps2 = {}
    for k in c:
        a = np.atleast_2d(np.asarray(c[k], dtype=float))
        b = np.atleast_2d(np.asarray(r[k], dtype=float))
        if a.shape != b.shape:
            raise GridMismatchError(f"field {k}: shapes {a.shape} and {b.shape} differ")
        eps2[k] = np.sqrt(np.mean((a - b) ** 2, axis=0))
    if x is None:
        x = np.arange(next(iter(eps2.values())).size, dtype=float)
    return ErrorReport(x=np.asarray(x, float), eps2_profile=eps2, eps_inf={k: float(e.max()) for k, e in eps2.items()})


def relative_error(numerical, measured) -> np.ndarray:
    """Pointwise |Y_num - Y_meas| / |Y_meas|."""
    numerical = np.asarray(numerical, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if numerical.shape != measured.shape:
        raise GridMismatchError("relative error needs matching samples")
    return np.abs(numerical - measured) / np.abs(measured)


# --------------------------------------------------------------------------
# fluxes


@dataclass
class FluxSeries:
    """Dimensional fluxes at x_0, positive in the +x direction."""

    t: np.ndarray  # dimensionless time
    x0: float
    q_s: np.ndarray  # W/m^2
    q_l: np.ndarray  # W/m^2
    g: np.ndarray  # kg/(m^2 s)

    @property
    def q_total(self) -> np.ndarray:
        return self.q_s + self.q_l


def _flux_from_gradients(coeffs, v, ux, vx, scales: ReferenceScales):
    v = np.asarray(v, dtype=float)
    kT = coeffs.k_T(v)
    kTM = coeffs.k_TM(v)
    kM = coeffs.k_M(v)
    heat = coeffs.k_T_ref * scales.T_ref / scales.L_ref
    q_s = -kT * heat * ux
    q_l = -kTM * heat * vx
    g = -kM * coeffs.k_M_ref * scales.P_v_ref / scales.L_ref * vx
    return q_s, q_l, g


def fluxes(trajectory, system, x0: float, side: str = "left") -> FluxSeries:
    """Fluxes at x0 from spectral differentiation.

    At an interface, ``side`` selects the layer whose representation is used.
    """
    p: DimensionlessProblem = system.problem
    if not (-1e-12 <= x0 <= 1 + 1e-12):
        raise SpatialDomainError(f"x0={x0} outside the wall")
    layer = _layer_for(p, x0, side)
    L = p.layers[layer]
    N = system.N
    T = chebyshev_vandermonde(np.array([L.to_spectral(x0)]), N)[0]
    D = derivative_matrix(N)
    sa, sb = system.block_slices(layer)
    A = trajectory.y[:, sa]
    B = trajectory.y[:, sb]
    v = A @ T
    vx = L.metric * (A @ (D.T @ T))
    ux = L.metric * (B @ (D.T @ T))
    q_s, q_l, g = _flux_from_gradients(L.coeffs, v, ux, vx, p.scales)
    return FluxSeries(trajectory.t.copy(), float(x0), q_s, q_l, g)


def _layer_for(p: DimensionlessProblem, x0: float, side: str) -> int:
    for k, layer in enumerate(p.layers):
        lo, hi = layer.x_a, layer.x_b
        if lo - 1e-12 <= x0 <= hi + 1e-12:
            if abs(x0 - hi) < 1e-12 and side == "right" and k + 1 < len(p.layers):
                continue
            return k
    raise SpatialDomainError(f"x0={x0} outside the wall")


def fluxes_from_fields(fs: FieldSolution, problem: DimensionlessProblem, x0: float, side: str = "left") -> FluxSeries:
    """Fluxes from nodal fields using a second-order one-sided or centred stencil.

    The stencil stays inside the layer selected by x0 and ``side``.
    """
    layer = _layer_for(problem, x0, side)
    L = problem.layers[layer]
    x = fs.x
    inside = np.flatnonzero((x >= L.x_a - 1e-12) & (x <= L.x_b + 1e-12))
    if inside.size < 3:
        raise SpatialDomainError("need at least three nodes inside the layer")
    j = int(np.argmin(np.abs(x - x0)))
    if abs(x[j] - x0) > 1e-9 or j not in inside:
        raise SpatialDomainError("x0 must be a grid node of the selected layer")
    if j - 1 in inside and j + 1 in inside:
        h = x[j + 1] - x[j - 1]
        ux = (fs.u[:, j + 1] - fs.u[:, j - 1]) / h
        vx = (fs.v[:, j + 1] - fs.v[:, j - 1]) / h
    else:
        s = 1 if j + 1 in inside else -1
        h = x[j + s] - x[j]
        ux = (-3 * fs.u[:, j] + 4 * fs.u[:, j + s] - fs.u[:, j + 2 * s]) / (2 * h)
        vx = (-3 * fs.v[:, j] + 4 * fs.v[:, j + s] - fs.v[:, j + 2 * s]) / (2 * h)
    q_s, q_l, g = _flux_from_gradients(L.coeffs, fs.v[:, j], ux, vx, problem.scales)
    return FluxSeries(fs.t.copy(), float(x0), q_s, q_l, g)


def rain_sensible_heat(forcing: BoundaryForcing, t) -> np.ndarray:
    """Sensible heat carried by the rain, c_w (T_inf - 273 K) g [W/m^2]."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = forcing.scales
    out = np.empty(t.size)
    for k, tk in enumerate(t):
        u_inf, _, g, _ = forcing.evaluate(float(tk))
        out[k] = C_W * (u_inf * s.T_ref - T_ENTHALPY_REF) * g * s.flow_scale
    return out


# --------------------------------------------------------------------------
# spectra and tails


def power_spectrum(t, y, rtol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """One-sided power |Y_k / n|^2 versus frequency (per unit of t).

    Interior bins are doubled so a sinusoid of amplitude A shows power A^2/2 at
    its frequency.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.ndim != 1 or t.shape != y.shape or t.size < 2:
        raise ResampleError("need matching 1D time and value arrays with at least two samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=rtol, atol=0.0):
        raise ResampleError("series is not uniformly sampled; resample first")
    n = y.size
    Y = np.fft.rfft(y) / n
    P = np.abs(Y) ** 2
    if n % 2 == 0:
        P[1:-1] *= 2.0
    else:
        P[1:] *= 2.0
    return np.fft.rfftfreq(n, d=dt[0]), P


def tail_diagnostics(trajectory, system) -> dict:
    """max_t |a_n| and |b_n| per layer, plus the full time series."""
    tails = tail_coefficients(system, trajectory.y)
    return {
        "a_n": tails["a_n"],
        "b_n": tails["b_n"],
        "max_a_n": tails["a_n"].max(axis=0),
        "max_b_n": tails["b_n"].max(axis=0),
    }
