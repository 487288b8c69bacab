"""Tau-Galerkin reduced model for coupled heat and moisture transfer.

Per layer the fields are expanded as v = sum a_i T_i(xbar), u = sum b_i T_i(xbar).
The first n-1 rows of each field block are Chebyshev-Galerkin projections of
the non-conservative equations

    v_t = nu v_xx + lambda v_x
    u_t = alpha u_xx + beta u_x + gamma v_xx + delta v_x

evaluated with the discrete Chebyshev-Gauss rule. The last two rows of each
block are algebraic: boundary conditions on the outer layers and continuity of
fields and fluxes at interfaces. The result is an index-1 DAE

    mass * y' = F(t, y)

with a diagonal, singular mass matrix and state ordering
[a_1, b_1, a_2, b_2, ...].

Row assignment of the algebraic equations. In layer l, row n-1 of each field
block holds the condition at the layer's left end and row n the condition at
its right end: the outer boundary condition on the wall faces, field
continuity at the right end of an interior interface and flux continuity at its
left end.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .cheb_core import (
    ChebyshevSeries,
    QuadratureRule,
    chebyshev_vandermonde,
    derivative_matrix,
    project_initial,
)
from .materials import DimlessCoefficientSet
from .problem import BoundaryForcing, DimensionlessProblem, LayerSpec


class ParabolicityError(ArithmeticError):
    """A storage coefficient c_M or c_T is not strictly positive."""


class AssemblyError(ValueError):
    """Inconsistent dimensions or a singular algebraic subsystem."""


@dataclass(frozen=True)
class NonConservativeCoeffs:
    nu: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True)
class ProjectedBlocks:
    """Quadrature-built (n-1) x (n+1) matrices of one layer.

    G, Lam act on the moisture second / first derivative coefficients, M, N on
    the heat ones and F, J carry the moisture-to-heat coupling.
    """

    G: np.ndarray
    Lam: np.ndarray
    M: np.ndarray
    N: np.ndarray
    F: np.ndarray
    J: np.ndarray


def _values(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    return x.coeffs if isinstance(x, ChebyshevSeries) else np.asarray(x, dtype=float)


def nonconservative_at_nodes(
    coeffs: DimlessCoefficientSet,
    v_series,
    layer: LayerSpec,
    rule: QuadratureRule,
) -> NonConservativeCoeffs:
    """Coefficients nu, lambda, alpha, beta, gamma, delta at the quadrature nodes.

    Spatial gradients of k_M, k_T and k_TM are obtained by the chain rule
    dk/dx* = dk/dv * dv/dx*, with dv/dx* = metric * dv/dxbar.
    """
    a = _values(v_series)
    N = a.size
    V = rule.vandermonde(N)
    v = V @ a
    vx = layer.metric * (V @ (derivative_matrix(N) @ a))
    return _ncc_from_nodal(coeffs, v, vx)


def _ncc_from_nodal(coeffs: DimlessCoefficientSet, v: np.ndarray, vx: np.ndarray) -> NonConservativeCoeffs:
    c = coeffs.evaluate(v)
    if np.any(c["c_M"] <= 0) or np.any(c["c_T"] <= 0):
        raise ParabolicityError(
            f"{coeffs.name}: non-positive storage coefficient for v in [{v.min():.4g}, {v.max():.4g}]"
        )
    inv_cM = 1.0 / c["c_M"]
    inv_cT = 1.0 / c["c_T"]
    return NonConservativeCoeffs(
        nu=c["k_M"] * inv_cM,
        lam=c["dk_M"] * vx * inv_cM,
        alpha=c["k_T"] * inv_cT,
        beta=c["dk_T"] * vx * inv_cT,
        gamma=c["k_TM"] * inv_cT,
        delta=c["dk_TM"] * vx * inv_cT,
    )


def build_matrices(ncc: NonConservativeCoeffs, rule: QuadratureRule, n: int) -> ProjectedBlocks:
    """Discrete quadrature of the weighted triple products, rows j <= n-2."""
    N = n + 1
    if rule.m < N:
        raise AssemblyError(f"quadrature needs m >= n+1 = {N}, got m={rule.m}")
    V = rule.vandermonde(N)
    W = rule.weight * V[:, : n - 1].T  # (n-1, m)

    def proj(w):
        return (W * np.asarray(w, dtype=float)) @ V

    return ProjectedBlocks(
        G=proj(ncc.nu), Lam=proj(ncc.lam), M=proj(ncc.alpha),
        N=proj(ncc.beta), F=proj(ncc.gamma), J=proj(ncc.delta),
    )


def mass_diagonal(N: int) -> np.ndarray:
    """(pi, pi/2, ..., pi/2, 0, 0): Galerkin mass of one field block."""
    d = np.full(N, np.pi / 2.0)
    d[0] = np.pi
    d[-2:] = 0.0
    return d


# --------------------------------------------------------------------------
# boundary and interface rows


@lru_cache(maxsize=None)
def _end_vectors(N: int, end: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(N)
    Tend = np.ones(N) if end > 0 else (-1.0) ** i
    # T_i'(1) = i^2, T_i'(-1) = (-1)^(i+1) i^2
    dTend = i**2 * (1.0 if end > 0 else (-1.0) ** (i + 1))
    return Tend, dTend


def _end_values(a, b, layer: LayerSpec, end: int):
    """(v, v_x*, u, u_x*) at xbar = end (+1 or -1).

    ``a`` and ``b`` may carry extra trailing axes (a batch of states).
    """
    a = _values(a)
    b = _values(b)
    Tend, dTend = _end_vectors(a.shape[0], end)
    return Tend @ a, layer.metric * (dTend @ a), Tend @ b, layer.metric * (dTend @ b)


def _transport(coeffs: DimlessCoefficientSet, v):
    kM, kT, kTM = coeffs.k_M(v), coeffs.k_T(v), coeffs.k_TM(v)
    if not np.all(np.isfinite(kM + kT + kTM)):
        raise ParabolicityError(f"{coeffs.name}: non-finite transport coefficient near v={np.min(v):.4g}")
    return kM, kT, kTM


def boundary_residuals(
    a, b, forcing: BoundaryForcing, coeffs: DimlessCoefficientSet, layer: LayerSpec, t: float
) -> tuple[float, float]:
    """(omega, kappa): moisture and heat residuals of one outer boundary.

    Robin:  omega = Bi_M (v - v_inf) - g - n k_M v_x
            kappa = Bi_T (u - u_inf) + Bi_TM (v - v_inf) - H_l g - n (k_T u_x + k_TM v_x)
    Dirichlet: omega = v - v_inf, kappa = u - u_inf.
    """
    end = -1 if forcing.side == "left" else 1
    v, vx, u, ux = _end_values(a, b, layer, end)
    u_inf, v_inf, g, H = forcing.evaluate(t)
    if forcing.kind == "dirichlet":
        return v - v_inf, u - u_inf
    kM, kT, kTM = _transport(coeffs, v)
    n = forcing.normal
    omega = forcing.Bi_M * (v - v_inf) - g - n * kM * vx
    kappa = (
        forcing.Bi_T * (u - u_inf)
        + forcing.Bi_TM * (v - v_inf)
        - H * g
        - n * (kT * ux + kTM * vx)
    )
    return omega, kappa


def interface_residuals(
    a1, b1, a2, b2,
    coeffs1: DimlessCoefficientSet, coeffs2: DimlessCoefficientSet,
    layer1: LayerSpec, layer2: LayerSpec,
) -> tuple[float, float, float, float]:
    """(theta_1..theta_4): v jump, moisture-flux jump, u jump, heat-flux jump."""
    v1, vx1, u1, ux1 = _end_values(a1, b1, layer1, +1)
    v2, vx2, u2, ux2 = _end_values(a2, b2, layer2, -1)
    kM1, kT1, kTM1 = _transport(coeffs1, v1)
    kM2, kT2, kTM2 = _transport(coeffs2, v2)
    th1 = v1 - v2
    th2 = kM1 * vx1 - kM2 * vx2
    th3 = u1 - u2
    th4 = (kT1 * ux1 + kTM1 * vx1) - (kT2 * ux2 + kTM2 * vx2)
    return th1, th2, th3, th4


# --------------------------------------------------------------------------
# assembled system


class SpectralSystem:
    """The assembled DAE  mass * y' = F(t, y)  of a layered wall.

    Instances are immutable after construction; :meth:`rhs` is a pure
    function of (t, y).
    """

    def __init__(self, problem: DimensionlessProblem, n: int, rule: QuadratureRule | None = None):
        if n < 2:
            raise AssemblyError("the tau method needs degree n >= 2")
        N = n + 1
        rule = rule if rule is not None else QuadratureRule(N + 5)
        if rule.m < N:
            raise AssemblyError(f"quadrature needs m >= {N} nodes, got {rule.m}")
        self.problem = problem
        self.n = n
        self.N = N
        self.rule = rule
        self.layers: tuple[LayerSpec, ...] = tuple(problem.layers)
        self.n_layers = len(self.layers)
        self.size = 2 * self.n_layers * N
        self._V = rule.vandermonde(N)
        self._D1 = derivative_matrix(N)
        self._D2 = self._D1 @ self._D1
        self._W = rule.weight * self._V[:, : n - 1].T
        self._VD1 = self._V @ self._D1
        self._VD2 = self._V @ self._D2
        self.mass = np.tile(mass_diagonal(N), 2 * self.n_layers)
        self.algebraic = np.flatnonzero(self.mass == 0.0)

    # -- state layout ------------------------------------------------------
    def split(self, y) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per layer (a, b) coefficient views; y is (size,) or a batch (size, k)."""
        y = np.asarray(y, dtype=float)
        if y.ndim not in (1, 2) or y.shape[0] != self.size:
            raise AssemblyError(f"state must have leading dimension {self.size}, got {y.shape}")
        N = self.N
        return [(y[2 * l * N:(2 * l + 1) * N], y[(2 * l + 1) * N:(2 * l + 2) * N]) for l in range(self.n_layers)]

    def block_slices(self, layer: int) -> tuple[slice, slice]:
        N = self.N
        return slice(2 * layer * N, (2 * layer + 1) * N), slice((2 * layer + 1) * N, (2 * layer + 2) * N)

    # -- pieces -------------------------------------------------------------
    def ncc(self, y, layer: int) -> NonConservativeCoeffs:
        a, _ = self.split(y)[layer]
        return nonconservative_at_nodes(self.layers[layer].coeffs, a, self.layers[layer], self.rule)

    def blocks(self, y, layer: int) -> ProjectedBlocks:
        return build_matrices(self.ncc(y, layer), self.rule, self.n)

    def projected_rows(self, a, b, layer: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows 0..n-2 of both field blocks of one layer."""
        L = self.layers[layer]
        s = L.metric
        v = self._V @ a
        vx = s * (self._VD1 @ a)
        vxx = s * s * (self._VD2 @ a)
        ux = s * (self._VD1 @ b)
        uxx = s * s * (self._VD2 @ b)
        c = _ncc_from_nodal(L.coeffs, v, vx)
        rv = c.nu * vxx + c.lam * vx
        ru = c.alpha * uxx + c.beta * ux + c.gamma * vxx + c.delta * vx
        return self._W @ rv, self._W @ ru

    def _fill_algebraic(self, t: float, parts, out: np.ndarray) -> None:
        n = self.n
        p = self.problem
        N = self.N
        last = self.n_layers - 1
        a, b = parts[0]
        out[n - 1], out[N + n - 1] = boundary_residuals(a, b, p.left, self.layers[0].coeffs, self.layers[0], t)
        a, b = parts[last]
        L = self.layers[last]
        out[2 * last * N + n], out[(2 * last + 1) * N + n] = boundary_residuals(a, b, p.right, L.coeffs, L, t)
        for l in range(last):
            (a0, b0), (a1, b1) = parts[l], parts[l + 1]
            L0, L1 = self.layers[l], self.layers[l + 1]
            th = interface_residuals(a0, b0, a1, b1, L0.coeffs, L1.coeffs, L0, L1)
            # continuity at the right end of layer l, flux at the left end of layer l+1
            out[2 * l * N + n], out[(2 * l + 1) * N + n] = th[0], th[2]
            out[2 * (l + 1) * N + n - 1], out[(2 * l + 3) * N + n - 1] = th[1], th[3]

    def algebraic_residuals(self, t: float, y) -> np.ndarray:
        """Boundary and interface residuals only, in state order."""
        parts = self.split(y)
        out = np.zeros((self.size,) + np.shape(y)[1:])
        self._fill_algebraic(t, parts, out)
        return out[self.algebraic]

    def rhs(self, t: float, y) -> np.ndarray:
        """F(t, y); a batch y of shape (size, k) gives k columns."""
        parts = self.split(y)
        n = self.n
        out = np.empty((self.size,) + np.shape(y)[1:])
        for l, (a, b) in enumerate(parts):
            sa, sb = self.block_slices(l)
            out[sa][: n - 1], out[sb][: n - 1] = self.projected_rows(a, b, l)
        self._fill_algebraic(t, parts, out)
        return out

    __call__ = rhs

    def jacobian(self, t: float, y, f0=None) -> np.ndarray:
        """Forward-difference dF/dy from one batched evaluation of all columns."""
        y = np.asarray(y, dtype=float)
        if f0 is None:
            f0 = self.rhs(t, y)
        h = 1.5e-8 * np.maximum(1.0, np.abs(y))
        F = self.rhs(t, y[:, None] + np.diag(h))
        return (F - f0[:, None]) / h

    # -- initial state ------------------------------------------------------
    def initial_state(self) -> np.ndarray:
        """Orthogonal projection of the initial profiles onto each layer."""
        y = np.empty(self.size)
        p = self.problem
        for l, layer in enumerate(self.layers):
            sa, sb = self.block_slices(l)

            def vfun(xb, layer=layer):
                return float(p.v0(layer.from_spectral(xb)))

            def ufun(xb, layer=layer):
                return float(p.u0(layer.from_spectral(xb)))

            y[sa] = project_initial(vfun, self.n, self.rule).coeffs
            y[sb] = project_initial(ufun, self.n, self.rule).coeffs
        return y

    def algebraic_jacobian(self, t: float, y, eps: float = 1e-7) -> np.ndarray:
        """Finite-difference d(algebraic rows)/d(algebraic unknowns)."""
        idx = self.algebraic
        f0 = self.rhs(t, y)[idx]
        J = np.empty((idx.size, idx.size))
        for c, j in enumerate(idx):
            yp = np.array(y, dtype=float)
            h = eps * max(1.0, abs(yp[j]))
            yp[j] += h
            J[:, c] = (self.rhs(t, yp)[idx] - f0) / h
        return J

    def check_algebraic_subsystem(self, t: float, y) -> float:
        """Condition number of the algebraic Jacobian; raises if singular."""
        J = self.algebraic_jacobian(t, y)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > 1e13:
            raise AssemblyError(f"algebraic subsystem is singular (cond={cond:.3g})")
        return float(cond)

    # -- reconstruction -------------------------------------------------------
    def evaluate(self, y, x, derivative: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) or their x*-derivatives at positions x* in [0, 1]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = self.problem.layer_index(x)
        parts = self.split(y)
        u = np.empty(x.size)
        v = np.empty(x.size)
        for l, layer in enumerate(self.layers):
            sel = idx == l
            if not np.any(sel):
                continue
            xb = layer.to_spectral(x[sel])
            T = chebyshev_vandermonde(xb, self.N)
            a, b = parts[l]
            if derivative == 1:
                a, b = layer.metric * (self._D1 @ a), layer.metric * (self._D1 @ b)
            elif derivative != 0:
                raise ValueError("derivative must be 0 or 1")
            u[sel] = T @ b
            v[sel] = T @ a
        return u, v


def assemble_dae(problem: DimensionlessProblem, n: int, rule: QuadratureRule | None = None,
                 check: bool = True) -> SpectralSystem:
    """Build the block DAE of ``problem`` with degree ``n`` (N = n + 1 modes per field)."""
    sys = SpectralSystem(problem, n, rule)
    if check:
        sys.check_algebraic_subsystem(0.0, sys.initial_state())
    return sys


def algebraic_row_count(system: SpectralSystem) -> int:
    return int(system.algebraic.size)


def tail_coefficients(system: SpectralSystem, states: Sequence[np.ndarray]) -> dict[str, np.ndarray]:
    """|a_n|(t) and |b_n|(t) for each layer, shape (n_times, n_layers)."""
    Y = np.atleast_2d(np.asarray(states, dtype=float))
    N = system.N
    a_n = np.stack([np.abs(Y[:, (2 * l + 1) * N - 1]) for l in range(system.n_layers)], axis=1)
    b_n = np.stack([np.abs(Y[:, (2 * l + 2) * N - 1]) for l in range(system.n_layers)], axis=1)
    return {"a_n": a_n, "b_n": b_n}
