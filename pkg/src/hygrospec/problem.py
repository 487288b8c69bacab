"""Dimensionless problem definition: layers, scales, boundary forcing, initial state.

Boundary sign convention. On each side the normal ``n`` is +1 on the left and
-1 on the right, and the moisture condition reads

    n * k_M * dv/dx = Bi_M * (v - v_inf) - g_inf

so that a surface with v < v_inf (or under rain, g_inf > 0) gains moisture.
The heat condition carries the latent term Bi_TM (v - v_inf) and the rain
enthalpy H_l * g_inf in the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .materials import C_W, L_V, T_ENTHALPY_REF, DimlessCoefficientSet, saturation_pressure


class ConfigurationError(ValueError):
    """Inconsistent or non-physical problem description."""


class SpatialDomainError(ValueError):
    """Position outside the layer (or wall) it was evaluated on."""


@dataclass(frozen=True)
class ReferenceScales:
    T_ref: float = 293.15
    P_v_ref: float = 1166.9
    L_ref: float = 0.1
    t_ref: float = 3600.0
    k_M_ref: float = 5.4712e-9
    k_T_ref: float = 0.5021

    def __post_init__(self):
        for name in ("T_ref", "P_v_ref", "L_ref", "t_ref", "k_M_ref", "k_T_ref"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigurationError(f"reference scale {name} must be > 0, got {val!r}")

    @property
    def enthalpy_scale(self) -> float:
        """Factor turning H_l [J/kg] into its dimensionless counterpart."""
        return self.k_M_ref * self.P_v_ref / (self.k_T_ref * self.T_ref)

    @property
    def flow_scale(self) -> float:
        """Factor turning g* into kg/(m^2 s)."""
        return self.k_M_ref * self.P_v_ref / self.L_ref


def biot_numbers(h_M: float, h_T: float, scales: ReferenceScales) -> tuple[float, float, float]:
    """(Bi_M, Bi_T, Bi_TM) for surface coefficients h_M [s/m] and h_T [W/(m^2 K)]."""
    if h_M < 0 or h_T < 0:
        raise ConfigurationError("surface transfer coefficients must be nonnegative")
    s = scales
    Bi_M = h_M * s.L_ref / s.k_M_ref
    Bi_T = h_T * s.L_ref / s.k_T_ref
    Bi_TM = h_M * L_V * s.L_ref * s.P_v_ref / (s.k_T_ref * s.T_ref)
    return Bi_M, Bi_T, Bi_TM


# --------------------------------------------------------------------------
# layers


@dataclass(frozen=True)
class LayerSpec:
    """One material layer occupying [x_a, x_b] in dimensionless coordinates."""

    x_a: float
    x_b: float
    coeffs: DimlessCoefficientSet

    def __post_init__(self):
        if not self.x_b > self.x_a:
            raise ConfigurationError(f"empty layer [{self.x_a}, {self.x_b}]")

    @property
    def length(self) -> float:
        return self.x_b - self.x_a

    @property
    def metric(self) -> float:
        """d(xbar)/dx* for the affine map onto [-1, 1]."""
        return 2.0 / (self.x_b - self.x_a)

    def to_spectral(self, x):
        return map_to_spectral(self, x)

    def from_spectral(self, xbar):
        xbar = np.asarray(xbar, dtype=float)
        return self.x_a + 0.5 * (xbar + 1.0) * (self.x_b - self.x_a)

    def contains(self, x, tol: float = 1e-12):
        x = np.asarray(x, dtype=float)
        return (x >= self.x_a - tol) & (x <= self.x_b + tol)


def map_to_spectral(layer: LayerSpec, x):
    """Affine map of x* in [x_a, x_b] onto xbar in [-1, 1]."""
    xa = np.asarray(x, dtype=float)
    if np.any(~layer.contains(xa)):
        raise SpatialDomainError(f"x*={x!r} outside layer [{layer.x_a}, {layer.x_b}]")
    xbar = np.clip(2.0 * (xa - layer.x_a) / (layer.x_b - layer.x_a) - 1.0, -1.0, 1.0)
    return float(xbar) if xbar.ndim == 0 else xbar


def layers_from_lengths(lengths_m: Sequence[float], coeffs: Sequence[DimlessCoefficientSet]) -> list[LayerSpec]:
    """Partition [0, 1] proportionally to the physical layer lengths."""
    if len(lengths_m) != len(coeffs) or not lengths_m:
        raise ConfigurationError("need one coefficient set per layer")
    if any(L <= 0 for L in lengths_m):
        raise ConfigurationError("layer lengths must be positive")
    total = float(sum(lengths_m))
    edges = np.concatenate([[0.0], np.cumsum(lengths_m) / total])
    edges[-1] = 1.0
    return [LayerSpec(float(edges[i]), float(edges[i + 1]), c) for i, c in enumerate(coeffs)]


# --------------------------------------------------------------------------
# forcings (all dimensionless functions of t*)


def forcing_case1(t):
    """Ambient (u_L, u_R, v_L, v_R) of the sinusoidal single-layer benchmark."""
    t = np.asarray(t, dtype=float)
    uL = 1.0 - 0.05 * np.sin(np.pi * t / 8760.0) + 0.01 * np.sin(2.0 * np.pi * t / 24.0)
    uR = 1.0 + 0.005 * np.sin(np.pi * t / 48.0)
    T_ref, P_ref = 293.15, 1166.9
    vL = (0.5 + 0.45 * np.sin(2.0 * np.pi * t / 90.0) ** 2) * saturation_pressure(uL * T_ref) / P_ref
    vR = (0.5 + 0.4 * np.sin(2.0 * np.pi * t / 30.0) ** 2) * saturation_pressure(uR * T_ref) / P_ref
    return uL, uR, vL, vR


def _case1_scalar(t: float, side: str) -> tuple[float, float]:
    """Scalar fast path of :func:`forcing_case1` for one side."""
    if side == "left":
        u = 1.0 - 0.05 * math.sin(math.pi * t / 8760.0) + 0.01 * math.sin(2.0 * math.pi * t / 24.0)
        rh = 0.5 + 0.45 * math.sin(2.0 * math.pi * t / 90.0) ** 2
    else:
        u = 1.0 + 0.005 * math.sin(math.pi * t / 48.0)
        rh = 0.5 + 0.4 * math.sin(2.0 * math.pi * t / 30.0) ** 2
    return u, rh * saturation_pressure(u * 293.15) / 1166.9


def rain_case2(t):
    """Dimensionless driving-rain flow with peaks of 2.4 at t* = 42 and 126."""
    if isinstance(t, float):
        return 2.4 * math.sin(math.pi * t / 84.0) ** 70
    t = np.asarray(t, dtype=float)
    out = 2.4 * np.sin(np.pi * t / 84.0) ** 70
    return float(out) if out.ndim == 0 else out


class Ambient:
    """Ambient state u_inf(t*), v_inf(t*)."""

    def __call__(self, t) -> tuple[float, float]:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Case1Ambient(Ambient):
    side: str

    def __call__(self, t):
        if isinstance(t, float):
            return _case1_scalar(t, self.side)
        uL, uR, vL, vR = forcing_case1(t)
        return (uL, vL) if self.side == "left" else (uR, vR)

    def describe(self):
        return {"builtin": f"case1_{self.side}"}


@dataclass(frozen=True)
class ConstantAmbient(Ambient):
    u: float
    v: float

    def __call__(self, t):
        return self.u, self.v

    def describe(self):
        return {"constant": {"u": self.u, "v": self.v}}


@dataclass(frozen=True)
class TabulatedAmbient(Ambient):
    """Piecewise-linear ambient state from sampled series (dimensionless)."""

    t_u: np.ndarray
    u: np.ndarray
    t_v: np.ndarray
    v: np.ndarray
    source: str = "tabulated"

    def __call__(self, t):
        return float(np.interp(t, self.t_u, self.u)), float(np.interp(t, self.t_v, self.v))

    def describe(self):
        return {"tabulated": self.source}


def _smooth_step(t, t0, width):
    return 0.5 * (1.0 + np.tanh((t - t0) / width))


@dataclass(frozen=True)
class SyntheticValidationAmbient(Ambient):
    """Stand-in for the measured wood-fibre boundary data.

    Left (interior): ~24 C, relative humidity stepping from ~40 % to ~70 %
    after one week. Right (exterior): daily oscillation around the initial
    surface state. Both start at the surface values of the initial profiles.
    """

    side: str

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        T_ref, P_ref = 293.15, 1166.9
        if self.side == "left":
            u = 1.015 + 0.0 * t
            rh0 = 1.092 * P_ref / saturation_pressure(1.015 * T_ref)
            rh = rh0 + (0.70 - rh0) * _smooth_step(t, 168.0, 2.0)
            v = rh * saturation_pressure(u * T_ref) / P_ref
        else:
            u0 = 0.96523
            u = u0 + 0.012 * np.sin(2.0 * np.pi * t / 24.0)
            rh0 = 0.90869 * P_ref / saturation_pressure(u0 * T_ref)
            rh = rh0 - 0.08 * np.sin(2.0 * np.pi * t / 24.0)
            v = rh * saturation_pressure(u * T_ref) / P_ref
        if u.ndim == 0:
            return float(u), float(v)
        return u, v

    def describe(self):
        return {"builtin": f"validation_synthetic_{self.side}"}


BUILTIN_AMBIENTS: dict[str, Callable[[], Ambient]] = {
    "case1_left": lambda: Case1Ambient("left"),
    "case1_right": lambda: Case1Ambient("right"),
    "validation_synthetic_left": lambda: SyntheticValidationAmbient("left"),
    "validation_synthetic_right": lambda: SyntheticValidationAmbient("right"),
}

BUILTIN_RAIN: dict[str, Callable] = {"case2": rain_case2}


@dataclass(frozen=True)
class BoundaryForcing:
    """Dimensionless exchange conditions on one side of the wall."""

    side: str
    ambient: Ambient
    kind: str = "robin"
    Bi_M: float = 0.0
    Bi_T: float = 0.0
    Bi_TM: float = 0.0
    rain: Optional[Callable] = None
    scales: ReferenceScales = field(default_factory=ReferenceScales)

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ConfigurationError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.kind not in ("robin", "dirichlet"):
            raise ConfigurationError(f"unknown boundary kind {self.kind!r}")
        if min(self.Bi_M, self.Bi_T, self.Bi_TM) < 0:
            raise ConfigurationError("Biot numbers must be nonnegative")

    @property
    def normal(self) -> float:
        return 1.0 if self.side == "left" else -1.0

    def g(self, t) -> float:
        if self.kind == "dirichlet" or self.rain is None:
            return 0.0
        return float(self.rain(t))

    def H_l(self, u_inf) -> float:
        """Dimensionless liquid enthalpy c_w (T_inf - 273 K), scaled."""
        return C_W * (u_inf * self.scales.T_ref - T_ENTHALPY_REF) * self.scales.enthalpy_scale

    def evaluate(self, t) -> tuple[float, float, float, float]:
        """(u_inf, v_inf, g*, H_l*) at time t*."""
        u_inf, v_inf = self.ambient(t)
        g = self.g(t)
        return float(u_inf), float(v_inf), g, self.H_l(u_inf)


# --------------------------------------------------------------------------
# problem


def _as_function(f):
    if callable(f):
        return f
    c = float(f)
    return lambda x: c + 0.0 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PolynomialProfile:
    """sum_k coeffs[k] (x*)^k."""

    coeffs: tuple

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)


@dataclass(frozen=True)
class DimensionlessProblem:
    layers: tuple
    left: BoundaryForcing
    right: BoundaryForcing
    u0: Callable
    v0: Callable
    horizon: float
    scales: ReferenceScales = field(default_factory=ReferenceScales)
    name: str = "problem"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "u0", _as_function(self.u0))
        object.__setattr__(self, "v0", _as_function(self.v0))
        if not self.layers:
            raise ConfigurationError("at least one layer is required")
        if abs(self.layers[0].x_a) > 1e-12 or abs(self.layers[-1].x_b - 1.0) > 1e-12:
            raise ConfigurationError("layers must cover [0, 1]")
        for l1, l2 in zip(self.layers[:-1], self.layers[1:]):
            if abs(l1.x_b - l2.x_a) > 1e-12:
                raise ConfigurationError("layers must share their endpoints")
        if not self.horizon >= 0:
            raise ConfigurationError("horizon must be nonnegative")
        xs = np.linspace(0.0, 1.0, 33)
        if not (np.all(np.isfinite(self.u0(xs))) and np.all(np.isfinite(self.v0(xs)))):
            raise ConfigurationError("initial fields must be finite on [0, 1]")

    @property
    def interfaces(self) -> list[float]:
        return [l.x_b for l in self.layers[:-1]]

    def layer_index(self, x) -> np.ndarray:
        """Layer holding each x* (interface points go to the left layer)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise SpatialDomainError("position outside the wall")
        edges = np.array(self.interfaces)
        return np.searchsorted(edges, x - 1e-12, side="right") if edges.size else np.zeros(x.size, int)


@dataclass(frozen=True)
class PhysicalBoundary:
    kind: str = "robin"
    h_M: float = 0.0  # s/m
    h_T: float = 0.0  # W/(m^2 K)
    ambient: Ambient = field(default_factory=lambda: ConstantAmbient(1.0, 1.0))
    rain: Optional[Callable] = None


@dataclass(frozen=True)
class PhysicalCase:
    """A wall described in physical units (lengths in m, times in s)."""

    layer_lengths: tuple
    materials: tuple
    left: PhysicalBoundary
    right: PhysicalBoundary
    horizon_s: float
    scales: ReferenceScales
    T0: object = 293.15  # K, or a callable u0(x*) already scaled
    P_v0: object = 1166.9  # Pa, or a callable v0(x*)
    name: str = "case"


def nondimensionalize(case: PhysicalCase) -> DimensionlessProblem:
    """Scale a physical case: Biot numbers, layer map, horizon and initial state."""
    s = case.scales
    total = float(sum(case.layer_lengths))
    if abs(total - s.L_ref) > 1e-9 * max(1.0, total):
        raise ConfigurationError(f"L_ref={s.L_ref} differs from the wall thickness {total}")
    for mat in case.materials:
        for name, ref in (("k_M_ref", s.k_M_ref), ("k_T_ref", s.k_T_ref)):
            if abs(getattr(mat, name) - ref) > 1e-9 * ref:
                raise ConfigurationError(f"material {mat.name} was scaled with a different {name}")
    layers = layers_from_lengths(case.layer_lengths, case.materials)

    def side(b: PhysicalBoundary, name: str) -> BoundaryForcing:
        Bi_M, Bi_T, Bi_TM = biot_numbers(b.h_M, b.h_T, s)
        return BoundaryForcing(
            side=name, ambient=b.ambient, kind=b.kind, Bi_M=Bi_M, Bi_T=Bi_T, Bi_TM=Bi_TM,
            rain=b.rain, scales=s,
        )

    u0 = case.T0 if callable(case.T0) else float(case.T0) / s.T_ref
    v0 = case.P_v0 if callable(case.P_v0) else float(case.P_v0) / s.P_v_ref
    return DimensionlessProblem(
        layers=tuple(layers),
        left=side(case.left, "left"),
        right=side(case.right, "right"),
        u0=u0,
        v0=v0,
        horizon=case.horizon_s / s.t_ref,
        scales=s,
        name=case.name,
    )
