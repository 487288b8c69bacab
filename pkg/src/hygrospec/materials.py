"""Hygrothermal property models.

Two representations are provided:

* physical closures (sorption isotherm, permeabilities, conductivity) giving
  the transport coefficients c_M, c_T, k_M, k_T, k_TM in SI units;
* dimensionless fits c_M*(v), ..., k_TM*(v) of the scaled vapour pressure v,
  built from small differentiable closures (:class:`Poly`, :class:`Rational`,
  :class:`ExpSum`, :class:`PowerLaw`) so they can be serialised to JSON and
  differentiated analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

C_W = 4180.0  # J/(kg K)
L_V = 2.5e6  # J/kg
R_V = 462.0  # J/(kg K)
RHO_L = 1000.0  # kg/m^3
T_ENTHALPY_REF = 273.0  # K, reference of the liquid water enthalpy

_PS_T0 = 159.5
_PS_SCALE = 120.6
_PS_A = 997.3
_PS_EXP = 8.275


class MaterialRangeError(ArithmeticError):
    """A coefficient closure produced a non-finite value."""

    def __init__(self, coefficient: str, v):
        super().__init__(f"coefficient {coefficient} is not finite at v={v!r}")
        self.coefficient = coefficient


class SaturationError(ValueError):
    """Relative humidity outside the open interval (0, 1)."""


def saturation_pressure(T):
    """Saturation vapour pressure [Pa] for temperature T [K]."""
    if isinstance(T, float):
        if T <= _PS_T0:
            raise ValueError(f"saturation pressure is undefined for T <= {_PS_T0} K")
        return _PS_A * ((T - _PS_T0) / _PS_SCALE) ** _PS_EXP
    T = np.asarray(T, dtype=float)
    if np.any(T <= _PS_T0):
        raise ValueError(f"saturation pressure is undefined for T <= {_PS_T0} K")
    out = _PS_A * ((T - _PS_T0) / _PS_SCALE) ** _PS_EXP
    return float(out) if out.ndim == 0 else out


def saturation_pressure_dT(T):
    T = np.asarray(T, dtype=float)
    out = _PS_A * _PS_EXP / _PS_SCALE * ((T - _PS_T0) / _PS_SCALE) ** (_PS_EXP - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WaterProperties:
    c_w: float = C_W
    L_v: float = L_V
    R_v: float = R_V
    rho_l: float = RHO_L

    @staticmethod
    def P_s(T):
        return saturation_pressure(T)


WATER = WaterProperties()


# --------------------------------------------------------------------------
# scalar closures of v with analytic derivatives


class Closure:
    """Base for a differentiable function of one variable."""

    kind = ""

    def __call__(self, v):
        raise NotImplementedError

    def deriv(self, v):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "Closure") -> "Closure":
        return Sum((self, other))


def _horner(coeffs: tuple, v):
    """sum_k coeffs[k] v^k without the overhead of numpy's polynomial module."""
    if isinstance(v, float):
        r = coeffs[-1]
        for c in coeffs[-2::-1]:
            r = r * v + c
        return r
    v = np.asarray(v, dtype=float)
    r = 0.0 * v + coeffs[-1]
    for c in coeffs[-2::-1]:
        r = r * v + c
    return r


def _polyder(coeffs: tuple) -> tuple:
    d = tuple(k * c for k, c in enumerate(coeffs))[1:]
    return d if d else (0.0,)


@dataclass(frozen=True)
class Poly(Closure):
    """sum_k coeffs[k] v^k (ascending powers)."""

    coeffs: tuple
    kind = "poly"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "_d", _polyder(self.coeffs))

    def __call__(self, v):
        return _horner(self.coeffs, v)

    def deriv(self, v):
        return _horner(self._d, v)

    def to_dict(self):
        return {"poly": list(self.coeffs)}


@dataclass(frozen=True)
class Rational(Closure):
    """Ratio of two ascending-power polynomials."""

    num: tuple
    den: tuple
    kind = "rational"

    def __post_init__(self):
        object.__setattr__(self, "num", tuple(float(c) for c in self.num))
        object.__setattr__(self, "den", tuple(float(c) for c in self.den))
        object.__setattr__(self, "_dnum", _polyder(self.num))
        object.__setattr__(self, "_dden", _polyder(self.den))

    def __call__(self, v):
        return _horner(self.num, v) / _horner(self.den, v)

    def deriv(self, v):
        p, q = _horner(self.num, v), _horner(self.den, v)
        dp, dq = _horner(self._dnum, v), _horner(self._dden, v)
        return (dp * q - p * dq) / (q * q)

    def to_dict(self):
        return {"rational": {"num": list(self.num), "den": list(self.den)}}


@dataclass(frozen=True)
class ExpSum(Closure):
    """sum_k a_k exp(b_k v)."""

    terms: tuple  # ((a, b), ...)
    kind = "exp_sum"

    def __call__(self, v):
        if isinstance(v, float):
            return sum(a * math.exp(b * v) for a, b in self.terms)
        v = np.asarray(v, dtype=float)
        return sum(a * np.exp(b * v) for a, b in self.terms)

    def deriv(self, v):
        v = np.asarray(v, dtype=float)
        return sum(a * b * np.exp(b * v) for a, b in self.terms)

    def to_dict(self):
        return {"exp_sum": [list(t) for t in self.terms]}


@dataclass(frozen=True)
class PowerLaw(Closure):
    """a v^p + c, for v > 0."""

    a: float
    p: float
    c: float = 0.0
    kind = "power"

    def __call__(self, v):
        if not isinstance(v, float):
            v = np.asarray(v, dtype=float)
        return self.a * v**self.p + self.c

    def deriv(self, v):
        v = np.asarray(v, dtype=float)
        return self.a * self.p * v ** (self.p - 1.0)

    def to_dict(self):
        return {"power": [self.a, self.p, self.c]}


@dataclass(frozen=True)
class Sum(Closure):
    parts: tuple
    kind = "sum"

    def __call__(self, v):
        return sum(p(v) for p in self.parts)

    def deriv(self, v):
        return sum(p.deriv(v) for p in self.parts)

    def to_dict(self):
        return {"sum": [p.to_dict() for p in self.parts]}


def closure_from_dict(d: dict) -> Closure:
    """Inverse of ``Closure.to_dict``."""
    if not isinstance(d, dict) or len(d) != 1:
        raise ValueError(f"closure spec must be a single-key object, got {d!r}")
    (kind, val), = d.items()
    if kind == "poly":
        return Poly(tuple(float(c) for c in val))
    if kind == "rational":
        return Rational(tuple(float(c) for c in val["num"]), tuple(float(c) for c in val["den"]))
    if kind == "exp_sum":
        return ExpSum(tuple((float(a), float(b)) for a, b in val))
    if kind == "power":
        return PowerLaw(*(float(x) for x in val))
    if kind == "sum":
        return Sum(tuple(closure_from_dict(p) for p in val))
    raise ValueError(f"unknown closure kind {kind!r}")


# --------------------------------------------------------------------------
# dimensionless coefficient sets

COEFF_NAMES = ("c_M", "c_T", "k_M", "k_T", "k_TM")


@dataclass(frozen=True)
class DimlessCoefficientSet:
    """Dimensionless storage and transport coefficients as functions of v."""

    name: str
    c_M: Closure
    c_T: Closure
    k_M: Closure
    k_T: Closure
    k_TM: Closure
    k_M_ref: float = 5.4712e-9
    k_T_ref: float = 0.5021

    def evaluate(self, v, check: bool = True) -> dict:
        """Values and v-derivatives of all five closures at v.

        Keys are the coefficient names plus ``d<name>`` for derivatives.
        """
        out = {}
        for nm in COEFF_NAMES:
            f = getattr(self, nm)
            val = f(v)
            out[nm] = val
            out["d" + nm] = f.deriv(v)
            if check and not np.all(np.isfinite(val)):
                raise MaterialRangeError(nm, v)
        return out

    def to_dict(self) -> dict:
        d = {nm: getattr(self, nm).to_dict() for nm in COEFF_NAMES}
        d["name"] = self.name
        d["k_M_ref_s"] = self.k_M_ref
        d["k_T_ref_W_per_mK"] = self.k_T_ref
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DimlessCoefficientSet":
        kw = {nm: closure_from_dict(d[nm]) for nm in COEFF_NAMES}
        return cls(
            name=d.get("name", "inline"),
            k_M_ref=float(d.get("k_M_ref_s", 5.4712e-9)),
            k_T_ref=float(d.get("k_T_ref_W_per_mK", 0.5021)),
            **kw,
        )


def load_bearing_fit() -> DimlessCoefficientSet:
    """Fits for the single-layer case and layer 1 of the two-layer wall."""
    return DimlessCoefficientSet(
        name="load_bearing_fit",
        c_M=Rational(
            num=(3.53e6, -5.44e5, 7.76e6, -4.15e6),
            den=(5493.0, 1.68e6, -2.47e6, 9.18e5, 1.0),
        ),
        k_M=Poly((1.57, -10.33, 77.15, -255.9, 417.8, -340.7, 120.6, -4.901, -4.23)),
        c_T=ExpSum(((9.327, -2.4e-4), (1.457e-14, 15.58))),
        k_T=ExpSum(((0.9996, -8.813e-4), (5.65e-15, 15.58))),
        k_TM=ExpSum(((0.1276, -1.651e-4),)),
        k_M_ref=5.4712e-9,
        k_T_ref=0.5021,
    )


def finishing_fit() -> DimlessCoefficientSet:
    """Fits for the finishing material (layer 2 of the two-layer wall)."""
    return DimlessCoefficientSet(
        name="finishing_fit",
        c_M=PowerLaw(1.221, -0.878),
        k_M=PowerLaw(-1.084e-4, 15.44, 11.34),
        c_T=ExpSum(((4.52, 0.1058), (1.79e-11, 12.81))),
        k_T=ExpSum(((0.8686, 0.1414), (9.498e-7, 7.968))),
        k_TM=ExpSum(((-1.884e-11, 14.25), (1.216, -0.0284))),
        k_M_ref=5.4712e-9,
        k_T_ref=0.5021,
    )


def wood_fibre_fit() -> DimlessCoefficientSet:
    """Linear fits for the wood-fibre wall."""
    return DimlessCoefficientSet(
        name="wood_fibre_fit",
        c_M=Poly((37.52, -0.663)),
        k_M=Poly((0.9854, 0.007289)),
        c_T=Poly((16.53, 0.08587)),
        k_T=Poly((0.9989, 0.0005546)),
        k_TM=Poly((0.004684, 3.465e-5)),
        k_M_ref=3.34e-11,
        k_T_ref=6.98e-2,
    )


def constant_fit(c_M=1.0, c_T=1.0, k_M=1.0, k_T=1.0, k_TM=0.0, name="constant"):
    """Constant coefficients; handy for verification problems."""
    return DimlessCoefficientSet(
        name=name,
        c_M=Poly((float(c_M),)),
        c_T=Poly((float(c_T),)),
        k_M=Poly((float(k_M),)),
        k_T=Poly((float(k_T),)),
        k_TM=Poly((float(k_TM),)),
    )


def dimless_coeffs_case1(v) -> dict:
    return load_bearing_fit().evaluate(v)


def dimless_coeffs_case2_layer2(v) -> dict:
    return finishing_fit().evaluate(v)


def dimless_coeffs_validation(v) -> dict:
    return wood_fibre_fit().evaluate(v)


BUILTIN_FITS: dict[str, Callable[[], DimlessCoefficientSet]] = {
    "load_bearing_fit": load_bearing_fit,
    "finishing_fit": finishing_fit,
    "wood_fibre_fit": wood_fibre_fit,
}


# --------------------------------------------------------------------------
# physical material models


@dataclass(frozen=True)
class MaterialModel:
    """Physical hygrothermal closures of a porous material.

    ``sorption`` and its derivative map relative humidity to moisture content
    [kg/m^3]; permeabilities [s] are functions of (phi, w); conductivity is a
    function of (w, T) in W/(m K).
    """

    name: str
    volumetric_heat_capacity: float
    sorption: Callable
    sorption_dphi: Callable
    vapour_permeability: Callable
    vapour_permeability_dw: Callable
    thermal_conductivity: Callable
    liquid_permeability: Optional[Callable] = None
    liquid_permeability_dphi: Optional[Callable] = None
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TransportCoefficients:
    c_M: float
    c_T: float
    k_M: float
    k_T: float
    k_TM: float
    phi: float
    w: float


def _hagentoft_delta(w_max):
    def delta(w):
        r = 1.0 - w / w_max
        return 6.413e-9 * r / (0.503 * r * r + 0.497)

    def ddelta_dw(w):
        r = 1.0 - w / w_max
        den = 0.503 * r * r + 0.497
        # d/dr [r / den] = (den - 2*0.503 r^2) / den^2, dr/dw = -1/w_max
        return -6.413e-9 * (den - 1.006 * r * r) / (den * den) / w_max

    return delta, ddelta_dw


def _vg_term(A, a, p, q):
    """A [1 + (-a ln phi)^p]^(-q) and its phi-derivative."""

    def f(phi):
        s = -a * np.log(phi)
        return A * (1.0 + s**p) ** (-q)

    def df(phi):
        s = -a * np.log(phi)
        # ds/dphi = -a/phi
        return A * (-q) * (1.0 + s**p) ** (-q - 1.0) * p * s ** (p - 1.0) * (-a / phi)

    return f, df


def load_bearing_material() -> MaterialModel:
    t1, d1 = _vg_term(47.1, 1692.94, 1.65, 0.39)
    t2, d2 = _vg_term(109.9, 2437.83, 6.0, 0.83)
    delta, ddelta = _hagentoft_delta(157.0)
    return MaterialModel(
        name="load_bearing",
        volumetric_heat_capacity=2005.0 * 840.0,
        sorption=lambda phi: t1(phi) + t2(phi),
        sorption_dphi=lambda phi: d1(phi) + d2(phi),
        vapour_permeability=lambda phi, w: delta(w),
        vapour_permeability_dw=lambda phi, w: ddelta(w),
        liquid_permeability=lambda phi, w: 2.52e-4 * np.exp(-1.55e6 * phi),
        liquid_permeability_dphi=lambda phi, w: -1.55e6 * 2.52e-4 * np.exp(-1.55e6 * phi),
        thermal_conductivity=lambda w, T: 0.5 + 0.0045 * w,
        extras={"dlambda_dw": 0.0045},
    )


def finishing_material() -> MaterialModel:
    t1, d1 = _vg_term(209.0, 2.7e14, 1.27, 0.21)
    delta, ddelta = _hagentoft_delta(209.0)

    def kl_exponent(w):
        z = w - 120.0
        return -33.0 + 0.0704 * z - 1.742e-4 * z**2 - 2.795e-6 * z**3 - 1.157e-7 * z**4 + 2.597e-9 * z**5

    def kl_exponent_dw(w):
        z = w - 120.0
        return 0.0704 - 2 * 1.742e-4 * z - 3 * 2.795e-6 * z**2 - 4 * 1.157e-7 * z**3 + 5 * 2.597e-9 * z**4

    return MaterialModel(
        name="finishing",
        volumetric_heat_capacity=790.0 * 870.0,
        sorption=t1,
        sorption_dphi=d1,
        vapour_permeability=lambda phi, w: delta(w),
        vapour_permeability_dw=lambda phi, w: ddelta(w),
        liquid_permeability=lambda phi, w: np.exp(kl_exponent(w)),
        liquid_permeability_dphi=lambda phi, w: np.exp(kl_exponent(w)) * kl_exponent_dw(w) * d1(phi),
        thermal_conductivity=lambda w, T: 0.2 + 0.0045 * w,
        extras={"dlambda_dw": 0.0045},
    )


def wood_fibre_material() -> MaterialModel:
    """Wood fibre; no liquid transport. Fits as printed, phi as a fraction."""
    return MaterialModel(
        name="wood_fibre",
        volumetric_heat_capacity=161.1e3,
        sorption=lambda phi: 7.063e-5 * phi**3 - 0.00736 * phi**2 + 0.4105 * phi + 0.2688,
        sorption_dphi=lambda phi: 3 * 7.063e-5 * phi**2 - 2 * 0.00736 * phi + 0.4105,
        vapour_permeability=lambda phi, w: 6.36 * phi + 2.16e-11,
        vapour_permeability_dw=lambda phi, w: 0.0 * phi,
        thermal_conductivity=lambda w, T: 0.038 + 0.192 * w / RHO_L + 1.08e-4 * T,
        extras={"dlambda_dw": 0.192 / RHO_L},
    )


BUILTIN_MATERIALS = {
    "load_bearing": load_bearing_material,
    "finishing": finishing_material,
    "wood_fibre": wood_fibre_material,
}


def physical_coefficients(mat: MaterialModel, water: WaterProperties, T, P_v) -> TransportCoefficients:
    """SI transport coefficients of ``mat`` at temperature T [K] and vapour pressure P_v [Pa]."""
    Ps = saturation_pressure(T)
    phi = P_v / Ps
    if not 0.0 < phi < 1.0:
        raise SaturationError(f"relative humidity {phi:.4g} outside (0, 1)")
    w = mat.sorption(phi)
    c_M = mat.sorption_dphi(phi) / Ps
    delta_v = mat.vapour_permeability(phi, w)
    k_M = delta_v
    if mat.liquid_permeability is not None:
        k_M = k_M + mat.liquid_permeability(phi, w) * water.rho_l * water.R_v * T / P_v
    return TransportCoefficients(
        c_M=float(c_M),
        c_T=float(mat.volumetric_heat_capacity + w * water.c_w),
        k_M=float(k_M),
        k_T=float(mat.thermal_conductivity(w, T)),
        k_TM=float(water.L_v * delta_v),
        phi=float(phi),
        w=float(w),
    )


def nondimensional_coefficients(
    mat: MaterialModel,
    v,
    *,
    T_ref: float = 293.15,
    P_v_ref: float = 1166.9,
    L_ref: float = 0.1,
    t_ref: float = 3600.0,
    k_M_ref: float = 5.4712e-9,
    k_T_ref: float = 0.5021,
    water: WaterProperties = WATER,
) -> dict:
    """Scaled physical coefficients at T_ref as functions of v, with v-derivatives.

    Properties are evaluated at the reference temperature, matching the
    assumption that they depend on the vapour pressure only.
    """
    v = np.asarray(v, dtype=float)
    Ps = saturation_pressure(T_ref)
    P_v = v * P_v_ref
    phi = P_v / Ps
    dphi_dv = P_v_ref / Ps
    w = mat.sorption(phi)
    dw_dv = mat.sorption_dphi(phi) * dphi_dv
    delta_v = mat.vapour_permeability(phi, w)
    ddelta_dv = mat.vapour_permeability_dw(phi, w) * dw_dv
    k_M = delta_v + 0.0 * v
    dk_M = ddelta_dv + 0.0 * v
    if mat.liquid_permeability is not None:
        kl = mat.liquid_permeability(phi, w)
        dkl_dv = mat.liquid_permeability_dphi(phi, w) * dphi_dv
        g = water.rho_l * water.R_v * T_ref / P_v
        dg = -g / v
        k_M = k_M + kl * g
        dk_M = dk_M + dkl_dv * g + kl * dg
    s_M = L_ref**2 / (k_M_ref * t_ref)
    s_T = L_ref**2 / (k_T_ref * t_ref)
    s_TM = P_v_ref / (k_T_ref * T_ref)
    dlam = mat.extras.get("dlambda_dw", 0.0)
    return {
        "c_M": mat.sorption_dphi(phi) / Ps * s_M,
        "c_T": (mat.volumetric_heat_capacity + w * water.c_w) * s_T,
        "k_M": k_M / k_M_ref,
        "k_T": mat.thermal_conductivity(w, T_ref) / k_T_ref,
        "k_TM": water.L_v * delta_v * s_TM,
        "dk_M": dk_M / k_M_ref,
        "dk_T": dlam * dw_dv / k_T_ref,
        "dk_TM": water.L_v * ddelta_dv * s_TM,
    }
