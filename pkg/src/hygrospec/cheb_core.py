"""Chebyshev series primitives on the canonical interval [-1, 1].

Evaluation (Clenshaw), derivative-coefficient recurrences, Chebyshev-Gauss
quadrature and orthogonal projection. Everything here is pure and works on
plain numpy arrays; :class:`ChebyshevSeries` is a thin immutable wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_EDGE_TOL = 1e-12


class ChebDomainError(ValueError):
    """Raised when a spectral coordinate falls outside [-1, 1]."""


class QuadratureEvaluationError(ArithmeticError):
    """Raised when an integrand returns a non-finite value at a node."""

    def __init__(self, k: int, value: float):
        super().__init__(f"non-finite integrand value {value!r} at node k={k}")
        self.k = k
        self.value = value


def c_weights(N: int) -> np.ndarray:
    """Normalisation weights c_i: 2 for i = 0, 1 otherwise."""
    c = np.ones(N)
    if N:
        c[0] = 2.0
    return c


@dataclass(frozen=True)
class ChebyshevSeries:
    """Truncated Chebyshev expansion sum_{i=0}^{n} a_i T_i(x)."""

    coeffs: np.ndarray

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=float).ravel()
        if a.size == 0:
            raise ValueError("a Chebyshev series needs at least one coefficient")
        if not np.all(np.isfinite(a)):
            raise ValueError("Chebyshev coefficients must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)

    @property
    def n(self) -> int:
        """Polynomial degree."""
        return self.coeffs.size - 1

    @property
    def N(self) -> int:
        """Number of modes, n + 1."""
        return self.coeffs.size

    def __call__(self, x):
        return eval_series(self, x)

    def derivative(self, order: int = 1) -> "ChebyshevSeries":
        d = derivative_coeffs(self)
        if order == 1:
            return ChebyshevSeries(d.first)
        if order == 2:
            return ChebyshevSeries(d.second)
        raise ValueError("only first and second derivatives are supported")


@dataclass(frozen=True)
class DerivativeCoeffs:
    first: np.ndarray
    second: np.ndarray
    c_weights: np.ndarray


@dataclass(frozen=True)
class QuadratureRule:
    """m-point Chebyshev-Gauss rule for the weight 1/sqrt(1 - x^2).

    Nodes are x_k = cos((2k - 1) pi / (2m)), k = 1..m, all with weight pi/m.
    """

    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"quadrature needs m >= 1 nodes, got {self.m!r}")
        k = np.arange(1, self.m + 1)
        nodes = np.cos((2 * k - 1) * np.pi / (2 * self.m))
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def weight(self) -> float:
        return np.pi / self.m

    def vandermonde(self, N: int) -> np.ndarray:
        """Matrix V[k, i] = T_i(x_k) of shape (m, N)."""
        return chebyshev_vandermonde(self.nodes, N)


def _check_domain(x: np.ndarray) -> np.ndarray:
    if np.any(~np.isfinite(x)) or np.any(np.abs(x) > 1.0 + _EDGE_TOL):
        bad = x[~(np.abs(x) <= 1.0 + _EDGE_TOL)]
        raise ChebDomainError(f"spectral coordinate outside [-1, 1]: {bad[:3]}")
    return np.clip(x, -1.0, 1.0)


def clenshaw(a: np.ndarray, x):
    """Clenshaw summation of sum a_i T_i(x); no domain check."""
    x = np.asarray(x, dtype=float)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    two_x = 2.0 * x
    for ak in a[:0:-1]:
        b1, b2 = ak + two_x * b1 - b2, b1
    return a[0] + x * b1 - b2


def eval_series(s, x):
    """Evaluate a series (or raw coefficient vector) at x in [-1, 1].

    Scalar input gives a float, array input gives an array of the same shape.
    """
    a = s.coeffs if isinstance(s, ChebyshevSeries) else np.asarray(s, dtype=float)
    xa = _check_domain(np.atleast_1d(np.asarray(x, dtype=float)))
    out = clenshaw(a, xa)
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


def chebyshev_vandermonde(x, N: int) -> np.ndarray:
    """V[k, i] = T_i(x_k) via the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    V = np.empty((x.size, N))
    if N > 0:
        V[:, 0] = 1.0
    if N > 1:
        V[:, 1] = x
    for i in range(2, N):
        V[:, i] = 2.0 * x * V[:, i - 1] - V[:, i - 2]
    return V


def _first_derivative(a: np.ndarray) -> np.ndarray:
    # backward recurrence c_i d_i = d_{i+2} + 2 (i+1) a_{i+1}, equivalent to
    # d_i = (2/c_i) sum_{p > i, p + i odd}^{n} p a_p
    n = a.size - 1
    d = np.zeros_like(a)
    for i in range(n - 1, -1, -1):
        nxt = d[i + 2] if i + 2 <= n else 0.0
        d[i] = nxt + 2.0 * (i + 1) * a[i + 1]
    if n >= 0:
        d[0] *= 0.5
    return d


def derivative_coeffs(s) -> DerivativeCoeffs:
    """First and second derivative coefficients, re-expanded in T_0..T_n.

    The sums run over the full range p <= n, so the result is exact for every
    polynomial of degree <= n (first[n] = 0, second[n-1] = second[n] = 0).
    """
    a = s.coeffs if isinstance(s, ChebyshevSeries) else np.asarray(s, dtype=float)
    first = _first_derivative(a)
    second = _first_derivative(first)
    return DerivativeCoeffs(first=first, second=second, c_weights=c_weights(a.size))


def derivative_matrix(N: int) -> np.ndarray:
    """Linear map D with D @ a = first-derivative coefficients of a."""
    D = np.zeros((N, N))
    for p in range(1, N):
        e = np.zeros(N)
        e[p] = 1.0
        D[:, p] = _first_derivative(e)
    return D


def quadrature(rule: QuadratureRule, f: Callable) -> float:
    """(pi/m) sum_k f(x_k), approximating the Chebyshev-weighted integral of f."""
    vals = np.array([f(x) for x in rule.nodes], dtype=float)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        k = int(bad[0])
        raise QuadratureEvaluationError(k + 1, float(vals[k]))
    return rule.weight * float(vals.sum())


def project_values(values: np.ndarray, rule: QuadratureRule, N: int) -> np.ndarray:
    """Discrete orthogonal projection of nodal values onto T_0..T_{N-1}."""
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise QuadratureEvaluationError(int(bad[0]) + 1, float(values[bad[0]]))
    V = rule.vandermonde(N)
    return (2.0 / (np.pi * c_weights(N))) * rule.weight * (V.T @ values)


def project_initial(f: Callable, n: int, rule: QuadratureRule) -> ChebyshevSeries:
    """Project f onto the Chebyshev basis of degree n using the given rule.

    a_i = 2/(pi c_i) * integral f T_i / sqrt(1 - x^2), evaluated by quadrature.
    """
    if rule.m < n + 1:
        raise ValueError(f"projection of degree {n} needs m >= {n + 1}, got m={rule.m}")
    vals = np.array([f(x) for x in rule.nodes], dtype=float)
    return ChebyshevSeries(project_values(vals, rule, n + 1))
