"""Scalar functions of the Curie-Weiss model.

The rate function

    F_beta(t) = artanh(t)**2 / beta + ln(1 - t**2),    -1 < t < 1,

controls the de Finetti mixing measure. For beta > 1 it has two minimisers
at +-m(beta), where m is the positive root of tanh(beta * m) = m.

All functions accept Python floats or numpy arrays and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "ModelParams",
    "Magnetization",
    "SemicircleMeasure",
    "SEMICIRCLE",
    "f_beta",
    "f_beta_d1",
    "f_beta_d2",
    "solve_magnetization",
    "envelope_bound",
    "tilt_parameter",
    "ld_rate",
    "catalan",
    "semicircle_density",
    "semicircle_cdf",
    "semicircle_moment",
]


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature ``beta``, size exponent ``alpha`` and matrix size ``n``."""

    beta: float
    alpha: float
    n: int

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ParameterError(f"beta must be positive, got {self.beta!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ParameterError(f"alpha must be positive, got {self.alpha!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def exponent(self) -> float:
        """The large parameter N**alpha multiplying F_beta."""
        return float(self.n) ** self.alpha

    def require_subcritical(self):
        if not self.beta > 1:
            raise ParameterError(f"subcritical temperature required (beta > 1), got beta={self.beta}")
        return self


@dataclass(frozen=True)
class Magnetization:
    beta: float
    m: float
    residual: float


def _as_open_interval(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~(np.abs(arr) < 1)):
        raise DomainError("argument must satisfy |t| < 1")
    return arr


def _out(value):
    return value[()] if isinstance(value, np.ndarray) and value.ndim == 0 else value


def _log_one_minus_sq(t):
    # ln(1 - t^2) without forming 1 - t*t
    return np.log1p(t) + np.log1p(-t)


def f_beta(t, beta):
    """The rate function F_beta(t)."""
    t = _as_open_interval(t)
    return _out(np.arctanh(t) ** 2 / beta + _log_one_minus_sq(t))


def f_beta_d1(t, beta):
    """F_beta'(t) = 2 (artanh t - beta t) / (beta (1 - t^2))."""
    t = _as_open_interval(t)
    one_minus_sq = (1.0 - t) * (1.0 + t)
    return _out(2.0 * (np.arctanh(t) - beta * t) / (beta * one_minus_sq))


def f_beta_d2(t, beta):
    """Closed-form second derivative of F_beta.

    Differentiating the first derivative gives

        F''(t) = 2 (1 - beta (1 - t^2) + 2 t (artanh t - beta t)) / (beta (1 - t^2)^2).
    """
    t = _as_open_interval(t)
    one_minus_sq = (1.0 - t) * (1.0 + t)
    num = 1.0 - beta * one_minus_sq + 2.0 * t * (np.arctanh(t) - beta * t)
    return _out(2.0 * num / (beta * one_minus_sq**2))


def solve_magnetization(beta: float, *, tol: float = 1e-12) -> Magnetization:
    """Positive root of tanh(beta m) = m for beta > 1.

    Bisection on [1e-8, 1 - 1e-8] (widened towards 1 for large beta) followed by a Newton polish that is only
    accepted while it stays inside the current bracket.
    """
    if not beta > 1:
        raise ParameterError(f"tanh(beta m) = m has no positive root for beta={beta} <= 1")

    def g(x):
        return math.tanh(beta * x) - x

    lo, hi = 1e-8, 1.0 - 1e-8
    if g(lo) <= 0:
        raise ParameterError(f"beta={beta} too close to 1 for the bracket [1e-8, 1-1e-8]")
    if g(hi) > 0:
        # large beta: the root sits above 1 - 1e-8
        hi = math.nextafter(1.0, 0.0)
        if g(hi) > 0:
            raise ParameterError(f"m(beta) is indistinguishable from 1 in double precision at beta={beta}")
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(20):
        dg = beta / math.cosh(beta * x) ** 2 - 1.0
        step = g(x) / dg
        nxt = x - step
        if not lo <= nxt <= hi:
            break
        x = nxt
        if abs(step) <= 1e-17:
            break
    residual = abs(g(x))
    if residual > tol:
        raise ParameterError(f"magnetization residual {residual:.3g} exceeds {tol:g}")
    return Magnetization(beta=float(beta), m=x, residual=residual)


def envelope_bound(t, beta):
    """Upper bound e^{9 beta/2} (1 - |t|) for exp(-F_beta(t)/2)."""
    t = _as_open_interval(t)
    return _out(math.exp(4.5 * beta) * (1.0 - np.abs(t)))


def tilt_parameter(t):
    """Exponential tilt lambda(t) = ln((1 - t)/(1 + t)) / 2."""
    t = _as_open_interval(t)
    return _out(0.5 * (np.log1p(-t) - np.log1p(t)))


def ld_rate(a):
    """Large-deviation rate q_a = -ln(1 - a^2)/4 for 0 < a < 1."""
    arr = np.asarray(a, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise DomainError("ld_rate requires 0 < a < 1")
    return _out(-0.25 * _log_one_minus_sq(arr))


def catalan(k: int) -> int:
    """Catalan number C_k via C_{j+1} = C_j * 2(2j+1)/(j+2), exact integers."""
    if k < 0:
        raise DomainError("catalan index must be non-negative")
    c = 1
    for j in range(k):
        c = c * 2 * (2 * j + 1) // (j + 2)
    return c


def semicircle_density(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= 2.0
    val = np.zeros_like(x)
    val[inside] = np.sqrt(4.0 - x[inside] ** 2) / (2.0 * np.pi)
    return _out(val)


def semicircle_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    val = 0.5 + x * np.sqrt(4.0 - x**2) / (4.0 * np.pi) + np.arcsin(x / 2.0) / np.pi
    return _out(np.clip(val, 0.0, 1.0))


def semicircle_moment(k: int) -> float:
    if int(k) != k or k < 0 or k > 30:
        raise DomainError("semicircle_moment supports integer 0 <= k <= 30")
    k = int(k)
    return 0.0 if k % 2 else float(catalan(k // 2))


@dataclass(frozen=True)
class SemicircleMeasure:
    """The semicircle law on [-2, 2]."""

    def density(self, x):
        return semicircle_density(x)

    def cdf(self, x):
        return semicircle_cdf(x)

    def moment(self, k: int) -> float:
        return semicircle_moment(k)


SEMICIRCLE = SemicircleMeasure()
