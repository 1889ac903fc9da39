"""The de Finetti mixing measure nu_N of the generalized Curie-Weiss ensemble.

    d nu_N(t) = exp(-N^alpha F_beta(t) / 2) / (1 - t^2) dt / Z_N

Numerics
--------
* Densities carry the factor exp(+N^alpha F_beta(m) / 2) so that the peak of
  the integrand is O(1) for any N; ``z_n`` is the shifted normalisation and
  ``shift`` the logarithm of the removed factor.
* Integrals are taken in the rapidity y = artanh(t). Then dt/(1 - t^2) = dy,
  the endpoint singularity disappears and the integrand is Gaussian-dominated
  on the real line. Integration stops at |y| = y_max where the shifted log
  density has dropped below -TAIL_DEPTH.
* Panels are anchored at 0, +-artanh(m/2), +-artanh(m) and at multiples of the
  Laplace width around +-artanh(m).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import DomainError, NumericError, ParameterError
from .scalar import ModelParams, Magnetization, f_beta, f_beta_d1, f_beta_d2, solve_magnetization

__all__ = [
    "DeFinettiMeasure",
    "LaplaceApprox",
    "MixingKernel",
    "gamma",
    "rate_rapidity",
    "unnormalized_log_density",
    "normalize",
    "laplace_endpoint",
    "laplace_z_approx",
    "laplace_central_approx",
    "laplace_width",
    "central_mass",
    "abs_moment_right",
    "mixed_moment_right",
    "sample_t",
]

TAIL_DEPTH = 80.0
CDF_NODES_PER_WIDTH = 64
CDF_WIDTHS = 12
EPSREL = 1e-10
FORMAT = "cwsc-definetti-measure"
FORMAT_VERSION = 1


def gamma(x: float) -> float:
    return math.gamma(x)


def _log_cosh(y):
    ay = np.abs(y)
    return ay + np.log1p(np.exp(-2.0 * ay)) - math.log(2.0)


def rate_rapidity(y, beta):
    """F_beta(tanh y) = y^2/beta - 2 ln cosh y, stable for large |y|."""
    y = np.asarray(y, dtype=float)
    return y * y / beta - 2.0 * _log_cosh(y)


def laplace_width(beta: float, exponent: float) -> float:
    """Laplace width sigma* = (N^alpha F''(m) / 4)^(-1/2) in t units."""
    m = solve_magnetization(beta).m
    return (exponent * f_beta_d2(m, beta) / 4.0) ** -0.5


@dataclass(frozen=True)
class MixingKernel:
    """exp(-x (F_beta - min F_beta) / 2) in the rapidity variable.

    Shared by the matrix-ensemble measure (x = N^alpha, beta > 1) and by the
    de Finetti representation of M Curie-Weiss spins (x = M, any beta > 0).
    """

    beta: float
    x: float
    mode: float = field(init=False)
    shift: float = field(init=False)
    width_y: float = field(init=False)
    y_max: float = field(init=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if not self.x > 0:
            raise ParameterError("exponent must be positive")
        if self.beta > 1:
            mode = solve_magnetization(self.beta).m
            curv = f_beta_d2(mode, self.beta)
            width_t = (self.x * curv / 4.0) ** -0.5
        else:
            mode = 0.0
            curv = 2.0 * (1.0 / self.beta - 1.0)
            # at beta = 1 the minimum is quartic
            width_t = (self.x * curv / 4.0) ** -0.5 if curv > 1e-8 else self.x ** -0.25
        mode_y = math.atanh(mode)
        width_y = min(width_t / (1.0 - mode * mode), 1.0)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "shift", self.x * float(f_beta(mode, self.beta)) / 2.0)
        object.__setattr__(self, "width_y", width_y)
        object.__setattr__(self, "y_max", self._find_cutoff(mode_y, width_y))

    @property
    def mode_y(self) -> float:
        return math.atanh(self.mode)

    def log_density_y(self, y):
        return -0.5 * self.x * (rate_rapidity(y, self.beta) - 2.0 * self.shift / self.x)

    def _find_cutoff(self, mode_y, width_y):
        # log density is decreasing beyond the mode
        lo = mode_y
        hi = mode_y + width_y
        while self.log_density_y(hi) > -TAIL_DEPTH:
            lo, hi = hi, mode_y + 2.0 * (hi - mode_y)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.log_density_y(mid) > -TAIL_DEPTH:
                lo = mid
            else:
                hi = mid
        return hi

    def anchors(self):
        """Positive panel anchors in y; mirrored by the caller."""
        pts = {0.0, self.y_max}
        if self.mode > 0:
            my = self.mode_y
            pts.add(math.atanh(self.mode / 2.0))
            for k in (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
                for s in (-1.0, 1.0):
                    pts.add(my + s * k * self.width_y)
        else:
            for k in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
                pts.add(k * self.width_y)
        return sorted(p for p in pts if 0.0 <= p <= self.y_max)

    def breakpoints(self, lo_y=None, hi_y=None):
        pos = self.anchors()
        pts = np.array(sorted({-p for p in pos} | set(pos)))
        lo_y = -self.y_max if lo_y is None else max(lo_y, -self.y_max)
        hi_y = self.y_max if hi_y is None else min(hi_y, self.y_max)
        inner = pts[(pts > lo_y) & (pts < hi_y)]
        return np.concatenate([[lo_y], inner, [hi_y]])

    def integrate(self, g=None, lo=-1.0, hi=1.0, *, epsrel=EPSREL, epsabs=0.0):
        """Shifted integral of g(t) exp(-x(F - F_min)/2) dt/(1-t^2) over [lo, hi]."""
        lo_y = -math.inf if lo <= -1 else math.atanh(lo)
        hi_y = math.inf if hi >= 1 else math.atanh(hi)
        if hi_y <= lo_y:
            return quadrature.QuadResult(0.0, 0.0, np.array([lo_y, hi_y]), np.zeros(1))
        lo_y, hi_y = max(lo_y, -self.y_max), min(hi_y, self.y_max)
        if hi_y <= lo_y:
            return quadrature.QuadResult(0.0, 0.0, np.array([lo_y, hi_y]), np.zeros(1))

        if g is None:
            def integrand(y):
                return np.exp(self.log_density_y(y))
        else:
            def integrand(y):
                return np.exp(self.log_density_y(y)) * np.asarray(g(np.tanh(y)), dtype=float)

        return quadrature.integrate(integrand, self.breakpoints(lo_y, hi_y),
                                    epsabs=epsabs, epsrel=epsrel)


def unnormalized_log_density(t, params: ModelParams):
    """Shifted log density -N^alpha (F(t) - F(m))/2 - ln(1 - t^2)."""
    params.require_subcritical()
    t = np.asarray(t, dtype=float)
    if np.any(~(np.abs(t) < 1)):
        raise DomainError("argument must satisfy |t| < 1")
    m = solve_magnetization(params.beta).m
    x = params.exponent
    val = -0.5 * x * (f_beta(t, params.beta) - f_beta(m, params.beta)) - (np.log1p(t) + np.log1p(-t))
    return val[()] if val.ndim == 0 else val


@dataclass(frozen=True)
class LaplaceApprox:
    """Laplace-method approximant (Q/kappa) Gamma(lambda/kappa) (2/(xP))^(lambda/kappa).

    ``value`` omits the factor exp(-x F(a)/2); it is on the shifted scale.
    """

    kappa: float
    p: float
    lam: float
    q: float
    value: float


def laplace_endpoint(kappa, p, lam, q, x) -> float:
    """One-sided Laplace approximant of the integral starting at a minimiser."""
    return (q / kappa) * gamma(lam / kappa) * (2.0 / (x * p)) ** (lam / kappa)


def laplace_z_approx(params: ModelParams) -> LaplaceApprox:
    """Approximant of the shifted Z_N: four one-sided pieces at -m and m."""
    params.require_subcritical()
    m = solve_magnetization(params.beta).m
    p = float(f_beta_d2(m, params.beta)) / 2.0
    q = 1.0 / (1.0 - m * m)
    value = 4.0 * laplace_endpoint(2.0, p, 1.0, q, params.exponent)
    return LaplaceApprox(kappa=2.0, p=p, lam=1.0, q=q, value=value)


def laplace_central_approx(params: ModelParams) -> float:
    """Approximant of the shifted integral over [-m/2, m/2]: two kappa=1 endpoints."""
    params.require_subcritical()
    beta = params.beta
    m = solve_magnetization(beta).m
    x = params.exponent
    p = float(f_beta_d1(-m / 2.0, beta))
    q = 1.0 / (1.0 - (m / 2.0) ** 2)
    excess = float(f_beta(m / 2.0, beta) - f_beta(m, beta))
    return 2.0 * laplace_endpoint(1.0, p, 1.0, q, x) * math.exp(-x * excess / 2.0)


@dataclass(frozen=True, eq=False)
class DeFinettiMeasure:
    """Normalised nu_N with its inverse-CDF table.

    ``z_n`` is Z_N * exp(shift); ``cdf_t``/``cdf`` form a strictly increasing
    table used for sampling.
    """

    params: ModelParams
    magnetization: Magnetization
    z_n: float
    shift: float
    z_error: float
    panels: np.ndarray = field(repr=False)
    cdf_t: np.ndarray = field(repr=False)
    cdf: np.ndarray = field(repr=False)

    @property
    def m(self) -> float:
        return self.magnetization.m

    @property
    def kernel(self) -> MixingKernel:
        return MixingKernel(self.params.beta, self.params.exponent)

    @property
    def width(self) -> float:
        """Laplace width sigma* around +-m in t units."""
        return (self.params.exponent * f_beta_d2(self.m, self.params.beta) / 4.0) ** -0.5

    def density(self, t):
        """Normalised density of nu_N with respect to dt."""
        return np.exp(unnormalized_log_density(t, self.params)) / self.z_n

    def expect(self, g=None, lo=-1.0, hi=1.0, *, epsrel=EPSREL, epsabs=0.0) -> float:
        """Integral of g over [lo, hi] against nu_N (g=None gives the mass).

        ``epsabs`` is an absolute tolerance on the normalised result.
        """
        res = self.kernel.integrate(g, lo, hi, epsrel=epsrel, epsabs=epsabs * self.z_n)
        return res.value / self.z_n

    def mass(self, lo, hi) -> float:
        return self.expect(None, lo, hi)

    def grid(self):
        """Kronrod nodes in t and normalised weights on the final adaptive panels."""
        lo, hi = self.panels[:-1], self.panels[1:]
        half = 0.5 * (hi - lo)
        y = (0.5 * (hi + lo))[:, None] + half[:, None] * quadrature.NODES[None, :]
        w = half[:, None] * quadrature.KRONROD_WEIGHTS[None, :] * np.exp(self.kernel.log_density_y(y))
        return np.tanh(y.ravel()), w.ravel() / self.z_n

    def cdf_at(self, t):
        return np.interp(t, self.cdf_t, self.cdf, left=0.0, right=1.0)

    def quantile(self, u):
        """Inverse of the piecewise-linear table CDF."""
        return np.interp(u, self.cdf, self.cdf_t)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "beta": self.params.beta,
            "alpha": self.params.alpha,
            "n": self.params.n,
            "m": self.m,
            "m_residual": self.magnetization.residual,
            "z_n_shifted": self.z_n,
            "z_error": self.z_error,
            "shift": self.shift,
            "panels_y": self.panels.tolist(),
            "cdf_t": self.cdf_t.tolist(),
            "cdf": self.cdf.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "DeFinettiMeasure":
        if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a serialized de Finetti measure of a supported version")
        params = ModelParams(doc["beta"], doc["alpha"], doc["n"])
        return cls(
            params=params,
            magnetization=Magnetization(beta=params.beta, m=doc["m"], residual=doc["m_residual"]),
            z_n=doc["z_n_shifted"],
            shift=doc["shift"],
            z_error=doc["z_error"],
            panels=np.asarray(doc["panels_y"], dtype=float),
            cdf_t=np.asarray(doc["cdf_t"], dtype=float),
            cdf=np.asarray(doc["cdf"], dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "DeFinettiMeasure":
        return cls.from_dict(json.loads(text))


def _cdf_nodes(kernel: MixingKernel, panels: np.ndarray) -> np.ndarray:
    """Table nodes in y: adaptive panel edges plus a uniform mesh around +-mode."""
    step = kernel.width_y / CDF_NODES_PER_WIDTH
    k = np.arange(-CDF_WIDTHS * CDF_NODES_PER_WIDTH, CDF_WIDTHS * CDF_NODES_PER_WIDTH + 1)
    mesh = [kernel.mode_y + k * step, -kernel.mode_y + k * step]
    nodes = np.unique(np.concatenate([panels, *mesh]))
    return nodes[(nodes >= panels[0]) & (nodes <= panels[-1])]


def normalize(params: ModelParams) -> DeFinettiMeasure:
    """Compute Z_N and the sampling table for nu_N (beta > 1)."""
    params.require_subcritical()
    mag = solve_magnetization(params.beta)
    kernel = MixingKernel(params.beta, params.exponent)
    res = kernel.integrate(epsrel=EPSREL)

    nodes = _cdf_nodes(kernel, res.edges)
    cell_mass, _, _ = quadrature.gk15(lambda y: np.exp(kernel.log_density_y(y)), nodes[:-1], nodes[1:])
    cum = np.concatenate([[0.0], np.cumsum(cell_mass)])
    total = cum[-1]
    if abs(total - res.value) > 1e-9 * res.value:
        raise NumericError("cdf table does not re-integrate to Z_N",
                           z=res.value, table_total=total)
    cdf = cum / total
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    cdf_t = np.tanh(nodes[keep])
    cdf = cdf[keep]
    cdf[0], cdf[-1] = 0.0, 1.0
    return DeFinettiMeasure(
        params=params,
        magnetization=mag,
        z_n=res.value,
        shift=kernel.shift,
        z_error=res.error,
        panels=res.edges,
        cdf_t=cdf_t,
        cdf=cdf,
    )


def central_mass(measure: DeFinettiMeasure) -> float:
    """nu_N([-m/2, m/2])."""
    m = measure.m
    return measure.mass(-m / 2.0, m / 2.0)


def abs_moment_right(measure: DeFinettiMeasure, ell: int) -> float:
    """Integral of |t - m|^ell over [m/2, 1) against nu_N."""
    if ell < 1:
        raise DomainError("ell must be a positive integer")
    m = measure.m
    return measure.expect(lambda t: np.abs(t - m) ** ell, m / 2.0, 1.0)


def mixed_moment_right(measure: DeFinettiMeasure, ell: int) -> float:
    """Integral of (1 + m^2 - 2 m t)^ell over [m/2, 1) against nu_N."""
    if ell < 1:
        raise DomainError("ell must be a positive integer")
    m = measure.m
    return measure.expect(lambda t: (1.0 + m * m - 2.0 * m * t) ** ell, m / 2.0, 1.0)


def sample_t(measure: DeFinettiMeasure, rng: np.random.Generator, size=None):
    """Draw t from nu_N by inverse-CDF lookup (one uniform per draw)."""
    u = rng.random(size)
    return measure.quantile(u)
