"""Independent oracles and Monte Carlo estimators for the ensemble's moment structure.

Index pairs are 0-based ``(i, j)`` with ``i <= j``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .ensemble import replica_stream, sample_spin_matrix
from .errors import CapacityError, ContractError, DomainError, NumericError, ParameterError
from .measure import DeFinettiMeasure, MixingKernel, sample_t, unnormalized_log_density
from .scalar import f_beta_d2, ld_rate

__all__ = [
    "MomentSpec",
    "VerificationReport",
    "cw_expectation_bruteforce",
    "definetti_expectation_quadrature",
    "log_binomial_pmf",
    "binomial_cdf",
    "large_deviation_exact",
    "ld_bound",
    "conditional_entry_moment",
    "conditional_h_moment",
    "conditional_product_moment",
    "mc_moment_estimate",
    "exact_y_mean_small_n",
    "tie_probability",
    "rejection_sample_t",
]

MAX_BRUTE_FORCE_SPINS = 20
MAX_BINOMIAL_TRIALS = 10**6
MIN_REPLICAS = 1000


@dataclass(frozen=True)
class MomentSpec:
    """E[prod_nu Z(i_nu, j_nu)^power * prod_rho Z(u_rho, v_rho)] for Z in {X, Y}.

    ``power=1`` gives the mixed moment with ell distinct pairs followed by p
    further pairs; ``power=2`` with no further pairs gives the second-moment
    product.
    """

    distinct_pairs: tuple
    repeated_pairs: tuple = ()
    power: int = 1

    def __post_init__(self):
        norm = lambda pairs: tuple((min(i, j), max(i, j)) for i, j in pairs)
        d, r = norm(self.distinct_pairs), norm(self.repeated_pairs)
        object.__setattr__(self, "distinct_pairs", d)
        object.__setattr__(self, "repeated_pairs", r)
        if not d:
            raise ContractError("at least one distinct pair is required")
        if len(set(d)) != len(d):
            raise ContractError("distinct pairs must be pairwise different")
        if set(d) & set(r):
            raise ContractError("repeated pairs must be disjoint from the distinct pairs")
        if self.power not in (1, 2):
            raise ContractError("power must be 1 or 2")
        if self.power == 2 and r:
            raise ContractError("the second-moment product takes no further pairs")

    @property
    def ell(self) -> int:
        return len(self.distinct_pairs)

    @property
    def p(self) -> int:
        return len(self.repeated_pairs)

    def validate(self, n: int):
        for i, j in self.distinct_pairs + self.repeated_pairs:
            if not (0 <= i <= j < n):
                raise ContractError(f"pair {(i, j)} outside a {n}x{n} matrix")
        return self

    def multiplicities(self) -> dict:
        """Exponent of every entry that occurs in the product."""
        out = {pair: self.power for pair in self.distinct_pairs}
        for pair in self.repeated_pairs:
            out[pair] = out.get(pair, 0) + 1
        return out


@dataclass(frozen=True)
class VerificationReport:
    name: str
    parameters: dict
    estimate: float
    standard_error: float
    bound_or_target: float | None = None
    passed: bool | None = None
    replicas: int = 0
    seed: int | None = None
    notes: str = ""

    def check_within(self, target: float, n_se: float = 3.0, slack: float = 0.0) -> "VerificationReport":
        ok = abs(self.estimate - target) <= slack + n_se * self.standard_error
        return replace(self, bound_or_target=target, passed=bool(ok))

    def check_bound(self, bound: float, n_se: float = 3.0) -> "VerificationReport":
        ok = abs(self.estimate) <= bound + n_se * self.standard_error
        return replace(self, bound_or_target=bound, passed=bool(ok))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.parameters),
            "estimate": self.estimate,
            "se": self.standard_error,
            "bound": self.bound_or_target,
            "pass": self.passed,
            "replicas": self.replicas,
            "seed": self.seed,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_FIELDS = ("name", "params", "estimate", "se", "bound", "pass", "replicas", "seed")

    def csv_row(self) -> list:
        d = self.to_dict()
        d["params"] = json.dumps(d["params"], sort_keys=True)
        return [d[k] for k in self.CSV_FIELDS]


# --- Curie-Weiss spins: enumeration versus de Finetti quadrature ---------------------------

def _all_configurations(m_spins: int) -> np.ndarray:
    codes = np.arange(2**m_spins, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(m_spins)) & 1
    return (2 * bits - 1).astype(np.int8)


def cw_expectation_bruteforce(m_spins: int, beta: float, observable: Callable) -> float:
    """Exact Curie-Weiss expectation by enumerating all 2^M spin vectors.

    ``observable`` maps an array of shape (2^M, M) of +-1 spins to one value
    per row.
    """
    if m_spins > MAX_BRUTE_FORCE_SPINS:
        raise CapacityError(f"enumeration limited to {MAX_BRUTE_FORCE_SPINS} spins")
    if m_spins < 1 or beta < 0:
        raise ParameterError("need m_spins >= 1 and beta >= 0")
    x = _all_configurations(m_spins)
    s = x.sum(axis=1, dtype=np.int64).astype(float)
    logw = beta / (2.0 * m_spins) * s * s
    w = np.exp(logw - logw.max())
    vals = np.asarray(observable(x), dtype=float)
    return float(np.dot(w, vals) / w.sum())


def definetti_expectation_quadrature(m_spins: int, beta: float, observable) -> float:
    """Curie-Weiss expectation as a t-average of product-measure expectations.

    ``observable`` is either an integer k, meaning the product of k spins at
    distinct sites (so E_t = t^k), or a callable returning E_t(phi) for an
    array of t.
    """
    if m_spins < 1 or not beta > 0:
        raise ParameterError("need m_spins >= 1 and beta > 0")
    if isinstance(observable, (int, np.integer)):
        if not 0 <= observable <= m_spins:
            raise ContractError("monomial degree must lie in [0, m_spins]")
        k = int(observable)
        cond = lambda t: t**k
    else:
        cond = observable
    kernel = MixingKernel(beta, float(m_spins))
    z = kernel.integrate(epsrel=1e-13)
    num = kernel.integrate(cond, epsrel=1e-13, epsabs=1e-15 * z.value)
    return num.value / z.value


# --- binomial tails and large deviations ----------------------------------------------------

def log_binomial_pmf(trials: int, p: float, ks=None) -> np.ndarray:
    """log P(Bin(trials, p) = k) for k in ``ks`` (default 0..trials)."""
    ks = np.arange(trials + 1) if ks is None else np.asarray(ks)
    logc = (math.lgamma(trials + 1)
            - np.array([math.lgamma(k + 1) + math.lgamma(trials - k + 1) for k in ks]))
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.where(ks > 0, ks * math.log(p) if p > 0 else -np.inf, 0.0)
        lq = np.where(trials - ks > 0, (trials - ks) * math.log1p(-p) if p < 1 else -np.inf, 0.0)
    return logc + lp + lq


def binomial_cdf(trials: int, k_max: int, p: float) -> float:
    """P(Bin(trials, p) <= k_max), log-space terms summed with math.fsum."""
    if trials > MAX_BINOMIAL_TRIALS:
        raise CapacityError(f"binomial summation limited to {MAX_BINOMIAL_TRIALS} trials")
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    if k_max < 0:
        return 0.0
    if k_max >= trials:
        return 1.0
    logs = log_binomial_pmf(trials, p, np.arange(k_max + 1))
    top = logs.max()
    if not np.isfinite(top):
        return 0.0
    return math.exp(top) * math.fsum(np.exp(logs - top))


def large_deviation_exact(n: int, t: float) -> float:
    """P_t(S_N <= 0) = P(Bin(K, (1+t)/2) <= K/2), K = n(n+1)/2."""
    if not -1.0 <= t <= 1.0:
        raise DomainError("t must lie in [-1, 1]")
    k = n * (n + 1) // 2
    if k > MAX_BINOMIAL_TRIALS:
        raise CapacityError(f"K={k} exceeds the exact summation range")
    return binomial_cdf(k, k // 2, 0.5 * (1.0 + t))


def ld_bound(n: int, a: float) -> float:
    """exp(-q_a n^2)."""
    return math.exp(-float(ld_rate(a)) * n * n)


# --- closed-form conditional moments --------------------------------------------------------

def conditional_entry_moment(t, shift: float, k: int):
    """E_t((X - shift)^k) for a single +-1 entry with E_t X = t."""
    t = np.asarray(t, dtype=float)
    val = 0.5 * (1.0 + t) * (1.0 - shift) ** k + 0.5 * (1.0 - t) * (-1.0 - shift) ** k
    return val[()] if val.ndim == 0 else val


def conditional_h_moment(t, m: float, ell: int, branch: int = 1):
    """E_t(prod over ell disjoint entries of (X -+ m)^2) = (1 + m^2 -+ 2 m t)^ell.

    ``branch=+1`` subtracts m (the plus branch), ``branch=-1`` adds it.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    if not 0.0 < m < 1.0:
        raise ParameterError("m must lie in (0, 1)")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1):
        raise DomainError("t must lie in [-1, 1]")
    val = (1.0 + m * m - 2.0 * branch * m * t) ** ell
    return val[()] if val.ndim == 0 else val


def conditional_product_moment(t, spec: MomentSpec, shift: float):
    """E_t of the spec's product with every entry replaced by X - shift."""
    val = 1.0
    for k in spec.multiplicities().values():
        val = val * conditional_entry_moment(t, shift, k)
    return val


# --- Monte Carlo moment estimates -----------------------------------------------------------

def _flat_index(n, i, j):
    return i * n - i * (i - 1) // 2 + (j - i)


def _replica_value(measure, spec, target, base_seed, r, context):
    n = measure.params.n
    m = measure.m
    rng = replica_stream(base_seed, r, context)
    t = float(sample_t(measure, rng))
    mult = spec.multiplicities()
    pairs = list(mult)
    if target == "X":
        entries = np.where(rng.random(len(pairs)) < 0.5 * (1.0 + t), 1.0, -1.0)
        return float(np.prod(entries ** np.array([mult[p] for p in pairs])))
    x = sample_spin_matrix(t, n, rng)
    sign = 1.0 if int(x.upper.sum(dtype=np.int64)) > 0 else -1.0
    idx = [_flat_index(n, i, j) for i, j in pairs]
    y = (x.upper[idx].astype(float) - sign * m) / math.sqrt(1.0 - m * m)
    return float(np.prod(y ** np.array([mult[p] for p in pairs])))


def _replica_chunk(args):
    measure, spec, target, base_seed, lo, hi, context = args
    return [_replica_value(measure, spec, target, base_seed, r, context) for r in range(lo, hi)]


def mc_moment_estimate(measure: DeFinettiMeasure, spec: MomentSpec, target: str = "X",
                       replicas: int = 10_000, base_seed: int = 0, context=(),
                       name: str | None = None, jobs: int = 1) -> VerificationReport:
    """Monte Carlo estimate of a mixed moment of X or Y with its standard error.

    Target ``X`` samples only the entries named by ``spec``; target ``Y``
    needs S_N and draws the whole upper triangle of every replica. Replica
    ``r`` always uses its own stream, so the result does not depend on ``jobs``.
    """
    if target not in ("X", "Y"):
        raise ValueError("target must be 'X' or 'Y'")
    if replicas < MIN_REPLICAS:
        raise ParameterError(f"at least {MIN_REPLICAS} replicas required")
    spec.validate(measure.params.n)
    if jobs > 1:
        step = -(-replicas // (4 * jobs))
        chunks = [(measure, spec, target, base_seed, lo, min(lo + step, replicas), context)
                  for lo in range(0, replicas, step)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            vals = np.array([v for part in pool.map(_replica_chunk, chunks) for v in part])
    else:
        vals = np.array([_replica_value(measure, spec, target, base_seed, r, context)
                         for r in range(replicas)])
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replicas))
    params = {
        "beta": measure.params.beta,
        "alpha": measure.params.alpha,
        "n": measure.params.n,
        "target": target,
        "distinct_pairs": [list(p) for p in spec.distinct_pairs],
        "repeated_pairs": [list(p) for p in spec.repeated_pairs],
        "power": spec.power,
    }
    return VerificationReport(name=name or f"moment-{target}", parameters=params, estimate=est,
                              standard_error=se, replicas=replicas, seed=base_seed)


# --- exact small-N oracle for E[Y(i,j)] -----------------------------------------------------

def _upper_tail(trials: int, k_min: int, p: np.ndarray) -> np.ndarray:
    """P(Bin(trials, p) >= k_min) for an array of p."""
    if k_min <= 0:
        return np.ones_like(p)
    if k_min > trials:
        return np.zeros_like(p)
    ks = np.arange(k_min, trials + 1)
    logc = np.array([math.lgamma(trials + 1) - math.lgamma(k + 1) - math.lgamma(trials - k + 1)
                     for k in ks])
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.log(p)[:, None] * ks[None, :]
        lq = np.log1p(-p)[:, None] * (trials - ks)[None, :]
    lp = np.where(ks[None, :] == 0, 0.0, lp)
    lq = np.where((trials - ks)[None, :] == 0, 0.0, lq)
    return np.exp(logc[None, :] + lp + lq).sum(axis=1)


def exact_y_mean_small_n(n: int, measure: DeFinettiMeasure, pair=(0, 1)) -> float:
    """E[Y(i,j)] by conditioning on t and on X(i,j).

    Given X(i,j) = x the remaining K-1 entries contribute 2B - (K-1) to S_N
    with B ~ Bin(K-1, (1+t)/2), so P(S_N > 0 | x) is an exact binomial tail.
    """
    if n > 12:
        raise CapacityError("exact small-N oracle supports n <= 12")
    if n != measure.params.n:
        raise ContractError("n must match the measure")
    i, j = min(pair), max(pair)
    if not 0 <= i <= j < n:
        raise ContractError(f"pair {pair} outside a {n}x{n} matrix")
    m = measure.m
    rest = n * (n + 1) // 2 - 1

    def g(t):
        t = np.atleast_1d(t)
        p = 0.5 * (1.0 + t)
        total = np.zeros_like(t)
        for x, px in ((1.0, p), (-1.0, 1.0 - p)):
            # S_N > 0  <=>  B >= floor((rest - x) / 2) + 1
            plus = _upper_tail(rest, int(math.floor((rest - x) / 2.0)) + 1, p)
            total += px * (plus * (x - m) + (1.0 - plus) * (x + m))
        return total / math.sqrt(1.0 - m * m)

    # the two halves t < 0 and t > 0 cancel almost exactly, so only an absolute accuracy is meaningful
    return measure.expect(g, epsabs=1e-14)


def tie_probability(measure: DeFinettiMeasure) -> float:
    """P(S_N = 0); zero whenever K = n(n+1)/2 is odd."""
    k = measure.params.n * (measure.params.n + 1) // 2
    if k % 2:
        return 0.0
    half = k // 2
    logc = math.lgamma(k + 1) - 2.0 * math.lgamma(half + 1)

    def g(t):
        with np.errstate(divide="ignore"):
            return np.exp(logc + half * (np.log1p(t) + np.log1p(-t) - math.log(4.0)))

    return measure.expect(g)


# --- rejection sampler (cross-check oracle for the inverse-CDF sampler) ---------------------

def _phi_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def rejection_sample_t(measure: DeFinettiMeasure, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw from nu_N by rejection from two truncated Gaussians at +-m plus 1% uniform."""
    m = measure.m
    params = measure.params
    s = math.sqrt(2.0 / (params.exponent * float(f_beta_d2(m, params.beta))))
    trunc = _phi_cdf((1.0 - m) / s) - _phi_cdf((-1.0 - m) / s)

    def proposal_pdf(t):
        g = (np.exp(-0.5 * ((t - m) / s) ** 2) + np.exp(-0.5 * ((t + m) / s) ** 2))
        g = g / (2.0 * s * math.sqrt(2.0 * math.pi) * trunc)
        return 0.99 * g + 0.01 * 0.5

    def target(t):
        return np.exp(unnormalized_log_density(t, params))

    grid = np.unique(np.concatenate([measure.cdf_t, np.linspace(-1, 1, 200_001)[1:-1]]))
    grid = grid[np.abs(grid) < 1]
    bound = 1.1 * float(np.max(target(grid) / proposal_pdf(grid)))

    out = []
    while len(out) < size:
        batch = max(2 * (size - len(out)), 256)
        centre = np.where(rng.random(batch) < 0.5, m, -m)
        t = centre + s * rng.standard_normal(batch)
        outside = np.abs(t) >= 1
        while outside.any():
            t[outside] = centre[outside] + s * rng.standard_normal(int(outside.sum()))
            outside = np.abs(t) >= 1
        uniform = rng.random(batch) < 0.01
        t[uniform] = rng.uniform(-1.0, 1.0, int(uniform.sum()))
        ratio = target(t) / (bound * proposal_pdf(t))
        if np.any(ratio > 1.0):
            raise NumericError("rejection envelope violated", max_ratio=float(ratio.max()))
        out.extend(t[rng.random(t.size) < ratio].tolist())
    return np.asarray(out[:size])
