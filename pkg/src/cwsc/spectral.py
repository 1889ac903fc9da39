"""Spectra, empirical spectral distributions and their distance to the semicircle."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, NumericError
from .scalar import SEMICIRCLE, SemicircleMeasure

__all__ = [
    "Spectrum",
    "ESD",
    "eigenvalues",
    "ks_distance",
    "levy_distance",
    "esd_moment",
    "interlacing_defect",
    "write_spectra_csv",
]

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray = field(repr=False)
    source: str = ""

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))
        ev.flags.writeable = False
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self):
        return self.eigenvalues.size

    def count_in(self, lo: float, hi: float) -> int:
        """Number of eigenvalues in the closed interval [lo, hi]."""
        ev = self.eigenvalues
        return int(np.searchsorted(ev, hi, side="right") - np.searchsorted(ev, lo, side="left"))

    def esd(self) -> "ESD":
        return ESD(self)


@dataclass(frozen=True, eq=False)
class ESD:
    """Uniform probability measure on the eigenvalues (step-function CDF)."""

    spectrum: Spectrum

    @property
    def n(self) -> int:
        return len(self.spectrum)

    def cdf(self, x):
        ev = self.spectrum.eigenvalues
        return np.searchsorted(ev, x, side="right") / ev.size

    def moment(self, k: int) -> float:
        return esd_moment(self, k)


def eigenvalues(matrix, source: str = "") -> Spectrum:
    """All eigenvalues of a dense real symmetric matrix (LAPACK syevd)."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"square matrix required, got shape {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise ContractError("matrix is not symmetric within 1e-12")
    try:
        ev = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError("symmetric eigensolver did not converge", n=a.shape[0]) from exc
    return Spectrum(ev, source)


def _esd(obj) -> ESD:
    return obj if isinstance(obj, ESD) else ESD(obj)


def ks_distance(esd, reference: SemicircleMeasure = SEMICIRCLE) -> float:
    """sup_x |ESD(x) - F(x)| for a continuous reference CDF F.

    For a step function the supremum is attained at a jump, from one side or
    the other, so checking both one-sided limits at every eigenvalue is exact.
    """
    ev = _esd(esd).spectrum.eigenvalues
    n = ev.size
    f = reference.cdf(ev)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def levy_distance(esd, reference: SemicircleMeasure = SEMICIRCLE, tol: float = 1e-12) -> float:
    """Levy distance between the ESD and a continuous reference CDF, by bisection on eps."""
    ev = _esd(esd).spectrum.eigenvalues
    n = ev.size
    after = np.arange(1, n + 1) / n
    before = np.arange(0, n) / n

    def ok(eps):
        return (np.all(after <= reference.cdf(ev + eps) + eps + 1e-15)
                and np.all(reference.cdf(ev - eps) - eps <= before + 1e-15))

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def esd_moment(esd, k: int) -> float:
    if int(k) != k or k < 0 or k > 12:
        raise DomainError("esd_moment supports integer 0 <= k <= 12")
    ev = _esd(esd).spectrum.eigenvalues
    return float(np.mean(ev ** int(k)))


def interlacing_defect(spec_a: Spectrum, spec_b: Spectrum, interval) -> int:
    """|#eigenvalues of A in I - #eigenvalues of B in I| for the closed interval I."""
    if len(spec_a) != len(spec_b):
        raise ContractError("spectra must have equal length")
    lo, hi = interval
    return abs(spec_a.count_in(lo, hi) - spec_b.count_in(lo, hi))


def write_spectra_csv(path, spectra, metadata=None):
    """One eigenvalue per row; ``spectra`` is an iterable of (replica_id, Spectrum)."""
    with open(path, "w", newline="") as fh:
        for key, value in sorted((metadata or {}).items()):
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh)
        w.writerow(["replica", "index", "eigenvalue"])
        for replica, spec in spectra:
            for i, lam in enumerate(spec.eigenvalues):
                w.writerow([replica, i, format(float(lam), ".17g")])
