"""Sampling the generalized Curie-Weiss matrix ensemble and its derived matrices.

Spin matrices store the upper triangle (diagonal included, row-major) as
int8 signs. Dense floating-point matrices are only built on request.

Random streams
--------------
Replica ``r`` of an experiment with 64-bit base seed ``s`` uses
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(*context, r))))``.
``context`` is an optional tuple of non-negative integers (for example the
matrix size) separating independent ladders that share one base seed.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError
from .measure import DeFinettiMeasure, sample_t

__all__ = [
    "replica_stream",
    "SpinMatrix",
    "DerivedMatrix",
    "AllOnes",
    "sample_spin_matrix",
    "sample_ensemble",
    "s_n",
    "indicator_plus",
    "indicator_minus",
    "build_a",
    "build_y",
    "build_y_branch",
]

MAGIC = b"CWSM"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sHIdQ?")
NO_SEED = 0


def replica_stream(base_seed: int, replica: int, context=()) -> np.random.Generator:
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(*map(int, context), int(replica)))
    return np.random.Generator(np.random.PCG64(seq))


def _triangle_size(n: int) -> int:
    return n * (n + 1) // 2


@dataclass(frozen=True, eq=False)
class SpinMatrix:
    """Symmetric +-1 matrix held as its packed upper triangle.

    ``t`` is the mixing parameter the entries were drawn with. It is metadata
    for conditional tests only.
    """

    n: int
    t: float
    upper: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        upper = np.asarray(self.upper, dtype=np.int8)
        if upper.shape != (_triangle_size(self.n),):
            raise ValueError(f"upper triangle of n={self.n} needs {_triangle_size(self.n)} entries")
        if not np.all(np.abs(upper) == 1):
            raise ValueError("spin entries must be +-1")
        upper.flags.writeable = False
        object.__setattr__(self, "upper", upper)

    def _index(self, i, j):
        if i > j:
            i, j = j, i
        # row-major offset of (i, j), i <= j, 0-based
        return i * self.n - i * (i - 1) // 2 + (j - i)

    def entry(self, i: int, j: int) -> int:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError((i, j))
        return int(self.upper[self._index(i, j)])

    def dense(self, dtype=float) -> np.ndarray:
        out = np.empty((self.n, self.n), dtype=dtype)
        iu = np.triu_indices(self.n)
        out[iu] = self.upper
        out.T[iu] = self.upper
        return out

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, BINARY_VERSION, self.n, self.t,
                              NO_SEED if self.seed is None else self.seed, self.seed is not None)
        return header + np.packbits(self.upper > 0).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SpinMatrix":
        magic, version, n, t, seed, has_seed = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError("bad magic number for spin matrix file")
        if version != BINARY_VERSION:
            raise ValueError(f"unsupported spin matrix format version {version}")
        k = _triangle_size(n)
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size), count=k)
        upper = np.where(bits == 1, 1, -1).astype(np.int8)
        return cls(n=n, t=t, upper=upper, seed=seed if has_seed else None)

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "SpinMatrix":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# n={self.n} t={self.t!r} seed={self.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        iu = np.triu_indices(self.n)
        for i, j, v in zip(*iu, self.upper):
            w.writerow([int(i), int(j), int(v)])
        return buf.getvalue()


@dataclass(frozen=True)
class AllOnes:
    """The n x n matrix with every entry equal to 1 (rank one)."""

    n: int

    def dense(self) -> np.ndarray:
        return np.ones((self.n, self.n))

    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.n - 1), [float(self.n)]])


def sample_spin_matrix(t: float, n: int, rng: np.random.Generator, seed=None) -> SpinMatrix:
    """i.i.d. entries, +1 with probability (1 + t)/2."""
    if not -1.0 <= t <= 1.0:
        raise DomainError("mixing parameter must lie in [-1, 1]")
    u = rng.random(_triangle_size(n))
    upper = np.where(u < 0.5 * (1.0 + t), 1, -1).astype(np.int8)
    return SpinMatrix(n=n, t=float(t), upper=upper, seed=seed)


def sample_ensemble(measure: DeFinettiMeasure, rng: np.random.Generator, seed=None) -> SpinMatrix:
    t = float(sample_t(measure, rng))
    return sample_spin_matrix(t, measure.params.n, rng, seed=seed)


def s_n(x: SpinMatrix) -> int:
    """Sum of the upper-triangle entries, diagonal included."""
    return int(x.upper.sum(dtype=np.int64))


def indicator_plus(x: SpinMatrix) -> int:
    return 1 if s_n(x) > 0 else 0


def indicator_minus(x: SpinMatrix) -> int:
    # the tie S_N = 0 belongs to the minus branch
    return 1 - indicator_plus(x)


@dataclass(frozen=True, eq=False)
class DerivedMatrix:
    """A, Y, Y_plus or Y_minus built from a spin matrix.

    A = X / sqrt(n (1 - m^2)).
    Y_plus = (X - m E) 1{S > 0} / sqrt(1 - m^2), Y_minus = (X + m E) 1{S <= 0} / sqrt(1 - m^2),
    Y = Y_plus + Y_minus, where E is the all-ones matrix.
    """

    kind: str
    base: SpinMatrix = field(repr=False)
    m: float
    sign: int = 0
    active: bool = True

    @property
    def n(self) -> int:
        return self.base.n

    def dense(self) -> np.ndarray:
        x = self.base.dense()
        m = self.m
        if self.kind == "A":
            return x / math.sqrt(self.n * (1.0 - m * m))
        if not self.active:
            return np.zeros_like(x)
        return (x - self.sign * m) / math.sqrt(1.0 - m * m)

    def entry(self, i: int, j: int) -> float:
        x = self.base.entry(i, j)
        m = self.m
        if self.kind == "A":
            return x / math.sqrt(self.n * (1.0 - m * m))
        if not self.active:
            return 0.0
        return (x - self.sign * m) / math.sqrt(1.0 - m * m)


def _check_m(m):
    if not 0.0 < m < 1.0:
        raise ParameterError(f"magnetization must lie in (0, 1), got {m}")


def build_a(x: SpinMatrix, m: float) -> DerivedMatrix:
    _check_m(m)
    return DerivedMatrix(kind="A", base=x, m=m)


def build_y_branch(x: SpinMatrix, m: float, sign: int) -> DerivedMatrix:
    """Y_plus (sign=+1) or Y_minus (sign=-1); zero unless its indicator fires."""
    _check_m(m)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    fired = indicator_plus(x) if sign == 1 else indicator_minus(x)
    return DerivedMatrix(kind="Y_plus" if sign == 1 else "Y_minus", base=x, m=m,
                         sign=sign, active=bool(fired))


def build_y(x: SpinMatrix, m: float) -> DerivedMatrix:
    """Y_plus + Y_minus: one global shift by -+m chosen by the sign of S_N."""
    _check_m(m)
    sign = 1 if indicator_plus(x) else -1
    return DerivedMatrix(kind="Y", base=x, m=m, sign=sign)
