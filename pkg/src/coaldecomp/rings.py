"""
Commutative rings with identity in which quantities of interest take values.

Two rings are supported: real scalars, and k x k symmetric real matrices under
elementwise addition and elementwise (Hadamard) multiplication. The matrix ring
has no multiplicative inverse in general; none is provided.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

DEFAULT_DK_TOL = 1e-8


class RingMismatchError(TypeError):
    """Operands belong to different rings (variant or matrix order differs)."""


@dataclass(frozen=True)
class Scalar:
    value: float

    def __add__(self, other):
        return ring_add(self, other)

    def __mul__(self, other):
        return ring_mul(self, other)

    def __neg__(self):
        return Scalar(-self.value)

    def __sub__(self, other):
        return ring_add(self, -other)

    @classmethod
    def zero(cls) -> "Scalar":
        return cls(0.0)

    @classmethod
    def one(cls) -> "Scalar":
        return cls(1.0)


@dataclass(frozen=True, eq=False)
class HadamardMatrix:
    """
    Symmetric k x k matrix stored as its upper triangle (row-major).

    Symmetry is therefore exact by construction.
    """

    k: int
    upper: np.ndarray

    def __post_init__(self):
        upper = np.asarray(self.upper, dtype=float)
        if upper.shape != (self.k * (self.k + 1) // 2,):
            raise ValueError(f"upper triangle of a {self.k}x{self.k} matrix needs "
                             f"{self.k * (self.k + 1) // 2} entries, got {upper.shape}")
        upper.setflags(write=False)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_matrix(cls, m, atol: float = 0.0) -> "HadamardMatrix":
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if not np.allclose(m, m.T, rtol=0.0, atol=atol):
            raise ValueError("matrix is not symmetric")
        k = m.shape[0]
        return cls(k, m[np.triu_indices(k)])

    @classmethod
    def zero(cls, k: int) -> "HadamardMatrix":
        return cls.from_matrix(np.zeros((k, k)))

    @classmethod
    def one(cls, k: int) -> "HadamardMatrix":
        return cls.from_matrix(np.ones((k, k)))

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((self.k, self.k))
        iu = np.triu_indices(self.k)
        m[iu] = self.upper
        m.T[iu] = self.upper
        return m

    def __eq__(self, other) -> bool:
        return (isinstance(other, HadamardMatrix) and other.k == self.k
                and np.array_equal(other.upper, self.upper))

    def __hash__(self):
        return hash((self.k, self.upper.tobytes()))

    def __add__(self, other):
        return ring_add(self, other)

    def __mul__(self, other):
        return ring_mul(self, other)

    def __neg__(self):
        return HadamardMatrix(self.k, -self.upper)

    def __sub__(self, other):
        return ring_add(self, -other)

    def __repr__(self) -> str:
        return f"HadamardMatrix({self.matrix.tolist()})"


RingValue = Union[Scalar, HadamardMatrix]


def _check_compatible(a, b) -> None:
    if type(a) is not type(b):
        raise RingMismatchError(f"cannot combine {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, HadamardMatrix) and a.k != b.k:
        raise RingMismatchError(f"matrix orders differ: {a.k} vs {b.k}")


def ring_add(a: RingValue, b: RingValue) -> RingValue:
    _check_compatible(a, b)
    if isinstance(a, Scalar):
        return Scalar(a.value + b.value)
    return HadamardMatrix(a.k, a.upper + b.upper)


def ring_mul(a: RingValue, b: RingValue) -> RingValue:
    """Ordinary product for scalars, elementwise product for matrices."""
    _check_compatible(a, b)
    if isinstance(a, Scalar):
        return Scalar(a.value * b.value)
    return HadamardMatrix(a.k, a.upper * b.upper)


def as_array(value: RingValue) -> np.ndarray:
    if isinstance(value, Scalar):
        return np.asarray(value.value)
    if isinstance(value, HadamardMatrix):
        return value.matrix
    raise TypeError(f"not a ring value: {value!r}")


def from_array(arr) -> RingValue:
    arr = np.asarray(arr)
    if arr.ndim == 0:
        return Scalar(arr.item())
    return HadamardMatrix.from_matrix(arr)


def check_same_domain(values: Sequence[RingValue]) -> None:
    for v in values[1:]:
        _check_compatible(values[0], v)


# ---------------------------------------------------------------------------
# Membership in the ring of same-sign-diagonal semidefinite matrices
# ---------------------------------------------------------------------------

class DkRejection(ValueError):
    """
    Matrix is outside the semidefinite same-sign-diagonal class.

    ``condition`` is one of ``"zero-diagonal"``, ``"mixed-diagonal-signs"``,
    ``"indefinite"``.
    """

    def __init__(self, condition: str, message: str):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True, eq=False)
class DkMembership:
    matrix: np.ndarray
    diag_sign: int


def check_dk_membership(m, tol: float = DEFAULT_DK_TOL) -> DkMembership:
    """
    Accept ``m`` iff its diagonal is nonzero with a common sign and it is
    positive or negative semidefinite.

    Eigenvalues are compared against ``tol`` times the spectral norm, so
    slightly indefinite Monte Carlo estimates can be screened consistently.

    Raises
    ------
    DkRejection
        With the failed condition attached.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=tol * max(1.0, np.abs(m).max())):
        raise ValueError("matrix is not symmetric")
    diag = np.diag(m)
    if np.any(np.abs(diag) <= tol):
        raise DkRejection("zero-diagonal", f"zero diagonal entry at {int(np.argmin(np.abs(diag)))}")
    signs = np.sign(diag)
    if not np.all(signs == signs[0]):
        raise DkRejection("mixed-diagonal-signs", f"diagonal signs differ: {signs.tolist()}")
    eig = np.linalg.eigvalsh(m)
    scale = tol * np.abs(eig).max()
    if not (np.all(eig >= -scale) or np.all(eig <= scale)):
        raise DkRejection("indefinite", f"eigenvalues of both signs: {eig.tolist()}")
    return DkMembership(matrix=m, diag_sign=int(signs[0]))
