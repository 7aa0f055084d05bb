"""Quaternion scalars and dense quaternion matrices.

A quaternion matrix ``Q = X0 + X1 i + X2 j + X3 k`` is stored as a single
float64 array of shape ``(4, m, n)`` holding the four real component
matrices. Instances are immutable: the backing array is copied on
construction and flagged read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class Quaternion:
    """Scalar quaternion ``w + x i + y j + z k``."""

    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return qmul(self, other)
        return Quaternion(self.w * other, self.x * other, self.y * other, self.z * other)

    def __rmul__(self, other):
        return Quaternion(self.w * other, self.x * other, self.y * other, self.z * other)

    def __add__(self, other: Quaternion) -> Quaternion:
        return Quaternion(self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Quaternion) -> Quaternion:
        return Quaternion(self.w - other.w, self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> Quaternion:
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def conj(self) -> Quaternion:
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def modulus(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


def qmul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a * b`` (not commutative)."""
    a0, a1, a2, a3 = a.as_tuple()
    b0, b1, b2, b3 = b.as_tuple()
    return Quaternion(
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    )


class QuatNorms(NamedTuple):
    l1: float
    linf: float
    fro: float


class QuatMatrix:
    """Dense ``m x n`` quaternion matrix backed by a ``(4, m, n)`` real array.

    Parameters
    ----------
    data : array_like
        Component stack ``[X0, X1, X2, X3]``. A 2-D real array is accepted
        and interpreted as a purely real quaternion matrix.
    """

    __slots__ = ("_data",)
    __array_priority__ = 1000  # keep numpy scalars from hijacking __rmul__

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.stack([arr, np.zeros_like(arr), np.zeros_like(arr), np.zeros_like(arr)])
        if arr.ndim != 3 or arr.shape[0] != 4:
            raise ValueError(f"expected component array of shape (4, m, n), got {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError("quaternion matrix dimensions must be positive")
        arr.flags.writeable = False
        self._data = arr

    # -- construction -----------------------------------------------------
    @classmethod
    def from_components(cls, x0, x1, x2, x3) -> QuatMatrix:
        x0 = np.asarray(x0, dtype=np.float64)
        parts = [np.asarray(c, dtype=np.float64) for c in (x1, x2, x3)]
        if any(p.shape != x0.shape for p in parts):
            raise ValueError("all four component matrices must share one shape")
        return cls(np.stack([x0, *parts]))

    @classmethod
    def zeros(cls, m: int, n: int) -> QuatMatrix:
        return cls(np.zeros((4, m, n)))

    @classmethod
    def identity(cls, n: int) -> QuatMatrix:
        return cls(np.eye(n))

    @classmethod
    def scalar_identity(cls, q: Quaternion, n: int) -> QuatMatrix:
        """``q * I_n``."""
        eye = np.eye(n)
        return cls(np.stack([c * eye for c in q.as_tuple()]))

    @classmethod
    def random(cls, m: int, n: int, rng=None) -> QuatMatrix:
        """Matrix with independent standard-normal components."""
        rng = np.random.default_rng(rng)
        return cls(rng.standard_normal((4, m, n)))

    # -- access -----------------------------------------------------------
    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape[1], self._data.shape[2]

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        d = self._data
        return d[0], d[1], d[2], d[3]

    @property
    def w(self) -> np.ndarray:
        return self._data[0]

    @property
    def x(self) -> np.ndarray:
        return self._data[1]

    @property
    def y(self) -> np.ndarray:
        return self._data[2]

    @property
    def z(self) -> np.ndarray:
        return self._data[3]

    def entry(self, i: int, j: int) -> Quaternion:
        return Quaternion(*(float(v) for v in self._data[:, i, j]))

    def is_pure(self) -> bool:
        return not np.any(self._data[0])

    def modulus(self) -> np.ndarray:
        """Entrywise modulus ``|Q|`` as a real ``m x n`` array."""
        return np.sqrt(np.sum(self._data * self._data, axis=0))

    # -- algebra ----------------------------------------------------------
    def __add__(self, other: QuatMatrix) -> QuatMatrix:
        _check_same_shape(self, other)
        return QuatMatrix(self._data + other._data)

    def __sub__(self, other: QuatMatrix) -> QuatMatrix:
        _check_same_shape(self, other)
        return QuatMatrix(self._data - other._data)

    def __neg__(self) -> QuatMatrix:
        return QuatMatrix(-self._data)

    def __mul__(self, c) -> QuatMatrix:
        if isinstance(c, (QuatMatrix, Quaternion)):
            return NotImplemented
        return QuatMatrix(self._data * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c) -> QuatMatrix:
        return QuatMatrix(self._data / float(c))

    def __matmul__(self, other: QuatMatrix) -> QuatMatrix:
        return qmat_mul(self, other)

    def conj_transpose(self) -> QuatMatrix:
        d = self._data
        return QuatMatrix(np.stack([d[0].T, -d[1].T, -d[2].T, -d[3].T]))

    @property
    def H(self) -> QuatMatrix:
        return self.conj_transpose()

    def copy(self) -> QuatMatrix:
        return QuatMatrix(self._data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuatMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    __hash__ = None

    def __repr__(self) -> str:
        m, n = self.shape
        return f"QuatMatrix({m}x{n})"


def _check_same_shape(a: QuatMatrix, b: QuatMatrix) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def qmat_mul(a: QuatMatrix, b: QuatMatrix) -> QuatMatrix:
    """Quaternion matrix product ``a @ b`` (left factor stays on the left)."""
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    a0, a1, a2, a3 = a.components
    b0, b1, b2, b3 = b.components
    return QuatMatrix(
        np.stack(
            [
                a0 @ b0 - a1 @ b1 - a2 @ b2 - a3 @ b3,
                a0 @ b1 + a1 @ b0 + a2 @ b3 - a3 @ b2,
                a0 @ b2 - a1 @ b3 + a2 @ b0 + a3 @ b1,
                a0 @ b3 + a1 @ b2 - a2 @ b1 + a3 @ b0,
            ]
        )
    )


def conj_transpose(a: QuatMatrix) -> QuatMatrix:
    return a.conj_transpose()


def norms(a: QuatMatrix) -> QuatNorms:
    """Entrywise l1, max-modulus and Frobenius norms."""
    mod = a.modulus()
    return QuatNorms(float(mod.sum()), float(mod.max()), fro_norm(a))


def fro_norm(a: QuatMatrix) -> float:
    d = a.data
    return float(np.sqrt(np.sum(d * d)))


def real_inner(a: QuatMatrix, b: QuatMatrix) -> float:
    """``Re(Tr(a^* b))``, which reduces to the componentwise dot product."""
    _check_same_shape(a, b)
    return float(np.sum(a.data * b.data))


def as_mask(mask, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Validate and return a boolean observation mask (True = observed)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if shape is not None and mask.shape != tuple(shape):
        raise ValueError(f"dimension mismatch: mask {mask.shape} vs matrix {tuple(shape)}")
    return mask.astype(bool, copy=False)


def project_mask(a: QuatMatrix, mask, keep_observed: bool = True) -> QuatMatrix:
    """Zero the entries outside ``mask`` (or inside it when ``keep_observed`` is False)."""
    mask = as_mask(mask, a.shape)
    keep = mask if keep_observed else ~mask
    return QuatMatrix(a.data * keep)


def random_unitary(n: int, rng=None) -> QuatMatrix:
    """Random unitary quaternion matrix via Gram-Schmidt on Gaussian columns.

    Columns are orthonormalised against earlier ones with coefficients applied
    on the right, ``u_k <- u_k - q_j (q_j^* u_k)``, so that ``U^* U = I``.
    """
    rng = np.random.default_rng(rng)
    cols = rng.standard_normal((4, n, n))
    out = np.zeros((4, n, n))
    for k in range(n):
        v = QuatMatrix(cols[:, :, k : k + 1])
        # two passes keep the loss of orthogonality at machine precision
        for _ in range(2):
            for j in range(k):
                q = QuatMatrix(out[:, :, j : j + 1])
                v = v - q @ (q.H @ v)
        out[:, :, k] = (v / fro_norm(v)).data[:, :, 0]
    return QuatMatrix(out)
