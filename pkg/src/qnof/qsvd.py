"""Quaternion SVD through the complex adjoint representation.

Writing ``Q = C1 + C2 j`` with complex ``C1 = X0 + X1 i`` and
``C2 = X2 + X3 i``, the adjoint

    chi(Q) = [[C1, C2], [-conj(C2), conj(C1)]]

is an algebra homomorphism into ``2m x 2n`` complex matrices. Its singular
values are the quaternion singular values, each repeated twice. A left
singular vector ``[w1; w2]`` of ``chi(Q)`` maps back to the quaternion
vector ``w1 - conj(w2) j``, and ``J[w1; w2] = [-conj(w2); conj(w1)]`` is the
partner vector carrying the same singular value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quaternion import QuatMatrix, fro_norm

#: relative gap below which neighbouring singular values are merged and
#: their vectors re-paired jointly
CLUSTER_RTOL = 1e-11
#: relative tolerance for the two copies of each adjoint singular value
PAIR_RTOL = 1e-8


class QSVDError(np.linalg.LinAlgError):
    """Raised when adjoint singular values fail to pair up."""


@dataclass(frozen=True)
class QsvdFactors:
    """``A = U diag(sigma) V^*`` with unitary quaternion ``U``, ``V``."""

    U: QuatMatrix
    sigma: np.ndarray
    V: QuatMatrix

    def reconstruct(self) -> QuatMatrix:
        k = self.sigma.shape[0]
        u = self.U.data[:, :, :k] * self.sigma
        return QuatMatrix(u) @ QuatMatrix(self.V.data[:, :, :k]).H


def complex_adjoint(q: QuatMatrix) -> np.ndarray:
    x0, x1, x2, x3 = q.components
    c1 = x0 + 1j * x1
    c2 = x2 + 1j * x3
    return np.block([[c1, c2], [-c2.conj(), c1.conj()]])


def from_complex_adjoint(c: np.ndarray) -> QuatMatrix:
    """Inverse of :func:`complex_adjoint`.

    Averages the redundant blocks, so a slightly unstructured input is
    projected onto the nearest adjoint-structured matrix.
    """
    m2, n2 = c.shape
    if m2 % 2 or n2 % 2:
        raise ValueError("complex adjoint must have even dimensions")
    m, n = m2 // 2, n2 // 2
    c1 = 0.5 * (c[:m, :n] + c[m:, n:].conj())
    c2 = 0.5 * (c[:m, n:] - c[m:, :n].conj())
    return QuatMatrix(np.stack([c1.real, c1.imag, c2.real, c2.imag]))


def _to_quat_columns(w: np.ndarray) -> np.ndarray:
    """Complex ``2m x k`` columns -> quaternion components ``(4, m, k)``."""
    m = w.shape[0] // 2
    q1 = w[:m]
    q2 = -w[m:].conj()
    return np.stack([q1.real, q1.imag, q2.real, q2.imag])


def _jmap(w: np.ndarray) -> np.ndarray:
    m = w.shape[0] // 2
    return np.concatenate([-w[m:].conj(), w[:m].conj()])


def _paired_basis(w: np.ndarray, count: int, z: np.ndarray | None = None):
    """Pick ``count`` J-paired directions from a J-invariant column block.

    Works on coefficient vectors ``r`` so that the same combination can be
    applied to the matching right singular block ``z``; for a cluster with one
    singular value, ``chi(A) z r = s w r`` is preserved.
    """
    dim = w.shape[1]
    basis = np.zeros((dim, 0), dtype=complex)
    picked = []
    for e in np.eye(dim, dtype=complex):
        r = e - basis @ (basis.conj().T @ e)
        r = r - basis @ (basis.conj().T @ r)
        nrm = np.linalg.norm(r)
        if nrm < 0.5:
            continue
        r = r / nrm
        s = w.conj().T @ _jmap(w @ r)
        s = s - basis @ (basis.conj().T @ s)
        s = s - (r.conj() @ s) * r
        basis = np.column_stack([basis, r, s / np.linalg.norm(s)])
        picked.append(r)
        if len(picked) == count:
            break
    if len(picked) < count:
        raise QSVDError("could not extract a J-paired basis")
    coef = np.column_stack(picked)
    return w @ coef, (None if z is None else z @ coef)


def _complete(cols: np.ndarray, size: int, candidates: np.ndarray | None = None) -> np.ndarray:
    """Extend orthonormal quaternion columns ``(4, m, k)`` to ``size`` columns.

    ``candidates`` (quaternion columns) are tried first, then the standard
    basis. Gram-Schmidt runs twice per candidate with right coefficients.
    """
    m = cols.shape[1]
    basis = cols
    if basis.shape[2] >= size:
        return basis

    def pool():
        if candidates is not None:
            for j in range(candidates.shape[2]):
                yield candidates[:, :, j]
        for i in range(m):
            e = np.zeros((4, m))
            e[0, i] = 1.0
            yield e

    for cand in pool():
        if basis.shape[2] >= size:
            break
        v = QuatMatrix(cand[:, :, None])
        for _ in range(2):
            if basis.shape[2]:
                q = QuatMatrix(basis)
                v = v - q @ (q.H @ v)
        nv = fro_norm(v)
        if nv > 1e-3:
            basis = np.concatenate([basis, (v / nv).data], axis=2)
    return basis


def qsvd(a: QuatMatrix, full_matrices: bool = True) -> QsvdFactors:
    """Quaternion singular value decomposition.

    Parameters
    ----------
    a : QuatMatrix
        ``m x n`` input; the zero matrix is allowed.
    full_matrices : bool
        If True, ``U`` is ``m x m`` and ``V`` is ``n x n``; otherwise both
        keep only ``min(m, n)`` columns.

    Returns
    -------
    QsvdFactors
        ``sigma`` has length ``min(m, n)``, is real, nonnegative and
        nonincreasing. Factors are unique only up to unitary freedom inside
        repeated singular values, so compare singular values and residuals,
        never the factors.
    """
    m, n = a.shape
    p = min(m, n)
    nu, nv = (m, n) if full_matrices else (p, p)
    if not np.all(np.isfinite(a.data)):
        raise ValueError("qsvd input contains non-finite entries")
    if not np.any(a.data):
        return QsvdFactors(
            QuatMatrix(np.eye(m)[:, :nu]), np.zeros(p), QuatMatrix(np.eye(n)[:, :nv])
        )

    chi = complex_adjoint(a)
    w, s, zh = np.linalg.svd(chi, full_matrices=full_matrices)
    z = zh.conj().T
    s0 = s[0]
    first, second = s[0::2][:p], s[1::2][:p]
    if np.any(np.abs(first - second) > PAIR_RTOL * s0):
        raise QSVDError(
            "adjoint singular values are not paired "
            f"(max split {np.max(np.abs(first - second)) / s0:.3e} relative)"
        )
    sigma = first.copy()

    zero_tol = 2.0 * max(m, n) * np.finfo(float).eps * s0
    nonzero = int(np.count_nonzero(sigma > zero_tol))
    sigma[nonzero:] = 0.0

    u_cols, v_cols = [], []
    k = 0
    while k < nonzero:
        end = k + 1
        while end < nonzero and sigma[end - 1] - sigma[end] <= CLUSTER_RTOL * s0:
            end += 1
        size = end - k
        if size == 1:
            u_cols.append(w[:, 2 * k : 2 * k + 1])
            v_cols.append(z[:, 2 * k : 2 * k + 1])
        else:
            wc, zc = _paired_basis(w[:, 2 * k : 2 * end], size, z[:, 2 * k : 2 * end])
            u_cols.append(wc)
            v_cols.append(zc)
        k = end

    if u_cols:
        u = _to_quat_columns(np.concatenate(u_cols, axis=1))
        v = _to_quat_columns(np.concatenate(v_cols, axis=1))
    else:
        u, v = np.zeros((4, m, 0)), np.zeros((4, n, 0))

    # null spaces carry no pairing between U and V
    u = _complete(u, nu, _to_quat_columns(w[:, 2 * nonzero :]))
    v = _complete(v, nv, _to_quat_columns(z[:, 2 * nonzero :]))
    return QsvdFactors(QuatMatrix(u), sigma, QuatMatrix(v))


def singular_values(a: QuatMatrix) -> np.ndarray:
    """Quaternion singular values without computing the factors."""
    p = min(a.shape)
    if not np.any(a.data):
        return np.zeros(p)
    s = np.linalg.svd(complex_adjoint(a), compute_uv=False)
    return s[0::2][:p].copy()


def nuclear_norm(a: QuatMatrix) -> float:
    return float(np.sum(singular_values(a)))


def qnof_value(a: QuatMatrix) -> float:
    """Nuclear norm over Frobenius norm, ``||A||_* / ||A||_F``."""
    s = singular_values(a)
    fro = np.sqrt(np.sum(s * s))
    if fro == 0.0:
        raise ValueError("QNOF is undefined for the zero matrix")
    return float(np.sum(s) / fro)


def numeric_rank(sigma, rel_tol: float = 1e-6) -> int:
    """Number of singular values above ``rel_tol * sigma[0]``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or sigma[0] <= 0.0:
        return 0
    return int(np.count_nonzero(sigma > rel_tol * sigma[0]))
