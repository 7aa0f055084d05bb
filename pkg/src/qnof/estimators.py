"""Estimator-style wrappers around the ADMM solvers.

The estimators follow the scikit-learn conventions: hyper-parameters are set
in ``__init__`` and exposed via ``get_params``/``set_params``; ``fit`` stores
results in attributes with a trailing underscore. Recovery is transductive,
so ``transform(Y)`` simply solves a new problem with the fitted settings.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .qsvd import numeric_rank, singular_values
from .quaternion import QuatMatrix, as_mask
from .solvers import SolverParams, solve_mc, solve_rmc, solve_rpca


def check_quat_matrix(y) -> QuatMatrix:
    """Coerce ``y`` to a finite :class:`QuatMatrix`.

    Accepts a QuatMatrix, a ``(4, m, n)`` component stack or a real
    ``(m, n)`` array.
    """
    if not isinstance(y, QuatMatrix):
        y = QuatMatrix(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(y.data)):
        raise ValueError("input contains NaN or infinity")
    return y


def check_mask(mask, shape) -> np.ndarray:
    """Boolean mask of ``shape``; ``None`` means fully observed."""
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = as_mask(mask, shape)
    if not mask.any():
        raise ValueError("observation mask is empty")
    return mask


def _rms(y: QuatMatrix, mask: np.ndarray) -> float:
    return math.sqrt(float(np.sum(y.data**2 * mask)) / int(mask.sum()))


class _QNOFBase(TransformerMixin, BaseEstimator):
    """Shared machinery; subclasses define ``_solve``."""

    def __init__(self, lam=1.0, rho=None, beta0=1e-2, mu=1.05, max_iters=500,
                 stop_tol=1e-9, soft_eps=1e-8, normalize=False, rank_tol=1e-6):
        self.lam = lam
        self.rho = rho
        self.beta0 = beta0
        self.mu = mu
        self.max_iters = max_iters
        self.stop_tol = stop_tol
        self.soft_eps = soft_eps
        self.normalize = normalize
        self.rank_tol = rank_tol

    def solver_params(self) -> SolverParams:
        return SolverParams(lam=self.lam, rho=self.rho, beta0=self.beta0, mu=self.mu,
                            max_iters=self.max_iters, stop_tol=self.stop_tol, soft_eps=self.soft_eps)

    def _run(self, y, mask):
        y = check_quat_matrix(y)
        mask = check_mask(mask, y.shape)
        params = self.solver_params()
        scale = _rms(y, mask) if self.normalize else 1.0
        if scale == 0.0:
            raise ValueError("observed block of Y is zero")
        res = self._solve(y / scale if scale != 1.0 else y, mask, params)
        if scale != 1.0:
            res.X = res.X * scale
            res.Z = res.Z * scale
        return res

    def fit(self, Y, mask=None):
        res = self._run(Y, mask)
        self.result_ = res
        self.low_rank_ = res.X
        self.sparse_ = res.Z
        self.trace_ = res.trace
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.singular_values_ = singular_values(res.X)
        self.rank_ = numeric_rank(self.singular_values_, self.rank_tol)
        return self

    def transform(self, Y, mask=None) -> QuatMatrix:
        check_is_fitted(self, "low_rank_")
        return self._run(Y, mask).X

    def fit_transform(self, Y, mask=None, **fit_params) -> QuatMatrix:
        return self.fit(Y, mask).low_rank_


class QNOFCompletion(_QNOFBase):
    """Low-rank completion of the entries outside ``mask``.

    Parameters
    ----------
    lam : float
        QNOF weight.
    beta0, mu : float
        Initial penalty and its growth factor (``mu > 1``).
    max_iters : int
    stop_tol : float
        Relative change and feasibility threshold for stopping.
    normalize : bool
        Solve on data scaled to unit RMS over observed entries, so ``lam``
        is expressed in those units.
    rank_tol : float
        Relative cut-off used for ``rank_``.

    Attributes
    ----------
    low_rank_ : QuatMatrix
    trace_ : SolverTrace
    rank_ : int
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, lam=1.0, beta0=1e-2, mu=1.05, max_iters=500, stop_tol=1e-9,
                 normalize=False, rank_tol=1e-6):
        super().__init__(lam=lam, beta0=beta0, mu=mu, max_iters=max_iters, stop_tol=stop_tol,
                         normalize=normalize, rank_tol=rank_tol)

    def _solve(self, y, mask, params):
        return solve_mc(y, mask, params)


class QNOFRobustPCA(_QNOFBase):
    """Split a fully observed ``Y`` into low-rank ``low_rank_`` and sparse ``sparse_``.

    ``rho=None`` uses ``1 / sqrt(max(m, n))``. A ``mask`` passed to ``fit``
    must be all True.
    """

    def _solve(self, y, mask, params):
        if not mask.all():
            raise ValueError("robust PCA needs a fully observed matrix; use QNOFRobustCompletion")
        return solve_rpca(y, params)


class QNOFRobustCompletion(_QNOFBase):
    """Robust completion: missing entries plus sparse gross errors."""

    def _solve(self, y, mask, params):
        return solve_rmc(y, mask, params)
