"""ADMM solvers for QNOF matrix completion, robust PCA and robust completion.

All three share the same skeleton: a closed-form auxiliary step, the QNOF
proximal step for the low-rank part, entrywise soft-thresholding for the
sparse part (RPCA/RMC), dual ascent and geometric penalty growth. Updates
run in the fixed order of each scheme; reordering breaks the convergence
argument.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .prox import qnof_prox
from .qsvd import singular_values
from .quaternion import QuatMatrix, as_mask, fro_norm

#: growth of the penalties stops here; multiplier updates continue
BETA_CAP = 1e12

TRACE_FIELDS = (
    "rel_change",
    "feasibility",
    "res_xp",
    "res_zq",
    "res_yxz",
    "dx",
    "dz",
    "dp",
    "dq",
    "qnof",
    "l1",
    "objective",
    "eta_norm",
    "xi_norm",
    "beta1",
    "beta2",
)

LIMIT_NAMES = ("dX", "dZ", "dP", "dQ", "X-P", "Z-Q")
_LIMIT_FIELDS = {"dX": "dx", "dZ": "dz", "dP": "dp", "dQ": "dq", "X-P": "res_xp", "Z-Q": "res_zq"}


@dataclass(frozen=True)
class SolverParams:
    """Regularisation weights, penalty schedule and stopping tolerances.

    ``rho=None`` resolves to ``1 / sqrt(max(m, n))`` for the problem at hand,
    and ``beta1_0`` / ``beta2_0`` default to ``beta0``.
    """

    lam: float = 1.0
    rho: float | None = None
    beta0: float = 1e-2
    beta1_0: float | None = None
    beta2_0: float | None = None
    mu: float = 1.05
    max_iters: int = 500
    stop_tol: float = 1e-9
    soft_eps: float = 1e-8
    beta_cap: float = BETA_CAP
    rmc_schedule: str = "joint"

    def __post_init__(self):
        for name in ("lam", "beta0", "soft_eps", "beta_cap"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")
        for name in ("rho", "beta1_0", "beta2_0"):
            val = getattr(self, name)
            if val is not None and not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not (math.isfinite(self.mu) and self.mu > 1.0):
            raise ValueError(f"mu must exceed 1, got {self.mu!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.rmc_schedule not in ("joint", "printed"):
            raise ValueError(f"rmc_schedule must be 'joint' or 'printed', got {self.rmc_schedule!r}")
        if not self.stop_tol >= 0:
            raise ValueError("stop_tol must be nonnegative")

    def resolved(self, shape: tuple[int, int]) -> SolverParams:
        """Copy with every ``None`` default filled in for a matrix of ``shape``."""
        rho = self.rho if self.rho is not None else 1.0 / math.sqrt(max(shape))
        b1 = self.beta1_0 if self.beta1_0 is not None else self.beta0
        b2 = self.beta2_0 if self.beta2_0 is not None else self.beta0
        return replace(self, rho=rho, beta1_0=b1, beta2_0=b2, max_iters=int(self.max_iters))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SolverParams:
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolverTrace:
    """Per-iteration diagnostics; every list has one entry per iteration.

    Residuals and successive differences are absolute Frobenius norms.
    ``feasibility`` is the largest constraint residual divided by
    ``||P_Omega(Y)||_F`` and drives the stopping rule together with
    ``rel_change``. Quantities that do not exist for a model (``P``/``Q``
    outside RMC) are stored as ``nan``.
    """

    records: dict = field(default_factory=lambda: {k: [] for k in TRACE_FIELDS})

    def append(self, **values) -> None:
        for k in TRACE_FIELDS:
            self.records[k].append(float(values.get(k, math.nan)))

    def __len__(self) -> int:
        return len(self.records["rel_change"])

    def __getitem__(self, key: str) -> np.ndarray:
        return np.asarray(self.records[key])

    def __getattr__(self, key):
        if key != "records" and key in TRACE_FIELDS:
            return np.asarray(self.records[key])
        raise AttributeError(key)


@dataclass
class RecoveryResult:
    X: QuatMatrix
    Z: QuatMatrix
    trace: SolverTrace
    reason: str
    params: SolverParams

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


def quat_soft_threshold(m: QuatMatrix, tau: float, soft_eps: float = 1e-8) -> QuatMatrix:
    """Entrywise ``m / (|m| + eps) * max(|m| - tau, 0)``.

    Keeps the unit-quaternion direction of each entry and shrinks its
    modulus by ``tau``; entries with ``|m| <= tau`` become exactly zero.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if not soft_eps > 0:
        raise ValueError("soft_eps must be positive")
    mod = m.modulus()
    scale = np.maximum(mod - tau, 0.0) / (mod + soft_eps)
    return QuatMatrix(m.data * scale)


def _check_problem(y: QuatMatrix, mask=None):
    if not isinstance(y, QuatMatrix):
        raise TypeError("Y must be a QuatMatrix")
    if not np.all(np.isfinite(y.data)):
        raise ValueError("Y contains non-finite entries")
    if mask is None:
        mask = np.ones(y.shape, dtype=bool)
    mask = as_mask(mask, y.shape)
    if not mask.any():
        raise ValueError("observation mask is empty")
    y_obs = QuatMatrix(y.data * mask)
    scale = fro_norm(y_obs)
    if scale == 0.0:
        raise ValueError("observed block of Y is zero")
    return y_obs, mask, scale


def _prox_step(arg: QuatMatrix, weight: float, previous: QuatMatrix, prev_q: float):
    """QNOF prox and the QNOF value of its output.

    QNOF is undefined at zero, so a zero argument keeps the previous iterate.
    """
    if fro_norm(arg) <= 1e-300:
        return previous, prev_q
    x, info = qnof_prox(arg, weight, return_info=True)
    s = info.sigma
    return x, float(np.sum(s) / math.sqrt(float(np.sum(s * s))))


def _qnof(x: QuatMatrix) -> float:
    s = singular_values(x)
    f = math.sqrt(float(np.sum(s * s)))
    return float(np.sum(s) / f) if f > 0 else math.nan


def _rel_change(new: QuatMatrix, old: QuatMatrix) -> float:
    nx = fro_norm(new)
    d = fro_norm(new - old)
    return d / nx if nx > 0 else (0.0 if d == 0 else math.inf)


Callback = Callable[[int, dict], None]


def solve_mc(y: QuatMatrix, mask, params: SolverParams | None = None, callback: Callback | None = None) -> RecoveryResult:
    """QNOF matrix completion.

    Splits ``P_Omega(Y) = X + Z`` with ``P_Omega(Z) = 0`` and alternates

        Z = P_notOmega(Y - X + eta / beta)
        X = prox_{(lam / beta) QNOF}(Y - Z + eta / beta)
        eta += beta * (Y - X - Z),  beta *= mu

    Parameters
    ----------
    y : QuatMatrix
        Observation; entries outside ``mask`` are ignored.
    mask : array_like of bool
        True where observed.
    params : SolverParams, optional
    callback : callable, optional
        Called as ``callback(k, state)`` after each iteration with the current
        iterates (``X``, ``Z``, ``eta``, ``beta``). Meant for diagnostics.
    """
    y, mask, scale = _check_problem(y, mask)
    p = (params or SolverParams()).resolved(y.shape)
    x = y
    z = QuatMatrix.zeros(*y.shape)
    eta = QuatMatrix.zeros(*y.shape)
    beta = p.beta0
    trace = SolverTrace()
    q = _qnof(x)
    reason = "max_iters"
    for k in range(p.max_iters):
        z_new = QuatMatrix((y - x + eta / beta).data * ~mask)
        x_new, q = _prox_step(y - z_new + eta / beta, p.lam / beta, x, q)
        resid = y - x_new - z_new
        eta = eta + beta * resid
        r_yxz = fro_norm(resid)
        rel = _rel_change(x_new, x)
        trace.append(
            rel_change=rel, feasibility=r_yxz / scale, res_yxz=r_yxz,
            dx=fro_norm(x_new - x), dz=fro_norm(z_new - z), qnof=q, l1=0.0,
            objective=p.lam * q, eta_norm=fro_norm(eta), beta1=beta,
        )
        x, z = x_new, z_new
        if callback is not None:
            callback(k, {"X": x, "Z": z, "eta": eta, "beta": beta, "mask": mask})
        beta = min(p.beta0 * p.mu ** (k + 1), p.beta_cap)
        if rel < p.stop_tol and r_yxz / scale < p.stop_tol:
            reason = "converged"
            break
    return RecoveryResult(x, z, trace, reason, p)


def solve_rpca(y: QuatMatrix, params: SolverParams | None = None, callback: Callback | None = None) -> RecoveryResult:
    """QNOF robust PCA, ``min lam * QNOF(X) + rho * ||Z||_1`` s.t. ``Y = X + Z``.

    Iterates the sparse step first, then the low-rank step::

        Z = soft(Y - X + eta / beta, rho / beta)
        X = prox_{(lam / beta) QNOF}(Y - Z + eta / beta)
        eta += beta * (Y - X - Z),  beta *= mu
    """
    y, _, scale = _check_problem(y)
    p = (params or SolverParams()).resolved(y.shape)
    x = y
    z = QuatMatrix.zeros(*y.shape)
    eta = QuatMatrix.zeros(*y.shape)
    beta = p.beta0
    trace = SolverTrace()
    q = _qnof(x)
    reason = "max_iters"
    for k in range(p.max_iters):
        z_new = quat_soft_threshold(y - x + eta / beta, p.rho / beta, p.soft_eps)
        x_new, q = _prox_step(y - z_new + eta / beta, p.lam / beta, x, q)
        resid = y - x_new - z_new
        eta = eta + beta * resid
        r_yxz = fro_norm(resid)
        rel = _rel_change(x_new, x)
        l1 = float(z_new.modulus().sum())
        trace.append(
            rel_change=rel, feasibility=r_yxz / scale, res_yxz=r_yxz,
            dx=fro_norm(x_new - x), dz=fro_norm(z_new - z), qnof=q, l1=l1,
            objective=p.lam * q + p.rho * l1, eta_norm=fro_norm(eta), beta1=beta,
        )
        x, z = x_new, z_new
        if callback is not None:
            callback(k, {"X": x, "Z": z, "eta": eta, "beta": beta})
        beta = min(p.beta0 * p.mu ** (k + 1), p.beta_cap)
        if rel < p.stop_tol and r_yxz / scale < p.stop_tol:
            reason = "converged"
            break
    return RecoveryResult(x, z, trace, reason, p)


def solve_rmc(y: QuatMatrix, mask, params: SolverParams | None = None, callback: Callback | None = None) -> RecoveryResult:
    """QNOF robust matrix completion.

    Low-rank ``X`` and sparse ``Z`` are tied to the data through copies
    ``P``, ``Q`` with ``P_Omega(P + Q) = P_Omega(Y)``. One sweep runs
    ``P -> X -> Z -> Q -> eta -> xi -> beta``:

        P = X + eta / b1 off Omega, mean of (X + eta / b1) and (Y - Z - xi / b2) on Omega
        X = prox_{(lam / b1) QNOF}(P - eta / b1)
        Z = soft(Q - xi / b2, rho / b2)
        Q = Z + xi / b2 off Omega, Y - P on Omega
        eta += b1 * (X - P),  xi += b2 * (Z - Q)

    With ``rmc_schedule="printed"`` the Z-step reads the previous ``Q``
    everywhere. On observed entries where the soft threshold is inactive that
    sweep is a linear map with spectral radius above one (about 1.33 at
    ``mu = 1.05``), so ``P`` and ``Q`` drift apart geometrically. The default
    ``"joint"`` schedule feeds the Z-step ``Y - P`` on ``Omega``, which is the
    value the Q-step assigns there; this makes ``(P, Q)`` one jointly
    minimised block and the iteration a two-block ADMM. Off ``Omega`` both
    schedules coincide.

    ``callback(k, state)`` additionally sees ``P``, ``Q``, ``xi`` and the
    betas; it is invoked after the Q-step and again at the end of the sweep
    with ``state["stage"]`` set to ``"Q"`` and ``"end"``.
    """
    y, mask, scale = _check_problem(y, mask)
    p = (params or SolverParams()).resolved(y.shape)
    shape = y.shape
    x = y
    z = QuatMatrix.zeros(*shape)
    pm = y
    qm = QuatMatrix.zeros(*shape)
    eta = QuatMatrix.zeros(*shape)
    xi = QuatMatrix.zeros(*shape)
    b1, b2 = p.beta1_0, p.beta2_0
    obs = mask
    trace = SolverTrace()
    q = _qnof(x)
    reason = "max_iters"
    for k in range(p.max_iters):
        left = x.data + eta.data / b1
        right = y.data - z.data - xi.data / b2
        p_new = QuatMatrix(np.where(obs, 0.5 * (left + right), left))
        x_new, q = _prox_step(p_new - eta / b1, p.lam / b1, x, q)
        if p.rmc_schedule == "joint":
            q_in = QuatMatrix(np.where(obs, y.data - p_new.data, qm.data))
        else:
            q_in = qm
        z_new = quat_soft_threshold(q_in - xi / b2, p.rho / b2, p.soft_eps)
        q_new = QuatMatrix(np.where(obs, y.data - p_new.data, z_new.data + xi.data / b2))
        if callback is not None:
            callback(k, {"stage": "Q", "P": p_new, "Q": q_new, "X": x_new, "Z": z_new, "mask": mask, "Y": y})
        r_xp = fro_norm(x_new - p_new)
        r_zq = fro_norm(z_new - q_new)
        eta = eta + b1 * (x_new - p_new)
        xi = xi + b2 * (z_new - q_new)
        rel = _rel_change(x_new, x)
        l1 = float(z_new.modulus().sum())
        feas = max(r_xp, r_zq) / scale
        trace.append(
            rel_change=rel, feasibility=feas, res_xp=r_xp, res_zq=r_zq,
            dx=fro_norm(x_new - x), dz=fro_norm(z_new - z),
            dp=fro_norm(p_new - pm), dq=fro_norm(q_new - qm), qnof=q, l1=l1,
            objective=p.lam * q + p.rho * l1, eta_norm=fro_norm(eta), xi_norm=fro_norm(xi),
            beta1=b1, beta2=b2,
        )
        x, z, pm, qm = x_new, z_new, p_new, q_new
        if callback is not None:
            callback(k, {"stage": "end", "P": pm, "Q": qm, "X": x, "Z": z, "eta": eta, "xi": xi,
                         "beta1": b1, "beta2": b2, "mask": mask, "Y": y})
        b1 = min(p.beta1_0 * p.mu ** (k + 1), p.beta_cap)
        b2 = min(p.beta2_0 * p.mu ** (k + 1), p.beta_cap)
        if rel < p.stop_tol and feas < p.stop_tol:
            reason = "converged"
            break
    return RecoveryResult(x, z, trace, reason, p)


@dataclass
class LimitReport:
    """Outcome of :func:`check_convergence_limits`.

    ``values`` maps each limit name to its largest value over the window;
    limits a model does not define are absent.
    """

    status: str
    values: dict
    passed: dict
    tol: float
    window: int

    @property
    def ok(self) -> bool:
        return self.status == "pass"


def check_convergence_limits(trace: SolverTrace, tol: float = 1e-6, window: int = 5) -> LimitReport:
    """Check that successive differences and splitting residuals have vanished.

    Looks at the last ``window`` iterations of ``dX``, ``dZ``, ``dP``, ``dQ``,
    ``X - P`` and ``Z - Q``. For MC/RPCA traces ``P``/``Q`` do not exist and
    the single residual ``Y - X - Z`` is reported instead.
    A trace shorter than ``window + 1`` iterations yields status
    ``"insufficient data"``.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    if len(trace) < window + 1:
        return LimitReport("insufficient data", {}, {}, tol, window)
    values = {}
    for name in LIMIT_NAMES:
        seq = trace[_LIMIT_FIELDS[name]][-window:]
        if not np.all(np.isnan(seq)):
            values[name] = float(np.max(seq))
    if "dP" not in values:
        values["Y-X-Z"] = float(np.max(trace["res_yxz"][-window:]))
    passed = {k: bool(v <= tol) for k, v in values.items()}
    return LimitReport("pass" if all(passed.values()) else "fail", values, passed, tol, window)
