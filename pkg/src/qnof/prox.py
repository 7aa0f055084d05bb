"""Exact proximal operator of ``lam * ||x||_1 / ||x||_2`` on singular values.

For a nonnegative, nonincreasing ``y`` the problem

    min_x  0.5 * ||y - x||^2 + lam * ||x||_1 / ||x||_2,   x_1 >= ... >= x_n >= 0

has a minimiser that is either one-sparse or dense on a leading support of
size ``t``,

    x_i = (y_i / lam - 1 / r) / (1 / lam - a / r**3),   i <= t,

where ``a = ||x||_1`` and ``r = ||x||_2`` solve the pair of equations

    a**2 / r**3 - a / lam + Q / lam - t / r = 0
    r**3 - S * r + lam * (Q - a) = 0

with ``Q = sum(y[:t])`` and ``S = sum(y[:t]**2)``. The support size is
located by bisection and ``(a, r)`` by alternating the quadratic root for
``a`` with the trigonometric root of the cubic for ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qsvd import qsvd
from .quaternion import QuatMatrix

DEFAULT_L_MAX = 100
DEFAULT_EPS = 1e-12


@dataclass
class ArPair:
    """Result of the alternating ``(a, r)`` iteration for one support size."""

    t: int
    a: float
    r: float
    residual_a: float = math.nan
    residual_r: float = math.nan
    iterations: int = 0
    converged: bool = False
    discriminant_failed: bool = False

    def denominator(self, lam: float) -> float:
        return 1.0 / lam - self.a / self.r**3


@dataclass
class ProxInfo:
    branch: str
    t: int
    objective: float
    pair: ArPair | None = None
    bisection_steps: int = 0
    tried: list = field(default_factory=list)
    diagnostic: str = ""
    source: str = ""
    sigma: np.ndarray | None = None


def _check_sigma(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("singular value vector must be 1-D and nonempty")
    if not np.all(np.isfinite(y)):
        raise ValueError("singular value vector contains non-finite entries")
    if np.any(y < 0) or np.any(np.diff(y) > 0):
        raise ValueError("singular value vector must be nonnegative and nonincreasing")
    if y[0] == 0.0:
        raise ValueError("proximal operator is undefined for a zero input")
    return y


def l1l2_objective(x, y, lam: float) -> float:
    """``0.5 * ||y - x||^2 + lam * ||x||_1 / ||x||_2`` (``inf`` at ``x = 0``)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(x)
    if r == 0.0:
        return math.inf
    return float(0.5 * np.sum((y - x) ** 2) + lam * np.sum(np.abs(x)) / r)


def one_sparse_solution(sigma_y) -> np.ndarray:
    """Keep the first (largest) entry, zero the rest; ties go to index 0."""
    y = _check_sigma(sigma_y)
    x = np.zeros_like(y)
    x[0] = y[0]
    return x


def _pair_residuals(a: float, r: float, t: int, q: float, s: float, lam: float):
    res_a = a * a / r**3 - a / lam + q / lam - t / r
    res_r = r**3 - s * r + lam * (q - a)
    return res_a, res_r


def _a_from_r(r: float, t: int, q: float, lam: float):
    disc = 1.0 / lam**2 - 4.0 / r**3 * (q / lam - t / r)
    if disc < 0.0:
        return None, disc
    return 0.5 * r**3 * (1.0 / lam - math.sqrt(disc)), disc


def solve_ar_pair(
    t: int,
    sigma_y,
    lam: float,
    r0: float | None = None,
    l_max: int = DEFAULT_L_MAX,
    eps: float = DEFAULT_EPS,
) -> ArPair:
    """Alternate the ``a``-quadratic and ``r``-cubic for support size ``t``.

    A negative discriminant is reported through ``discriminant_failed`` (a
    value, not an exception); ``r`` then holds the last iterate.
    """
    y = np.asarray(sigma_y, dtype=np.float64)
    n = y.size
    if not 1 <= t <= n:
        raise ValueError(f"support size t={t} outside [1, {n}]")
    if lam <= 0:
        raise ValueError("lam must be positive")
    head = y[:t]
    q = float(np.sum(head))
    s = float(np.sum(head * head))
    rho = math.sqrt(s / 3.0)
    r = math.sqrt(s) if r0 is None else float(r0)
    if r <= 0:
        raise ValueError("r0 must be positive")

    pair = ArPair(t=t, a=math.nan, r=r)
    for it in range(l_max + 1):
        a, disc = _a_from_r(r, t, q, lam)
        if a is None:
            pair.discriminant_failed = True
            pair.iterations = it
            break
        arg = min(1.0, max(-1.0, lam * (q - a) / (2.0 * rho**3)))
        phi = math.acos(arg)
        r_new = 2.0 * rho * math.cos(math.pi / 3.0 - phi / 3.0)
        if not (math.isfinite(a) and math.isfinite(r_new)) or r_new <= 0.0:
            raise FloatingPointError(f"non-finite (a, r) iterate at t={t}")
        step = abs(r_new - r) / abs(r)
        r = r_new
        pair.iterations = it + 1
        if step < eps:
            pair.converged = True
            break
    pair.r = r
    if not pair.discriminant_failed:
        a, _ = _a_from_r(r, t, q, lam)
        if a is None:
            pair.discriminant_failed = True
        else:
            pair.a = a
            pair.residual_a, pair.residual_r = _pair_residuals(a, r, t, q, s, lam)
    return pair


def dense_solution(sigma_y, lam: float, pair: ArPair) -> np.ndarray:
    y = np.asarray(sigma_y, dtype=np.float64)
    denom = pair.denominator(lam)
    if not denom > 0.0:
        raise ValueError(f"invalid (a, r) pair: 1/lam - a/r^3 = {denom:.3e} <= 0")
    x = np.zeros_like(y)
    x[: pair.t] = (y[: pair.t] / lam - 1.0 / pair.r) / denom
    return x


def _next_entry(y: np.ndarray, t: int) -> float:
    return float(y[t]) if t < y.size else 0.0


def _candidate(y, lam, t, l_max, eps):
    """Dense solution for a fixed support size, or None if it is not admissible."""
    pair = solve_ar_pair(t, y, lam, l_max=l_max, eps=eps)
    if pair.discriminant_failed or not pair.denominator(lam) > 0.0:
        return None, pair
    x = dense_solution(y, lam, pair)
    if np.any(x < 0) or np.any(np.diff(x) > 0):
        return None, pair
    return x, pair


def _support_scan(y: np.ndarray, lam: float, grid: int = 256, iters: int = 200):
    """All admissible stationary points, one 1-D root problem per support size.

    With ``c = lam / r`` the dense formula gives ``x = (y[:t] - c) / d`` with
    ``d = ||y[:t] - c|| / r``; consistency with ``d = 1 - lam * a / r**3``
    leaves a scalar equation ``h(r) = 0`` on ``lam / y_t < r <= lam / y_{t+1}``.
    Roots are bracketed on a geometric grid and bisected, vectorised over ``t``.
    Returns a list of ``(t, a, r)``.
    """
    n = y.size
    t = np.arange(1, n + 1, dtype=float)
    q = np.cumsum(y)
    s = np.cumsum(y * y)
    ynext = np.append(y[1:], 0.0)
    valid = y > 0
    with np.errstate(divide="ignore", over="ignore"):
        lo = np.where(valid, lam / np.where(valid, y, 1.0), np.inf)
        hi = np.where(ynext > 0, lam / np.where(ynext > 0, ynext, 1.0), np.inf)
    # any minimiser satisfies ||x|| <= 2 ||y|| + sqrt(2 lam)
    hi = np.minimum(hi, 2.0 * math.sqrt(s[-1]) + math.sqrt(2.0 * lam))
    keep = valid & (lo < hi)
    if not np.any(keep):
        return []
    t, q, s, lo, hi = t[keep], q[keep], s[keep], lo[keep], hi[keep]

    def h(r):
        c = lam / r
        n2 = np.maximum(s - 2.0 * c * q + t * c * c, 1e-300)
        nn = np.sqrt(n2)
        # the floor on n2 can overflow the second term to +-inf; the sign is what matters
        with np.errstate(over="ignore"):
            return nn / r + lam * (q - t * c) / (nn * r * r) - 1.0

    frac = np.linspace(0.0, 1.0, grid)[:, None]
    r_grid = lo * (hi / lo) ** frac
    r_grid[0] = lo * (1.0 + 1e-13)
    vals = h(r_grid)
    change = np.sign(vals[:-1]) * np.sign(vals[1:]) < 0
    exact = vals == 0.0
    gi, ti = np.nonzero(change)
    left = r_grid[gi, ti]
    right = r_grid[gi + 1, ti]
    tq, qq, sq = t[ti], q[ti], s[ti]

    def hsel(r):
        c = lam / r
        nn = np.sqrt(np.maximum(sq - 2.0 * c * qq + tq * c * c, 1e-300))
        with np.errstate(over="ignore"):
            return nn / r + lam * (qq - tq * c) / (nn * r * r) - 1.0

    f_left = hsel(left)
    for _ in range(iters):
        mid = 0.5 * (left + right)
        f_mid = hsel(mid)
        same = np.sign(f_mid) == np.sign(f_left)
        left = np.where(same, mid, left)
        f_left = np.where(same, f_mid, f_left)
        right = np.where(same, right, mid)
        if np.all(right - left <= 4e-16 * right):
            break
    roots = list(zip(tq, qq, sq, 0.5 * (left + right)))
    ge, te = np.nonzero(exact)
    roots += list(zip(t[te], q[te], s[te], r_grid[ge, te]))

    out = []
    for tv, qv, sv, r in roots:
        c = lam / r
        d = math.sqrt(max(sv - 2.0 * c * qv + tv * c * c, 0.0)) / r
        if d <= 0.0:
            continue
        out.append((int(tv), (qv - tv * c) / d, float(r)))
    return out


def _pair_from_root(y, lam, t, a, r) -> ArPair:
    head = y[:t]
    res_a, res_r = _pair_residuals(a, r, t, float(head.sum()), float(head @ head), lam)
    return ArPair(t=t, a=a, r=r, residual_a=res_a, residual_r=res_r, converged=True)


def _bisection(y, lam, l_max, eps):
    """Support-size bisection with the Flag1 / Flag2 tests as in the original scheme."""
    n = y.size
    t1, t2 = 1, n
    steps = 0
    tried = []
    while t2 - t1 > 1:
        steps += 1
        t = (t1 + t2) // 2
        pair = solve_ar_pair(t, y, lam, l_max=l_max, eps=eps)
        tried.append(t)
        if pair.discriminant_failed:
            if _next_entry(y, t) > lam / pair.r:
                t1 = t
            else:
                t2 = t
            continue
        a_hat, r_hat = pair.a, pair.r
        scale = 1.0 - a_hat * lam / r_hat**3
        if (y[t - 1] - lam / r_hat) * scale > 0:
            if (_next_entry(y, t) - lam / r_hat) * scale <= 0:
                return dense_solution(y, lam, pair), pair, steps, tried, ""
            t1 = t
        else:
            t2 = t

    # closed without acceptance: evaluate both brackets end to end
    best = None
    for t in sorted({t1, t2}):
        tried.append(t)
        x, pair = _candidate(y, lam, t, l_max, eps)
        if x is None:
            continue
        obj = l1l2_objective(x, y, lam)
        if best is None or obj < best[0]:
            best = (obj, x, pair)
    note = f"bisection closed at [{t1}, {t2}] without acceptance"
    if best is None:
        return None, None, steps, tried, note + "; no admissible bracket"
    return best[1], best[2], steps, tried, note


def prox_sigma_l1l2(
    sigma_y,
    lam: float,
    l_max: int = DEFAULT_L_MAX,
    eps: float = DEFAULT_EPS,
    method: str = "exact",
    return_info: bool = False,
):
    """Proximal map of ``lam * ||x||_1 / ||x||_2`` for sorted nonnegative input.

    Parameters
    ----------
    sigma_y : array_like
        Nonzero, nonnegative, nonincreasing vector.
    lam : float
        Regularisation weight, ``lam > 0``.
    l_max, eps : int, float
        Iteration cap and relative stopping tolerance of the ``(a, r)`` loop.
    method : {"exact", "bisection"}
        ``"bisection"`` runs only the support-size bisection (with a bracket
        fallback). ``"exact"`` additionally evaluates every admissible
        stationary point from :func:`_support_scan` and the one-sparse point,
        returning the lowest objective; the bisection alone may stop at a
        non-global stationary point or miss the larger root of the
        ``a``-quadratic.
    return_info : bool
        Also return a :class:`ProxInfo` describing the branch taken.
    """
    y = _check_sigma(sigma_y)
    if not lam > 0:
        raise ValueError("lam must be positive")
    if method not in ("exact", "bisection"):
        raise ValueError(f"unknown method {method!r}")

    cands = []
    steps, tried, note = 0, [], ""
    if 1.0 / lam <= 1.0 / y[0] ** 2:
        x1 = one_sparse_solution(y)
        if method == "bisection":
            info = ProxInfo("one-sparse", 1, l1l2_objective(x1, y, lam), source="closed-form")
            return (x1, info) if return_info else x1
        cands.append((l1l2_objective(x1, y, lam), "closed-form", x1, None))
        xb = x1
    else:
        xb, pair_b, steps, tried, note = _bisection(y, lam, l_max, eps)
        if xb is not None:
            cands.append((l1l2_objective(xb, y, lam), "bisection", xb, pair_b))
        if method == "exact" or xb is None:
            x1 = one_sparse_solution(y)
            cands.append((l1l2_objective(x1, y, lam), "one-sparse", x1, None))
    if method == "exact":
        for t, a, r in _support_scan(y, lam):
            pair = _pair_from_root(y, lam, t, a, r)
            x = np.zeros_like(y)
            x[:t] = (y[:t] / lam - 1.0 / r) / pair.denominator(lam)
            if np.any(x < 0) or np.any(np.diff(x) > 0):
                continue
            cands.append((l1l2_objective(x, y, lam), "scan", x, pair))
    obj, source, x, pair = min(cands, key=lambda c: c[0])
    if np.count_nonzero(x) == 1:
        # on a single-entry support the dense formula equals y_1 up to rounding
        x = one_sparse_solution(y)
        obj = l1l2_objective(x, y, lam)
    _check_output(x)
    if xb is None and source == "one-sparse":
        note += "; forced one-sparse fallback"
    t = int(np.count_nonzero(x))
    if pair is not None:
        branch = "dense"
    else:
        branch = "one-sparse" if source in ("closed-form", "one-sparse") and xb is not None else "one-sparse-fallback"
    info = ProxInfo(branch, t, obj, pair, steps, tried, note, source)
    return (x, info) if return_info else x


def _check_output(x: np.ndarray) -> None:
    if np.any(x < 0) or np.any(np.diff(x) > 0):
        raise AssertionError("proximal output lost nonnegativity or ordering")


def qnof_prox(y: QuatMatrix, lam: float, return_info: bool = False, **opts):
    """Global minimiser of ``0.5 * ||Y - X||_F^2 + lam * ||X||_* / ||X||_F``.

    Shrinks the quaternion singular values of ``y`` with
    :func:`prox_sigma_l1l2` and keeps its singular vectors.
    """
    f = qsvd(y, full_matrices=False)
    if f.sigma[0] == 0.0:
        raise ValueError("QNOF proximal operator is undefined for the zero matrix")
    x, info = prox_sigma_l1l2(f.sigma, lam, return_info=True, **opts)
    info.sigma = x
    t = int(np.count_nonzero(x))
    u = f.U.data[:, :, :t] * x[:t]
    out = QuatMatrix(u) @ QuatMatrix(f.V.data[:, :, :t]).H
    return (out, info) if return_info else out
