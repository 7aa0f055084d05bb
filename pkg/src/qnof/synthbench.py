"""Synthetic low-rank recovery experiments.

A trial plants ``X0 = A B`` with standard-normal quaternion factors, hides a
fraction of the entries, overwrites a fraction of the observed ones with
impulse values and runs robust matrix completion. Everything about a trial
is derived from ``seed ^ trial_index``, so trials can run in any order or in
parallel and still reproduce bit for bit.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .qsvd import numeric_rank, singular_values
from .quaternion import QuatMatrix, fro_norm
from .solvers import RecoveryResult, SolverParams, solve_rmc

#: QNOF weight per matrix dimension for unit-RMS synthetic data
SYNTH_LAM_PER_N = 1.2
SYNTH_MU = 1.1


def synth_params(n: int, **overrides) -> SolverParams:
    """Solver settings tuned for unit-RMS ``n x n`` synthetic instances.

    ``lam = 1.2 n`` and ``mu = 1.1``; other fields keep the solver defaults.
    """
    base = dict(lam=SYNTH_LAM_PER_N * n, mu=SYNTH_MU, stop_tol=1e-9)
    base.update(overrides)
    return SolverParams(**base)


CSV_COLUMNS = (
    "n", "rank", "miss_rate", "noise_rate", "trial",
    "recovered_rank", "rel_error", "success", "iterations", "wall_time_ms",
)

PHASE_RANKS = tuple(range(2, 17, 2))
PHASE_LEVELS = tuple(round(0.05 * k, 2) for k in range(1, 16))


def random_lowrank(n: int, r: int, seed=None, m: int | None = None) -> QuatMatrix:
    """``A @ B`` with ``A`` (``m x r``) and ``B`` (``r x n``) standard normal.

    ``m`` defaults to ``n``. The product has rank ``r`` almost surely.
    """
    m = n if m is None else m
    if not 1 <= r <= min(m, n):
        raise ValueError(f"rank must lie in [1, {min(m, n)}], got {r}")
    rng = np.random.default_rng(seed)
    return QuatMatrix.random(m, r, rng) @ QuatMatrix.random(r, n, rng)


def _check_rate(name: str, val: float) -> float:
    val = float(val)
    if not 0.0 <= val < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {val}")
    return val


@dataclass(frozen=True)
class TrialSpec:
    """One cell of an experiment grid.

    Attributes
    ----------
    n, rank : int
        Square size and planted rank.
    miss_rate : float
        Fraction of entries hidden (exact count ``round(miss_rate * n * n)``).
    noise_rate : float
        Fraction of the observed entries replaced by impulse values.
    trials : int
    seed : int
        Base seed; trial ``i`` uses ``seed ^ i``.
    success_threshold : float
        A trial succeeds when ``||X - X0||_F / ||X0||_F`` is at most this.
    params : SolverParams, optional
        Defaults to :func:`synth_params` for ``n``.
    normalize : bool
        Divide the observation by its RMS over observed entries before
        solving and undo the scaling afterwards. :func:`synth_params` is tuned
        for this unit-RMS regime; the QNOF weight scales like the square of
        the data, so unnormalised data would need ``lam`` rescaled by hand.
    """

    n: int
    rank: int
    miss_rate: float = 0.05
    noise_rate: float = 0.05
    trials: int = 10
    seed: int = 0
    success_threshold: float = 1e-8
    params: SolverParams | None = None
    normalize: bool = True

    def __post_init__(self):
        if self.params is None:
            object.__setattr__(self, "params", synth_params(self.n))
        if self.n < 1 or not 1 <= self.rank <= self.n:
            raise ValueError(f"need 1 <= rank <= n, got rank={self.rank}, n={self.n}")
        _check_rate("miss_rate", self.miss_rate)
        _check_rate("noise_rate", self.noise_rate)
        if self.trials < 1:
            raise ValueError("trials must be positive")


@dataclass(frozen=True)
class TrialRecord:
    n: int
    rank: int
    miss_rate: float
    noise_rate: float
    trial: int
    recovered_rank: int
    rel_error: float
    success: bool
    iterations: int
    wall_time_ms: float


def make_instance(n: int, rank: int, miss_rate: float, noise_rate: float, seed):
    """Planted matrix, corrupted observation and mask for one trial.

    Returns ``(Y, mask, X0, noisy)`` where ``noisy`` flags the corrupted
    observed entries. Impulse values draw every quaternion component
    uniformly from ``[min, max]`` of the components of ``X0``.
    """
    _check_rate("miss_rate", miss_rate)
    _check_rate("noise_rate", noise_rate)
    rng = np.random.default_rng(seed)
    x0 = QuatMatrix.random(n, rank, rng) @ QuatMatrix.random(rank, n, rng)
    size = n * n
    n_miss = round(miss_rate * size)
    if n_miss >= size:
        raise ValueError("miss_rate leaves no observed entries")
    mask = np.ones(size, dtype=bool)
    mask[rng.choice(size, n_miss, replace=False)] = False
    observed = np.flatnonzero(mask)
    hit = rng.choice(observed, round(noise_rate * observed.size), replace=False)
    lo, hi = float(x0.data.min()), float(x0.data.max())
    y = x0.data.reshape(4, size).copy()
    y[:, hit] = rng.uniform(lo, hi, size=(4, hit.size))
    y[:, ~mask] = 0.0
    noisy = np.zeros(size, dtype=bool)
    noisy[hit] = True
    return QuatMatrix(y.reshape(4, n, n)), mask.reshape(n, n), x0, noisy.reshape(n, n)


def solve_instance(y: QuatMatrix, mask, params: SolverParams, normalize: bool = True, callback=None) -> RecoveryResult:
    """Run robust completion, optionally on unit-RMS scaled data."""
    if not normalize:
        return solve_rmc(y, mask, params, callback=callback)
    mask = np.asarray(mask, dtype=bool)
    scale = math.sqrt(float(np.sum(y.data**2 * mask)) / max(int(mask.sum()), 1))
    if scale == 0.0:
        raise ValueError("observed block of Y is zero")
    res = solve_rmc(y / scale, mask, params, callback=callback)
    return replace(res, X=res.X * scale, Z=res.Z * scale)


def run_one(spec: TrialSpec, trial: int, return_result: bool = False, callback=None):
    """Run trial number ``trial`` of ``spec``.

    ``callback`` is handed to the solver (see :func:`qnof.solvers.solve_rmc`).
    """
    y, mask, x0, _ = make_instance(spec.n, spec.rank, spec.miss_rate, spec.noise_rate, spec.seed ^ trial)
    t0 = time.perf_counter()
    res = solve_instance(y, mask, spec.params, spec.normalize, callback)
    wall = (time.perf_counter() - t0) * 1e3
    err = fro_norm(res.X - x0) / fro_norm(x0)
    rec = TrialRecord(
        n=spec.n, rank=spec.rank, miss_rate=spec.miss_rate, noise_rate=spec.noise_rate,
        trial=trial, recovered_rank=numeric_rank(singular_values(res.X)), rel_error=err,
        success=bool(err <= spec.success_threshold), iterations=res.iterations, wall_time_ms=wall,
    )
    return (rec, res) if return_result else rec


def _run_one_args(args):
    return run_one(*args)


def _map(jobs: list, workers: int | None):
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one_args, jobs, chunksize=1))


def default_workers() -> int:
    """Parallel trial count: ``QNOF_THREADS`` if set, else 1."""
    raw = os.environ.get("QNOF_THREADS", "").strip()
    if not raw:
        return 1
    try:
        val = int(raw)
    except ValueError as exc:
        raise ValueError(f"QNOF_THREADS must be a positive integer, got {raw!r}") from exc
    if val < 1:
        raise ValueError(f"QNOF_THREADS must be a positive integer, got {raw!r}")
    return val


def run_trial(spec: TrialSpec, workers: int | None = None) -> list[TrialRecord]:
    """All ``spec.trials`` trials of one cell, in trial order."""
    return _map([(spec, i) for i in range(spec.trials)], workers)


@dataclass(frozen=True)
class CellSummary:
    n: int
    rank: int
    miss_rate: float
    noise_rate: float
    trials: int
    successes: int
    rank_matches: int
    median_rel_error: float
    median_recovered_rank: float
    wall_time_s: float

    @property
    def recovery_rate(self) -> float:
        return self.successes / self.trials


def summarize(records: Sequence[TrialRecord]) -> CellSummary:
    r0 = records[0]
    return CellSummary(
        n=r0.n, rank=r0.rank, miss_rate=r0.miss_rate, noise_rate=r0.noise_rate,
        trials=len(records),
        successes=sum(r.success for r in records),
        rank_matches=sum(r.recovered_rank == r.rank for r in records),
        median_rel_error=float(np.median([r.rel_error for r in records])),
        median_recovered_rank=float(np.median([r.recovered_rank for r in records])),
        wall_time_s=sum(r.wall_time_ms for r in records) / 1e3,
    )


def table1(n: int, ranks: Iterable[int], trials: int = 10, seed: int = 0,
           params: SolverParams | None = None, miss_rate: float = 0.05, noise_rate: float = 0.05,
           workers: int | None = None):
    """Per-rank recovery at fixed corruption; returns ``(summaries, records)``."""
    specs = [TrialSpec(n, r, miss_rate, noise_rate, trials, seed, params=params) for r in ranks]
    records = _map([(s, i) for s in specs for i in range(s.trials)], workers)
    summaries = [summarize(records[k * trials:(k + 1) * trials]) for k in range(len(specs))]
    return summaries, records


@dataclass(frozen=True)
class PhaseCell:
    rank: int
    level: float
    miss_rate: float
    noise_rate: float
    successes: int
    trials: int

    @property
    def recovery_rate(self) -> float:
        return self.successes / self.trials


@dataclass
class PhaseDiagram:
    """Recovery rates on a ``levels x ranks`` grid.

    ``vary`` names the corruption that changes along the level axis
    (``"noise"`` or ``"miss"``); the other one is held at ``fixed``.
    """

    ranks: tuple
    levels: tuple
    vary: str
    fixed: float
    cells: list
    records: list

    @property
    def rates(self) -> np.ndarray:
        """Array of shape ``(len(levels), len(ranks))``."""
        out = np.zeros((len(self.levels), len(self.ranks)))
        for c in self.cells:
            out[self.levels.index(c.level), self.ranks.index(c.rank)] = c.recovery_rate
        return out

    def cell(self, rank: int, level: float) -> PhaseCell:
        for c in self.cells:
            if c.rank == rank and math.isclose(c.level, level):
                return c
        raise KeyError((rank, level))


def phase_diagram(n: int = 50, ranks: Sequence[int] = PHASE_RANKS, levels: Sequence[float] = PHASE_LEVELS,
                  vary: str = "noise", fixed: float = 0.05, trials: int = 10, seed: int = 0,
                  params: SolverParams | None = None, workers: int | None = None) -> PhaseDiagram:
    """Exact-recovery rates over ranks and one corruption axis.

    With ``vary="noise"`` the missing fraction stays at ``fixed`` while the
    impulse fraction runs over ``levels``; ``vary="miss"`` swaps the roles.
    Cell ``(rank, level)`` uses the base seed ``seed`` for its trials, so
    cells differ only through their corruption settings and rank.
    """
    if vary not in ("noise", "miss"):
        raise ValueError("vary must be 'noise' or 'miss'")
    ranks, levels = tuple(int(r) for r in ranks), tuple(float(v) for v in levels)
    specs = []
    for lev in levels:
        for r in ranks:
            miss, noise = (fixed, lev) if vary == "noise" else (lev, fixed)
            specs.append((lev, TrialSpec(n, r, miss, noise, trials, seed, params=params)))
    records = _map([(s, i) for _, s in specs for i in range(trials)], workers)
    cells = []
    for k, (lev, s) in enumerate(specs):
        chunk = records[k * trials:(k + 1) * trials]
        cells.append(PhaseCell(s.rank, lev, s.miss_rate, s.noise_rate, sum(r.success for r in chunk), trials))
    return PhaseDiagram(ranks, levels, vary, fixed, cells, records)


def monotone_violations(rates: Sequence[float], atol: float = 1e-12) -> list[float]:
    """Sizes of the increases along a sequence that should not increase."""
    arr = np.asarray(rates, dtype=float)
    diffs = np.diff(arr)
    return [float(d) for d in diffs if d > atol]


def line_is_monotone(rates: Sequence[float], max_inversions: int = 1, max_size: float = 0.1) -> bool:
    """Weakly decreasing up to ``max_inversions`` rises of at most ``max_size``."""
    v = monotone_violations(rates)
    return len(v) <= max_inversions and all(d <= max_size + 1e-12 for d in v)


def write_csv(records: Iterable[TrialRecord], path) -> None:
    """One row per trial with the columns in ``CSV_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            d = asdict(r)
            row = []
            for col in CSV_COLUMNS:
                val = d[col]
                if isinstance(val, bool):
                    val = int(val)
                elif isinstance(val, float):
                    val = repr(val)
                row.append(val)
            w.writerow(row)


def read_csv(path) -> list[TrialRecord]:
    types = {f.name: f.type for f in fields(TrialRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for k, v in row.items():
                t = types[k]
                if t in ("int", int):
                    vals[k] = int(v)
                elif t in ("bool", bool):
                    vals[k] = bool(int(v))
                else:
                    vals[k] = float(v)
            out.append(TrialRecord(**vals))
    return out
