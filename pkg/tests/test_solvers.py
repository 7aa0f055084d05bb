import math

import numpy as np
import pytest

from qnof.qsvd import numeric_rank, qnof_value, singular_values
from qnof.quaternion import Quaternion, QuatMatrix, fro_norm
from qnof.solvers import (
    LIMIT_NAMES,
    SolverParams,
    SolverTrace,
    _prox_step,
    check_convergence_limits,
    quat_soft_threshold,
    solve_mc,
    solve_rmc,
    solve_rpca,
)
from qnof.synthbench import make_instance, random_lowrank, solve_instance, synth_params


def _rel(a, b):
    return fro_norm(a - b) / fro_norm(b)


class TestSoftThreshold:
    def test_real_entry(self):
        out = quat_soft_threshold(QuatMatrix(np.array([[3.0]])), 1.0, 1e-8)
        assert out.w[0, 0] == pytest.approx(2.0, abs=1e-8)

    def test_pure_entry(self):
        m = QuatMatrix.from_components([[0.0]], [[3.0]], [[4.0]], [[0.0]])
        out = quat_soft_threshold(m, 1.0, 1e-8).entry(0, 0)
        assert out.x == pytest.approx(2.4, abs=1e-8)
        assert out.y == pytest.approx(3.2, abs=1e-8)
        assert out.w == 0.0 and out.z == 0.0

    def test_below_threshold_is_zero(self):
        m = QuatMatrix.random(4, 4, rng=0) * 0.1
        assert quat_soft_threshold(m, 10.0) == QuatMatrix.zeros(4, 4)

    def test_direction_preserved(self):
        m = QuatMatrix.random(5, 5, rng=1)
        out = quat_soft_threshold(m, 0.5)
        keep = m.modulus() > 0.5
        u = m.data / m.modulus()
        v = out.data / np.where(keep, out.modulus(), 1.0)
        np.testing.assert_allclose(u[:, keep], v[:, keep], atol=1e-12)
        np.testing.assert_allclose(out.modulus()[keep], (m.modulus() - 0.5)[keep], rtol=1e-7)

    def test_bad_arguments(self):
        m = QuatMatrix.zeros(1, 1)
        with pytest.raises(ValueError):
            quat_soft_threshold(m, -1.0)
        with pytest.raises(ValueError):
            quat_soft_threshold(m, 1.0, soft_eps=0.0)


class TestParams:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(mu=1.0), dict(mu=0.9), dict(lam=0.0), dict(beta0=-1.0), dict(rho=0.0),
         dict(max_iters=0), dict(max_iters=2.5), dict(rmc_schedule="other"), dict(stop_tol=-1.0)],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SolverParams(**kwargs)

    def test_resolved_defaults(self):
        p = SolverParams().resolved((25, 100))
        assert p.rho == pytest.approx(0.1)
        assert p.beta1_0 == p.beta2_0 == p.beta0 == 1e-2
        assert (p.lam, p.mu, p.max_iters, p.stop_tol, p.soft_eps) == (1.0, 1.05, 500, 1e-9, 1e-8)

    def test_dict_round_trip(self):
        p = SolverParams(lam=3.0, mu=1.2)
        d = p.to_dict()
        assert d["lambda"] == 3.0 and "lam" not in d
        assert SolverParams.from_dict(d) == p

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            SolverParams.from_dict({"lambda": 1.0, "gamma": 2.0})


class TestTrace:
    def test_lengths_equal_iterations(self):
        y = random_lowrank(12, 2, seed=0)
        res = solve_mc(y, np.ones(y.shape, bool), SolverParams(max_iters=7, stop_tol=0.0))
        assert res.iterations == 7
        for name, values in res.trace.records.items():
            assert len(values) == 7, name
        assert not res.converged and res.reason == "max_iters"

    def test_missing_fields_are_nan(self):
        t = SolverTrace()
        t.append(rel_change=1.0)
        assert math.isnan(t.res_xp[0])
        with pytest.raises(AttributeError):
            t.nonexistent


def _mc_problem(n=20, r=2, miss=0.3, seed=0):
    y = random_lowrank(n, r, seed=seed)
    rng = np.random.default_rng(seed + 100)
    mask = rng.random((n, n)) >= miss
    return y, mask


class TestMC:
    def test_z_vanishes_on_observed_every_iteration(self):
        y, mask = _mc_problem()
        seen = []

        def cb(k, state):
            z = state["Z"].data
            seen.append(np.count_nonzero(z[:, mask]))

        res = solve_mc(y, mask, SolverParams(max_iters=60), callback=cb)
        assert len(seen) == res.iterations
        assert max(seen) == 0

    def test_penalty_schedule(self):
        y, mask = _mc_problem()
        p = SolverParams(beta0=0.03, mu=1.07, max_iters=40, stop_tol=0.0)
        res = solve_mc(y, mask, p)
        expected = [0.03 * 1.07**k for k in range(40)]
        assert list(res.trace.beta1) == expected

    def test_penalty_cap(self):
        y, mask = _mc_problem()
        p = SolverParams(beta0=1.0, mu=10.0, beta_cap=1e3, max_iters=6, stop_tol=0.0)
        res = solve_mc(y, mask, p)
        assert list(res.trace.beta1) == [1.0, 10.0, 100.0, 1e3, 1e3, 1e3]

    def test_prox_step_descent(self):
        y, mask = _mc_problem()
        p = SolverParams(lam=2.0, max_iters=80)
        worst = -np.inf
        prev = {"X": None}

        def cb(k, state):
            x, z, eta, beta = state["X"], state["Z"], state["eta"], state["beta"]
            x_old = prev["X"] if prev["X"] is not None else QuatMatrix(y.data * mask)
            eta_old = eta - beta * (QuatMatrix(y.data * mask) - x - z)
            arg = QuatMatrix(y.data * mask) - z + eta_old / beta
            weight = p.lam / beta

            def f(v):
                return weight * qnof_value(v) + 0.5 * fro_norm(v - arg) ** 2

            nonlocal worst
            worst = max(worst, f(x) - f(x_old))
            prev["X"] = x

        solve_mc(y, mask, p, callback=cb)
        assert worst <= 1e-10

    def test_rank_one_recovery(self):
        y = random_lowrank(30, 1, seed=3)
        rng = np.random.default_rng(3)
        mask = np.ones(y.shape, bool)
        mask.flat[rng.choice(y.data[0].size, 45, replace=False)] = False
        scale = math.sqrt(float(np.sum(y.data**2 * mask)) / mask.sum())
        res = solve_mc(y / scale, mask, SolverParams(lam=30.0, mu=1.1, max_iters=500))
        assert _rel(res.X * scale, y) <= 1e-7

    def test_full_mask_light_weight(self):
        y = QuatMatrix.random(10, 8, rng=4)
        res = solve_mc(y, np.ones(y.shape, bool), SolverParams(lam=1e-6))
        assert _rel(res.X, y) <= 1e-6

    def test_completion_at_rank_four(self):
        y = random_lowrank(50, 4, seed=5)
        rng = np.random.default_rng(5)
        mask = np.ones(y.shape, bool)
        mask.flat[rng.choice(2500, 625, replace=False)] = False
        scale = math.sqrt(float(np.sum(y.data**2 * mask)) / mask.sum())
        res = solve_mc(y / scale, mask, SolverParams(lam=60.0, mu=1.1))
        assert _rel(res.X * scale, y) <= 1e-6
        assert numeric_rank(singular_values(res.X)) == 4

    def test_determinism(self):
        y, mask = _mc_problem()
        a = solve_mc(y, mask, SolverParams(max_iters=30))
        b = solve_mc(y, mask, SolverParams(max_iters=30))
        assert a.trace.records == b.trace.records
        assert a.X == b.X

    def test_errors(self):
        y = random_lowrank(5, 1, seed=0)
        with pytest.raises(ValueError):
            solve_mc(y, np.zeros((5, 5), bool))
        with pytest.raises(ValueError):
            solve_mc(QuatMatrix.zeros(5, 5), np.ones((5, 5), bool))
        with pytest.raises(ValueError):
            solve_mc(y, np.ones((4, 5), bool))
        with pytest.raises(TypeError):
            solve_mc(y.data, np.ones((5, 5), bool))


class TestRPCA:
    def test_planted_decomposition(self):
        n = 100
        low = random_lowrank(n, 5, seed=6)
        rng = np.random.default_rng(6)
        idx = rng.choice(n * n, n * n // 20, replace=False)
        s = np.zeros((4, n * n))
        lo, hi = low.data.min(), low.data.max()
        s[:, idx] = rng.uniform(lo, hi, (4, idx.size))
        sparse = QuatMatrix(s.reshape(4, n, n))
        y = low + sparse
        scale = math.sqrt(float(np.mean(y.data**2)) * 4)
        res = solve_rpca(y / scale, SolverParams(lam=120.0, mu=1.1))
        assert res.converged
        assert _rel(res.X * scale, low) <= 1e-6
        support = (res.Z * scale).modulus() > 1e-6 * np.abs(s).max()
        assert np.array_equal(support, sparse.modulus() > 0)
        assert res.trace.res_yxz[-1] <= 1e-8 * fro_norm(y / scale)

    def test_clean_input_light_weight(self):
        y = QuatMatrix.random(12, 10, rng=7)
        res = solve_rpca(y, SolverParams(lam=1e-6, rho=10.0))
        assert _rel(res.X, y) <= 1e-6
        assert fro_norm(res.Z) <= 1e-6 * fro_norm(y)


class TestRMC:
    def test_coupling_after_every_q_step(self):
        y, mask, _, _ = make_instance(30, 2, 0.05, 0.05, seed=1)
        worst_exact, worst_sum, calls = 0, 0.0, 0

        def cb(k, state):
            nonlocal worst_exact, worst_sum, calls
            if state["stage"] != "Q":
                return
            calls += 1
            p, q, yy, m = state["P"].data, state["Q"].data, state["Y"].data, state["mask"]
            worst_exact = max(worst_exact, np.count_nonzero(((yy - p) - q)[:, m]))
            ulp = np.spacing(np.maximum(np.abs(p), np.abs(yy)))
            worst_sum = max(worst_sum, float(np.max((np.abs(p + q - yy) / ulp)[:, m])))

        res = solve_rmc(y, mask, synth_params(30), callback=cb)
        assert calls == res.iterations
        assert worst_exact == 0
        assert worst_sum <= 2.0

    def test_table1_cell_rank_two(self):
        y, mask, x0, _ = make_instance(50, 2, 0.05, 0.05, seed=0)
        res = solve_instance(y, mask, synth_params(50))
        assert res.converged
        assert _rel(res.X, x0) <= 1e-7
        assert numeric_rank(singular_values(res.X)) == 2
        assert check_convergence_limits(res.trace, 1e-6).ok

    def test_clean_full_mask_behaves_like_mc(self):
        y = random_lowrank(20, 2, seed=8)
        mask = np.ones(y.shape, bool)
        scale = math.sqrt(float(np.mean(y.data**2)) * 4)
        p = SolverParams(lam=24.0, mu=1.1)
        rmc = solve_rmc(y / scale, mask, p)
        mc = solve_mc(y / scale, mask, p)
        assert _rel(rmc.X * scale, y) <= 1e-7
        assert _rel(mc.X * scale, y) <= 1e-7
        assert fro_norm(rmc.Z) <= 1e-7 * fro_norm(y / scale)

    def test_printed_schedule_diverges(self):
        y, mask, _, _ = make_instance(20, 2, 0.05, 0.05, seed=2)
        p = synth_params(20, rmc_schedule="printed", max_iters=150)
        res = solve_instance(y, mask, p)
        assert not res.converged
        assert res.trace.res_zq[-1] > 1e3 * res.trace.res_zq[10]

    def test_trace_has_rmc_fields(self):
        y, mask, _, _ = make_instance(15, 2, 0.1, 0.05, seed=3)
        res = solve_rmc(y, mask, SolverParams(max_iters=5, stop_tol=0.0))
        for name in ("res_xp", "res_zq", "dp", "dq", "xi_norm", "beta2"):
            assert np.all(np.isfinite(res.trace[name])), name
        assert list(res.trace.beta2) == [1e-2 * 1.05**k for k in range(5)]

    def test_determinism(self):
        y, mask, _, _ = make_instance(20, 2, 0.05, 0.05, seed=4)
        a = solve_rmc(y, mask, SolverParams(max_iters=25))
        b = solve_rmc(y, mask, SolverParams(max_iters=25))
        assert a.trace.records == b.trace.records


class TestLimits:
    def test_insufficient_data(self):
        y, mask = _mc_problem()
        res = solve_mc(y, mask, SolverParams(max_iters=1))
        report = check_convergence_limits(res.trace)
        assert report.status == "insufficient data"
        assert not report.ok

    def test_empty_trace(self):
        with pytest.raises(ValueError):
            check_convergence_limits(SolverTrace())

    def test_stress_run_fails(self):
        # almost constant penalty with a huge weight: iterates keep moving
        y, mask, _, _ = make_instance(20, 2, 0.05, 0.05, seed=5)
        p = SolverParams(lam=1e6, mu=1 + 1e-9, max_iters=30)
        report = check_convergence_limits(solve_rmc(y, mask, p).trace, 1e-6)
        assert report.status == "fail"
        assert not all(report.passed.values())

    def test_rmc_report_names(self):
        y, mask, _, _ = make_instance(20, 2, 0.05, 0.05, seed=6)
        report = check_convergence_limits(solve_instance(y, mask, synth_params(20)).trace)
        assert set(report.values) == set(LIMIT_NAMES)
        assert report.ok

    def test_mc_report_uses_joint_residual(self):
        y, mask = _mc_problem()
        report = check_convergence_limits(solve_mc(y, mask, SolverParams(max_iters=20)).trace)
        assert set(report.values) == {"dX", "dZ", "Y-X-Z"}


def test_zero_prox_argument_keeps_previous_iterate():
    prev = QuatMatrix.scalar_identity(Quaternion(0.0, 1.0), 3)
    x, q = _prox_step(QuatMatrix.zeros(3, 3), 1.0, prev, 1.7)
    assert x is prev and q == 1.7
