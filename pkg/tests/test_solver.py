import math

import numpy as np
import pytest

from pdig import acceptance, solver
from pdig.cones import Nonneg, SecondOrder, Zero, contains, dual_cone, project_ball_cap_cone
from pdig.errors import ConfigurationError, ContractError
from pdig.harness import LinearOracle, reference_solution, tiny_1d, tiny_2d
from pdig.problem import Ball, Box, LeastSquaresL1, build_bpd, build_lasso, make_problem
from pdig.solver import (
    StepSchedule,
    gap_metrics,
    init_state,
    lagrangian,
    pdig_epoch,
    pdig_inner_step,
    project_dual,
    run_baseline_fullpd,
    run_pdig,
    step_sizes,
)


def abs_1d(B=1.0, b=0.0):
    """``|x|`` on ``[-10, 10]`` with the single block ``x - b <= 0``."""
    return make_problem(
        [LeastSquaresL1(np.zeros((0, 1)), np.zeros(0), 1.0)],
        [(np.ones((1, 1)), [b], Nonneg(1))],
        Box.cube(1, 10.0), L=1.0, dual_bound=B,
    )


class TestStepSizes:
    @pytest.mark.parametrize("k,a,expected", [
        (1, 2.0, (0.5, 1 / 3)),
        (4, 1.0, (0.5, 1 / 3)),
        (100, 10.0, (0.01, 0.05)),
    ])
    def test_examples(self, k, a, expected):
        assert step_sizes(k, a) == pytest.approx(expected, rel=1e-15)

    def test_degenerate_a_max(self):
        assert step_sizes(9, 0.0) == pytest.approx((1 / 3, 1 / 3))

    @pytest.mark.parametrize("k", [0, -1, 1.5])
    def test_bad_k(self, k):
        with pytest.raises(ContractError):
            step_sizes(k, 1.0)

    def test_negative_a_max(self):
        with pytest.raises(ContractError):
            StepSchedule(-1.0)

    @pytest.mark.parametrize("a", [0.0, 0.3, 1.0, 7.0])
    def test_positive_and_decreasing(self, a):
        sched = StepSchedule(a)
        vals = np.array([sched(k) for k in range(1, 500)])
        assert np.all(vals > 0)
        assert np.all(np.diff(vals[:, 0]) < 0) and np.all(np.diff(vals[:, 1]) < 0)


class TestInnerStep:
    def test_worked_1d_step(self):
        p = abs_1d(B=1.0)
        s = init_state(p, x1=[2.0])
        eta, gamma = step_sizes(1, 1.0)
        assert (eta, gamma) == (1.0, 0.5)
        pdig_inner_step(p, s, 0, eta, gamma)
        # dual: P(0 + 1*2 + 1*1*(2-2)) = min(2, radius 2) = 2
        np.testing.assert_allclose(s.y, [2.0])
        # primal: P_X(2 - 0.5*(sign(2) + 1*2)) = 0.5
        np.testing.assert_allclose(s.x_cur, [0.5])
        np.testing.assert_allclose(s.x_prev, [2.0])

    def test_decoupled_step_is_projected_subgradient(self, rng):
        p = acceptance.decoupled_problem(m=4, n=3, seed=1)
        s = init_state(p, x1=rng.standard_normal(3) * 5)
        y0 = s.y.copy()
        for i in range(p.m):
            x = s.x_cur.copy()
            expected = p.X.project(x - 0.2 * p.components[i](x)[1])
            pdig_inner_step(p, s, i, 0.7, 0.2)
            np.testing.assert_array_equal(s.y, y0)
            np.testing.assert_allclose(s.x_cur, expected, atol=1e-15)

    def test_only_blocks_i_and_previous_change(self, rng):
        p = build_bpd(m=5, di=2, n=4, seed=0).with_dual_bound(10.0)
        s = init_state(p, x1=rng.standard_normal(4), y1=rng.standard_normal(p.d))
        s.x_prev = p.X.project(rng.standard_normal(4))
        before = s.y.copy()
        pdig_inner_step(p, s, 2, 0.3, 0.1)
        touched = np.zeros(p.d, dtype=bool)
        touched[p.blocks[1].rows] = touched[p.blocks[2].rows] = True
        np.testing.assert_array_equal(s.y[~touched], before[~touched])
        assert not np.array_equal(s.y[touched], before[touched])

    def test_wraparound_uses_last_block(self, rng):
        p = build_bpd(m=3, di=2, n=4, seed=0).with_dual_bound(10.0)
        s = init_state(p, x1=rng.standard_normal(4))
        s.x_prev = s.x_cur + 0.5
        before = s.y.copy()
        pdig_inner_step(p, s, 0, 0.3, 0.1)
        assert not np.array_equal(s.y[p.blocks[2].rows], before[p.blocks[2].rows])
        np.testing.assert_array_equal(s.y[p.blocks[1].rows], before[p.blocks[1].rows])

    def test_subgradient_at_pre_update_point(self):
        # record where the oracle is queried
        calls = []

        class Spy(LinearOracle):
            def __call__(self, x):
                calls.append(x.copy())
                return super().__call__(x)

        p = make_problem([Spy([1.0])], [(np.ones((1, 1)), [0.0], Nonneg(1))], Box.cube(1, 5), 1.0, dual_bound=1.0)
        s = init_state(p, x1=[3.0])
        pdig_inner_step(p, s, 0, 1.0, 0.1)
        np.testing.assert_array_equal(calls[0], [3.0])

    def test_bad_index(self):
        p = abs_1d()
        with pytest.raises(ContractError):
            pdig_inner_step(p, init_state(p), 1, 1.0, 1.0)

    def test_feasibility_after_each_step(self, rng):
        p = build_bpd(m=4, di=3, n=5, seed=2).with_dual_bound(0.5)
        s = init_state(p, x1=rng.standard_normal(5) * 10)
        for k in range(1, 30):
            eta, gamma = step_sizes(k, 1.0)
            for i in range(p.m):
                pdig_inner_step(p, s, i, eta * 50, gamma)
                assert np.all(np.abs(s.x_cur) <= p.X.hi + 1e-12)
                for blk in p.blocks:
                    yb = s.y[blk.rows]
                    assert np.linalg.norm(yb) <= s.per_block_radius + 1e-9
                    assert contains(dual_cone(blk.cone), yb)


class TestEpochAndAveraging:
    def test_m1_epoch_is_one_step(self):
        p = abs_1d()
        s1, s2 = init_state(p, x1=[2.0]), init_state(p, x1=[2.0])
        pdig_epoch(p, s1, StepSchedule(1.0))
        pdig_inner_step(p, s2, 0, 1.0, 0.5)
        np.testing.assert_array_equal(s1.x_cur, s2.x_cur)
        np.testing.assert_array_equal(s1.y, s2.y)
        assert s1.k == 2

    def test_x_prev_after_epoch(self, rng):
        p = build_lasso(m=12, n=8, p=3, seed=0).with_dual_bound(5.0)
        s = init_state(p, x1=rng.standard_normal(8))
        sched = StepSchedule(math.sqrt(2))
        eta, gamma = sched(1)
        ref = init_state(p, x1=s.x_cur)
        for i in range(p.m - 1):
            pdig_inner_step(p, ref, i, eta, gamma)
        x_km = ref.x_cur.copy()
        pdig_epoch(p, s, sched)
        np.testing.assert_array_equal(s.x_prev, x_km)

    def test_average_includes_start_point(self):
        # x_1 = 2, x_2 = 0.5: K=1 averages {2}; K=2 averages {2, 0.5}
        p = abs_1d()
        r1 = run_pdig(p, 1, x1=[2.0], a_max_override=1.0)
        r2 = run_pdig(p, 2, x1=[2.0], a_max_override=1.0)
        np.testing.assert_allclose(r1.x_avg, [2.0])
        np.testing.assert_allclose(r2.x_avg, [1.25])

    def test_average_equals_mean_of_outer_iterates(self, rng):
        p = build_bpd(m=4, di=2, n=5, seed=3).with_dual_bound(2.0)
        sched = StepSchedule(solver.block_a_max(p.operator))
        s = init_state(p)
        xs = []
        for _ in range(25):
            xs.append(s.x_cur.copy())
            pdig_epoch(p, s, sched)
        rec = run_pdig(p, 25, engine="python")
        np.testing.assert_allclose(rec.x_avg, np.mean(xs, axis=0), atol=1e-12)


class TestRunPdig:
    def test_initialization(self):
        p = abs_1d()
        s = init_state(p)
        np.testing.assert_array_equal(s.x_cur, [0.0])
        np.testing.assert_array_equal(s.y, [0.0])

    def test_requires_B(self):
        with pytest.raises(ConfigurationError, match="slater_dual_bound"):
            run_pdig(tiny_1d(), 10)

    @pytest.mark.parametrize("epochs", [0, -3])
    def test_bad_epochs(self, epochs):
        with pytest.raises(ConfigurationError):
            run_pdig(abs_1d(), epochs)

    def test_record_rows(self):
        rec = run_pdig(abs_1d(), 25, record_every=10)
        assert list(rec.k) == [10, 20, 25]
        assert rec.epochs == 25

    def test_deterministic(self):
        p = build_lasso(m=12, n=8, p=3, seed=1).with_dual_bound(5.0)
        a = run_pdig(p, 60, record_every=7, engine="python")
        b = run_pdig(p, 60, record_every=7, engine="python")
        for name in ("k", "eta", "gamma", "f_avg", "infeas", "x_avg", "y_avg"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    @pytest.mark.parametrize("build", [
        lambda: build_lasso(m=12, n=8, p=3, seed=1).with_dual_bound(5.0),
        lambda: build_bpd(m=5, di=3, n=6, seed=0).with_dual_bound(3.0),
    ])
    def test_engines_agree(self, build):
        p = build()
        a = run_pdig(p, 40, record_every=10, engine="python")
        b = run_pdig(p, 40, record_every=10, engine="compiled")
        assert b.engine == "compiled"
        np.testing.assert_allclose(a.x_avg, b.x_avg, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(a.y_avg, b.y_avg, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(a.f_avg, b.f_avg, rtol=1e-9)

    def test_engine_compiled_on_ball(self):
        base = build_lasso(m=12, n=8, p=3, seed=1)
        import dataclasses
        p = dataclasses.replace(base, X=Ball(10.0, 8)).with_dual_bound(5.0)
        a = run_pdig(p, 30, engine="python")
        b = run_pdig(p, 30, engine="compiled")
        np.testing.assert_allclose(a.x_avg, b.x_avg, rtol=1e-9, atol=1e-9)

    def test_engine_compiled_rejects_custom_oracle(self):
        with pytest.raises(ConfigurationError):
            run_pdig(tiny_2d(dual_bound=1.0), 5, engine="compiled")
        with pytest.raises(ConfigurationError):
            run_pdig(tiny_2d(dual_bound=1.0), 5, engine="gpu")

    def test_keep_iterates_feasible(self):
        p = build_bpd(m=4, di=3, n=5, seed=2).with_dual_bound(0.5)
        rec = run_pdig(p, 50, record_every=5, keep_iterates=True)
        assert len(rec.iterates) == 10
        for _, x_cur, x_prev, y in rec.iterates:
            for x in (x_cur, x_prev):
                np.testing.assert_array_equal(p.X.project(x), x)
            for blk in p.blocks:
                assert np.linalg.norm(y[blk.rows]) <= p.dual_radius + 1e-9
                assert contains(dual_cone(blk.cone), y[blk.rows])

    def test_csv_schema(self, tmp_path):
        rec = run_pdig(abs_1d(), 5, record_every=2)
        path = tmp_path / "m.csv"
        rec.to_csv(path)
        text = path.read_bytes().decode()
        lines = text.split("\n")
        assert lines[0] == "k,eta,gamma,f_avg,subopt,infeas,gap"
        assert len(lines) == 5 and lines[-1] == ""
        assert lines[1].startswith("2,")
        assert "\r" not in text

    def test_csv_full_precision(self, tmp_path):
        rec = run_pdig(abs_1d(), 3, record_every=1)
        path = tmp_path / "m.csv"
        rec.to_csv(path)
        row = path.read_text().split("\n")[3].split(",")
        assert float(row[1]) == rec.eta[2]
        assert float(row[2]) == rec.gamma[2]


class TestLagrangianAndGap:
    def test_lagrangian_example(self):
        assert lagrangian(abs_1d(), [2.0], [1.0]) == pytest.approx(4.0)

    def test_lagrangian_zero_dual(self, rng):
        p = build_bpd(m=3, di=2, n=4, seed=0)
        x = rng.standard_normal(4)
        assert lagrangian(p, x, np.zeros(p.d)) == p.objective(x)

    def test_lagrangian_affine_in_y(self, rng):
        p = build_bpd(m=3, di=2, n=4, seed=0)
        x, y = rng.standard_normal(4), rng.standard_normal(p.d)
        for alpha in (0.0, 0.5, -3.0, 10.0):
            lhs = lagrangian(p, x, alpha * y) - lagrangian(p, x, 0 * y)
            rhs = alpha * (lagrangian(p, x, y) - lagrangian(p, x, 0 * y))
            assert lhs == pytest.approx(rhs, abs=1e-12 * max(1, abs(alpha)) * 100)

    def test_at_optimum(self):
        p = tiny_1d(dual_bound=1.0)
        ref = reference_solution(p)
        rep = gap_metrics(p, ref.x_star, np.zeros(1), ref)
        assert rep.suboptimality == 0.0 and rep.infeasibility == 0.0
        np.testing.assert_array_equal(rep.y_tilde, [0.0])

    def test_infeasible_point(self):
        p = abs_1d(B=1.0)
        rep = gap_metrics(p, [2.0], [0.0])
        assert rep.infeasibility == pytest.approx(2.0)
        # y_tilde = (B + 1) w / ||w||
        np.testing.assert_allclose(rep.y_tilde, [2.0])
        assert rep.flags == ("no-reference",)
        assert math.isnan(rep.suboptimality) and math.isnan(rep.gap_surrogate)

    def test_sandwich_on_tiny_2d(self, rng):
        # y* = 1, so any B >= 1 makes the surrogate an upper bound
        p = tiny_2d(dual_bound=1.0)
        ref = reference_solution(p)
        for _ in range(200):
            x = p.X.project(rng.uniform(-1.5, 1.5, 2))
            y = rng.uniform(0, 2, 1)
            rep = gap_metrics(p, x, y, ref)
            f_gap = p.objective(x) - ref.f_star
            assert rep.gap_surrogate >= max(f_gap, rep.infeasibility) - 1e-9
            assert rep.infeasibility >= 0

    def test_requires_B(self):
        with pytest.raises(ConfigurationError):
            gap_metrics(tiny_1d(), [0.0], [0.0])


class TestProjectDual:
    def test_blockwise_equals_product_projection(self, rng):
        # the full projection onto the product of Y_i cap K_i* factorizes
        p = make_problem(
            [LinearOracle([1.0, 0.0])] * 3,
            [(np.zeros((2, 2)), np.zeros(2), Nonneg(2)), (np.zeros((3, 2)), np.zeros(3), SecondOrder(3)),
             (np.zeros((2, 2)), np.zeros(2), Zero(2))],
            Box.cube(2, 1), 1.0, dual_bound=2.0,
        )
        # brute-force: sample feasible product points, projection must be no farther
        feas = np.array([project_dual(p, v) for v in rng.standard_normal((3000, p.d)) * 2])
        for _ in range(30):
            u = rng.standard_normal(p.d) * 3
            pu = project_dual(p, u)
            expected = np.concatenate([
                project_ball_cap_cone(dual_cone(blk.cone), p.dual_radius, u[blk.rows]) for blk in p.blocks
            ])
            np.testing.assert_allclose(pu, expected, atol=1e-12)
            assert np.linalg.norm(pu - u) <= np.min(np.linalg.norm(feas - u, axis=1)) + 1e-12


class TestBaseline:
    def test_decoupled_matches_projected_subgradient(self, rng):
        p = acceptance.decoupled_problem(m=3, n=4, seed=2)
        x1 = rng.standard_normal(4) * 4
        rec = run_baseline_fullpd(p, 50, x1=x1)
        x = p.X.project(x1)
        total = np.zeros(4)
        for k in range(1, 51):
            total += x
            _, gamma = step_sizes(k, 0.0)
            x = p.X.project(x - gamma * p.subgradient(x))
        np.testing.assert_allclose(rec.x_avg, total / 50, atol=1e-12)

    def test_deterministic(self):
        p = tiny_2d(dual_bound=4.0)
        a, b = run_baseline_fullpd(p, 100), run_baseline_fullpd(p, 100)
        np.testing.assert_array_equal(a.x_avg, b.x_avg)
        assert a.solver == "fullpd"

    def test_converges_on_tiny_2d(self):
        p = tiny_2d(dual_bound=4.0)
        ref = reference_solution(p)
        rec = run_baseline_fullpd(p.with_reference(ref), 4000, record_every=1000)
        assert rec.subopt[-1] < 5e-2 and rec.infeas[-1] < 5e-2
        assert rec.subopt[-1] < rec.subopt[0] or rec.infeas[-1] < rec.infeas[0]


def test_negated_dual_step_breaks_acceptance(monkeypatch):
    # negative control: flipping the sign of the dual ascent must be caught
    original = solver.pdig_inner_step

    def broken(p, s, i, eta, gamma):
        return original(p, s, i, -eta, gamma)

    monkeypatch.setattr(solver, "pdig_inner_step", broken)
    res = acceptance.check_tiny_optimality(epochs=2000)
    assert not res.passed
