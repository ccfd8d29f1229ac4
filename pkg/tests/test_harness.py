import numpy as np
import pytest

from pdig.acceptance import decoupled_problem
from pdig.cones import Nonneg, SecondOrder, project_cone
from pdig.errors import ConfigurationError, ContractError
from pdig.harness import (
    check_projection_vi,
    fit_rate,
    ratio_test,
    reference_solution,
    tiny_1d,
    tiny_2d,
)
from pdig.problem import Box, build_lasso


class Synthetic:
    """Record stand-in with a single metric column."""

    def __init__(self, k, values):
        self.k = np.asarray(k)
        self.values = np.asarray(values, dtype=float)

    def metric(self, name):
        return self.values

    def row_at(self, k):
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            raise KeyError(k)
        return int(idx[0])


synthetic = Synthetic


def soc_sampler(dim, rng):
    def sample(trials):
        y = rng.standard_normal((trials, dim - 1)) * 3
        t = np.linalg.norm(y, axis=1) + rng.exponential(2.0, trials)
        return np.column_stack([y, t])
    return sample


class TestFitRate:
    K = np.arange(10, 10010, 10)

    def test_exact_power_law(self):
        fit = fit_rate(synthetic(self.K, self.K ** -0.5), "max", 0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-9)
        assert fit.residual < 1e-9

    def test_constant(self):
        fit = fit_rate(synthetic(self.K, np.full(self.K.shape, 3.0)), "max", 0.5)
        assert fit.slope == pytest.approx(0.0, abs=1e-9)

    def test_noisy(self):
        vals = 3 * self.K ** -0.5 * (1 + 0.01 * np.sin(self.K))
        assert -0.55 <= fit_rate(synthetic(self.K, vals), "max", 0.5).slope <= -0.45

    def test_scale_invariant(self, rng):
        vals = rng.uniform(0.5, 2.0, self.K.shape) * self.K ** -0.3
        a = fit_rate(synthetic(self.K, vals), "max", 0.5).slope
        b = fit_rate(synthetic(self.K, 1e4 * vals), "max", 0.5).slope
        assert a == pytest.approx(b, abs=1e-12)

    def test_window_is_last_fraction(self):
        fit = fit_rate(synthetic(self.K, self.K ** -0.5), "max", 0.25)
        assert fit.window == (7510, 10000)

    def test_too_few_rows(self):
        with pytest.raises(ConfigurationError):
            fit_rate(synthetic(np.arange(1, 8), np.ones(7)), "max", 1.0)

    def test_rows_below_floor_dropped(self):
        vals = np.where(self.K > 9000, 0.0, self.K ** -0.5)
        fit = fit_rate(synthetic(self.K, vals), "max", 0.5)
        assert fit.window[1] == 9000

    def test_bad_window(self):
        with pytest.raises(ContractError):
            fit_rate(synthetic(self.K, self.K ** -0.5), "max", 0.0)


class TestRatioTest:
    K = np.arange(100, 6500, 100)

    def test_power_law_passes(self):
        assert ratio_test(synthetic(self.K, self.K ** -0.5), "max", (400, 1600))

    def test_constant_fails(self):
        assert not ratio_test(synthetic(self.K, np.ones(self.K.shape)), "max", (400, 1600))

    def test_missing_row(self):
        with pytest.raises(ConfigurationError):
            ratio_test(synthetic(self.K, self.K ** -0.5), "max", (350,))


class TestProjectionVI:
    def test_feasible_point_trivial(self, rng):
        u = np.array([1.0, 0.0, 2.0])
        assert check_projection_vi(lambda v: project_cone(SecondOrder(3), v), soc_sampler(3, rng), u, 1000)

    def test_soc_example(self, rng):
        u = np.array([3.0, 4.0, 0.0])
        assert check_projection_vi(lambda v: project_cone(SecondOrder(3), v), soc_sampler(3, rng), u, 10_000)

    def test_clamp_only_soc_fails(self, rng):
        # lifting t up to ||y|| lands in the cone but is not the nearest point
        def clamp(v):
            out = v.copy()
            out[-1] = max(v[-1], np.linalg.norm(v[:-1]))
            return out

        assert not check_projection_vi(clamp, soc_sampler(3, rng), np.array([3.0, 4.0, 0.0]), 10_000)

    def test_orthant(self, rng):
        proj = lambda v: project_cone(Nonneg(4), v)
        sampler = lambda t: np.abs(rng.standard_normal((t, 4)))
        for _ in range(50):
            assert check_projection_vi(proj, sampler, rng.standard_normal(4) * 3, 200)


class TestReferenceSolution:
    def test_tiny_1d(self):
        ref = reference_solution(tiny_1d())
        assert ref.method == "grid"
        np.testing.assert_allclose(ref.x_star, [0.0], atol=1e-12)
        assert ref.f_star == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(ref.y_star, [0.0], atol=1e-12)

    def test_tiny_2d(self):
        p = tiny_2d()
        ref = reference_solution(p)
        assert ref.f_star == pytest.approx(1.0, abs=1e-9)
        assert ref.x_star.sum() == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(ref.y_star, [1.0], atol=1e-9)
        # resolution bound: the true optimum is within L * cell of f_star
        assert abs(ref.f_star - 1.0) <= p.L * ref.cell_diameter

    def test_refuses_large_n(self):
        with pytest.raises(ConfigurationError, match="n = 8"):
            reference_solution(build_lasso(m=12, n=8, p=3).with_dual_bound(1.0))

    def test_long_run_needs_budget(self):
        with pytest.raises(ConfigurationError):
            reference_solution(tiny_1d(dual_bound=1.0), mode="long-run")

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            reference_solution(tiny_1d(dual_bound=1.0), mode="exact")

    def test_grid_matches_long_run_when_decoupled(self):
        p = decoupled_problem(m=4, n=2, seed=5)
        grid = reference_solution(p, points=81)
        long = reference_solution(p, budget=20000, mode="long-run")
        assert long.method == "long-run"
        assert abs(grid.f_star - long.f_star) <= 1e-2

    def test_long_run_on_tiny_2d(self):
        ref = reference_solution(tiny_2d(dual_bound=4.0), budget=20000, mode="long-run")
        assert ref.f_star == pytest.approx(1.0, abs=1e-2)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_cvxpy_cross_check(self, seed):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(2)
        a = rng.standard_normal(2)
        from pdig.harness import LinearOracle
        from pdig.problem import make_problem
        p = make_problem([LinearOracle(c)], [(a[None, :], [0.2], Nonneg(1))], Box.cube(2, 1.0), 1.0)
        ref = reference_solution(p)
        x = cp.Variable(2)
        prob = cp.Problem(cp.Minimize(c @ x), [a @ x <= 0.2, x <= 1, x >= -1])
        prob.solve()
        assert ref.f_star == pytest.approx(prob.value, abs=np.linalg.norm(c) * ref.cell_diameter + 1e-6)
