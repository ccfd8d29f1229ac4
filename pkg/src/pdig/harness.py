"""Reference solutions, empirical rate checks and projection checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .cones import Nonneg
from .errors import ConfigurationError, ContractError
from .problem import Box, LeastSquaresL1, make_problem
from .solver import run_pdig

__all__ = [
    "RateFit",
    "ReferenceSolution",
    "reference_solution",
    "fit_rate",
    "check_projection_vi",
    "ratio_test",
    "tiny_1d",
    "tiny_2d",
    "LinearOracle",
]

VI_TOL = 1e-9
METRIC_FLOOR = 1e-14


@dataclass
class RateFit:
    slope: float
    intercept: float
    window: tuple
    residual: float


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    f_star: float
    y_star: Optional[np.ndarray]
    method: str
    cell_diameter: Optional[float] = None
    stationarity_residual: Optional[float] = None


class LinearOracle:
    """``f(x) = <c, x>``."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def __call__(self, x):
        return float(self.c @ x), self.c.copy()


def tiny_1d(dual_bound=None):
    """``min |x|`` on ``[-10, 10]`` subject to ``x - 1 <= 0``; ``x* = 0``, ``y* = 0``."""
    return make_problem(
        [LeastSquaresL1(np.zeros((0, 1)), np.zeros(0), 1.0)],
        [(np.ones((1, 1)), np.ones(1), Nonneg(1))],
        Box.cube(1, 10.0), L=1.0, dual_bound=dual_bound,
        metadata={"generator": "tiny_1d", "f_lower": 0.0},
    )


def tiny_2d(dual_bound=None):
    """``min x1 + x2`` on ``[-1, 1]^2`` subject to ``x1 + x2 >= 1``; ``f* = 1``, ``y* = 1``."""
    return make_problem(
        [LinearOracle([1.0, 1.0])],
        [(-np.ones((1, 2)), -np.ones(1), Nonneg(1))],
        Box.cube(2, 1.0), L=math.sqrt(2.0), dual_bound=dual_bound,
        metadata={"generator": "tiny_2d"},
    )


def _grid_search(p, lo, hi, points, feas_tol):
    axes = [np.linspace(lo[j], hi[j], points) for j in range(p.n)]
    best_x, best_f = None, math.inf
    for pt in itertools.product(*axes):
        x = np.array(pt)
        if p.infeasibility(x) > feas_tol:
            continue
        fx = p.objective(x)
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def _dual_from_stationarity(p, x, act_tol=1e-9):
    # 0 = g + A_act^T y + (normal cone of the box), y >= 0; coordinates at an
    # active box face are absorbed by the normal cone and dropped
    g = p.subgradient(x)
    y = np.zeros(p.d)
    free = np.ones(p.n, dtype=bool)
    if isinstance(p.X, Box):
        free &= (x > p.X.lo + act_tol) & (x < p.X.hi - act_tol)
    residual = p.residual(x)
    active = np.flatnonzero(residual >= -act_tol)
    if active.size == 0 or not free.any():
        return y, float(np.linalg.norm(g[free]))
    A = np.vstack([blk.A for blk in p.blocks])
    coef, res = nnls(A[active][:, free].T, -g[free])
    y[active] = coef
    return y, float(res)


def reference_solution(p, budget=None, mode="grid", points=41, refinements=2, feas_tol=1e-9):
    """Brute-force reference ``(x*, f*, y*)``.

    ``mode="grid"`` searches a uniform grid of the box ``X`` and refines it
    ``refinements`` times around the incumbent (cells shrink by the factor
    ``(points - 1) / 2`` each pass). A grid point counts as feasible when
    its infeasibility is at most ``feas_tol``. For problems with only
    ``nonneg`` blocks ``y*`` is recovered from the sign-restricted
    stationarity system on the active set.

    ``mode="long-run"`` runs PDIG for ``budget`` epochs and reports its
    averaged iterate.
    """
    if mode == "long-run":
        if budget is None:
            raise ConfigurationError("long-run reference needs an epoch budget")
        rec = run_pdig(p, int(budget))
        return ReferenceSolution(rec.x_avg, p.objective(rec.x_avg), rec.y_avg, "long-run")
    if mode != "grid":
        raise ConfigurationError(f"unknown reference mode {mode!r}")
    if p.n > 3:
        raise ConfigurationError(f"grid reference refuses n = {p.n} > 3")
    if not isinstance(p.X, Box):
        raise ConfigurationError("grid reference needs a box X")
    if points % 2 == 0:
        points += 1
    lo, hi = np.array(p.X.lo), np.array(p.X.hi)
    x, f = _grid_search(p, lo, hi, points, feas_tol)
    if x is None:
        raise ConfigurationError("grid reference found no feasible grid point")
    cell = (hi - lo) / (points - 1)
    for _ in range(refinements):
        lo_r = np.maximum(x - cell, p.X.lo)
        hi_r = np.minimum(x + cell, p.X.hi)
        xr, fr = _grid_search(p, lo_r, hi_r, points, feas_tol)
        if xr is not None and fr <= f:
            x, f = xr, fr
        cell = (hi_r - lo_r) / (points - 1)
    y_star, stat_res = None, None
    if all(blk.cone.kind == "nonneg" for blk in p.blocks):
        y_star, stat_res = _dual_from_stationarity(p, x)
    return ReferenceSolution(x, f, y_star, "grid", float(np.linalg.norm(cell)), stat_res)


def _window_rows(record, window):
    if not 0 < window <= 1:
        raise ContractError("window fraction must lie in (0, 1]")
    n = len(record.k)
    start = n - max(1, int(math.ceil(window * n)))
    return slice(start, n)


def fit_rate(record, metric="max", window=0.5) -> RateFit:
    """Least-squares slope of ``log metric`` against ``log k`` over the last ``window`` of rows."""
    sl = _window_rows(record, window)
    k = np.asarray(record.k, dtype=float)[sl]
    v = record.metric(metric)[sl]
    keep = v > METRIC_FLOOR
    if keep.sum() < 8:
        raise ConfigurationError(f"rate fit needs at least 8 usable rows, got {int(keep.sum())}")
    lk, lv = np.log(k[keep]), np.log(v[keep])
    design = np.column_stack([lk, np.ones_like(lk)])
    (slope, intercept), *_ = np.linalg.lstsq(design, lv, rcond=None)
    resid = float(np.linalg.norm(design @ np.array([slope, intercept]) - lv))
    return RateFit(float(slope), float(intercept), (int(k[keep][0]), int(k[keep][-1])), resid)


def ratio_test(record, metric="max", k_points=(400, 1600), factor=0.75) -> bool:
    """True iff ``metric(4k) <= factor * metric(k) + 1e-12`` at every requested ``k``."""
    values = record.metric(metric)
    for k in k_points:
        try:
            lo, hi = record.row_at(k), record.row_at(4 * k)
        except KeyError as exc:
            raise ConfigurationError(f"record has no row at k = {exc.args[0]}") from None
        if not values[hi] <= factor * values[lo] + 1e-12:
            return False
    return True


def check_projection_vi(projector, sampler, u, trials) -> bool:
    """Check ``(P(u) - u)^T (x - P(u)) >= -1e-9`` for ``trials`` sampled feasible ``x``.

    ``sampler(trials)`` must return an array of feasible points, one per row.
    """
    u = np.asarray(u, dtype=float)
    pu = projector(u)
    xs = np.asarray(sampler(trials), dtype=float)
    return bool(np.all((xs - pu) @ (pu - u) >= -VI_TOL))
