"""Acceptance checks tying the solver's guarantees to measurable behaviour.

Each ``check_*`` function returns a :class:`CheckResult`; ``run_all``
drives them in order. The desk-scale Lasso run is shared by the rate,
slope and feasibility checks and computed once per process.
"""

from __future__ import annotations

import csv
import functools
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import cones
from .cones import (
    ConeSpec,
    contains,
    dual_cone,
    project_ball_cap_cone,
    project_cone,
    project_minus_cone,
)
from .harness import check_projection_vi, fit_rate, ratio_test, reference_solution, tiny_1d, tiny_2d
from .problem import (
    Ball,
    Box,
    LeastSquaresL1,
    SlaterCertificate,
    build_bpd,
    build_lasso,
    default_h_hat,
    make_problem,
    slater_dual_bound,
)
from .solver import StepSchedule, init_state, pdig_inner_step, run_pdig

DESK = {"m": 60, "n": 12, "p": 17, "lam": 0.1, "noise_std": 0.1, "seed": 7}
DESK_EPOCHS = 6400
DESK_RECORD_EVERY = 25
REF_FACTOR = 50
FEAS_TOL = 1e-9


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    measured: str
    required: str
    seconds: float = 0.0
    rows: list = field(default_factory=list)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.id:2d} {self.name}: measured {self.measured}; required {self.required} ({self.seconds:.1f}s)"


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    return wrapper


def _with_slater_bound(p):
    cert = SlaterCertificate(np.array(p.metadata["slater_point"]), default_h_hat(p))
    return p.with_dual_bound(slater_dual_bound(p, cert))


@functools.lru_cache(maxsize=1)
def desk_scale_run():
    """Desk-scale Lasso, its long-run reference and the recorded PDIG run."""
    t0 = time.perf_counter()
    p = _with_slater_bound(build_lasso(**DESK))
    ref = reference_solution(p, budget=REF_FACTOR * DESK_EPOCHS, mode="long-run")
    p = p.with_reference(ref)
    rec = run_pdig(p, DESK_EPOCHS, record_every=DESK_RECORD_EVERY, keep_iterates=True)
    return p, rec, time.perf_counter() - t0


def _record_rows(rec):
    return [
        {"k": int(rec.k[r]), "subopt": rec.subopt[r], "infeas": rec.infeas[r], "gap": rec.gap[r]}
        for r in range(len(rec.k))
    ]


@_timed
def check_rate():
    p, rec, secs = desk_scale_run()
    mx = rec.metric("max")
    r1 = mx[rec.row_at(1600)] / mx[rec.row_at(400)]
    r2 = mx[rec.row_at(6400)] / mx[rec.row_at(1600)]
    ok = ratio_test(rec, "max", (400, 1600), 0.75) and secs < 60.0
    return CheckResult(
        1, "rate ratio (desk Lasso, K=6400)", ok,
        f"ratios {r1:.4f}, {r2:.4f}; run+reference {secs:.1f}s",
        "metric(4k) <= 0.75 metric(k) at k in {400, 1600}; < 60 s",
        rows=_record_rows(rec),
    )


@_timed
def check_slope():
    _, rec, _ = desk_scale_run()
    fit = fit_rate(rec, "max", 0.5)
    return CheckResult(
        2, "log-log slope, last half", fit.slope <= -0.35,
        f"slope {fit.slope:.4f} over k in {fit.window}", "slope <= -0.35",
    )


@_timed
def check_tiny_optimality(epochs=20000):
    p = tiny_2d()
    p = p.with_dual_bound(slater_dual_bound(p, SlaterCertificate(np.array([1.0, 1.0]), -2.0)))
    ref = reference_solution(p)
    t0 = time.perf_counter()
    rec = run_pdig(p.with_reference(ref), epochs, record_every=max(1, epochs // 100))
    secs = time.perf_counter() - t0
    sub, inf = rec.subopt[-1], rec.infeas[-1]
    return CheckResult(
        3, f"2-D grid instance optimality (K={epochs})", sub <= 1e-2 and inf <= 1e-2 and secs < 5.0,
        f"|f-f*| {sub:.3e}, infeas {inf:.3e}, {secs:.2f}s", "both <= 1e-2; < 5 s",
        rows=_record_rows(rec),
    )


def _soc_points(rng, dim, size):
    y = rng.standard_normal((size, dim - 1))
    t = np.linalg.norm(y, axis=1) + np.abs(rng.standard_normal(size)) * rng.integers(0, 2, size)
    return np.column_stack([y, t])


def _cone_sampler(c, rng):
    def sample(k):
        if c.kind == "zero":
            return np.zeros((k, c.dim))
        if c.kind == "free":
            return 3.0 * rng.standard_normal((k, c.dim))
        if c.kind == "nonneg":
            return np.abs(rng.standard_normal((k, c.dim))) * rng.integers(0, 2, (k, c.dim))
        return _soc_points(rng, c.dim, k)
    return sample


def _ball_cap_sampler(c, radius, rng):
    base = _cone_sampler(c, rng)

    def sample(k):
        z = base(k)
        nrm = np.linalg.norm(z, axis=1, keepdims=True)
        nrm[nrm == 0] = 1.0
        return z / nrm * radius * rng.uniform(size=(k, 1))
    return sample


@_timed
def check_projections(inputs=1000, trials=100, seed=0):
    rng = np.random.default_rng(seed)
    failures = []
    worst_moreau = 0.0
    cone_list = [ConeSpec(kind, dim) for kind in cones.KINDS for dim in (2, 3, 5)]
    for c in cone_list:
        sampler = _cone_sampler(c, rng)
        for _ in range(inputs):
            u = 3.0 * rng.standard_normal(c.dim)
            if not check_projection_vi(lambda v: project_cone(c, v), sampler, u, trials):
                failures.append(f"{c.kind}({c.dim})")
                break
        for _ in range(inputs):
            u = 3.0 * rng.standard_normal(c.dim)
            neg, pos = project_minus_cone(c, u), project_cone(dual_cone(c), u)
            worst_moreau = max(worst_moreau, np.max(np.abs(neg + pos - u)), abs(float(neg @ pos)))
        radius = 0.5 + rng.uniform()
        cap_sampler = _ball_cap_sampler(c, radius, rng)
        for _ in range(inputs):
            u = 3.0 * rng.standard_normal(c.dim)
            if not check_projection_vi(lambda v: project_ball_cap_cone(c, radius, v), cap_sampler, u, trials):
                failures.append(f"ball-cap {c.kind}({c.dim})")
                break
    for X in (Box(np.array([-1.0, 0.0, -2.0]), np.array([1.0, 0.5, 3.0])), Ball(1.5, 3)):
        for _ in range(inputs):
            u = 4.0 * rng.standard_normal(3)
            if not check_projection_vi(X.project, lambda k: X.sample(rng, k), u, trials):
                failures.append(type(X).__name__)
                break
    ok = not failures and worst_moreau <= 1e-9
    return CheckResult(
        4, "projection variational inequality + Moreau", ok,
        f"VI failures {failures or 'none'}; worst Moreau residual {worst_moreau:.2e}",
        "VI >= -1e-9 on 1000 inputs per projector; Moreau to 1e-9",
    )


def _in_X(X, x):
    if isinstance(X, Box):
        return bool(np.all(x >= X.lo - FEAS_TOL) and np.all(x <= X.hi + FEAS_TOL))
    return bool(np.linalg.norm(x) <= X.radius + FEAS_TOL)


@_timed
def check_iterate_feasibility():
    p, rec, _ = desk_scale_run()
    radius = p.dual_radius
    bad = 0
    worst = -math.inf
    for _, x_cur, x_prev, y in rec.iterates:
        if not (_in_X(p.X, x_cur) and _in_X(p.X, x_prev)):
            bad += 1
        for blk in p.blocks:
            yb = y[blk.rows]
            worst = max(worst, np.linalg.norm(yb) - radius)
            if np.linalg.norm(yb) > radius + FEAS_TOL or not contains(dual_cone(blk.cone), yb, FEAS_TOL):
                bad += 1
    return CheckResult(
        5, "iterate feasibility (desk run)", bad == 0,
        f"{len(rec.iterates)} snapshots, {bad} violations, max ||y_i|| - radius {worst:.3e}",
        "x in X, ||y_i|| <= (B+1)/sqrt(m), y_i in K_i* within 1e-9",
    )


def decoupled_problem(m=8, n=5, seed=3):
    rng = np.random.default_rng(seed)
    comps = [LeastSquaresL1(rng.standard_normal((2, n)), rng.standard_normal(2), 0.05) for _ in range(m)]
    cons = [(np.zeros((1, n)), np.zeros(1), cones.Nonneg(1)) for _ in range(m)]
    L = max(np.linalg.norm(c.C, 2) * (np.linalg.norm(c.C, 2) * 2.0 * math.sqrt(n) + np.linalg.norm(c.d)) for c in comps) + 0.05 * math.sqrt(n)
    return make_problem(comps, cons, Box.cube(n, 2.0), L, dual_bound=1.0)


@_timed
def check_decoupled(epochs=100):
    p = decoupled_problem()
    s = init_state(p)
    schedule = StepSchedule(0.0)
    x = p.X.project(np.zeros(p.n))
    x_sum = np.zeros(p.n)
    worst = 0.0
    for k in range(1, epochs + 1):
        eta, gamma = schedule(k)
        x_sum += x
        for i in range(p.m):
            x = p.X.project(x - gamma * p.components[i](x)[1])
            pdig_inner_step(p, s, i, eta, gamma)
            worst = max(worst, float(np.max(np.abs(s.x_cur - x))))
    rec = run_pdig(p, epochs, engine="python")
    worst = max(worst, float(np.max(np.abs(rec.x_avg - x_sum / epochs))))
    return CheckResult(
        6, "decoupled case = projected incremental subgradient", worst <= 1e-12,
        f"max deviation {worst:.2e} over {epochs} epochs", "<= 1e-12 at every inner step and in the average",
    )


@_timed
def check_gap_sandwich(epochs=4000):
    lines = []
    worst = math.inf
    ok = True
    setups = [
        (tiny_1d(), np.array([0.0]), 0.0),
        (tiny_2d(), np.array([1.0, 1.0]), -2.0),
    ]
    for p, x_hat, h_hat in setups:
        p = p.with_dual_bound(slater_dual_bound(p, SlaterCertificate(x_hat, h_hat)))
        ref = reference_solution(p)
        if ref.y_star is None or p.dual_bound_B < np.linalg.norm(ref.y_star):
            ok = False
            lines.append(f"B {p.dual_bound_B} below ||y*||")
            continue
        rec = run_pdig(p.with_reference(ref), epochs, record_every=10)
        lhs = np.maximum(rec.f_avg - ref.f_star, rec.infeas)
        margin = float(np.min(rec.gap - lhs))
        worst = min(worst, margin)
        ok &= margin >= -1e-6
        lines.append(f"{p.metadata['generator']}: min(gap - lhs) {margin:.3e}, B {p.dual_bound_B:g} >= ||y*|| {np.linalg.norm(ref.y_star):g}")
    return CheckResult(
        7, "gap sandwich on 1-D/2-D references", bool(ok), "; ".join(lines),
        "gap >= max(f - f*, infeas) - 1e-6 at every recorded epoch",
    )


@_timed
def check_slater_soundness():
    p = tiny_1d()
    B = slater_dual_bound(p, SlaterCertificate(np.array([0.0]), 0.0))
    ref = reference_solution(p.with_dual_bound(B))
    ny = float(np.linalg.norm(ref.y_star))
    return CheckResult(8, "Slater dual bound soundness (1-D)", ny <= B, f"B {B:g}, ||y*|| {ny:g}", "||y*|| <= B")


def lip_rel_violation(p, pairs=1000, seed=0):
    """Largest ``f(x) - f(y) - g(y)^T (x - y) - 2 L ||x - y||`` over random pairs in X."""
    rng = np.random.default_rng(seed)
    xs, ys = p.X.sample(rng, pairs), p.X.sample(rng, pairs)
    worst = -math.inf
    for f in p.components:
        for x, y in zip(xs, ys):
            fx = f(x)[0]
            fy, gy = f(y)
            worst = max(worst, fx - fy - gy @ (x - y) - 2.0 * p.L * np.linalg.norm(x - y))
    return worst


@_timed
def check_lipschitz():
    instances = {
        "lasso(desk)": build_lasso(**DESK),
        "bpd": build_bpd(m=10, di=4, n=12, delta=1.0, seed=1),
        "tiny_1d": tiny_1d(),
        "tiny_2d": tiny_2d(),
    }
    worst = {name: lip_rel_violation(p) for name, p in instances.items()}
    ok = all(v <= 1e-9 for v in worst.values())
    return CheckResult(
        9, "oracle Lipschitz relation", ok,
        ", ".join(f"{k} {v:.3e}" for k, v in worst.items()), "max violation <= 1e-9",
    )


@_timed
def check_determinism(epochs=400):
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        blobs = []
        for tag in ("a", "b"):
            out = os.path.join(tmp, tag)
            argv = ["run", "--problem", "lasso", "--preset", "desk", "--epochs", str(epochs), "--seed", "7", "--out-dir", out]
            code = main(argv)
            if code != 0:
                return CheckResult(10, "CLI determinism", False, f"exit code {code}", "byte-identical metrics.csv")
            with open(os.path.join(out, "metrics.csv"), "rb") as fh:
                blobs.append(fh.read())
    same = blobs[0] == blobs[1]
    return CheckResult(10, "CLI determinism", same, f"{len(blobs[0])} bytes, identical={same}", "byte-identical metrics.csv")


ALL_CHECKS = [
    check_rate,
    check_slope,
    check_tiny_optimality,
    check_projections,
    check_iterate_feasibility,
    check_decoupled,
    check_gap_sandwich,
    check_slater_soundness,
    check_lipschitz,
    check_determinism,
]
QUICK_CHECKS = [c for c in ALL_CHECKS if c not in (check_rate, check_slope, check_iterate_feasibility)]


def run_all(quick=False, out_dir=None, echo=print):
    results = []
    for check in QUICK_CHECKS if quick else ALL_CHECKS:
        res = check()
        echo(res.line())
        results.append(res)
    if out_dir is not None:
        write_artifacts(results, out_dir)
    return results


def write_artifacts(results, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "name", "passed", "measured", "required", "seconds"])
        for r in results:
            w.writerow([r.id, r.name, int(r.passed), r.measured, r.required, f"{r.seconds:.3f}"])
    for r in results:
        path = os.path.join(out_dir, f"check_{r.id:02d}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if r.rows:
                keys = list(r.rows[0])
                w.writerow(keys)
                for row in r.rows:
                    w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
            else:
                w.writerow(["passed", "measured", "required"])
                w.writerow([int(r.passed), r.measured, r.required])
