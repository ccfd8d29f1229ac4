"""Primal-dual incremental gradient (PDIG) solver and a full-information baseline.

One PDIG epoch sweeps the components in the fixed order ``0, ..., m-1``.
Sub-iteration ``i`` touches only dual blocks ``i`` and ``i-1`` (block
``-1`` wraps to ``m-1``) and the single component ``f_i``::

    y_i     <- y_i     + eta * (A_i x_cur - b_i)
    y_{i-1} <- y_{i-1} + eta * A_{i-1} (x_cur - x_prev)
    both blocks projected onto {||y_j|| <= (B+1)/sqrt(m)} cap K_j*
    x_prev, x_cur <- x_cur, P_X(x_cur - gamma * (g_i(x_cur) + A_i^T y_i))

``x_prev`` carries over between epochs, so the first dual step of an epoch
sees the last primal move of the previous one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernel
from .cones import dual_cone, project_ball_cap_cone, project_cone
from .errors import ConfigurationError, ContractError
from .linops import a_max as block_a_max

__all__ = [
    "StepSchedule",
    "PdigState",
    "RunRecord",
    "GapReport",
    "step_sizes",
    "init_state",
    "pdig_inner_step",
    "pdig_epoch",
    "run_pdig",
    "run_baseline_fullpd",
    "lagrangian",
    "gap_metrics",
    "project_dual",
]

CSV_HEADER = ("k", "eta", "gamma", "f_avg", "subopt", "infeas", "gap")


def step_sizes(k: int, a_max: float) -> tuple[float, float]:
    """``eta_k = 1/(a_max sqrt k)``, ``gamma_k = 1/(a_max + sqrt k)``.

    With ``a_max = 0`` the dual is inert and both steps fall back to
    ``1/sqrt k``.
    """
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise ContractError(f"epoch counter must be a positive integer, got {k!r}")
    root = math.sqrt(k)
    if a_max == 0:
        return 1.0 / root, 1.0 / root
    return 1.0 / (a_max * root), 1.0 / (a_max + root)


@dataclass(frozen=True)
class StepSchedule:
    a_max: float

    def __post_init__(self):
        if not self.a_max >= 0:
            raise ContractError("a_max must be nonnegative")

    def __call__(self, k):
        return step_sizes(k, self.a_max)


@dataclass
class PdigState:
    k: int
    x_cur: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    x_sum: np.ndarray
    y_sum: np.ndarray
    per_block_radius: float


def init_state(p, x1=None, y1=None) -> PdigState:
    """Start at ``x_1 = P_X(x1)`` (default ``P_X(0)``) and ``y_1 = P_Y(y1)`` (default 0)."""
    x = p.X.project(np.zeros(p.n) if x1 is None else np.asarray(x1, dtype=float))
    radius = p.dual_radius
    y = np.zeros(p.d) if y1 is None else project_dual(p, np.asarray(y1, dtype=float), radius)
    return PdigState(
        k=1, x_cur=x.copy(), x_prev=x.copy(), y=y,
        x_sum=np.zeros(p.n), y_sum=np.zeros(p.d), per_block_radius=radius,
    )


def project_dual(p, y, radius=None) -> np.ndarray:
    """Blockwise projection onto ``Y cap K*``."""
    radius = p.dual_radius if radius is None else radius
    out = np.empty_like(y, dtype=float)
    for blk in p.blocks:
        out[blk.rows] = project_ball_cap_cone(dual_cone(blk.cone), radius, y[blk.rows])
    return out


def pdig_inner_step(p, s: PdigState, i: int, eta: float, gamma: float) -> PdigState:
    """Sub-iteration ``i`` of an epoch; updates ``s`` in place and returns it."""
    if not (0 <= i < p.m):
        raise ContractError(f"block index {i} out of range for m = {p.m}")
    blk, prev = p.blocks[i], p.blocks[i - 1]
    x = s.x_cur
    y = s.y
    y[blk.rows] += eta * (blk.A @ x - blk.b)
    y[prev.rows] += eta * (prev.A @ (x - s.x_prev))
    y[blk.rows] = project_ball_cap_cone(dual_cone(blk.cone), s.per_block_radius, y[blk.rows])
    if prev is not blk:
        y[prev.rows] = project_ball_cap_cone(dual_cone(prev.cone), s.per_block_radius, y[prev.rows])
    g = p.components[i](x)[1]
    s.x_prev = x
    s.x_cur = p.X.project(x - gamma * (g + blk.A.T @ y[blk.rows]))
    return s


def pdig_epoch(p, s: PdigState, schedule: StepSchedule) -> PdigState:
    """One full cycle; the epoch-start iterate ``(x_k, y_k)`` enters the running sums."""
    eta, gamma = schedule(s.k)
    s.x_sum += s.x_cur
    s.y_sum += s.y
    for i in range(p.m):
        pdig_inner_step(p, s, i, eta, gamma)
    s.k += 1
    return s


@dataclass
class GapReport:
    """Saddle-gap quantities at an averaged pair.

    ``gap_surrogate = phi(x_avg, y_tilde) - phi(x_ref, y_avg)`` with
    ``y_tilde = (B + 1) w / ||w||``, ``w = P_{K*}(A x_avg - b)``. ``B``
    stands in for ``||y*||``, so the surrogate dominates both
    ``f(x_avg) - f*`` and the infeasibility whenever ``B >= ||y*||``.
    """

    f_avg: float
    suboptimality: float
    infeasibility: float
    y_tilde: np.ndarray
    gap_surrogate: float
    B_used: float
    flags: tuple = ()


@dataclass
class RunRecord:
    """Per-recorded-epoch metrics plus the final averaged iterates."""

    k: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    f_avg: np.ndarray
    subopt: np.ndarray
    infeas: np.ndarray
    gap: np.ndarray
    x_avg: np.ndarray
    y_avg: np.ndarray
    epochs: int
    solver: str
    a_max: float
    B: float
    engine: str
    iterates: list = field(default_factory=list)

    def metric(self, name):
        if callable(name):
            return np.asarray(name(self), dtype=float)
        if name == "max":
            return np.maximum(self.subopt, self.infeas)
        return np.asarray(getattr(self, name), dtype=float)

    def row_at(self, k):
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            raise KeyError(k)
        return int(idx[0])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in range(len(self.k)):
                w.writerow([int(self.k[r])] + [repr(float(getattr(self, c)[r])) for c in CSV_HEADER[1:]])


def lagrangian(p, x, y) -> float:
    """``phi(x, y) = sum_i f_i(x) + <y_i, A_i x - b_i>``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return p.objective(x) + float(y @ p.residual(x))


def gap_metrics(p, x_avg, y_avg, reference=None) -> GapReport:
    """Suboptimality, infeasibility and the saddle-gap surrogate at ``(x_avg, y_avg)``.

    ``reference`` (default ``p.reference``) must expose ``x_star`` and
    ``f_star``; without one the suboptimality and surrogate are NaN and the
    report is flagged ``"no-reference"``.
    """
    if p.dual_bound_B is None:
        raise ConfigurationError("gap metrics need the dual bound B")
    reference = p.reference if reference is None else reference
    x_avg = np.asarray(x_avg, dtype=float)
    f_avg = p.objective(x_avg)
    w = np.concatenate([project_cone(dual_cone(blk.cone), blk.A @ x_avg - blk.b) for blk in p.blocks])
    infeas = float(np.linalg.norm(w))
    B = p.dual_bound_B
    y_tilde = (B + 1.0) * w / infeas if infeas > 1e-12 else np.zeros_like(w)
    if reference is None:
        return GapReport(f_avg, math.nan, infeas, y_tilde, math.nan, B, ("no-reference",))
    phi_hi = f_avg + float(y_tilde @ p.residual(x_avg))
    phi_lo = lagrangian(p, reference.x_star, y_avg)
    return GapReport(f_avg, abs(f_avg - reference.f_star), infeas, y_tilde, phi_hi - phi_lo, B)


def _resolve_engine(p, engine):
    if engine == "auto":
        return "compiled" if _kernel.supports(p) else "python"
    if engine == "compiled" and not _kernel.supports(p):
        raise ConfigurationError("compiled engine needs LeastSquaresL1 components and a box or ball X")
    if engine not in ("python", "compiled"):
        raise ConfigurationError(f"unknown engine {engine!r}")
    return engine


def _record_points(epochs, record_every):
    if record_every is None or record_every <= 0:
        return [epochs]
    pts = list(range(record_every, epochs + 1, record_every))
    if not pts or pts[-1] != epochs:
        pts.append(epochs)
    return pts


def _check_run(p, epochs):
    if not (isinstance(epochs, (int, np.integer)) and epochs >= 1):
        raise ConfigurationError(f"epochs must be a positive integer, got {epochs!r}")
    if p.dual_bound_B is None:
        raise ConfigurationError(
            "dual bound B is missing: compute it with slater_dual_bound or pass one explicitly"
        )


class _Recorder:
    def __init__(self, p, reference, keep_iterates):
        self.p = p
        self.reference = p.reference if reference is None else reference
        self.keep = keep_iterates
        self.rows = []
        self.iterates = []

    def __call__(self, k, s, schedule):
        x_avg, y_avg = s.x_sum / k, s.y_sum / k
        rep = gap_metrics(self.p, x_avg, y_avg, self.reference)
        eta, gamma = schedule(k)
        self.rows.append((k, eta, gamma, rep.f_avg, rep.suboptimality, rep.infeasibility, rep.gap_surrogate))
        if self.keep:
            self.iterates.append((k, s.x_cur.copy(), s.x_prev.copy(), s.y.copy()))

    def finish(self, s, epochs, solver, a_max, engine):
        cols = list(zip(*self.rows))
        arr = [np.array(c, dtype=float) for c in cols]
        return RunRecord(
            k=arr[0].astype(int), eta=arr[1], gamma=arr[2], f_avg=arr[3], subopt=arr[4],
            infeas=arr[5], gap=arr[6], x_avg=s.x_sum / epochs, y_avg=s.y_sum / epochs,
            epochs=epochs, solver=solver, a_max=a_max, B=self.p.dual_bound_B, engine=engine,
            iterates=self.iterates,
        )


def run_pdig(p, epochs, record_every=None, x1=None, y1=None, a_max_override=None,
             reference=None, engine="auto", keep_iterates=False) -> RunRecord:
    """Run ``epochs`` PDIG epochs and report the ergodic averages.

    The average is ``(1/K) sum_{k=1}^K (x_k, y_k)`` where ``x_1`` is the
    starting point and ``x_k`` the iterate at the start of epoch ``k``.
    Metric rows are recorded after every ``record_every`` epochs and after
    the last one. ``engine`` picks the pure-Python loop or the compiled loop
    (``"auto"`` uses the compiled loop whenever the problem allows it).
    """
    _check_run(p, epochs)
    engine = _resolve_engine(p, engine)
    a = block_a_max(p.operator) if a_max_override is None else float(a_max_override)
    schedule = StepSchedule(a)
    s = init_state(p, x1, y1)
    rec = _Recorder(p, reference, keep_iterates)
    compiled = _kernel.CompiledProblem(p) if engine == "compiled" else None
    done = 0
    for stop in _record_points(epochs, record_every):
        if compiled is not None:
            steps = [schedule(k) for k in range(done + 1, stop + 1)]
            compiled.run([e for e, _ in steps], [g for _, g in steps], s.per_block_radius, s)
            s.k = stop + 1
        else:
            while s.k <= stop:
                pdig_epoch(p, s, schedule)
        done = stop
        rec(stop, s, schedule)
    return rec.finish(s, epochs, "pdig", a, engine)


def run_baseline_fullpd(p, epochs, record_every=None, x1=None, y1=None, a_max_override=None,
                        reference=None, keep_iterates=False) -> RunRecord:
    """Full-information projected primal-dual subgradient method.

    Each iteration uses every component and block::

        x <- P_X(x - gamma_k (g(x) + A^T y))
        y <- P_{Y cap K*}(y + eta_k (A x - b))

    with the PDIG step schedule and the same ergodic averaging.
    """
    _check_run(p, epochs)
    A = p.operator
    a = block_a_max(A) if a_max_override is None else float(a_max_override)
    schedule = StepSchedule(a)
    s = init_state(p, x1, y1)
    rec = _Recorder(p, reference, keep_iterates)
    b = np.concatenate([blk.b for blk in p.blocks])
    for stop in _record_points(epochs, record_every):
        while s.k <= stop:
            eta, gamma = schedule(s.k)
            s.x_sum += s.x_cur
            s.y_sum += s.y
            s.x_prev = s.x_cur
            s.x_cur = p.X.project(s.x_cur - gamma * (p.subgradient(s.x_cur) + A.rmatvec(s.y)))
            s.y = project_dual(p, s.y + eta * (A.matvec(s.x_cur) - b), s.per_block_radius)
            s.k += 1
        rec(stop, s, schedule)
    return rec.finish(s, epochs, "fullpd", a, "python")
