"""Compiled PDIG epochs for problems whose components are all LeastSquaresL1.

The loop mirrors ``solver.pdig_inner_step`` operation for operation; it only
exists because the cyclic inner loop is sequential and Python-level
overhead dominates at desk scale.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

from .problem import Ball, Box, LeastSquaresL1

CONE_CODES = {"zero": 0, "free": 1, "nonneg": 2, "soc": 3}


def _project_block(y, lo, hi, kind, radius):
    if kind == 0:
        for r in range(lo, hi):
            y[r] = 0.0
        return
    if kind == 2:
        for r in range(lo, hi):
            if y[r] < 0.0:
                y[r] = 0.0
    elif kind == 3:
        ny = 0.0
        for r in range(lo, hi - 1):
            ny += y[r] * y[r]
        ny = np.sqrt(ny)
        t = y[hi - 1]
        if ny <= t:
            pass
        elif ny <= -t:
            for r in range(lo, hi):
                y[r] = 0.0
        else:
            scale = 0.5 * (ny + t)
            for r in range(lo, hi - 1):
                y[r] = (scale / ny) * y[r]
            y[hi - 1] = scale
    nrm = 0.0
    for r in range(lo, hi):
        nrm += y[r] * y[r]
    nrm = np.sqrt(nrm)
    if nrm > radius:
        f = radius / nrm
        for r in range(lo, hi):
            y[r] *= f


def _epochs(etas, gammas, A, b, boff, kinds, C, dvec, coff, mu, xset, lo_x, hi_x, xrad,
            radius, x_cur, x_prev, y, x_sum, y_sum):
    m = kinds.shape[0]
    n = x_cur.shape[0]
    xi = np.empty(n)
    step = np.empty(n)
    for e in range(etas.shape[0]):
        eta = etas[e]
        gamma = gammas[e]
        for j in range(n):
            x_sum[j] += x_cur[j]
        for r in range(y.shape[0]):
            y_sum[r] += y[r]
        for i in range(m):
            jb = i - 1 if i > 0 else m - 1
            for j in range(n):
                xi[j] = x_cur[j]
            # dual: block i gets eta*(A_i x - b_i), block i-1 gets eta*A_{i-1}(x - x_prev)
            for r in range(boff[i], boff[i + 1]):
                acc = 0.0
                for j in range(n):
                    acc += A[r, j] * xi[j]
                y[r] += eta * (acc - b[r])
            for r in range(boff[jb], boff[jb + 1]):
                acc = 0.0
                for j in range(n):
                    acc += A[r, j] * (xi[j] - x_prev[j])
                y[r] += eta * acc
            _project_block(y, boff[i], boff[i + 1], kinds[i], radius)
            if jb != i:
                _project_block(y, boff[jb], boff[jb + 1], kinds[jb], radius)
            # primal: subgradient of f_i at the pre-update point
            for j in range(n):
                step[j] = 0.0
            for r in range(coff[i], coff[i + 1]):
                acc = -dvec[r]
                for j in range(n):
                    acc += C[r, j] * xi[j]
                for j in range(n):
                    step[j] += C[r, j] * acc
            for j in range(n):
                step[j] += mu[i] * np.sign(xi[j])
            for r in range(boff[i], boff[i + 1]):
                for j in range(n):
                    step[j] += A[r, j] * y[r]
            for j in range(n):
                x_cur[j] = xi[j] - gamma * step[j]
            if xset == 0:
                for j in range(n):
                    if x_cur[j] < lo_x[j]:
                        x_cur[j] = lo_x[j]
                    elif x_cur[j] > hi_x[j]:
                        x_cur[j] = hi_x[j]
            else:
                nrm = 0.0
                for j in range(n):
                    nrm += x_cur[j] * x_cur[j]
                nrm = np.sqrt(nrm)
                if nrm > xrad:
                    for j in range(n):
                        x_cur[j] *= xrad / nrm
            for j in range(n):
                x_prev[j] = xi[j]


if numba is not None:
    _project_block = numba.njit(cache=True)(_project_block)
    _epochs = numba.njit(cache=True)(_epochs)


def supports(p) -> bool:
    return (
        numba is not None
        and all(isinstance(f, LeastSquaresL1) for f in p.components)
        and isinstance(p.X, (Box, Ball))
    )


class CompiledProblem:
    """Flat arrays describing a problem for the compiled loop."""

    def __init__(self, p):
        self.A = np.ascontiguousarray(np.vstack([blk.A for blk in p.blocks]))
        self.b = np.concatenate([blk.b for blk in p.blocks])
        self.boff = np.array([blk.offset for blk in p.blocks] + [p.d], dtype=np.int64)
        self.kinds = np.array([CONE_CODES[blk.cone.kind] for blk in p.blocks], dtype=np.int64)
        comps = p.components
        self.C = np.ascontiguousarray(np.vstack([f.C for f in comps]).reshape(-1, p.n))
        self.dvec = np.concatenate([f.d for f in comps]) if self.C.shape[0] else np.zeros(0)
        self.coff = np.concatenate([[0], np.cumsum([f.C.shape[0] for f in comps])]).astype(np.int64)
        self.mu = np.array([f.mu for f in comps])
        if isinstance(p.X, Box):
            self.xset, self.lo_x, self.hi_x, self.xrad = 0, np.asarray(p.X.lo), np.asarray(p.X.hi), 0.0
        else:
            self.xset, self.lo_x, self.hi_x, self.xrad = 1, np.zeros(p.n), np.zeros(p.n), float(p.X.radius)

    def run(self, etas, gammas, radius, s):
        _epochs(
            np.asarray(etas, dtype=float), np.asarray(gammas, dtype=float),
            self.A, self.b, self.boff, self.kinds, self.C, self.dvec, self.coff, self.mu,
            self.xset, self.lo_x, self.hi_x, self.xrad, float(radius),
            s.x_cur, s.x_prev, s.y, s.x_sum, s.y_sum,
        )
