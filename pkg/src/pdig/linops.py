"""Row-blocked dense operators and spectral-norm estimation."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NonConvergenceError

__all__ = ["BlockMatrix", "block_apply", "block_apply_transpose", "operator_norm", "a_max"]

POWER_TOL = 1e-8
POWER_MAX_ITER = 5000


class BlockMatrix:
    """Vertical stack ``A = [A_0; ...; A_{m-1}]`` of dense blocks.

    ``offsets[i]:offsets[i+1]`` is the row range of block ``i`` inside the
    stacked operator, which is also where block ``i`` of a stacked dual
    vector lives. Blocks are copied and frozen on construction.
    """

    def __init__(self, blocks):
        mats = [np.array(b, dtype=float, ndmin=2) for b in blocks]
        if not mats:
            raise ContractError("BlockMatrix needs at least one block")
        ncols = {a.shape[1] for a in mats}
        if len(ncols) != 1:
            raise ContractError(f"blocks disagree on column count: {sorted(ncols)}")
        if any(a.ndim != 2 or a.shape[0] < 1 for a in mats):
            raise ContractError("every block must be a 2-D array with at least one row")
        for a in mats:
            a.setflags(write=False)
        self.blocks = tuple(mats)
        self.n = ncols.pop()
        self.offsets = np.concatenate([[0], np.cumsum([a.shape[0] for a in mats])]).astype(int)
        self.offsets.setflags(write=False)

    @property
    def m(self):
        return len(self.blocks)

    @property
    def d(self):
        return int(self.offsets[-1])

    def rows(self, i):
        """Slice of the stacked row space occupied by block ``i``."""
        _check_index(self, i)
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def dense(self):
        return np.vstack(self.blocks)

    def matvec(self, x):
        return np.concatenate([a @ x for a in self.blocks])

    def rmatvec(self, y):
        out = np.zeros(self.n)
        for i, a in enumerate(self.blocks):
            out += a.T @ y[self.offsets[i]:self.offsets[i + 1]]
        return out


def _check_index(M, i):
    if not (isinstance(i, (int, np.integer)) and 0 <= i < M.m):
        raise ContractError(f"block index {i!r} out of range for {M.m} blocks")


def block_apply(M: BlockMatrix, i: int, x) -> np.ndarray:
    """``A_i x``."""
    _check_index(M, i)
    x = np.asarray(x, dtype=float)
    if x.shape != (M.n,):
        raise ContractError(f"expected vector of length {M.n}, got shape {x.shape}")
    return M.blocks[i] @ x


def block_apply_transpose(M: BlockMatrix, i: int, y_i) -> np.ndarray:
    """``A_i^T y_i``."""
    _check_index(M, i)
    y_i = np.asarray(y_i, dtype=float)
    if y_i.shape != (M.blocks[i].shape[0],):
        raise ContractError(f"expected vector of length {M.blocks[i].shape[0]}, got shape {y_i.shape}")
    return M.blocks[i].T @ y_i


def _fallback_start(n):
    # fixed, irregular start used when the all-ones vector has no component
    # along the leading right singular space
    v = np.cos(np.arange(1, n + 1) * 1.6180339887498949) + 0.5
    return v / np.linalg.norm(v)


def _power(A, v, tol, max_iter):
    lam = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        lam = float(v @ w)
        if lam <= 0.0:
            return 0.0, True
        if np.linalg.norm(w - lam * v) <= tol * lam:
            return lam, True
        v = w / np.linalg.norm(w)
    return lam, False


def operator_norm(A, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Spectral norm ``||A||_2`` by power iteration on ``A^T A``.

    Starts from the normalized all-ones vector. Iteration stops once the
    eigen-residual ``||A^T A v - lam v||`` drops below ``tol * lam``, which
    puts ``lam`` within relative ``tol`` of an eigenvalue of ``A^T A``.
    A second pass from a fixed irregular vector guards against the ones
    vector being orthogonal to the leading singular direction (difference
    rows ``e_j - e_{j+1}`` are exactly that case); the larger estimate wins.

    Raises
    ------
    NonConvergenceError
        If ``max_iter`` iterations pass without meeting the residual test.
    """
    if not tol > 0:
        raise ContractError(f"tol must be positive, got {tol!r}")
    A = np.array(A, dtype=float, ndmin=2)
    if not np.any(A):
        return 0.0
    n = A.shape[1]
    lam1, ok1 = _power(A, np.full(n, 1.0 / np.sqrt(n)), tol, max_iter)
    lam2, ok2 = _power(A, _fallback_start(n), tol, max_iter)
    lam = max(lam1, lam2)
    if not (ok1 and ok2):
        raise NonConvergenceError(
            f"power iteration did not converge in {max_iter} iterations", float(np.sqrt(lam))
        )
    return float(np.sqrt(lam))


def a_max(M: BlockMatrix, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest spectral norm over the blocks of ``M``; 0 if every block is zero."""
    return max(operator_norm(a, tol, max_iter) for a in M.blocks)
