"""Cone calculus for the block cones used by conic constraints.

Four closed convex cone families are supported, each living in ``R^dim``:

``zero``
    The origin ``{0}``; encodes equality constraints.
``free``
    All of ``R^dim``; appears as the dual of ``zero``.
``nonneg``
    The nonnegative orthant.
``soc``
    The second-order cone ``{(y, t) : ||y|| <= t}`` with the scalar ``t``
    stored last, so ``dim = len(y) + 1``.

Every projection here is an exact closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

__all__ = [
    "ConeSpec",
    "Zero",
    "Free",
    "Nonneg",
    "SecondOrder",
    "dual_cone",
    "project_cone",
    "project_minus_cone",
    "project_ball_cap_cone",
    "dist_minus_cone",
    "contains",
]

KINDS = ("zero", "free", "nonneg", "soc")
_DUAL_KIND = {"zero": "free", "free": "zero", "nonneg": "nonneg", "soc": "soc"}

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class ConeSpec:
    """One block cone: a family name and the ambient dimension."""

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown cone kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ContractError(f"cone dimension must be a positive integer, got {self.dim!r}")
        if self.kind == "soc" and self.dim < 2:
            raise ContractError("second-order cone needs dim >= 2")
        object.__setattr__(self, "dim", int(self.dim))

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}

    @classmethod
    def from_dict(cls, data):
        return cls(str(data["kind"]), int(data["dim"]))


def Zero(dim):
    return ConeSpec("zero", dim)


def Free(dim):
    return ConeSpec("free", dim)


def Nonneg(dim):
    return ConeSpec("nonneg", dim)


def SecondOrder(dim):
    return ConeSpec("soc", dim)


def dual_cone(c: ConeSpec) -> ConeSpec:
    """Dual cone ``{u : <u, v> >= 0 for all v in c}``."""
    return ConeSpec(_DUAL_KIND[c.kind], c.dim)


def _check_dim(c, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (c.dim,):
        raise ContractError(f"vector of shape {u.shape} does not match {c.kind} cone of dim {c.dim}")
    return u


def _project_soc(u):
    y, t = u[:-1], u[-1]
    ny = np.linalg.norm(y)
    if ny <= t:
        return u.copy()
    if ny <= -t:
        return np.zeros_like(u)
    scale = 0.5 * (ny + t)
    out = np.empty_like(u)
    out[:-1] = (scale / ny) * y
    out[-1] = scale
    return out


def project_cone(c: ConeSpec, u) -> np.ndarray:
    """Euclidean projection of ``u`` onto the cone ``c``."""
    u = _check_dim(c, u)
    if c.kind == "zero":
        return np.zeros_like(u)
    if c.kind == "free":
        return u.copy()
    if c.kind == "nonneg":
        return np.maximum(u, 0.0)
    return _project_soc(u)


def project_minus_cone(c: ConeSpec, u) -> np.ndarray:
    """Projection onto ``-c``, via ``P_{-c}(u) = -P_c(-u)``."""
    u = _check_dim(c, u)
    return -project_cone(c, -u)


def project_ball_cap_cone(c: ConeSpec, radius: float, u) -> np.ndarray:
    """Projection onto ``{z in c : ||z|| <= radius}``.

    Projects onto the cone and then shrinks radially. This is exact because
    the ball is centred at the origin and ``c`` is invariant under positive
    scaling.
    """
    if not radius > 0:
        raise ContractError(f"radius must be positive, got {radius!r}")
    p = project_cone(c, u)
    nrm = np.linalg.norm(p)
    if nrm > radius:
        p *= radius / nrm
    return p


def dist_minus_cone(c: ConeSpec, u) -> float:
    """Distance from ``u`` to ``-c``, computed as ``||P_{c*}(u)||``."""
    return float(np.linalg.norm(project_cone(dual_cone(c), u)))


def contains(c: ConeSpec, u, tol: float = MEMBERSHIP_TOL) -> bool:
    u = _check_dim(c, u)
    return bool(np.linalg.norm(project_cone(c, u) - u) <= tol)
