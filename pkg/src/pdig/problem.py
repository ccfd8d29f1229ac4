"""Problem data model for ``min_{x in X} sum_i f_i(x)  s.t.  A x - b in -K``.

A :class:`ConicProblem` pairs component ``i`` of the objective with
constraint block ``i``. Component oracles are callables returning the pair
``(f_i(x), g_i(x))`` with ``g_i(x)`` a subgradient of norm at most ``L``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cones import ConeSpec, Nonneg, SecondOrder, dist_minus_cone, project_cone
from .errors import ConfigurationError, ContractError, SlaterError
from .linops import BlockMatrix

__all__ = [
    "LeastSquaresL1",
    "Box",
    "Ball",
    "ConstraintBlock",
    "ConicProblem",
    "SlaterCertificate",
    "make_problem",
    "project_X",
    "slater_dual_bound",
    "default_h_hat",
    "build_lasso",
    "build_bpd",
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
    "instance_hash",
]

DUAL_BOUND_FLOOR = 1e-6


class LeastSquaresL1:
    """Component ``f(x) = 0.5 * ||C x - d||^2 + mu * ||x||_1``.

    ``C`` may have zero rows, leaving the scaled l1 norm. The reported
    subgradient uses ``sign(0) = 0``, the minimum-norm choice.
    """

    def __init__(self, C, d, mu):
        self.C = np.array(C, dtype=float, ndmin=2)
        self.d = np.array(d, dtype=float).reshape(-1)
        if self.C.shape[0] != self.d.shape[0]:
            raise ContractError("C and d row counts differ")
        self.mu = float(mu)
        self.C.setflags(write=False)
        self.d.setflags(write=False)

    def __call__(self, x):
        r = self.C @ x - self.d
        value = 0.5 * float(r @ r) + self.mu * float(np.abs(x).sum())
        return value, self.C.T @ r + self.mu * np.sign(x)


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).reshape(-1)
        hi = np.array(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ContractError("box needs lo <= hi componentwise with matching shapes")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, n, radius):
        return cls(np.full(n, -float(radius)), np.full(n, float(radius)))

    @property
    def n(self):
        return self.lo.shape[0]

    def project(self, u):
        return np.clip(u, self.lo, self.hi)

    @property
    def D(self):
        """Largest norm of a point in the box."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size=(size, self.n))

    def to_dict(self):
        return {"kind": "box", "params": {"lo": self.lo.tolist(), "hi": self.hi.tolist()}}


@dataclass(frozen=True)
class Ball:
    radius: float
    n: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractError("ball radius must be positive")

    def project(self, u):
        nrm = np.linalg.norm(u)
        return u * (self.radius / nrm) if nrm > self.radius else np.array(u, dtype=float)

    @property
    def D(self):
        return float(self.radius)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def sample(self, rng, size):
        g = rng.standard_normal((size, self.n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * (self.radius * rng.uniform(size=(size, 1)) ** (1.0 / self.n))

    def to_dict(self):
        return {"kind": "ball", "params": {"radius": self.radius, "n": self.n}}


def _set_from_dict(data):
    kind, params = data["kind"], data["params"]
    if kind == "box":
        return Box(np.asarray(params["lo"], dtype=float), np.asarray(params["hi"], dtype=float))
    if kind == "ball":
        return Ball(float(params["radius"]), int(params["n"]))
    raise ConfigurationError(f"unknown simple set kind {kind!r}")


def project_X(X, u) -> np.ndarray:
    """Euclidean projection onto the simple set (box clamp or radial shrink)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (X.n,):
        raise ContractError(f"expected vector of length {X.n}, got shape {u.shape}")
    return X.project(u)


@dataclass(frozen=True, eq=False)
class ConstraintBlock:
    A: np.ndarray
    b: np.ndarray
    cone: ConeSpec
    offset: int

    @property
    def rows(self):
        return slice(self.offset, self.offset + self.cone.dim)

    @property
    def vacuous(self):
        """True when ``A_i = 0`` and ``b_i = 0``: the constraint holds for every x."""
        return not np.any(self.A) and not np.any(self.b)


@dataclass(frozen=True, eq=False)
class ConicProblem:
    n: int
    components: tuple
    blocks: tuple
    X: object
    L: float
    dual_bound_B: Optional[float] = None
    reference: Optional[object] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.components) != len(self.blocks):
            raise ConfigurationError(
                f"{len(self.components)} components but {len(self.blocks)} constraint blocks"
            )
        if not self.blocks:
            raise ConfigurationError("problem needs at least one component")
        if self.dual_bound_B is not None and not self.dual_bound_B > 0:
            raise ConfigurationError("dual bound B must be positive")
        if self.X.n != self.n:
            raise ConfigurationError("simple set dimension does not match n")
        offset = 0
        for blk in self.blocks:
            if blk.A.shape != (blk.cone.dim, self.n) or blk.b.shape != (blk.cone.dim,):
                raise ConfigurationError("constraint block shapes disagree with cone dimension or n")
            if blk.offset != offset:
                raise ConfigurationError("block offsets must partition the dual vector")
            offset += blk.cone.dim

    @property
    def m(self):
        return len(self.blocks)

    @property
    def d(self):
        return self.blocks[-1].offset + self.blocks[-1].cone.dim

    @property
    def operator(self):
        return BlockMatrix([blk.A for blk in self.blocks])

    @property
    def dual_radius(self):
        """Per-block dual radius ``(B + 1) / sqrt(m)``."""
        if self.dual_bound_B is None:
            raise ConfigurationError("dual bound B is not set")
        return (self.dual_bound_B + 1.0) / math.sqrt(self.m)

    def with_dual_bound(self, B):
        return dataclasses.replace(self, dual_bound_B=float(B))

    def with_reference(self, reference):
        return dataclasses.replace(self, reference=reference)

    def objective(self, x):
        return math.fsum(f(x)[0] for f in self.components)

    def subgradient(self, x):
        g = np.zeros(self.n)
        for f in self.components:
            g += f(x)[1]
        return g

    def residual(self, x):
        """Stacked ``A x - b``."""
        return np.concatenate([blk.A @ x - blk.b for blk in self.blocks])

    def infeasibility(self, x):
        """``dist_{-K}(A x - b)`` for the product cone."""
        return math.sqrt(sum(dist_minus_cone(blk.cone, blk.A @ x - blk.b) ** 2 for blk in self.blocks))


def make_problem(components, constraints, X, L, dual_bound=None, metadata=None) -> ConicProblem:
    """Assemble a problem from oracles and ``(A_i, b_i, cone_i)`` triples."""
    blocks = []
    offset = 0
    n = X.n
    for A, b, cone in constraints:
        A = np.array(A, dtype=float).reshape(cone.dim, n)
        b = np.array(b, dtype=float).reshape(cone.dim)
        A.setflags(write=False)
        b.setflags(write=False)
        blocks.append(ConstraintBlock(A, b, cone, offset))
        offset += cone.dim
    return ConicProblem(
        n=n,
        components=tuple(components),
        blocks=tuple(blocks),
        X=X,
        L=float(L),
        dual_bound_B=None if dual_bound is None else float(dual_bound),
        metadata=dict(metadata or {}),
    )


# ---------------------------------------------------------------------------
# Slater-based dual bound
# ---------------------------------------------------------------------------


@dataclass
class SlaterCertificate:
    """Strictly feasible ``x_hat`` plus a lower bound ``h_hat`` on some dual value."""

    x_hat: np.ndarray
    h_hat: float
    blocks_interior_margin: Optional[list] = None


def _soc_margin(s, starts=16, tol=1e-8, max_iter=10000):
    # min <v, u> over unit u in the SOC, v = -s; projected gradient on the
    # (cone cap sphere) with deterministic starts
    v = -np.asarray(s, dtype=float)
    dim = v.shape[0]
    rng = np.random.default_rng(0)
    step = 0.5 / max(np.linalg.norm(v), 1e-300)
    best = np.inf
    for j in range(starts):
        u = np.empty(dim)
        if j == 0 and np.linalg.norm(v[:-1]) > 0:
            u[:-1] = -v[:-1] / np.linalg.norm(v[:-1])
        else:
            w = rng.standard_normal(dim - 1)
            u[:-1] = w / np.linalg.norm(w)
        u[-1] = 1.0
        u /= np.linalg.norm(u)
        for _ in range(max_iter):
            p = _project_soc_raw(u - step * v)
            nrm = np.linalg.norm(p)
            if nrm == 0.0:
                break
            p /= nrm
            done = np.linalg.norm(p - u) <= tol
            u = p
            if done:
                break
        best = min(best, float(v @ u))
    return best


def _project_soc_raw(u):
    return project_cone(SecondOrder(u.shape[0]), u)


def _block_margin(blk, s):
    kind = blk.cone.kind
    if kind == "nonneg":
        if np.any(s >= 0):
            raise SlaterError(f"not a Slater point: block at offset {blk.offset} has a nonnegative residual")
        return float(np.min(-s))
    if kind == "soc":
        if not np.linalg.norm(s[:-1]) < -s[-1]:
            raise SlaterError(f"not a Slater point: block at offset {blk.offset} is not strictly inside -K")
        return _soc_margin(s)
    raise AssertionError(kind)


def slater_dual_bound(p: ConicProblem, cert: SlaterCertificate) -> float:
    """Dual-norm bound ``B = (f(x_hat) - h_hat) / r*`` from a Slater point.

    ``r*`` is the smallest per-block margin ``min_{u in K_i*, ||u||=1}
    -<A_i x_hat - b_i, u>``. Blocks with cone ``free`` (dual ``{0}``) and
    vacuous blocks (``A_i = 0``, ``b_i = 0``, whose multiplier can be taken
    as zero in a minimum-norm dual solution) carry no margin. The per-block
    margins are written back to ``cert.blocks_interior_margin``.

    Raises
    ------
    SlaterError
        If a ``zero`` block is present (no interior) or ``x_hat`` is not
        strictly feasible.
    """
    x_hat = np.asarray(cert.x_hat, dtype=float)
    if x_hat.shape != (p.n,):
        raise ContractError("x_hat has the wrong length")
    if np.linalg.norm(p.X.project(x_hat) - x_hat) > 1e-12:
        raise SlaterError("x_hat lies outside X")
    margins = []
    for blk in p.blocks:
        if blk.cone.kind == "zero" and not blk.vacuous:
            raise SlaterError("no conic interior: equality (zero-cone) blocks rule out a Slater bound; supply B directly")
        if blk.cone.kind in ("free", "zero") or blk.vacuous:
            margins.append(None)
            continue
        margins.append(_block_margin(blk, blk.A @ x_hat - blk.b))
    cert.blocks_interior_margin = margins
    active = [r for r in margins if r is not None]
    r_star = min(active) if active else math.inf
    if not r_star > 0:
        raise SlaterError(f"not a Slater point: r* = {r_star}")
    gap = p.objective(x_hat) - cert.h_hat
    if gap <= 0 or math.isinf(r_star):
        return DUAL_BOUND_FLOOR
    return max(gap / r_star, DUAL_BOUND_FLOOR)


def default_h_hat(p: ConicProblem, samples=64, seed=0) -> float:
    """Sound lower bound on the dual value at ``y = 0``, i.e. on ``min_X f``.

    Uses ``f(z) - m L diam(X)`` at seeded sample points (``f`` is
    ``m L``-Lipschitz), raised to ``metadata['f_lower']`` when a generator
    knows a better bound.
    """
    rng = np.random.default_rng(seed)
    Lf = p.m * p.L
    best = max(p.objective(z) - Lf * p.X.diameter for z in p.X.sample(rng, samples))
    f_lower = p.metadata.get("f_lower")
    return best if f_lower is None else max(best, float(f_lower))


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------


def build_lasso(m=1000, n=40, p=None, lam=0.1, noise_std=0.1, seed=0) -> ConicProblem:
    """Monotone-constrained Lasso instance.

    ``f_i(x) = 0.5 ||C_i x - d_i||^2 + (lam/m) ||x||_1`` over the box
    ``[-10, 10]^n`` with ``x_j - x_{j+1} <= 0`` for ``j < n - 1`` as the
    first ``n - 1`` scalar blocks; the remaining blocks are zero rows.
    ``C`` has i.i.d. standard normal entries and ``d = C x_bar + noise``
    where ``x_bar`` has ascending negative, zero and ascending positive
    quarters/half/quarter.
    """
    if p is None:
        p = n + 5
    if n < 4 or n % 4:
        raise ConfigurationError(f"n must be a positive multiple of 4, got {n}")
    if m < n - 1:
        raise ConfigurationError(f"m must be at least n - 1 = {n - 1}, got {m}")
    if p < 1 or lam < 0 or noise_std < 0:
        raise ConfigurationError("need p >= 1, lam >= 0, noise_std >= 0")
    rng = np.random.default_rng(seed)
    q = n // 4
    x_bar = np.zeros(n)
    x_bar[:q] = np.sort(rng.uniform(-10.0, 0.0, q))
    x_bar[n - q:] = np.sort(rng.uniform(0.0, 10.0, q))
    C = rng.standard_normal((m * p, n))
    d = C @ x_bar + noise_std * rng.standard_normal(m * p)
    mu = lam / m
    components = [LeastSquaresL1(C[i * p:(i + 1) * p], d[i * p:(i + 1) * p], mu) for i in range(m)]
    constraints = []
    for i in range(m):
        row = np.zeros((1, n))
        if i < n - 1:
            row[0, i], row[0, i + 1] = 1.0, -1.0
        constraints.append((row, np.zeros(1), Nonneg(1)))
    X = Box.cube(n, 10.0)
    L = max(
        np.linalg.norm(c.C, 2) * (np.linalg.norm(c.C, 2) * math.sqrt(n) * 10.0 + np.linalg.norm(c.d))
        + lam * math.sqrt(n) / m
        for c in components
    )
    # strictly ascending interior point for the Slater bound
    x_hat = 0.9 * x_bar + 0.5 * np.linspace(-1.0, 1.0, n)
    metadata = {
        "generator": "lasso",
        "seed": seed,
        "params": {"m": m, "n": n, "p": p, "lam": lam, "noise_std": noise_std},
        "design": {
            "C": "iid standard normal entries",
            "B": "first-order difference rows e_j - e_{j+1}, x_j - x_{j+1} <= 0",
            "support_split": "n/4 negative ascending, n/2 zero, n/4 positive ascending",
        },
        "x_bar": x_bar.tolist(),
        "slater_point": x_hat.tolist(),
        "f_lower": 0.0,
    }
    return make_problem(components, constraints, X, L, metadata=metadata)


def build_bpd(m=20, di=5, n=30, delta=1.0, seed=0, noise_std=0.01, sparsity=None) -> ConicProblem:
    """Basis-pursuit-denoising instance with second-order-cone blocks.

    ``min ||x||_1  s.t.  ||A_i x - b_i|| <= delta / sqrt(m)``, split as
    ``f_i = ||x||_1 / m`` and encoded blockwise as
    ``[-A_i; 0] x - [-b_i; delta/sqrt(m)] in -SOC(di + 1)``.
    ``metadata['warnings']`` notes when the ground truth violates a block.
    """
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    if m < 1 or di < 1 or n < 1:
        raise ConfigurationError("m, di, n must be positive")
    rng = np.random.default_rng(seed)
    k = sparsity if sparsity is not None else max(1, n // 5)
    x_true = np.zeros(n)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x_true[support] = rng.standard_normal(k)
    A = rng.standard_normal((m * di, n)) / math.sqrt(di)
    b = A @ x_true + noise_std * rng.standard_normal(m * di)
    tau = delta / math.sqrt(m)
    components, constraints = [], []
    residual_norms = []
    for i in range(m):
        Ai, bi = A[i * di:(i + 1) * di], b[i * di:(i + 1) * di]
        components.append(LeastSquaresL1(np.zeros((0, n)), np.zeros(0), 1.0 / m))
        constraints.append((np.vstack([-Ai, np.zeros((1, n))]), np.concatenate([-bi, [tau]]), SecondOrder(di + 1)))
        residual_norms.append(float(np.linalg.norm(Ai @ x_true - bi)))
    R = math.ceil(float(np.max(np.abs(x_true)))) + 1.0
    warnings = []
    if max(residual_norms) > tau:
        warnings.append("delta too small: ground truth violates at least one block")
    metadata = {
        "generator": "bpd",
        "seed": seed,
        "params": {"m": m, "di": di, "n": n, "delta": delta, "noise_std": noise_std, "sparsity": k},
        "design": {"A": "iid normal entries scaled by 1/sqrt(di)", "x_true": f"{k}-sparse standard normal"},
        "x_true": x_true.tolist(),
        "warnings": warnings,
        "slater_point": x_true.tolist() if max(residual_norms) < tau else None,
        "f_lower": 0.0,
    }
    return make_problem(components, constraints, Box.cube(n, R), math.sqrt(n) / m, metadata=metadata)


GENERATORS: dict[str, Callable[..., ConicProblem]] = {"lasso": build_lasso, "bpd": build_bpd}


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def problem_to_dict(p: ConicProblem) -> dict:
    return {
        "n": p.n,
        "m": p.m,
        "blocks": [{"A": blk.A.tolist(), "b": blk.b.tolist(), "cone": blk.cone.to_dict()} for blk in p.blocks],
        "X": p.X.to_dict(),
        "L": p.L,
        "B": p.dual_bound_B,
        "metadata": p.metadata,
    }


def _require(data, key, where):
    if not isinstance(data, dict) or key not in data:
        raise ConfigurationError(f"instance file: missing field {where}{key!r}")
    return data[key]


def problem_from_dict(data: dict) -> ConicProblem:
    """Rebuild a problem; component oracles come from the recorded generator."""
    n = int(_require(data, "n", ""))
    m = int(_require(data, "m", ""))
    meta = _require(data, "metadata", "")
    generator = _require(meta, "generator", "metadata.")
    if generator not in GENERATORS:
        raise ConfigurationError(f"instance file: unknown generator {generator!r}; oracles cannot be rebuilt")
    params = dict(_require(meta, "params", "metadata."))
    p = GENERATORS[generator](seed=_require(meta, "seed", "metadata."), **params)
    blocks = _require(data, "blocks", "")
    if p.n != n or p.m != m or len(blocks) != m:
        raise ConfigurationError("instance file: n/m disagree with the regenerated instance")
    for i, (raw, blk) in enumerate(zip(blocks, p.blocks)):
        where = f"blocks[{i}]."
        cone = ConeSpec.from_dict(_require(raw, "cone", where))
        A = np.asarray(_require(raw, "A", where), dtype=float)
        b = np.asarray(_require(raw, "b", where), dtype=float)
        if cone != blk.cone or not np.array_equal(A, blk.A) or not np.array_equal(b, blk.b):
            raise ConfigurationError(f"instance file: {where[:-1]} differs from the regenerated instance")
    X = _set_from_dict(_require(data, "X", ""))
    B = data.get("B")
    return dataclasses.replace(
        p,
        X=X,
        L=float(_require(data, "L", "")),
        dual_bound_B=None if B is None else float(B),
        metadata=meta,
    )


def save_problem(p: ConicProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(p), fh, indent=1)
        fh.write("\n")


def load_problem(path) -> ConicProblem:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return problem_from_dict(data)


def instance_hash(p: ConicProblem) -> str:
    blob = json.dumps(problem_to_dict(p), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
