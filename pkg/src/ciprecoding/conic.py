"""Dense solver for small second-order cone programs.

Problems have the form::

    minimize    1/2 sum_i d_i x_i^2 + q^T x
    subject to  E x = e
                G x <= h
                ||A_j x + b_j|| <= c_j^T x + d_j      (j = 1..J)

The quadratic term is moved into an epigraph cone and the resulting linear
cone program is solved with a primal-dual interior point method on the
homogeneous self-dual embedding, using Nesterov-Todd scaling and a Mehrotra
predictor-corrector. The embedding yields Farkas certificates for
infeasible instances instead of diverging iterates.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from . import _ipm


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class SOC:
    """Cone constraint ``||A x + b|| <= c^T x + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0


@dataclass
class ConicProblem:
    q: np.ndarray
    E: np.ndarray | None = None
    e: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    socs: list[SOC] = field(default_factory=list)
    quad: np.ndarray | None = None  # diagonal weights of the quadratic term, default all ones

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.shape[0]
        self.E, self.e = _rows(self.E, self.e, n, "equality")
        self.G, self.h = _rows(self.G, self.h, n, "inequality")
        self.quad = np.ones(n) if self.quad is None else np.asarray(self.quad, dtype=float).ravel()
        if self.quad.shape != (n,) or np.any(self.quad < 0):
            raise ValueError("quadratic weights must be a non-negative vector of length n")
        socs = []
        for j, s in enumerate(self.socs):
            A = np.atleast_2d(np.asarray(s.A, dtype=float))
            b = np.asarray(s.b, dtype=float).ravel()
            c = np.asarray(s.c, dtype=float).ravel()
            if A.shape[1] != n or b.shape[0] != A.shape[0] or c.shape[0] != n:
                raise ValueError(f"cone constraint {j} has inconsistent dimensions")
            socs.append(SOC(A, b, c, float(s.d)))
        self.socs = socs

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def data_norm(self) -> float:
        """Largest absolute entry over all problem data."""
        parts = [self.q, self.E.ravel(), self.e, self.G.ravel(), self.h]
        for s in self.socs:
            parts += [s.A.ravel(), s.b, s.c, np.array([s.d])]
        return max((float(np.max(np.abs(p))) for p in parts if p.size), default=0.0)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.dot(self.quad * x, x) + self.q @ x)


def _rows(M, v, n, what):
    if M is None:
        if v is not None and np.size(v):
            raise ValueError(f"{what} right-hand side given without a matrix")
        return np.zeros((0, n)), np.zeros(0)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    v = np.asarray(v, dtype=float).ravel()
    if M.shape[1] != n or M.shape[0] != v.shape[0]:
        raise ValueError(f"{what} block has shape {M.shape} but rhs {v.shape}, n={n}")
    return M, v


@dataclass(frozen=True)
class SolverOptions:
    feastol: float = 1e-9
    reltol: float = 1e-10
    abstol: float = 1e-11
    max_iters: int = 100
    step_fraction: float = 0.99
    regularization: float = 1e-13
    polish: bool = True  # exact active-set clean-up for problems without cones
    # a stalled run is still accepted as optimal when it meets these looser bounds
    fallback_feastol: float = 1e-8
    fallback_reltol: float = 1e-7


@dataclass
class Residuals:
    primal: float
    dual: float
    complementarity: float
    gap: float


@dataclass
class ConicSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    y: np.ndarray  # equality multipliers
    z_lin: np.ndarray  # inequality multipliers
    z_soc: list[np.ndarray]  # cone multipliers, (scalar part, vector part) stacked
    residuals: Residuals
    iterations: int
    wall_time: float
    certificate: dict | None = None
    polished: bool = False
    inaccurate: bool = False  # accepted under the fallback tolerances

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class ResidualReport:
    equality: np.ndarray
    inequality: np.ndarray
    cone: np.ndarray
    objective: float

    @property
    def max_violation(self) -> float:
        parts = [np.abs(self.equality), self.inequality, self.cone]
        return max((float(np.max(p)) for p in parts if p.size), default=0.0)


def residuals(problem: ConicProblem, x) -> ResidualReport:
    """Constraint violations at ``x`` (zero where satisfied) and the objective."""
    x = np.asarray(x, dtype=float)
    eq = problem.E @ x - problem.e
    ineq = np.maximum(problem.G @ x - problem.h, 0.0)
    cone = np.array([max(np.linalg.norm(s.A @ x + s.b) - (s.c @ x + s.d), 0.0)
                     for s in problem.socs])
    return ResidualReport(eq, ineq, cone, problem.objective(x))


# ---------------------------------------------------------------------------
# standard form:  min c^T u  s.t.  A u = b,  G u + s = h,  s in K
# K = R_+^l x Q^{q_1} x ... ; dual: A^T y + G^T z + c = 0, z in K
# ---------------------------------------------------------------------------

@dataclass
class _Std:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    l: int
    soc_dims: list[int]
    n_orig: int
    has_epigraph: bool


def _standard_form(p: ConicProblem) -> _Std:
    n = p.n
    nz = np.flatnonzero(p.quad > 0)
    epi = nz.size > 0
    nu = n + 1 if epi else n
    c = np.zeros(nu)
    c[:n] = p.q
    if epi:
        c[n] = 1.0

    def pad(M):
        return np.hstack([M, np.zeros((M.shape[0], nu - n))])

    A = pad(p.E)
    G_blocks = [pad(p.G)]
    h_blocks = [p.h]
    dims = []
    for s in p.socs:
        G_blocks.append(pad(-np.vstack([s.c, s.A])))
        h_blocks.append(np.concatenate([[s.d], s.b]))
        dims.append(1 + s.A.shape[0])
    if epi:
        # 1/2 sum d_i x_i^2 <= t  <=>  ||(sqrt(d) x, t - 1/2)|| <= t + 1/2
        k = nz.size
        Ge = np.zeros((k + 2, nu))
        Ge[0, n] = -1.0
        Ge[1 + np.arange(k), nz] = -np.sqrt(p.quad[nz])
        Ge[k + 1, n] = -1.0
        he = np.zeros(k + 2)
        he[0] = 0.5
        he[k + 1] = -0.5
        G_blocks.append(Ge)
        h_blocks.append(he)
        dims.append(k + 2)
    return _Std(c, A, p.e.copy(), np.vstack(G_blocks), np.concatenate(h_blocks),
                p.G.shape[0], dims, n, epi)
_STATUS = {
    _ipm.OPTIMAL: Status.OPTIMAL,
    _ipm.PRIMAL_INFEASIBLE: Status.PRIMAL_INFEASIBLE,
    _ipm.DUAL_INFEASIBLE: Status.DUAL_INFEASIBLE,
    _ipm.MAX_ITERATIONS: Status.MAX_ITERATIONS,
}


def solve(problem: ConicProblem, options: SolverOptions | None = None) -> ConicSolution:
    """Solve ``problem`` and return the primal point, multipliers and diagnostics.

    Returns ``Status.PRIMAL_INFEASIBLE`` with a Farkas certificate
    ``{"y", "z", "residual"}`` when the constraints admit no point, and
    ``Status.DUAL_INFEASIBLE`` with an unbounded ray ``{"x", "residual"}``.
    """
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    sf = _standard_form(problem)
    dims = np.asarray(sf.soc_dims, dtype=np.int64)
    starts = (sf.l + np.concatenate([[0], np.cumsum(dims)[:-1]])).astype(np.int64) if dims.size else dims
    scale = 1.0 + problem.data_norm()
    code, x, y, z, s, tau, kappa, it, stats = _ipm.ipm(
        sf.c, np.ascontiguousarray(sf.A), sf.b, np.ascontiguousarray(sf.G), sf.h,
        sf.l, starts, dims, opts.feastol * scale, opts.reltol, opts.abstol * scale,
        opts.feastol, opts.max_iters, opts.step_fraction, opts.regularization)
    status = _STATUS[int(code)]
    res = Residuals(*(float(v) for v in stats[:4]))
    inaccurate = False
    if status is Status.MAX_ITERATIONS and res.gap <= opts.fallback_reltol and tau > 0:
        # residuals relative to the size of the primal and dual iterates
        xmag = max(1.0, float(np.max(np.abs(x), initial=0.0)) / tau)
        zmag = max(1.0, float(np.max(np.abs(z), initial=0.0)) / tau)
        ok = res.primal <= opts.fallback_feastol * scale * xmag and res.dual <= opts.fallback_feastol * scale * zmag
    else:
        ok = False
    if ok:
        status = Status.OPTIMAL
        inaccurate = True
    cert = None
    if status is Status.PRIMAL_INFEASIBLE:
        k = -(sf.h @ z + sf.b @ y)
        cert = {"y": y / k, "z": z / k, "residual": float(stats[4])}
        xs, ys, zs = None, y, z
    elif status is Status.DUAL_INFEASIBLE:
        cert = {"x": x[: sf.n_orig] / -(sf.c @ x), "residual": float(stats[4])}
        xs, ys, zs = None, y, z
    else:
        xs, ys, zs = x / tau, y / tau, z / tau
    xo = None if xs is None else xs[: sf.n_orig].copy()
    z_lin = zs[: sf.l].copy()
    polished = False
    if status is Status.OPTIMAL and opts.polish and not problem.socs and np.all(problem.quad > 0):
        sol = _polish(problem, xo, z_lin, s[: sf.l] / tau, opts.feastol * scale)
        if sol is not None:
            xo, ys, z_lin = sol
            polished = True
    z_soc = [zs[a:a + d].copy() for a, d in zip(starts[: len(problem.socs)], dims)]
    if xo is not None:
        obj = problem.objective(xo)
    else:
        obj = np.inf if status is Status.PRIMAL_INFEASIBLE else -np.inf
    wall = time.perf_counter() - t0
    return ConicSolution(status, xo, obj, ys.copy(), z_lin, z_soc, res, int(it), wall, cert, polished,
                         inaccurate)


def _polish(p: ConicProblem, x, z, s, tol):
    """Re-solve the KKT system on the active inequality set.

    Returns ``(x, y, z)`` when the result is primal feasible, dual feasible
    and no worse than ``x``; otherwise None.
    """
    act = np.flatnonzero(z > s)
    Ga = p.G[act]
    n, me, ma = p.n, p.E.shape[0], act.size
    K = np.zeros((n + me + ma, n + me + ma))
    K[:n, :n] = np.diag(p.quad)
    K[:n, n:n + me] = p.E.T
    K[:n, n + me:] = Ga.T
    K[n:n + me, :n] = p.E
    K[n + me:, :n] = Ga
    rhs = np.concatenate([-p.q, p.e, p.h[act]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    xp = sol[:n]
    if np.any(p.G @ xp - p.h > tol) or np.any(np.abs(p.E @ xp - p.e) > tol):
        return None
    if np.linalg.norm(K @ sol - rhs, np.inf) > tol:
        return None
    za = sol[n + me:]
    if np.any(za < -tol):
        return None
    if p.objective(xp) > p.objective(x) + tol:
        return None
    zf = np.zeros(p.G.shape[0])
    zf[act] = np.maximum(za, 0.0)
    return xp, sol[n:n + me], zf
