"""Constructive-interference precoders under perfect CSI.

All designs solve for one common vector ``w``; user ``k`` is then served by
the rotated copy ``t_k = w exp(j(phi_1 - phi_k)) / K``. The relaxed sector
problem is available through the direct conic form and through its
non-negative least squares dual, solved by gradient projection.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import conic
from .model import (
    BPSK,
    QPSK,
    ChannelSet,
    ModulationSpec,
    Outcome,
    PrecoderSet,
    RealLifting,
    RotatedChannels,
    SectorMargins,
    SymbolFrame,
    check_constructive,
    lift_vectors,
    w2_to_w,
)

DIRECT = "direct-conic"
DUAL_GP = "dual-gp"
CLOSED_FORM = "closed-form-interior"
BROADCAST = "broadcast-conic"

# balanced amplitudes below this fraction of the matched-filter bound are read as zero
ZERO_TARGET = 1e-8


@dataclass
class MulticastSolution:
    w: np.ndarray | None
    power: float
    status: Outcome
    method: str
    margins: SectorMargins | None = None
    refined: bool = False  # dual recovery needed a direct conic clean-up
    iterations: int = 0
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is Outcome.FEASIBLE


def _outcome(status: conic.Status) -> Outcome:
    if status is conic.Status.OPTIMAL:
        return Outcome.FEASIBLE
    if status is conic.Status.PRIMAL_INFEASIBLE:
        return Outcome.INFEASIBLE
    return Outcome.FAILED


def _gamma_vec(gamma, K) -> np.ndarray:
    return np.broadcast_to(np.asarray(gamma, dtype=float), (K,)).copy()


def _from_conic(sol: conic.ConicSolution, Hrot, gamma, n0, mod, method, t0) -> MulticastSolution:
    status = _outcome(sol.status)
    diag = {"conic_status": sol.status.value, "residuals": sol.residuals}
    if sol.certificate is not None:
        diag["certificate"] = sol.certificate
    if status is not Outcome.FEASIBLE:
        return MulticastSolution(None, np.inf, status, method, iterations=sol.iterations,
                                 wall_time=time.perf_counter() - t0, diagnostics=diag)
    n = Hrot.shape[1]
    w = w2_to_w(sol.x[: 2 * n])
    margins = check_constructive(Hrot @ w, 0.0, gamma, n0, mod)
    return MulticastSolution(w, float(np.vdot(w, w).real), status, method, margins,
                             iterations=sol.iterations, wall_time=time.perf_counter() - t0,
                             diagnostics=diag)


def solve_strict(rot: RotatedChannels, gamma, n0: float, mod: ModulationSpec = QPSK,
                 options: conic.SolverOptions | None = None) -> MulticastSolution:
    """Minimum ``||w||^2`` with every receive point on its symbol axis.

    Constraints: ``Im(h~_i^T w) = 0`` and ``Re(h~_i^T w) >= sqrt(Gamma_i N0)``.
    """
    t0 = time.perf_counter()
    K, N = rot.H.shape
    gamma = _gamma_vec(gamma, K)
    F, G = lift_vectors(rot.H)
    thr = np.sqrt(gamma * n0)
    prob = conic.ConicProblem(q=np.zeros(2 * N), E=G, e=np.zeros(K), G=-F, h=-thr)
    return _from_conic(conic.solve(prob, options), rot.H, gamma, n0, mod, DIRECT, t0)


def solve_relaxed_direct(lift: RealLifting, mod: ModulationSpec | None = None,
                         options: conic.SolverOptions | None = None,
                         Hrot: np.ndarray | None = None) -> MulticastSolution:
    """Minimum ``||w||^2`` with every receive point inside its constructive sector.

    Solves ``min ||w2||^2  s.t.  B^T w2 + c <= 0`` directly.
    """
    t0 = time.perf_counter()
    N = lift.n_tx
    prob = conic.ConicProblem(q=np.zeros(2 * N), G=lift.B.T, h=-lift.c)
    sol = conic.solve(prob, options)
    return _from_lift(sol, lift, mod, DIRECT, t0)


def _lift_rot(lift: RealLifting) -> np.ndarray:
    N = lift.n_tx
    return lift.F[:, :N] + 1j * lift.F[:, N:]


def _lift_gamma(lift: RealLifting) -> np.ndarray:
    return lift.thresholds**2 / lift.n0


def _lift_mod(lift: RealLifting, mod) -> ModulationSpec:
    if mod is not None:
        return mod
    return ModulationSpec(int(round(np.pi / np.arctan(lift.tan_theta))))


def _from_lift(sol, lift, mod, method, t0) -> MulticastSolution:
    return _from_conic(sol, _lift_rot(lift), _lift_gamma(lift), lift.n0, _lift_mod(lift, mod), method, t0)


def solve_bpsk(rot: RotatedChannels, gamma, n0: float,
               options: conic.SolverOptions | None = None) -> MulticastSolution:
    """BPSK half-plane form: ``Re(h~_i^T w) >= sqrt(Gamma_i N0)`` only."""
    t0 = time.perf_counter()
    K, N = rot.H.shape
    gamma = _gamma_vec(gamma, K)
    F, _ = lift_vectors(rot.H)
    prob = conic.ConicProblem(q=np.zeros(2 * N), G=-F, h=-np.sqrt(gamma * n0))
    return _from_conic(conic.solve(prob, options), rot.H, gamma, n0, BPSK, DIRECT, t0)


def solve_qpsk_axis(channels: ChannelSet, symbols: SymbolFrame, gamma, n0: float,
                    options: conic.SolverOptions | None = None) -> MulticastSolution:
    """QPSK per-axis form on the unrotated constellation.

    The common vector is sent as ``w d_1``, so user ``i`` sees
    ``z_i = exp(j phi_1) h_i^T w`` and needs both ``sign(Re d_i) Re z_i`` and
    ``sign(Im d_i) Im z_i`` above ``sqrt(Gamma_i N0 / 2)``.
    """
    if symbols.modulation.order != 4:
        raise ValueError("per-axis form is specific to QPSK")
    t0 = time.perf_counter()
    K, N = channels.H.shape
    gamma = _gamma_vec(gamma, K)
    d = symbols.symbols
    F, G = lift_vectors(channels.H * d[0])
    sr = np.sign(d.real)[:, None]
    si = np.sign(d.imag)[:, None]
    half = np.sqrt(gamma * n0 / 2)
    prob = conic.ConicProblem(q=np.zeros(2 * N), G=np.vstack([-sr * F, -si * G]),
                              h=-np.concatenate([half, half]))
    Hrot = channels.H * np.exp(1j * (symbols.phases[0] - symbols.phases))[:, None]
    return _from_conic(conic.solve(prob, options), Hrot, gamma, n0, symbols.modulation, DIRECT, t0)


# ---------------------------------------------------------------------------
# dual path
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualData:
    """``f(lam) = 1/2 lam^T Q lam - c^T lam`` over ``lam >= 0`` with ``Q = B^T B / 2``.

    Its minimum is minus the relaxed optimal power.
    """

    B: np.ndarray
    Q: np.ndarray
    c: np.ndarray
    lipschitz: float
    cap: float  # dual values beyond this are read as unboundedness

    def value(self, lam) -> float:
        lam = np.asarray(lam, dtype=float)
        return float(0.5 * lam @ self.Q @ lam - self.c @ lam)

    def gradient(self, lam) -> np.ndarray:
        return self.Q @ np.asarray(lam, dtype=float) - self.c


@dataclass(frozen=True)
class GPOptions:
    rtol: float = 1e-7  # projected-gradient stop: ||pg|| <= rtol (1 + ||c||)
    max_iters: int = 20_000
    backtrack: float = 0.5
    armijo: float = 1e-4
    cap_factor: float = 1e8


@dataclass
class DualState:
    lam: np.ndarray
    objective: float  # f(lam); its negative is the primal power estimate
    pg_norm: float
    iterations: int
    converged: bool
    diverged: bool
    trace: np.ndarray = field(repr=False)  # dual value -f after each accepted step
    method: str = DUAL_GP


def build_dual(lift: RealLifting, options: GPOptions | None = None) -> DualData:
    opts = options or GPOptions()
    B = np.ascontiguousarray(lift.B)
    Q = 0.5 * (B.T @ B)
    L = float(np.linalg.eigvalsh(Q)[-1]) if Q.size else 0.0
    cap = opts.cap_factor * float(np.max(lift.thresholds) ** 2)
    return DualData(B, Q, np.asarray(lift.c, dtype=float), max(L, 1e-300), cap)


@njit(cache=True, error_model="numpy")
def _gp(Q, c, L, tol, max_iters, backtrack, armijo, cap):
    n = c.size
    lam = np.zeros(n)
    g = -c.copy()
    f = 0.0
    a = 1.0 / L
    amin, amax = 1e-12 / L, 1e12 / L
    trace = np.empty(max_iters + 1)
    trace[0] = 0.0
    status = 2  # 0 converged, 1 diverged, 2 iteration cap
    pgn = 0.0
    it = 0
    while True:
        pgn = 0.0
        for i in range(n):
            v = g[i] if lam[i] > 0 else min(g[i], 0.0)
            pgn += v * v
        pgn = np.sqrt(pgn)
        if pgn <= tol:
            status = 0
            break
        # best dual value on the ray through lam: (c^T lam)^2 / (2 lam^T Q lam)
        cl = c @ lam
        qq = lam @ (g + c)
        if -f > cap or (cl > 0 and cl * cl > 2.0 * cap * qq):
            status = 1
            break
        if it == max_iters:
            break
        while True:
            d = np.maximum(lam - a * g, 0.0) - lam
            Qd = Q @ d
            gd = g @ d
            fnew = f + gd + 0.5 * (d @ Qd)
            if fnew <= f + armijo * gd or a <= amin:
                break
            a *= backtrack
        lam = lam + d
        g = g + Qd
        f = fnew
        it += 1
        trace[it] = -f
        # Barzilai-Borwein trial step for the next iteration
        dQd = d @ Qd
        a = (d @ d) / dQd if dQd > 0 else amax
        a = min(max(a, amin), amax)
    return lam, f, pgn, it, status, trace[: it + 1]


def solve_dual_gp(data: DualData, options: GPOptions | None = None) -> DualState:
    """Projected gradient ``lam <- max(lam - a grad f, 0)`` from ``lam = 0``.

    The step starts from a Barzilai-Borwein estimate and is halved until the
    Armijo condition holds along the projection arc, so ``f`` never increases.
    Divergence is declared once some dual value exceeds ``data.cap``; besides
    ``-f(lam)`` the check uses the best rescaling of the current iterate,
    ``(c^T lam)^2 / (2 lam^T Q lam)``, which grows much faster along a
    recession ray. Both are lower bounds on the primal optimum.
    """
    opts = options or GPOptions()
    tol = opts.rtol * (1.0 + float(np.linalg.norm(data.c)))
    lam, f, pgn, it, status, trace = _gp(np.ascontiguousarray(data.Q), data.c, data.lipschitz, tol,
                                         opts.max_iters, opts.backtrack, opts.armijo, data.cap)
    return DualState(lam, float(data.value(lam)), float(pgn), int(it), status == 0, status == 1, trace)


def closed_form_interior(data: DualData) -> np.ndarray | None:
    """Unconstrained stationary point ``Q^{-1} c``, or None when ``Q`` is singular."""
    n2k, n2n = data.B.shape[1], data.B.shape[0]
    if n2k > n2n:
        return None
    try:
        lam = np.linalg.solve(data.Q, data.c)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(lam)) or np.linalg.cond(data.Q) > 1e12:
        return None
    return lam


def recover_w(state: DualState, lift: RealLifting, mod: ModulationSpec | None = None,
              refine: bool = True, options: conic.SolverOptions | None = None) -> MulticastSolution:
    """Primal point ``w2 = -B lam / 2`` from a dual solution.

    A point that misses a sector by more than ``1e-6 sqrt(Gamma_i N0)`` is
    replaced by a direct conic solve when ``refine`` is set (``refined`` flag).
    """
    t0 = time.perf_counter()
    mod = _lift_mod(lift, mod)
    diag = {"dual_objective": state.objective, "pg_norm": state.pg_norm, "dual_iterations": state.iterations}
    if state.diverged:
        return MulticastSolution(None, np.inf, Outcome.INFEASIBLE, state.method,
                                 iterations=state.iterations, diagnostics=diag)
    w2 = -0.5 * (lift.B @ state.lam)
    w = w2_to_w(w2)
    Hrot = _lift_rot(lift)
    margins = check_constructive(Hrot @ w, 0.0, _lift_gamma(lift), lift.n0, mod)
    ok = state.converged and bool(np.all(margins.satisfied(1e-6)))
    if not ok and refine:
        sol = solve_relaxed_direct(lift, mod, options)
        sol.refined = True
        sol.method = state.method
        sol.diagnostics.update(diag)
        return sol
    status = Outcome.FEASIBLE if ok else Outcome.FAILED
    return MulticastSolution(w, float(w2 @ w2), status, state.method, margins,
                             iterations=state.iterations, wall_time=time.perf_counter() - t0,
                             diagnostics=diag)


def solve_relaxed_gp(lift: RealLifting, mod: ModulationSpec | None = None,
                     options: GPOptions | None = None, refine: bool = True) -> MulticastSolution:
    """Relaxed sector design through the dual.

    Tries the closed-form interior point first and falls back to gradient
    projection when it has a non-positive entry.
    """
    t0 = time.perf_counter()
    data = build_dual(lift, options)
    lam = closed_form_interior(data)
    if lam is not None and np.all(lam > 0):
        state = DualState(lam, data.value(lam), 0.0, 0, True, False, np.array([-data.value(lam)]),
                          CLOSED_FORM)
    else:
        state = solve_dual_gp(data, options)
    sol = recover_w(state, lift, mod, refine)
    sol.wall_time = time.perf_counter() - t0
    return sol


def split_precoders(w: np.ndarray, symbols: SymbolFrame) -> PrecoderSet:
    """Per-user precoders ``t_k = w exp(j(phi_1 - phi_k)) / K``."""
    phi = symbols.phases
    K = phi.shape[0]
    return PrecoderSet(np.outer(np.exp(1j * (phi[0] - phi)), np.asarray(w, dtype=complex)) / K)


# ---------------------------------------------------------------------------
# broadcast form
# ---------------------------------------------------------------------------

def solve_broadcast(lift: RealLifting, symbols: SymbolFrame, mod: ModulationSpec | None = None,
                    ridge: float = 1e-9,
                    options: conic.SolverOptions | None = None) -> tuple[MulticastSolution, PrecoderSet | None]:
    """Relaxed sector design over ``K`` separate precoders.

    Minimizes ``||u||^2 + ridge * sum_k ||t_k||^2`` where
    ``u = sum_k t_k exp(j(phi_k - phi_1))`` and every constraint is written on
    ``u``. The ridge term only picks the least-norm split among the
    precoder sets sharing the same ``u``.
    """
    t0 = time.perf_counter()
    K, N = lift.n_users, lift.n_tx
    rot = np.exp(1j * (symbols.phases - symbols.phases[0]))
    # t_k lifted like w: [Re t_k; -Im t_k]; (a + jb)(x - jy) -> [a x + b y; -(b x - a y)]
    M = np.zeros((2 * N, 2 * N * K))
    eye = np.eye(N)
    for k, r in enumerate(rot):
        a, b = r.real, r.imag
        M[:, 2 * N * k:2 * N * (k + 1)] = np.block([[a * eye, b * eye], [-b * eye, a * eye]])
    nx = 2 * N * K
    E = np.hstack([M, -np.eye(2 * N)])
    G = np.hstack([np.zeros((2 * K, nx)), lift.B.T])
    quad = np.concatenate([np.full(nx, ridge), np.ones(2 * N)])
    prob = conic.ConicProblem(q=np.zeros(nx + 2 * N), E=E, e=np.zeros(2 * N), G=G, h=-lift.c, quad=quad)
    sol = conic.solve(prob, options)
    out = _from_lift(sol, lift, mod, BROADCAST, t0)
    if not out.feasible:
        return out, None
    T = np.array([w2_to_w(sol.x[2 * N * k:2 * N * (k + 1)]) for k in range(K)])
    u = (rot[:, None] * T).sum(axis=0)
    out.power = float(np.vdot(u, u).real)
    return out, PrecoderSet(T)


# ---------------------------------------------------------------------------
# SINR balancing
# ---------------------------------------------------------------------------

def with_gamma(lift: RealLifting, gamma) -> RealLifting:
    """Same channels and modulation with new SINR targets."""
    thr = np.sqrt(_gamma_vec(gamma, lift.n_users) * lift.n0)
    c = lift.tan_theta * np.concatenate([thr, thr])
    return dataclasses.replace(lift, thresholds=thr, c=c)


def solve_balancing_direct(lift: RealLifting, n0: float, power: float, mod: ModulationSpec | None = None,
                           options: conic.SolverOptions | None = None) -> tuple[float, MulticastSolution]:
    """Largest common target ``Gamma_t`` reachable with ``||w||^2 <= power``.

    Variables ``(w2, s)`` with ``s = sqrt(Gamma_t)``: maximize ``s`` subject to
    ``B^T w2 + s sqrt(N0) tan(theta) <= 0`` and ``||w2|| <= sqrt(power)``.
    Returns ``0`` and an infeasible solution when the sectors admit only ``w = 0``.
    """
    if power <= 0:
        raise ValueError("power budget must be positive")
    t0 = time.perf_counter()
    N, K = lift.n_tx, lift.n_users
    q = np.zeros(2 * N + 1)
    q[-1] = -1.0
    G = np.hstack([lift.B.T, np.full((2 * K, 1), np.sqrt(n0) * lift.tan_theta)])
    G = np.vstack([G, -np.eye(1, 2 * N + 1, 2 * N)])
    h = np.zeros(2 * K + 1)
    ball = conic.SOC(np.eye(2 * N, 2 * N + 1), np.zeros(2 * N), np.zeros(2 * N + 1), np.sqrt(power))
    prob = conic.ConicProblem(q=q, G=G, h=h, socs=[ball], quad=np.zeros(2 * N + 1))
    sol = conic.solve(prob, options)
    if sol.status is not conic.Status.OPTIMAL:
        out = MulticastSolution(None, np.inf, _outcome(sol.status), DIRECT, iterations=sol.iterations,
                                wall_time=time.perf_counter() - t0,
                                diagnostics={"conic_status": sol.status.value})
        return 0.0, out
    s = max(float(sol.x[-1]), 0.0)
    if s <= ZERO_TARGET * np.sqrt(power * float(np.max(np.sum(lift.F**2, axis=1))) / n0):
        # only w = 0 meets the sectors: no positive target is reachable
        out = MulticastSolution(None, np.inf, Outcome.INFEASIBLE, DIRECT, iterations=sol.iterations,
                                wall_time=time.perf_counter() - t0,
                                diagnostics={"conic_status": sol.status.value, "sqrt_target": s})
        return 0.0, out
    gamma_t = s * s
    out = _from_lift(sol, with_gamma(lift, gamma_t), mod, DIRECT, t0)
    return gamma_t, out


def solve_balancing_bisect(lift: RealLifting, n0: float, power: float, tol: float = 1e-4,
                           mod: ModulationSpec | None = None) -> float:
    """Balanced target by bisection on the dual power-minimization path.

    Searches ``[0, power * max_i ||h_i||^2 / N0]`` for the largest ``Gamma``
    whose minimum power does not exceed ``power``; stops at relative width
    ``tol``. Returns 0 when no positive target is reachable.
    """
    if power <= 0:
        raise ValueError("power budget must be positive")
    gains = np.sum(lift.F**2, axis=1)
    lo, hi = 0.0, power * float(np.max(gains)) / n0

    def solve_at(g):
        return solve_relaxed_gp(with_gamma(lift, g), mod)

    top = solve_at(hi)
    if top.status is Outcome.INFEASIBLE:
        return 0.0  # the sector constraints are homogeneous: no target is reachable
    if top.feasible and top.power <= power:
        return hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        sol = solve_at(mid)
        if sol.feasible and sol.power <= power:
            lo = mid
        else:
            hi = mid
    return lo
