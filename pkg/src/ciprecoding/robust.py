"""Worst-case robust constructive-interference precoding.

The transmitter knows estimates ``h^_i`` with ``h_i = h^_i + e_i`` and
``||e_i|| <= delta_i``. The rotated error has the same norm, so in the real
lifting each sector row picks up the Cauchy-Schwarz term ``delta_i ||v||``:

    branch 1:  f^_i^T (w1 - t w2) + delta_i ||w1 - t w2|| + t sqrt(Gamma_i N0) <= 0
    branch 2: -f^_i^T (w1 + t w2) + delta_i ||w1 + t w2|| + t sqrt(Gamma_i N0) <= 0

with ``t = tan(theta)`` and ``w1 = Pi^T w2``. Each branch keeps the whole error
disk on one side of one sector edge; together they are exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .ci import ZERO_TARGET, _outcome
from .model import (
    STREAM_CSI_ERROR,
    ChannelSet,
    ModulationSpec,
    Outcome,
    Scenario,
    SymbolFrame,
    complex_gaussian,
    lift_vectors,
    perm_matrix,
    rotate_channels,
    trial_rng,
    w2_to_w,
    w_to_w2,
)


@dataclass(frozen=True)
class RobustScenario:
    H_hat: np.ndarray  # (K, N) channel estimates
    delta: np.ndarray  # (K,) error radii

    def __post_init__(self):
        H = np.array(self.H_hat, dtype=complex)
        d = np.broadcast_to(np.asarray(self.delta, dtype=float), (H.shape[0],)).copy()
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("error radii must be finite and non-negative")
        H.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "H_hat", H)
        object.__setattr__(self, "delta", d)

    @property
    def estimates(self) -> ChannelSet:
        return ChannelSet(self.H_hat)


@dataclass
class RobustSolution:
    w: np.ndarray | None
    power: float
    status: Outcome
    margins: np.ndarray | None = None  # (K, 2) worst-case margins, >= 0 when met
    iterations: int = 0
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is Outcome.FEASIBLE


def draw_errors(scenario: Scenario, trial: int, delta) -> np.ndarray:
    """Errors uniform inside per-user balls of radius ``delta`` (in C^N, i.e. R^2N)."""
    K, N = scenario.n_users, scenario.n_tx
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (K,))
    rng = trial_rng(scenario.seed, trial, STREAM_CSI_ERROR)
    e = complex_gaussian(rng, (K, N))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    radius = delta * rng.random(K) ** (1.0 / (2 * N))
    return e * radius[:, None]


def estimate_channels(channels: ChannelSet, scenario: Scenario, trial: int, delta) -> RobustScenario:
    """Estimates ``h^ = h - e`` for the true channels of one trial."""
    e = draw_errors(scenario, trial, delta)
    return RobustScenario(channels.H - e, delta)


def _branch_data(rob: RobustScenario, symbols: SymbolFrame, mod: ModulationSpec):
    if mod.order < 4:
        raise ValueError("robust sector design needs M >= 4")
    rot = rotate_channels(rob.estimates, symbols)
    F, G = lift_vectors(rot.H)
    N = rob.H_hat.shape[1]
    t = mod.tan_theta
    PiT = perm_matrix(N).T
    eye = np.eye(2 * N)
    return F, G, PiT - t * eye, PiT + t * eye, t


def _socs(rob, symbols, mod, thr, extra=0, thr_col=None):
    """Cone list for both branches; ``thr_col`` puts the threshold on a variable."""
    F, G, D1, D2, t = _branch_data(rob, symbols, mod)
    K, n2 = F.shape
    n = n2 + extra
    socs, lin_G, lin_h = [], [], []

    def pad(v):
        return np.concatenate([v, np.zeros(extra)])

    for i in range(K):
        d = rob.delta[i]
        # branch 1: delta ||D1 w2|| <= -(g - t f)^T w2 - t thr
        # branch 2: delta ||D2 w2|| <=  (g + t f)^T w2 - t thr
        for cvec, D in ((-(G[i] - t * F[i]), D1), (G[i] + t * F[i], D2)):
            cfull = pad(cvec)
            dconst = -t * thr[i]
            if thr_col is not None:
                cfull[thr_col] = dconst
                dconst = 0.0
            if d > 0:
                A = np.hstack([d * D, np.zeros((n2, extra))])
                socs.append(conic.SOC(A, np.zeros(n2), cfull, dconst))
            else:
                lin_G.append(-cfull)
                lin_h.append(dconst)
    return socs, lin_G, lin_h, n


def worst_case_margin(w, rob: RobustScenario, symbols: SymbolFrame, gamma, n0: float,
                      mod: ModulationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form worst case of both sector branches for every user.

    Returns ``(margins, errors)``: ``margins[i, b]`` is minus the worst-case
    left side of branch ``b`` (non-negative when met for every admissible
    error), and ``errors[i, b]`` is the complex channel error of norm
    ``delta_i`` that attains it, in the unrotated channel frame.
    """
    F, G, D1, D2, t = _branch_data(rob, symbols, mod)
    K, N = rob.H_hat.shape
    thr = np.sqrt(np.broadcast_to(np.asarray(gamma, dtype=float), (K,)) * n0)
    w2 = w_to_w2(w)
    phi = symbols.phases
    unrot = np.exp(-1j * (phi[0] - phi))
    margins = np.empty((K, 2))
    errors = np.zeros((K, 2, N), dtype=complex)
    for b, (D, sgn) in enumerate(((D1, 1.0), (D2, -1.0))):
        v = D @ w2  # w1 - t w2 or w1 + t w2
        nv = np.linalg.norm(v)
        lhs = sgn * (F @ v) + rob.delta * nv + t * thr
        margins[:, b] = -lhs
        if nv > 0:
            e_lift = sgn * v / nv  # direction maximizing sgn * e^T v
            e_rot = e_lift[:N] + 1j * e_lift[N:]
            errors[:, b, :] = rob.delta[:, None] * e_rot[None, :] * unrot[:, None]
    return margins, errors


def sampled_margin(w, rob: RobustScenario, symbols: SymbolFrame, gamma, n0: float,
                   mod: ModulationSpec, errors: np.ndarray) -> np.ndarray:
    """Branch margins with explicit channel errors ``errors[s, i]`` on the estimates.

    Returns an ``(S, K, 2)`` array; the true channel is ``h^_i + errors[s, i]``.
    """
    K = rob.H_hat.shape[0]
    thr = np.sqrt(np.broadcast_to(np.asarray(gamma, dtype=float), (K,)) * n0)
    phi = symbols.phases
    rot = np.exp(1j * (phi[0] - phi))
    z = ((rob.H_hat[None] + errors) * rot[None, :, None]) @ np.asarray(w, dtype=complex)
    t = mod.tan_theta
    m1 = -(z.imag - t * z.real + t * thr)
    m2 = -(-z.imag - t * z.real + t * thr)
    return np.stack([m1, m2], axis=-1)


def solve_robust_powermin(rob: RobustScenario, symbols: SymbolFrame, gamma, n0: float,
                          mod: ModulationSpec,
                          options: conic.SolverOptions | None = None) -> RobustSolution:
    """Minimum ``||w||^2`` meeting both robust branches for every user."""
    t0 = time.perf_counter()
    K, N = rob.H_hat.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    thr = np.sqrt(gamma * n0)
    socs, lin_G, lin_h, n = _socs(rob, symbols, mod, thr)
    G = np.array(lin_G) if lin_G else None
    h = np.array(lin_h) if lin_h else None
    prob = conic.ConicProblem(q=np.zeros(n), G=G, h=h, socs=socs)
    sol = conic.solve(prob, options)
    return _finish(sol, rob, symbols, gamma, n0, mod, t0, 2 * N)


def _finish(sol, rob, symbols, gamma, n0, mod, t0, n2) -> RobustSolution:
    status = _outcome(sol.status)
    diag = {"conic_status": sol.status.value, "residuals": sol.residuals}
    if status is not Outcome.FEASIBLE:
        return RobustSolution(None, np.inf, status, None, sol.iterations, time.perf_counter() - t0, diag)
    w = w2_to_w(sol.x[:n2])
    margins, _ = worst_case_margin(w, rob, symbols, gamma, n0, mod)
    return RobustSolution(w, float(np.vdot(w, w).real), status, margins, sol.iterations,
                          time.perf_counter() - t0, diag)


def solve_robust_balance(rob: RobustScenario, symbols: SymbolFrame, n0: float, power: float,
                         mod: ModulationSpec,
                         options: conic.SolverOptions | None = None) -> tuple[float, RobustSolution]:
    """Largest common target robustly reachable with ``||w||^2 <= power``.

    Variables ``(w2, s)``, ``s = sqrt(Gamma_t)``; maximizes ``s``. Returns ``0``
    and an infeasible solution when no positive target is robustly reachable.
    """
    if power <= 0:
        raise ValueError("power budget must be positive")
    t0 = time.perf_counter()
    K, N = rob.H_hat.shape
    n2 = 2 * N
    unit = np.full(K, np.sqrt(n0))  # threshold per unit of s
    socs, lin_G, lin_h, n = _socs(rob, symbols, mod, unit, extra=1, thr_col=n2)
    socs.append(conic.SOC(np.eye(n2, n), np.zeros(n2), np.zeros(n), np.sqrt(power)))
    lin_G.append(-np.eye(1, n, n2)[0])
    lin_h.append(0.0)
    q = np.zeros(n)
    q[n2] = -1.0
    prob = conic.ConicProblem(q=q, G=np.array(lin_G), h=np.array(lin_h), socs=socs, quad=np.zeros(n))
    sol = conic.solve(prob, options)
    if sol.status is not conic.Status.OPTIMAL:
        return 0.0, RobustSolution(None, np.inf, _outcome(sol.status), None, sol.iterations,
                                   time.perf_counter() - t0, {"conic_status": sol.status.value})
    s = max(float(sol.x[n2]), 0.0)
    bound = np.sqrt(power / n0) * float(np.max(np.linalg.norm(rob.H_hat, axis=1) + rob.delta))
    if s <= ZERO_TARGET * bound:
        return 0.0, RobustSolution(None, np.inf, Outcome.INFEASIBLE, None, sol.iterations,
                                   time.perf_counter() - t0, {"conic_status": sol.status.value, "sqrt_target": s})
    gamma_t = s * s
    return gamma_t, _finish(sol, rob, symbols, np.full(K, gamma_t), n0, mod, t0, n2)
