"""Conventional SINR-constrained precoding, where all interference is harmful.

The SINR constraint ``|h_i^T t_i|^2 / (sum_{k!=i} |h_i^T t_k|^2 + N0) >= Gamma_i``
is phase invariant in ``t_i``, so fixing ``h_i^T t_i`` real turns it into the
second-order cone
``||[h_i^T t_1, ..., h_i^T t_K, sqrt(N0)]|| <= sqrt(1 + 1/Gamma_i) Re(h_i^T t_i)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .model import ChannelSet, Outcome


@dataclass
class ConventionalSolution:
    T: np.ndarray | None  # (K, N), row k is t_k
    power: float  # sum_k ||t_k||^2
    sinr: np.ndarray | None
    status: Outcome
    iterations: int = 0
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is Outcome.FEASIBLE


def achieved_sinr(H: np.ndarray, T: np.ndarray, n0: float) -> np.ndarray:
    """Per-user SINR with every cross term counted as interference."""
    R = np.abs(H @ T.T) ** 2  # R[i, k] = |h_i^T t_k|^2
    sig = np.diag(R).copy()
    return sig / (R.sum(axis=1) - sig + n0)


def _lift_rows(h: np.ndarray, K: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows giving Re and Im of ``h^T t_k`` from ``x = [Re t_1; Im t_1; ...]``."""
    N = h.shape[0]
    re = np.zeros(2 * N * K)
    im = np.zeros(2 * N * K)
    o = 2 * N * k
    re[o:o + N], re[o + N:o + 2 * N] = h.real, -h.imag
    im[o:o + N], im[o + N:o + 2 * N] = h.imag, h.real
    return re, im


def _unpack(x: np.ndarray, K: int, N: int) -> np.ndarray:
    X = x[: 2 * N * K].reshape(K, 2 * N)
    return X[:, :N] + 1j * X[:, N:]


def solve_conventional_powermin(channels: ChannelSet, gamma, n0: float,
                                options: conic.SolverOptions | None = None) -> ConventionalSolution:
    """Minimum ``sum_k ||t_k||^2`` meeting every SINR target."""
    t0 = time.perf_counter()
    H = channels.H
    K, N = H.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    n = 2 * N * K
    E = np.zeros((K, n))
    socs = []
    for i in range(K):
        rows = [_lift_rows(H[i], K, k) for k in range(K)]
        A = np.vstack([r for pair in rows for r in pair] + [np.zeros(n)])
        b = np.zeros(2 * K + 1)
        b[-1] = np.sqrt(n0)
        re_ii, im_ii = rows[i]
        socs.append(conic.SOC(A, b, np.sqrt(1.0 + 1.0 / gamma[i]) * re_ii, 0.0))
        E[i] = im_ii
    prob = conic.ConicProblem(q=np.zeros(n), E=E, e=np.zeros(K), socs=socs)
    sol = conic.solve(prob, options)
    diag = {"conic_status": sol.status.value, "residuals": sol.residuals}
    if sol.status is not conic.Status.OPTIMAL:
        status = Outcome.INFEASIBLE if sol.status is conic.Status.PRIMAL_INFEASIBLE else Outcome.FAILED
        return ConventionalSolution(None, np.inf, None, status, sol.iterations,
                                    time.perf_counter() - t0, diag)
    T = _unpack(sol.x, K, N)
    return ConventionalSolution(T, float(np.sum(np.abs(T) ** 2)), achieved_sinr(H, T, n0),
                                Outcome.FEASIBLE, sol.iterations, time.perf_counter() - t0, diag)


def balance_bracket(channels: ChannelSet, n0: float, power: float) -> tuple[float, float]:
    """Bounds on the balanced SINR.

    The upper bound is the interference-free matched filter of the weakest
    user. The lower bound is zero-forcing with a common SINR (0 when K > N).
    """
    H = channels.H
    K, N = H.shape
    hi = power * float(np.min(np.sum(np.abs(H) ** 2, axis=1))) / n0
    lo = 0.0
    if K <= N:
        gram = H.conj() @ H.T
        try:
            tr = float(np.trace(np.linalg.inv(gram)).real)
            if tr > 0:
                lo = min(power / (n0 * tr), hi)
        except np.linalg.LinAlgError:
            pass
    return lo, hi


def solve_conventional_balance(channels: ChannelSet, n0: float, power: float, tol: float = 1e-4,
                               options: conic.SolverOptions | None = None) -> float:
    """Largest common SINR whose conventional minimum power fits ``power``.

    Bisection on feasibility of the power-minimization problem; the interval
    is the bracket of ``balance_bracket`` and is halved geometrically once
    its lower end is positive. Stops at relative width ``tol``.
    """
    if power <= 0:
        raise ValueError("power budget must be positive")
    lo, hi = balance_bracket(channels, n0, power)

    def fits(g):
        sol = solve_conventional_powermin(channels, g, n0, options)
        return sol.feasible and sol.power <= power

    if lo <= 0.0:
        # no zero-forcing anchor: find a reachable target first
        g = hi
        while g > hi * 1e-12:
            g *= 0.1
            if fits(g):
                lo = g
                break
        else:
            return 0.0
        hi = min(hi, lo * 10.0)
    while hi - lo > tol * hi:
        mid = np.sqrt(lo * hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo
