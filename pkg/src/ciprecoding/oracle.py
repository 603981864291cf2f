"""Exact solver for tiny linearly constrained least-norm problems.

``minimize 1/2 x^T D x + q^T x  s.t.  E x = e,  G x <= h`` with ``D`` diagonal
and positive. The optimum is the equality-constrained minimizer of some
active set, so trying every subset of inequality rows as equalities and
keeping the best feasible candidate gives the exact answer. The cost is
exponential in the number of inequality rows; it is meant for ground truth
on problems with about a dozen rows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass
class OracleResult:
    x: np.ndarray | None
    objective: float
    active: tuple[int, ...]
    candidates: int  # active sets whose KKT system was solved

    @property
    def feasible(self) -> bool:
        return self.x is not None


def active_set_qp(q, E=None, e=None, G=None, h=None, quad=None, tol: float = 1e-9,
                  max_rows: int = 16) -> OracleResult:
    """Enumerate active sets of ``G x <= h`` and keep the feasible minimizer.

    Returns an infeasible result (``x`` None, objective ``inf``) when no
    candidate satisfies every constraint within ``tol`` times the row scale.
    """
    q = np.asarray(q, dtype=float).ravel()
    n = q.size
    E = np.zeros((0, n)) if E is None else np.atleast_2d(np.asarray(E, dtype=float))
    e = np.zeros(0) if e is None else np.asarray(e, dtype=float).ravel()
    G = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    d = np.ones(n) if quad is None else np.asarray(quad, dtype=float).ravel()
    if np.any(d <= 0):
        raise ValueError("oracle needs a positive definite diagonal")
    m = G.shape[0]
    if m > max_rows:
        raise ValueError(f"{m} inequality rows is too many to enumerate")
    row_scale = 1.0 + np.abs(G).sum(axis=1) + np.abs(h)
    eq_scale = 1.0 + np.abs(E).sum(axis=1) + np.abs(e)
    best = OracleResult(None, np.inf, (), 0)
    max_active = max(0, n - np.linalg.matrix_rank(E)) if E.size else n
    count = 0
    for size in range(min(m, max_active) + 1):
        for S in itertools.combinations(range(m), size):
            A = np.vstack([E, G[list(S)]])
            b = np.concatenate([e, h[list(S)]])
            x = _eq_minimizer(d, q, A, b)
            count += 1
            if x is None:
                continue
            if np.any(np.abs(E @ x - e) > tol * eq_scale):
                continue
            if np.any(G @ x - h > tol * row_scale):
                continue
            obj = float(0.5 * np.dot(d * x, x) + q @ x)
            if obj < best.objective:
                best = OracleResult(x, obj, S, 0)
    best.candidates = count
    return best


def _eq_minimizer(d, q, A, b):
    """Minimizer of ``1/2 x^T D x + q^T x`` on ``A x = b``, or None if inconsistent."""
    if A.shape[0] == 0:
        return -q / d
    # x = D^-1 (A^T nu - q) with (A D^-1 A^T) nu = b + A D^-1 q
    Ad = A / d
    M = Ad @ A.T
    rhs = b + Ad @ q
    nu, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    x = (A.T @ nu - q) / d
    if np.linalg.norm(A @ x - b) > 1e-9 * (1.0 + np.linalg.norm(b)):
        return None
    return x
