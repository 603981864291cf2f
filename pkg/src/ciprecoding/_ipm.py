"""Compiled core of the homogeneous self-dual interior point method.

Standard form::

    minimize c^T x  s.t.  A x = b,  G x + s = h,  s in K
    K = R_+^l x Q^{d_1} x ... x Q^{d_J}

Cone rows are laid out orthant first, then each second-order cone as a
contiguous block starting at ``soc_start[j]`` of length ``soc_dim[j]``.
The Nesterov-Todd scaling is kept in operator form: orthant ratios ``d``
and, per cone block, a scale ``beta_j`` and a unit hyperbolic vector
``wbar`` stored in the block's rows.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OPTIMAL = 0
PRIMAL_INFEASIBLE = 1
DUAL_INFEASIBLE = 2
MAX_ITERATIONS = 3


@njit(cache=True, error_model="numpy")
def _unit(m, l, soc_start):
    e = np.zeros(m)
    e[:l] = 1.0
    for j in range(soc_start.size):
        e[soc_start[j]] = 1.0
    return e


@njit(cache=True, error_model="numpy")
def _tail_norm(u, a, d):
    acc = 0.0
    for k in range(a + 1, a + d):
        acc += u[k] * u[k]
    return np.sqrt(acc)


@njit(cache=True, error_model="numpy")
def _min_eig(u, l, soc_start, soc_dim):
    v = np.inf
    for i in range(l):
        if u[i] < v:
            v = u[i]
    for j in range(soc_start.size):
        a = soc_start[j]
        t = u[a] - _tail_norm(u, a, soc_dim[j])
        if t < v:
            v = t
    return v


@njit(cache=True, error_model="numpy")
def _prod(u, v, l, soc_start, soc_dim):
    out = np.empty(u.size)
    for i in range(l):
        out[i] = u[i] * v[i]
    for j in range(soc_start.size):
        a, d = soc_start[j], soc_dim[j]
        acc = 0.0
        for k in range(a, a + d):
            acc += u[k] * v[k]
        out[a] = acc
        for k in range(a + 1, a + d):
            out[k] = u[a] * v[k] + v[a] * u[k]
    return out


@njit(cache=True, error_model="numpy")
def _div(lam, d_, l, soc_start, soc_dim):
    """Solve ``lam o u = d_`` for ``u``."""
    out = np.empty(lam.size)
    for i in range(l):
        out[i] = d_[i] / lam[i]
    for j in range(soc_start.size):
        a, d = soc_start[j], soc_dim[j]
        l0 = lam[a]
        nl1 = _tail_norm(lam, a, d)
        det = (l0 - nl1) * (l0 + nl1)
        acc = 0.0
        for k in range(a + 1, a + d):
            acc += lam[k] * d_[k]
        u0 = (l0 * d_[a] - acc) / det
        out[a] = u0
        for k in range(a + 1, a + d):
            out[k] = (d_[k] - u0 * lam[k]) / l0
    return out


@njit(cache=True, error_model="numpy")
def _max_step(lam, dv, l, soc_start, soc_dim):
    """Largest ``a`` with ``lam + a dv`` in the cone (``inf`` if unbounded)."""
    amax = np.inf
    for i in range(l):
        if dv[i] < 0:
            r = -lam[i] / dv[i]
            if r < amax:
                amax = r
    for j in range(soc_start.size):
        a, d = soc_start[j], soc_dim[j]
        l0, d0 = lam[a], dv[a]
        nl1 = _tail_norm(lam, a, d)
        qc = (l0 - nl1) * (l0 + nl1)
        if qc <= 0.0:
            return 0.0
        dd = 0.0
        ld = 0.0
        for k in range(a + 1, a + d):
            dd += dv[k] * dv[k]
            ld += lam[k] * dv[k]
        qa = d0 * d0 - dd
        qb = l0 * d0 - ld
        # (l0 + t d0)^2 - ||l1 + t d1||^2 = qa t^2 + 2 qb t + qc
        if abs(qa) < 1e-300:
            if qb < 0:
                r = -qc / (2 * qb)
                if r < amax:
                    amax = r
        else:
            disc = qb * qb - qa * qc
            if disc >= 0:
                sq = np.sqrt(disc)
                if qb >= 0:
                    r1 = (-qb - sq) / qa
                else:
                    r1 = (-qb + sq) / qa
                if 0 < r1 < amax:
                    amax = r1
                if r1 != 0:
                    r2 = qc / (qa * r1)
                    if 0 < r2 < amax:
                        amax = r2
        if d0 < 0:
            r = -l0 / d0
            if r < amax:
                amax = r
    return amax


@njit(cache=True, error_model="numpy")
def _nt_scaling(s, z, l, soc_start, soc_dim):
    m = s.size
    dlin = np.empty(l)
    for i in range(l):
        dlin[i] = np.sqrt(s[i] / z[i])
    wbar = np.zeros(m)
    beta = np.empty(soc_start.size)
    for j in range(soc_start.size):
        a, d = soc_start[j], soc_dim[j]
        ns1 = _tail_norm(s, a, d)
        nz1 = _tail_norm(z, a, d)
        ns = np.sqrt(max((s[a] - ns1) * (s[a] + ns1), 1e-300))
        nz = np.sqrt(max((z[a] - nz1) * (z[a] + nz1), 1e-300))
        sz = 0.0
        for k in range(a, a + d):
            sz += (s[k] / ns) * (z[k] / nz)
        g = np.sqrt(max((1.0 + sz) / 2.0, 1e-300))
        wbar[a] = (s[a] / ns + z[a] / nz) / (2 * g)
        for k in range(a + 1, a + d):
            wbar[k] = (s[k] / ns - z[k] / nz) / (2 * g)
        beta[j] = np.sqrt(ns / nz)
    return dlin, wbar, beta


@njit(cache=True, error_model="numpy")
def _apply_w(u, dlin, wbar, beta, l, soc_start, soc_dim, inverse):
    """``W u`` (or ``W^{-1} u``); ``W`` is symmetric."""
    out = np.empty(u.size)
    for i in range(l):
        out[i] = u[i] / dlin[i] if inverse else u[i] * dlin[i]
    for j in range(soc_start.size):
        a, d = soc_start[j], soc_dim[j]
        w0 = wbar[a]
        sgn = -1.0 if inverse else 1.0
        # W u = beta [w0 u0 + w1.u1 ; u0 w1 + u1 + (w1.u1)/(1+w0) w1]
        # W^{-1} = (1/beta) J Wbar J
        u0 = u[a]
        wu = 0.0
        for k in range(a + 1, a + d):
            wu += wbar[k] * u[k]
        wu *= sgn
        sc = 1.0 / beta[j] if inverse else beta[j]
        out[a] = sc * (w0 * u0 + wu)
        coef = u0 + wu / (1.0 + w0)
        for k in range(a + 1, a + d):
            out[k] = sc * (u[k] + sgn * coef * wbar[k])
    return out


@njit(cache=True, error_model="numpy")
def _scale_rows(G, dlin, wbar, beta, l, soc_start, soc_dim, inverse):
    out = np.empty_like(G)
    for col in range(G.shape[1]):
        out[:, col] = _apply_w(np.ascontiguousarray(G[:, col]), dlin, wbar, beta, l,
                               soc_start, soc_dim, inverse)
    return out


@njit(cache=True, error_model="numpy")
def _lu(M):
    n = M.shape[0]
    LU = M.copy()
    piv = np.arange(n)
    for k in range(n):
        p = k
        best = abs(LU[k, k])
        for i in range(k + 1, n):
            if abs(LU[i, k]) > best:
                best = abs(LU[i, k])
                p = i
        if p != k:
            for jj in range(n):
                tmp = LU[k, jj]
                LU[k, jj] = LU[p, jj]
                LU[p, jj] = tmp
            tmpi = piv[k]
            piv[k] = piv[p]
            piv[p] = tmpi
        pivot = LU[k, k]
        if pivot == 0.0:
            pivot = 1e-300
            LU[k, k] = pivot
        for i in range(k + 1, n):
            f = LU[i, k] / pivot
            LU[i, k] = f
            if f != 0.0:
                for jj in range(k + 1, n):
                    LU[i, jj] -= f * LU[k, jj]
    return LU, piv


@njit(cache=True, error_model="numpy")
def _lu_solve(LU, piv, r):
    n = r.size
    x = np.empty(n)
    for i in range(n):
        x[i] = r[piv[i]]
    for i in range(n):
        acc = x[i]
        for k in range(i):
            acc -= LU[i, k] * x[k]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= LU[i, k] * x[k]
        x[i] = acc / LU[i, i]
    return x


@njit(cache=True, error_model="numpy")
def _kkt_factor(Gs, A, reg):
    n = Gs.shape[1]
    p = A.shape[0]
    K = np.zeros((n + p, n + p))
    K[:n, :n] = np.dot(Gs.T, Gs)
    for i in range(n):
        K[i, i] += reg
    K[:n, n:] = A.T
    K[n:, :n] = A
    for i in range(p):
        K[n + i, n + i] -= reg
    return _lu(K)


@njit(cache=True, error_model="numpy")
def _kkt_solve(LU, piv, A, G, Gs, dlin, wbar, beta, l, soc_start, soc_dim, r1, r2, r3, refine):
    """Solve ``A^T dy + G^T dz = r1, A dx = r2, G dx - W^T W dz = r3``."""
    n = G.shape[1]
    p = A.shape[0]
    dx = np.zeros(n)
    dy = np.zeros(p)
    dz = np.zeros(G.shape[0])
    e1, e2, e3 = r1.copy(), r2.copy(), r3.copy()
    for _ in range(refine + 1):
        r3t = _apply_w(e3, dlin, wbar, beta, l, soc_start, soc_dim, True)
        rhs = np.empty(n + p)
        rhs[:n] = e1 + np.dot(Gs.T, r3t)
        rhs[n:] = e2
        sol = _lu_solve(LU, piv, rhs)
        cx = sol[:n]
        cy = sol[n:]
        czt = np.dot(Gs, cx) - r3t
        cz = _apply_w(czt, dlin, wbar, beta, l, soc_start, soc_dim, True)
        dx += cx
        dy += cy
        dz += cz
        wz = _apply_w(_apply_w(dz, dlin, wbar, beta, l, soc_start, soc_dim, False),
                      dlin, wbar, beta, l, soc_start, soc_dim, False)
        e1 = r1 - np.dot(A.T, dy) - np.dot(G.T, dz)
        e2 = r2 - np.dot(A, dx)
        e3 = r3 - (np.dot(G, dx) - wz)
    return dx, dy, dz


@njit(cache=True, error_model="numpy")
def _norm_inf(v):
    r = 0.0
    for i in range(v.size):
        a = abs(v[i])
        if a > r:
            r = a
    return r


@njit(cache=True, error_model="numpy")
def ipm(c, A, b, G, h, l, soc_start, soc_dim, tol_feas, reltol, tol_gap, feastol_cert,
        max_iters, frac, reg):
    n = c.size
    p = A.shape[0]
    m = G.shape[0]
    degree = l + soc_start.size
    e = _unit(m, l, soc_start)
    resx0 = max(1.0, np.sqrt(np.dot(c, c)))
    resy0 = max(1.0, np.sqrt(np.dot(b, b))) if p > 0 else 1.0
    resz0 = max(1.0, np.sqrt(np.dot(h, h)))

    # initial point from the identity-scaled KKT system
    ones = np.ones(l)
    wb0 = e.copy()
    bt0 = np.ones(soc_start.size)
    LU, piv = _kkt_factor(G, A, reg)
    x, y, zt = _kkt_solve(LU, piv, A, G, G, ones, wb0, bt0, l, soc_start, soc_dim,
                          np.zeros(n), b, h, 1)
    s = -zt
    _, _, z = _kkt_solve(LU, piv, A, G, G, ones, wb0, bt0, l, soc_start, soc_dim,
                         -c, np.zeros(p), np.zeros(m), 1)
    a = -_min_eig(s, l, soc_start, soc_dim)
    if a >= -1e-8 * max(1.0, np.sqrt(np.dot(s, s))):
        s = s + (1.0 + a) * e
    a = -_min_eig(z, l, soc_start, soc_dim)
    if a >= -1e-8 * max(1.0, np.sqrt(np.dot(z, z))):
        z = z + (1.0 + a) * e
    tau = 1.0
    kappa = 1.0

    status = MAX_ITERATIONS
    best_score = np.inf
    bx, by_, bz, bs, btau = x.copy(), y.copy(), z.copy(), s.copy(), tau
    stats = np.full(5, np.inf)  # pres, dres, gap, relgap, certificate residual
    bstats = stats.copy()
    it = 0
    for it in range(max_iters + 1):
        hrx = np.dot(A.T, y) + np.dot(G.T, z)
        hry = -np.dot(A, x)
        hrz = s + np.dot(G, x)
        rx = hrx + c * tau
        ry = hry + b * tau
        rz = hrz - h * tau
        cx = np.dot(c, x)
        by = np.dot(b, y)
        hz = np.dot(h, z)
        rt = kappa + cx + by + hz
        gap = np.dot(s, z)
        mu = (gap + tau * kappa) / (degree + 1)

        pcost = cx / tau
        dcost = -(by + hz) / tau
        pres = max(_norm_inf(ry), _norm_inf(rz)) / tau
        dres = _norm_inf(rx) / tau
        ngap = gap / (tau * tau)
        relgap = ngap / max(max(abs(pcost), abs(dcost)), 1e-300)
        stats[0], stats[1], stats[2], stats[3] = pres, dres, ngap, relgap
        score = max(pres, dres) + ngap
        if score < best_score:
            best_score = score
            bx, by_, bz, bs, btau = x.copy(), y.copy(), z.copy(), s.copy(), tau
            bstats = stats.copy()

        if pres <= tol_feas and dres <= tol_feas and (ngap <= tol_gap or relgap <= reltol):
            status = OPTIMAL
            break
        if hz + by < 0:
            pinf = np.sqrt(np.dot(hrx, hrx)) / resx0 / -(hz + by)
            if pinf <= feastol_cert:
                stats[4] = pinf
                status = PRIMAL_INFEASIBLE
                break
        if cx < 0:
            dinf = max(np.sqrt(np.dot(hry, hry)) / resy0, np.sqrt(np.dot(hrz, hrz)) / resz0) / -cx
            if dinf <= feastol_cert:
                stats[4] = dinf
                status = DUAL_INFEASIBLE
                break
        if it == max_iters:
            break

        dlin, wbar, beta = _nt_scaling(s, z, l, soc_start, soc_dim)
        lam = _apply_w(z, dlin, wbar, beta, l, soc_start, soc_dim, False)
        Gs = _scale_rows(G, dlin, wbar, beta, l, soc_start, soc_dim, True)
        LU, piv = _kkt_factor(Gs, A, reg)
        x1, y1, z1 = _kkt_solve(LU, piv, A, G, Gs, dlin, wbar, beta, l, soc_start, soc_dim,
                                -c, b, h, 1)
        denom = np.dot(c, x1) + np.dot(b, y1) + np.dot(h, z1) - kappa / tau

        # predictor (eta = 1), then corrector (eta = 1 - sigma)
        ds = _prod(lam, lam, l, soc_start, soc_dim)
        dk = tau * kappa
        eta = 1.0
        sigma = 0.0
        for phase in range(2):
            wd = _apply_w(_div(lam, ds, l, soc_start, soc_dim), dlin, wbar, beta, l,
                          soc_start, soc_dim, False)
            x0, y0, z0 = _kkt_solve(LU, piv, A, G, Gs, dlin, wbar, beta, l, soc_start, soc_dim,
                                    -eta * rx, eta * ry, -eta * rz + wd, 1)
            dtau = (-eta * rt + dk / tau - (np.dot(c, x0) + np.dot(b, y0) + np.dot(h, z0))) / denom
            dx = x0 + dtau * x1
            dy = y0 + dtau * y1
            dz = z0 + dtau * z1
            dsv = -eta * rz - np.dot(G, dx) + h * dtau
            dst = _apply_w(dsv, dlin, wbar, beta, l, soc_start, soc_dim, True)
            dzt = _apply_w(dz, dlin, wbar, beta, l, soc_start, soc_dim, False)
            dkappa = -(dk + kappa * dtau) / tau
            amax = min(_max_step(lam, dst, l, soc_start, soc_dim),
                       _max_step(lam, dzt, l, soc_start, soc_dim))
            if dtau < 0:
                amax = min(amax, -tau / dtau)
            if dkappa < 0:
                amax = min(amax, -kappa / dkappa)
            if phase == 0:
                a_aff = min(1.0, amax)
                sigma = (1.0 - a_aff) ** 3
                eta = 1.0 - sigma
                ds = ds + _prod(dst, dzt, l, soc_start, soc_dim) - sigma * mu * e
                dk = tau * kappa + dtau * dkappa - sigma * mu

        step = min(1.0, frac * amax)
        if not np.isfinite(step) or step < 1e-12:
            break
        x = x + step * dx
        y = y + step * dy
        z = z + step * dz
        s = s + step * dsv
        tau = tau + step * dtau
        kappa = kappa + step * dkappa
        for v in (s, z):
            me = _min_eig(v, l, soc_start, soc_dim)
            if me <= 0:
                v += (1e-14 * max(1.0, np.sqrt(np.dot(v, v))) - me) * e

    if status == MAX_ITERATIONS:
        x, y, z, s, tau = bx, by_, bz, bs, btau
        stats = bstats
    return status, x, y, z, s, tau, kappa, it, stats
