"""Compiled inner loops of the active-set NPMLE solver.

Scalar re-statements of the segment integrals in :mod:`lcmartingale.pwl`;
the public numpy versions remain the reference used by the optimality
certificate.
"""
import math

import numpy as np
from numba import njit

from .pwl import SLOPE_SWITCH, _A_COEF, _SERIES_SWITCH

_C1 = np.array([c[0] for c in _A_COEF])
_C2 = np.array([c[1] for c in _A_COEF])


@njit(cache=True)
def _unit(d):
    # a_k = int_0^1 u^k e^{d u} du for d <= 0
    if -d <= SLOPE_SWITCH:
        a0 = 1.0 + d * (0.5 + d * (1.0 / 6.0 + d / 24.0))
    else:
        a0 = math.expm1(d) / d
    if -d < _SERIES_SWITCH:
        a1 = 0.0
        a2 = 0.0
        for i in range(_C1.size):
            a1 = a1 * d + _C1[i]
            a2 = a2 * d + _C2[i]
    else:
        e = math.exp(d)
        d2 = d * d
        a1 = (e * (d - 1.0) + 1.0) / d2
        a2 = (e * (d2 - 2.0 * d + 2.0) - 2.0) / (d2 * d)
    return a0, a1, a2


@njit(cache=True)
def seg_moments(r, s):
    if s <= r:
        a0, a1, a2 = _unit(s - r)
        sc = math.exp(r)
        return sc * a0, sc * a1, sc * a2, sc * (a0 - a1), sc * (a0 - 2.0 * a1 + a2)
    a0, a1, a2 = _unit(r - s)
    sc = math.exp(s)
    return sc * a0, sc * (a0 - a1), sc * (a0 - 2.0 * a1 + a2), sc * a1, sc * a2


@njit(cache=True)
def seg_mass(r, s):
    if s <= r:
        return math.exp(r) * _unit(s - r)[0]
    return math.exp(s) * _unit(r - s)[0]


@njit(cache=True)
def _aggregate_weights(x, w, tk):
    k = tk.size
    wt = np.zeros(k)
    s = 0
    for i in range(x.size):
        while s < k - 2 and x[i] >= tk[s + 1]:
            s += 1
        lam = (x[i] - tk[s]) / (tk[s + 1] - tk[s])
        wt[s] += w[i] * (1.0 - lam)
        wt[s + 1] += w[i] * lam
    return wt


@njit(cache=True)
def _objective(tk, wt, psi):
    v = 0.0
    for j in range(psi.size):
        v += wt[j] * psi[j]
    for j in range(psi.size - 1):
        v -= (tk[j + 1] - tk[j]) * seg_mass(psi[j], psi[j + 1])
    return v


@njit(cache=True)
def _newton(tk, wt, psi, max_steps):
    k = psi.size
    psi = psi.copy()
    value = _objective(tk, wt, psi)
    grad = np.empty(k)
    diag = np.empty(k)
    off = np.empty(k - 1)
    cp = np.empty(k)
    step = np.empty(k)
    trial = np.empty(k)
    for _ in range(max_steps):
        for j in range(k):
            grad[j] = wt[j]
            diag[j] = 0.0
        for j in range(k - 1):
            g = tk[j + 1] - tk[j]
            m0, m1, m2, r1, r2 = seg_moments(psi[j], psi[j + 1])
            grad[j] -= g * r1
            grad[j + 1] -= g * m1
            diag[j] += g * r2
            diag[j + 1] += g * m2
            off[j] = g * (m1 - m2)
        # Symmetric tridiagonal solve (Thomas); the matrix is positive definite.
        denom = diag[0]
        cp[0] = off[0] / denom if k > 1 else 0.0
        step[0] = grad[0] / denom
        for j in range(1, k):
            denom = diag[j] - off[j - 1] * cp[j - 1]
            if j < k - 1:
                cp[j] = off[j] / denom
            step[j] = (grad[j] - off[j - 1] * step[j - 1]) / denom
        for j in range(k - 2, -1, -1):
            step[j] -= cp[j] * step[j + 1]
        dec = 0.0
        for j in range(k):
            dec += grad[j] * step[j]
        if not math.isfinite(dec):
            break
        if dec <= 1e-14:
            for j in range(k):
                psi[j] += step[j]
            break
        t = 1.0
        accepted = False
        while t >= 1e-12:
            for j in range(k):
                trial[j] = psi[j] + t * step[j]
            tv = _objective(tk, wt, trial)
            if tv >= value + 0.25 * t * dec:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        psi[:] = trial
        value = tv
    return psi


@njit(cache=True)
def _kinks(tk, psi):
    k = psi.size
    c = np.empty(max(k - 2, 0))
    smax = 0.0
    prev = (psi[1] - psi[0]) / (tk[1] - tk[0])
    smax = abs(prev)
    for j in range(1, k - 1):
        cur = (psi[j + 1] - psi[j]) / (tk[j + 1] - tk[j])
        c[j - 1] = cur - prev
        smax = max(smax, abs(cur))
        prev = cur
    return c, smax


@njit(cache=True)
def _directional(x, tk, psi, integrated_fn):
    m = x.size
    k = tk.size
    out = np.empty(m)
    cum = 0.0
    icum = 0.0
    s = 0
    for i in range(m):
        while s < k - 2 and x[i] >= tk[s + 1]:
            g = tk[s + 1] - tk[s]
            m0, _, _, r1, _ = seg_moments(psi[s], psi[s + 1])
            icum += cum * g + g * g * r1
            cum += g * m0
            s += 1
        h = x[i] - tk[s]
        phi = psi[s] + h / (tk[s + 1] - tk[s]) * (psi[s + 1] - psi[s])
        _, _, _, b1, _ = seg_moments(psi[s], phi)
        out[i] = icum + cum * h + h * h * b1 - integrated_fn[i]
    return out


@njit(cache=True)
def active_set(x, w, knots0, psi0, add_tol, max_iter):
    """Return ``(knot_indices, knot_values, converged, iterations)``."""
    m = x.size
    cw = np.cumsum(w)
    integrated_fn = np.zeros(m)
    for i in range(1, m):
        integrated_fn[i] = integrated_fn[i - 1] + cw[i - 1] * (x[i] - x[i - 1])

    K = knots0.copy()
    psi = psi0.copy()
    tk = x[K]
    wt = _aggregate_weights(x, w, tk)
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        target = _newton(tk, wt, psi, 100)
        c, smax = _kinks(tk, target)
        kink_tol = 1e-9 * (1.0 + smax)
        bad = False
        hard = False
        for j in range(c.size):
            if c[j] > -kink_tol:
                bad = True
            if c[j] > kink_tol:
                hard = True
        if bad:
            keep = np.ones(K.size, dtype=np.bool_)
            if hard:
                cur, _ = _kinks(tk, psi)
                tmin = np.inf
                jmin = 0
                for j in range(c.size):
                    if c[j] > 0.0:
                        r = cur[j] / (cur[j] - c[j])
                        if r < tmin:
                            tmin = r
                            jmin = j
                t = min(max(tmin, 0.0), 1.0)
                psi = psi + t * (target - psi)
                after, _ = _kinks(tk, psi)
                for j in range(after.size):
                    if after[j] > -kink_tol:
                        keep[j + 1] = False
                keep[jmin + 1] = False
            else:
                psi = target
                for j in range(c.size):
                    if c[j] > -kink_tol:
                        keep[j + 1] = False
            K = K[keep]
            psi = psi[keep]
            tk = x[K]
            wt = _aggregate_weights(x, w, tk)
            continue
        psi = target
        d = _directional(x, tk, psi, integrated_fn)
        best = -np.inf
        jbest = -1
        pos = 0
        for i in range(m):
            if pos < K.size and K[pos] == i:
                pos += 1
                continue
            if d[i] > best:
                best = d[i]
                jbest = i
        if not best > add_tol:
            converged = True
            break
        p = np.searchsorted(K, jbest)
        val = psi[p - 1] + (x[jbest] - tk[p - 1]) / (tk[p] - tk[p - 1]) * (psi[p] - psi[p - 1])
        newK = np.empty(K.size + 1, dtype=K.dtype)
        newpsi = np.empty(K.size + 1)
        newK[:p] = K[:p]
        newK[p] = jbest
        newK[p + 1:] = K[p:]
        newpsi[:p] = psi[:p]
        newpsi[p] = val
        newpsi[p + 1:] = psi[p:]
        K = newK
        psi = newpsi
        tk = x[K]
        wt = _aggregate_weights(x, w, tk)
    return K, psi, converged, it
