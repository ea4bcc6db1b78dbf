"""Compiled Frank-Wolfe core over the convex hull of a finite atom set.

Maximizes G(s) = sum_j w_j g(s_j) with s = lam @ atoms, lam on the simplex.
Uses away steps so convergence is linear on polytopes, and an exact line
search (safeguarded Newton) on the concave restriction along each direction.

g codes: 0 = log, 1 = power s^(1-beta)/(1-beta).
"""

from __future__ import annotations

import numpy as np
from numba import njit

LOG = 0
POWER = 1


@njit(cache=True, error_model="numpy")
def _dg(s, kind, beta):
    if s <= 0.0:
        return np.inf
    if kind == LOG:
        return 1.0 / s
    return s ** (-beta)


@njit(cache=True, error_model="numpy")
def _d2g(s, kind, beta):
    if s <= 0.0:
        return -np.inf
    if kind == LOG:
        return -1.0 / (s * s)
    return -beta * s ** (-beta - 1.0)


@njit(cache=True, error_model="numpy")
def objective(s, w, kind, beta):
    total = 0.0
    for j in range(s.shape[0]):
        if w[j] > 0.0:
            if kind == LOG:
                total += w[j] * np.log(s[j])
            else:
                total += w[j] * s[j] ** (1.0 - beta) / (1.0 - beta)
    return total


@njit(cache=True, error_model="numpy")
def gradient(s, w, kind, beta):
    g = np.zeros(s.shape[0])
    for j in range(s.shape[0]):
        if w[j] > 0.0:
            g[j] = w[j] * _dg(s[j], kind, beta)
    return g


@njit(cache=True, error_model="numpy")
def _dphi(s, d, w, kind, beta, t):
    v = 0.0
    h = 0.0
    for j in range(s.shape[0]):
        if w[j] > 0.0 and d[j] != 0.0:
            x = s[j] + t * d[j]
            v += w[j] * _dg(x, kind, beta) * d[j]
            h += w[j] * _d2g(x, kind, beta) * d[j] * d[j]
    return v, h


@njit(cache=True, error_model="numpy")
def line_search(s, d, w, kind, beta, tmax):
    """Maximize G(s + t d) over t in [0, tmax]; G concave along d."""
    # stay inside the domain s_j > 0 for weighted coordinates
    tlim = np.inf
    for j in range(s.shape[0]):
        if w[j] > 0.0 and d[j] < 0.0:
            tlim = min(tlim, -s[j] / d[j])
    hi = tmax
    if tlim <= tmax:
        hi = tlim
        hi_open = True
    else:
        hi_open = False
        v, _ = _dphi(s, d, w, kind, beta, hi)
        if v >= 0.0:
            return hi
    lo = 0.0
    t = 0.5 * hi
    for _ in range(100):
        v, h = _dphi(s, d, w, kind, beta, t)
        if v > 0.0:
            lo = t
        else:
            hi = t
        if hi - lo <= 1e-16 * max(1.0, hi) or v == 0.0:
            break
        tn = t - v / h if h < 0.0 else -1.0
        if not (lo < tn < hi):
            tn = 0.5 * (lo + hi)
        if abs(tn - t) <= 1e-17 * max(1.0, t):
            t = tn
            break
        t = tn
    return t


@njit(cache=True, error_model="numpy")
def newton_face(lam, atoms, s, w, kind, beta):
    """One Newton step on the face spanned by the active atoms.

    Solves the equality-constrained quadratic model in the weights, then runs
    the exact line search along the resulting direction, stopping where the
    first weight reaches zero.  Returns the new weights, or the old ones when
    the step makes no progress.
    """
    act = np.flatnonzero(lam > 0.0)
    k = act.shape[0]
    if k < 2:
        return lam
    n = atoms.shape[1]
    A = np.empty((k, n))
    for a in range(k):
        A[a] = atoms[act[a]]
    gsc = np.zeros(n)
    hsc = np.zeros(n)
    for j in range(n):
        if w[j] > 0.0:
            gsc[j] = w[j] * _dg(s[j], kind, beta)
            hsc[j] = -w[j] * _d2g(s[j], kind, beta)
    grad = A @ gsc
    B = (A * hsc) @ A.T
    # KKT system of the quadratic model on the face, Jacobi-scaled; the
    # least-squares solution stays minimal where the active atoms are dependent
    dsc = np.ones(k)
    for a in range(k):
        if B[a, a] > 0.0:
            dsc[a] = 1.0 / np.sqrt(B[a, a])
    K = np.zeros((k + 1, k + 1))
    for a in range(k):
        for b in range(k):
            K[a, b] = dsc[a] * B[a, b] * dsc[b]
        K[a, k] = dsc[a]
        K[k, a] = dsc[a]
    rhs = np.zeros(k + 1)
    rhs[:k] = grad * dsc
    sol = np.linalg.lstsq(K, rhs, 1e-13)[0]
    d = sol[:k] * dsc
    tmax = 1.0
    for a in range(k):
        if d[a] < 0.0:
            tmax = min(tmax, lam[act[a]] / -d[a])
    if not tmax > 0.0:
        return lam
    ds = d @ A
    t = line_search(s, ds, w, kind, beta, tmax)
    if not t > 0.0:
        return lam
    new = lam.copy()
    for a in range(k):
        v = lam[act[a]] + t * d[a]
        new[act[a]] = v if v > 1e-15 else 0.0
    if t >= tmax:
        # the blocking weight leaves the face
        for a in range(k):
            if d[a] < 0.0 and lam[act[a]] / -d[a] <= tmax:
                new[act[a]] = 0.0
    new /= new.sum()
    return new


@njit(cache=True, error_model="numpy")
def solve(atoms, w, kind, beta, lam0, tol, max_iters, polish=True):
    """Away-step Frank-Wolfe, optionally followed on every iteration by a
    Newton step on the active face.  Returns (lam, s, gap, iterations)."""
    m = atoms.shape[0]
    n = atoms.shape[1]
    lam = lam0.copy()
    s = lam @ atoms
    gap = np.inf
    it = 0
    for it in range(max_iters):
        g = gradient(s, w, kind, beta)
        scores = atoms @ g
        fw = 0
        best = scores[0]
        for i in range(1, m):
            if scores[i] > best:
                best = scores[i]
                fw = i
        gs = 0.0
        for j in range(n):
            gs += g[j] * s[j]
        gap = best - gs
        if gap <= tol:
            return lam, s, gap, it
        aw = -1
        worst = np.inf
        for i in range(m):
            if lam[i] > 0.0 and scores[i] < worst:
                worst = scores[i]
                aw = i
        away_gap = gs - worst
        if gap >= away_gap or aw < 0 or lam[aw] >= 1.0:
            d = atoms[fw] - s
            t = line_search(s, d, w, kind, beta, 1.0)
            lam *= 1.0 - t
            lam[fw] += t
        else:
            d = s - atoms[aw]
            tmax = lam[aw] / (1.0 - lam[aw])
            t = line_search(s, d, w, kind, beta, tmax)
            lam *= 1.0 + t
            if t >= tmax:
                lam[aw] = 0.0
            else:
                lam[aw] -= t
        for i in range(m):
            if lam[i] < 1e-300:
                lam[i] = 0.0
        lam /= lam.sum()
        s = lam @ atoms
        if polish and t > 0.0:
            g = gradient(s, w, kind, beta)
            gs = 0.0
            for j in range(n):
                gs += g[j] * s[j]
            if (atoms @ g).max() - gs <= tol:
                return lam, s, (atoms @ g).max() - gs, it + 1
            trial = newton_face(lam, atoms, s, w, kind, beta)
            s_trial = trial @ atoms
            if objective(s_trial, w, kind, beta) >= objective(s, w, kind, beta):
                lam = trial
                s = s_trial
        if t == 0.0:
            # no progress possible at machine precision
            g = gradient(s, w, kind, beta)
            scores = atoms @ g
            gs = 0.0
            for j in range(n):
                gs += g[j] * s[j]
            gap = scores.max() - gs
            return lam, s, gap, it + 1
    g = gradient(s, w, kind, beta)
    gs = 0.0
    for j in range(n):
        gs += g[j] * s[j]
    gap = (atoms @ g).max() - gs
    return lam, s, gap, max_iters
