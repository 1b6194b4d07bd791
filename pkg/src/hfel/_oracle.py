"""Brute-force grid search for small groups, written independently of the solver.

For a fixed frequency vector the best bandwidth split is found by a
one-dimensional convex search over the common deadline ``t``: at a given
``t`` each device needs at least comm/(t - x) of the band, and the remaining
band is water-filled in proportion to sqrt(a).  Grid points whose cheap lower
bound cannot beat the incumbent are skipped; the result is still the exact
grid minimum.
"""

import math

import numpy as np
from numba import njit

_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_T_ITERS = 80


@njit(cache=True)
def _fastest_deadline(comm, x):
    # root of sum comm/(t - x) = 1; Newton from the right undershoots once, then climbs
    xm = x.max()
    t = xm + comm.sum()
    for _ in range(100):
        g = -1.0
        dg = 0.0
        for k in range(comm.shape[0]):
            d = t - x[k]
            g += comm[k] / d
            dg -= comm[k] / (d * d)
        step = g / dg
        tn = t - step
        if tn <= xm:
            tn = 0.5 * (t + xm)
        if abs(tn - t) <= 1e-15 * t:
            return max(tn, t)
        t = tn
    return t


@njit(cache=True)
def _split_energy(a, s, comm, x, t, beta):
    """Fill ``beta`` with the cheapest split meeting deadline ``t``; return sum a/beta."""
    n = a.shape[0]
    c = np.empty(n)
    ctot = 0.0
    for k in range(n):
        c[k] = comm[k] / (t - x[k])
        ctot += c[k]
    if ctot >= 1.0:
        for k in range(n):
            beta[k] = c[k] / ctot
    else:
        # breakpoints u_k = c_k / s_k, devices with s_k = 0 always sit at c_k
        brk = np.empty(n)
        for k in range(n):
            brk[k] = c[k] / s[k] if s[k] > 0.0 else np.inf
        idx = np.argsort(brk)
        u = 0.0
        free_s = 0.0
        tight_c = ctot
        for j in range(n):
            k = idx[j]
            if s[k] == 0.0:
                break
            free_s += s[k]
            tight_c -= c[k]
            u = (1.0 - tight_c) / free_s
            nxt = brk[idx[j + 1]] if j + 1 < n else np.inf
            if u <= nxt:
                break
        for k in range(n):
            beta[k] = max(c[k], s[k] * u)
    e = 0.0
    for k in range(n):
        e += a[k] / beta[k]
    return e


@njit(cache=True)
def best_split(a, comm, x, w, beta):
    """Minimum of sum a/beta + w * max(comm/beta + x) over the bandwidth simplex.

    Writes the minimizing shares into ``beta`` and returns the value.
    """
    n = a.shape[0]
    s = np.sqrt(a)
    t_lo = _fastest_deadline(comm, x)
    ssum = s.sum()
    if ssum == 0.0:
        _split_energy(a, s, comm, x, t_lo, beta)
        return w * t_lo
    t_hi = t_lo
    for k in range(n):
        if s[k] > 0.0:
            t_hi = max(t_hi, comm[k] * ssum / s[k] + x[k])
    if w == 0.0 or t_hi <= t_lo:
        e = _split_energy(a, s, comm, x, t_hi, beta)
        return e + w * t_hi
    lo = t_lo
    hi = t_hi
    m1 = lo + _GOLDEN * (hi - lo)
    m2 = hi - _GOLDEN * (hi - lo)
    h1 = _split_energy(a, s, comm, x, m1, beta) + w * m1
    h2 = _split_energy(a, s, comm, x, m2, beta) + w * m2
    for _ in range(_T_ITERS):
        if h1 <= h2:
            hi = m2
            m2 = m1
            h2 = h1
            m1 = lo + _GOLDEN * (hi - lo)
            h1 = _split_energy(a, s, comm, x, m1, beta) + w * m1
        else:
            lo = m1
            m1 = m2
            h1 = h2
            m2 = hi - _GOLDEN * (hi - lo)
            h2 = _split_energy(a, s, comm, x, m2, beta) + w * m2
        if hi - lo <= 1e-15 * hi:
            break
    best_t = lo
    best_h = _split_energy(a, s, comm, x, lo, beta) + w * lo
    for t in (m1, m2, hi):
        h = _split_energy(a, s, comm, x, t, beta) + w * t
        if h < best_h:
            best_h = h
            best_t = t
    return _split_energy(a, s, comm, x, best_t, beta) + w * best_t


@njit(cache=True)
def grid_minimum(a, b, comm, cyc, axes, w, start):
    """Exact minimum over the product grid ``axes`` (shape n x m).

    ``start`` is the index vector of a promising grid point; its value seeds
    the pruning bound.  Returns (value, index vector, exact evaluations).
    """
    n, m = axes.shape
    total = 1
    for _ in range(n):
        total *= m
    s = np.sqrt(a)
    ssum = s.sum()
    idx = np.zeros(n, dtype=np.int64)
    best_idx = start.copy()
    f = np.empty(n)
    x = np.empty(n)
    beta = np.empty(n)
    fcost = 0.0
    for k in range(n):
        f[k] = axes[k, start[k]]
        x[k] = cyc[k] / f[k]
        fcost += b[k] * f[k] * f[k]
    best = fcost + best_split(a, comm, x, w, beta)
    evals = 1
    for flat in range(total):
        r = flat
        for k in range(n - 1, -1, -1):
            idx[k] = r % m
            r //= m
        fcost = 0.0
        xmax = 0.0
        for k in range(n):
            f[k] = axes[k, idx[k]]
            x[k] = cyc[k] / f[k]
            fcost += b[k] * f[k] * f[k]
            xmax = max(xmax, x[k])
        # energy at least (sum sqrt a)^2 by Cauchy-Schwarz, deadline beyond every x
        lower = fcost + ssum * ssum + w * xmax
        if lower >= best:
            continue
        val = fcost + best_split(a, comm, x, w, beta)
        evals += 1
        if val < best:
            best = val
            best_idx[:] = idx
    return best, best_idx, evals
