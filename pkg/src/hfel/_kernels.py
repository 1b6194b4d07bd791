"""Compiled scalar kernels for the single-server allocation problem.

All routines work on the per-device constant arrays

    a     energy weight of uploading at full bandwidth (J)
    b     energy weight of computing, multiplies f**2 (J/Hz^2)
    comm  upload time at full bandwidth (s)
    cyc   cycles per edge iteration (L * c * |D|)
    fl/fu CPU frequency box (Hz)

and the scalar delay weight ``w``.  The group cost is

    sum(a/beta + b*f**2) + w * max(comm/beta + cyc/f)

subject to sum(beta) <= 1 and fl <= f <= fu.

The minimizer is found from the optimality conditions of the epigraph form:
for a deadline ``t`` and a bandwidth price ``phi`` every device solves its own
two-variable problem; ``phi`` is tuned so the band is exactly used and ``t``
so the deadline multipliers add up to ``w``.
"""

import math

import numpy as np
from numba import njit

_EPS = 2.220446049250313e-16
_MAX_ROOT_ITER = 200
_LOGPHI_MAX = 700.0  # exp() of this is still finite
_HUGE = 1e300

# Brent state layout: a, b, c, fa, fb, fc, d, e
_A, _B, _C, _FA, _FB, _FC, _D, _E = range(8)


@njit(cache=True)
def _brent_init(lo, hi, flo, fhi):
    s = np.empty(8)
    s[_A] = lo
    s[_B] = hi
    s[_C] = lo
    s[_FA] = flo
    s[_FB] = fhi
    s[_FC] = flo
    s[_D] = hi - lo
    s[_E] = hi - lo
    return s


@njit(cache=True)
def _brent_propose(s, xtol):
    """Advance Brent's method one step.

    Returns (x, done).  When ``done`` is False the caller must evaluate the
    function at ``x`` and store it in ``s[_FB]``.
    """
    if (s[_FB] > 0.0 and s[_FC] > 0.0) or (s[_FB] < 0.0 and s[_FC] < 0.0):
        s[_C] = s[_A]
        s[_FC] = s[_FA]
        s[_D] = s[_B] - s[_A]
        s[_E] = s[_D]
    if abs(s[_FC]) < abs(s[_FB]):
        s[_A] = s[_B]
        s[_B] = s[_C]
        s[_C] = s[_A]
        s[_FA] = s[_FB]
        s[_FB] = s[_FC]
        s[_FC] = s[_FA]
    a = s[_A]
    b = s[_B]
    c = s[_C]
    fa = s[_FA]
    fb = s[_FB]
    fc = s[_FC]
    tol1 = 2.0 * _EPS * abs(b) + 0.5 * xtol
    xm = 0.5 * (c - b)
    if abs(xm) <= tol1 or fb == 0.0:
        return b, True
    if abs(s[_E]) >= tol1 and abs(fa) > abs(fb):
        r0 = fb / fa
        if a == c:
            p = 2.0 * xm * r0
            q = 1.0 - r0
        else:
            q = fa / fc
            r = fb / fc
            p = r0 * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
            q = (q - 1.0) * (r - 1.0) * (r0 - 1.0)
        if p > 0.0:
            q = -q
        p = abs(p)
        if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(s[_E] * q)):
            s[_E] = s[_D]
            s[_D] = p / q
        else:
            s[_D] = xm
            s[_E] = xm
    else:
        s[_D] = xm
        s[_E] = xm
    s[_A] = b
    s[_FA] = fb
    if abs(s[_D]) > tol1:
        b += s[_D]
    else:
        b += tol1 if xm > 0.0 else -tol1
    s[_B] = b
    return b, False


@njit(cache=True)
def _xgrad(x, a, b, comm, cyc, t, phi):
    tx = t - x
    return -a / comm - 2.0 * b * cyc * cyc / (x * x * x) + phi * comm / (tx * tx)


@njit(cache=True)
def device_response(a, b, comm, cyc, fl, fu, t, phi):
    """Best (beta, f, tau) of one device for deadline ``t`` and bandwidth price ``phi``."""
    if a > 0.0:
        beta0 = math.sqrt(a / phi)
        if comm / beta0 + cyc / fl <= t:
            return beta0, fl, 0.0
    xl = cyc / fu
    xu = cyc / fl
    if xu - xl <= 0.0:
        x = xl
    elif _xgrad(xl, a, b, comm, cyc, t, phi) >= 0.0:
        x = xl
    elif xu < t and _xgrad(xu, a, b, comm, cyc, t, phi) <= 0.0:
        x = xu
    else:
        lo = xl
        hi = min(xu, t)
        # the gradient blows up at x -> t; start from the side that is safe
        x = 0.5 * (lo + hi)
        for _ in range(100):
            g = _xgrad(x, a, b, comm, cyc, t, phi)
            if g > 0.0:
                hi = x
            else:
                lo = x
            tx = t - x
            h = 6.0 * b * cyc * cyc / (x * x * x * x) + 2.0 * phi * comm / (tx * tx * tx)
            xn = x - g / h
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
            if abs(xn - x) <= 4.0 * _EPS * x or hi - lo <= 4.0 * _EPS * hi:
                x = xn
                break
            x = xn
    beta = comm / (t - x)
    tau = (phi * beta * beta - a) / comm
    if tau < 0.0:
        tau = 0.0
    return beta, cyc / x, tau


@njit(cache=True)
def _beta_excess(a, b, comm, cyc, fl, fu, t, logphi):
    phi = math.exp(logphi)
    s = 0.0
    for n in range(a.shape[0]):
        beta, f, tau = device_response(a[n], b[n], comm[n], cyc[n], fl[n], fu[n], t, phi)
        s += beta
    return s - 1.0


@njit(cache=True)
def price_for_deadline(a, b, comm, cyc, fl, fu, t, hint):
    """Bandwidth price at which the device responses exactly fill the band.

    ``hint`` is a previous price (or 0); it only affects the starting bracket.
    Returns (phi, iterations); iterations is -1 if the root search failed
    and -2 if no finite price fills the band (the deadline is too tight).
    """
    sa = 0.0
    for n in range(a.shape[0]):
        sa += math.sqrt(a[n])
    # responses never undercut sqrt(a/phi), so this price leaves excess >= 0
    floor = 2.0 * math.log(sa)
    lo = floor
    if hint > 0.0:
        lo = max(floor, math.log(hint) - 0.05)
    flo = _beta_excess(a, b, comm, cyc, fl, fu, t, lo)
    if flo <= 0.0:
        if lo == floor:
            return math.exp(lo), 0
        hi = lo
        fhi = flo
        step = 0.1
        lo = max(floor, hi - step)
        flo = _beta_excess(a, b, comm, cyc, fl, fu, t, lo)
        while flo < 0.0:
            hi = lo
            fhi = flo
            step *= 4.0
            lo = max(floor, hi - step)
            flo = _beta_excess(a, b, comm, cyc, fl, fu, t, lo)
            if lo == floor and flo <= 0.0:
                return math.exp(lo), 0
    else:
        step = 0.1 if hint > 0.0 else 1.0
        hi = lo + step
        fhi = _beta_excess(a, b, comm, cyc, fl, fu, t, hi)
        k = 0
        while fhi > 0.0:
            if hi >= _LOGPHI_MAX or k > 200:
                # the band cannot be filled at any price: deadline too tight
                return math.exp(_LOGPHI_MAX), -2
            lo = hi
            flo = fhi
            step *= 4.0
            hi = min(lo + step, _LOGPHI_MAX)
            fhi = _beta_excess(a, b, comm, cyc, fl, fu, t, hi)
            k += 1
    st = _brent_init(lo, hi, flo, fhi)
    for it in range(_MAX_ROOT_ITER):
        x, done = _brent_propose(st, 1e-15)
        if done:
            return math.exp(x), it
        st[_FB] = _beta_excess(a, b, comm, cyc, fl, fu, t, x)
    return math.exp(st[_B]), -1


@njit(cache=True)
def _delay_excess(comm, x, t):
    s = 0.0
    for n in range(comm.shape[0]):
        s += comm[n] / (t - x[n])
    return s - 1.0


@njit(cache=True)
def min_deadline(comm, x):
    """Smallest makespan of completion times comm/beta + x under sum(beta) = 1."""
    xm = x.max()
    hi = xm + comm.sum()
    fhi = _delay_excess(comm, x, hi)
    if fhi >= 0.0:
        return hi, 0
    # comm/(t - x) diverges at t = max x; start just above it
    lo = xm * (1.0 + 4.0 * _EPS) + 1e-300
    flo = _delay_excess(comm, x, lo)
    if flo <= 0.0:
        return lo, 0
    st = _brent_init(lo, hi, flo, fhi)
    for it in range(_MAX_ROOT_ITER):
        t, done = _brent_propose(st, 4.0 * _EPS * hi)
        if done:
            return t, it
        st[_FB] = _delay_excess(comm, x, t)
    return st[_B], -1


@njit(cache=True)
def _tau_excess(a, b, comm, cyc, fl, fu, w, t, hint):
    phi, it = price_for_deadline(a, b, comm, cyc, fl, fu, t, hint)
    if it == -2:
        # multipliers diverge as the deadline approaches the fastest makespan
        return _HUGE, hint, 0
    s = 0.0
    for n in range(a.shape[0]):
        beta, f, tau = device_response(a[n], b[n], comm[n], cyc[n], fl[n], fu[n], t, phi)
        s += tau
    return s - w, phi, it


@njit(cache=True)
def solve_group(a, b, comm, cyc, fl, fu, w):
    """Exact minimizer of the group cost.

    Returns (beta, f, tau, phi, t, status, evaluations).  ``status`` is 0 on
    success and -1 if a root search ran out of iterations.  ``tau`` and
    ``phi`` are the multipliers of the deadline and bandwidth constraints.
    """
    n = a.shape[0]
    beta = np.empty(n)
    f = np.empty(n)
    tau = np.zeros(n)
    energy_weight = 0.0
    for k in range(n):
        energy_weight += a[k] + b[k]

    if energy_weight == 0.0:
        # delay only: fastest CPUs, bandwidth equalises completion times
        x = cyc / fu
        t, it = min_deadline(comm, x)
        for k in range(n):
            f[k] = fu[k]
            beta[k] = comm[k] / (t - x[k])
        beta /= beta.sum()
        q = 0.0
        for k in range(n):
            q += beta[k] * beta[k] / comm[k]
        phi = w / q
        for k in range(n):
            tau[k] = phi * beta[k] * beta[k] / comm[k]
        return beta, f, tau, phi, t, 0 if it >= 0 else -1, max(it, 0)

    sa = 0.0
    for k in range(n):
        sa += math.sqrt(a[k])
    t_hi = 0.0
    for k in range(n):
        c = comm[k] * sa / math.sqrt(a[k]) + cyc[k] / fl[k]
        if c > t_hi:
            t_hi = c

    if w == 0.0:
        for k in range(n):
            beta[k] = math.sqrt(a[k]) / sa
            f[k] = fl[k]
        return beta, f, tau, sa * sa, t_hi, 0, 0

    t_lo, it0 = min_deadline(comm, cyc / fu)
    status = 0 if it0 >= 0 else -1
    evals = 0
    hint = 0.0
    if t_hi <= t_lo:
        # even the energy-optimal split cannot beat the fastest deadline: the
        # band is split to equalise completion times at full speed
        for k in range(n):
            f[k] = fu[k]
            beta[k] = comm[k] / (t_lo - cyc[k] / fu[k])
        beta /= beta.sum()
        t = 0.0
        for k in range(n):
            t = max(t, comm[k] / beta[k] + cyc[k] / f[k])
        phi = recover_multipliers(a, comm, cyc, beta, f, t, w, tau)
        return beta, f, tau, phi, t, status, 0
    else:
        # Sum of deadline multipliers is nonincreasing in t, zero at t_hi and
        # unbounded as t -> t_lo; step inward until it exceeds w.
        hi = t_hi
        f_hi = -w
        gap = t_hi - t_lo
        lo = t_lo + 0.5 * gap
        f_lo, hint, it = _tau_excess(a, b, comm, cyc, fl, fu, w, lo, hint)
        evals += 1
        while f_lo < 0.0 and gap > 4.0 * _EPS * t_lo:
            hi = lo
            f_hi = f_lo
            gap *= 0.125
            lo = t_lo + 0.5 * gap
            f_lo, hint, it = _tau_excess(a, b, comm, cyc, fl, fu, w, lo, hint)
            evals += 1
        if f_lo < 0.0:
            t = lo
        else:
            st = _brent_init(lo, hi, f_lo, f_hi)
            t = hi
            done = False
            for _ in range(_MAX_ROOT_ITER):
                t, done = _brent_propose(st, 4.0 * _EPS * hi)
                if done:
                    break
                st[_FB], hint, it = _tau_excess(a, b, comm, cyc, fl, fu, w, t, hint)
                evals += 1
                if it < 0:
                    status = -1
            if not done:
                status = -1
    phi, it = price_for_deadline(a, b, comm, cyc, fl, fu, t, hint)
    if it < 0:
        status = -1
    for k in range(n):
        beta[k], f[k], tau[k] = device_response(a[k], b[k], comm[k], cyc[k], fl[k], fu[k], t, phi)
    beta /= beta.sum()
    t = 0.0
    for k in range(n):
        c = comm[k] / beta[k] + cyc[k] / f[k]
        if c > t:
            t = c
    phi = recover_multipliers(a, comm, cyc, beta, f, t, w, tau)
    return beta, f, tau, phi, t, status, evals


@njit(cache=True)
def recover_multipliers(a, comm, cyc, beta, f, t, w, tau):
    """Multipliers consistent with a primal point; fills ``tau``, returns the price.

    At a kink of the deadline value function (a frequency sitting exactly on
    its bound) the response multipliers are one end of an interval; this
    picks the member of the interval whose deadline multipliers sum to w.
    """
    n = a.shape[0]
    tight = np.empty(n, dtype=np.bool_)
    for k in range(n):
        tight[k] = comm[k] / beta[k] + cyc[k] / f[k] >= t * (1.0 - 1e-9)
    phi = 0.0
    for _ in range(n + 1):
        num = w
        den = 0.0
        for k in range(n):
            if tight[k]:
                num += a[k] / comm[k]
                den += beta[k] * beta[k] / comm[k]
        if den == 0.0:
            break
        phi = num / den
        dropped = False
        for k in range(n):
            if tight[k] and phi * beta[k] * beta[k] < a[k]:
                tight[k] = False
                dropped = True
        if not dropped:
            break
    for k in range(n):
        tau[k] = (phi * beta[k] * beta[k] - a[k]) / comm[k] if tight[k] else 0.0
    return phi


@njit(cache=True)
def solve_fixed_beta(b, comm, cyc, fl, fu, w, beta):
    """Minimize sum(b*f**2) + w*max(comm/beta + cyc/f) over the box with beta frozen.

    Returns (f, t).  For a deadline t every device runs just fast enough,
    f = max(fl, cyc/(t - comm/beta)); t is set where the marginal energy of
    tightening the deadline equals w.
    """
    n = b.shape[0]
    up = comm / beta
    f = fl.copy()
    t_lo = 0.0
    for k in range(n):
        c = up[k] + cyc[k] / fu[k]
        if c > t_lo:
            t_lo = c
    t_hi = 0.0
    for k in range(n):
        c = up[k] + cyc[k] / fl[k]
        if c > t_hi:
            t_hi = c
    if w == 0.0 or t_hi <= t_lo:
        t = t_hi if w == 0.0 else t_lo
    else:
        # g(t) = marginal energy saving of relaxing t, minus w; decreasing in t
        lo = t_lo
        hi = t_hi
        g_lo = _fixed_beta_slope(b, cyc, fl, up, lo) - w
        if g_lo <= 0.0:
            t = lo
        else:
            g_hi = _fixed_beta_slope(b, cyc, fl, up, hi) - w
            if g_hi >= 0.0:
                t = hi
            else:
                st = _brent_init(lo, hi, g_lo, g_hi)
                t = hi
                for _ in range(_MAX_ROOT_ITER):
                    t, done = _brent_propose(st, 4.0 * _EPS * hi)
                    if done:
                        break
                    st[_FB] = _fixed_beta_slope(b, cyc, fl, up, t) - w
    for k in range(n):
        fk = cyc[k] / (t - up[k]) if t > up[k] else fu[k]
        f[k] = min(fu[k], max(fl[k], fk))
    return f, t


@njit(cache=True)
def _fixed_beta_slope(b, cyc, fl, up, t):
    # -d/dt of sum(b*f(t)**2) with f(t) = max(fl, cyc/(t - up))
    s = 0.0
    for k in range(b.shape[0]):
        x = t - up[k]
        fk = cyc[k] / x
        if fk > fl[k]:
            s += 2.0 * b[k] * fk * fk * fk / cyc[k]
    return s
