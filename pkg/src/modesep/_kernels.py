"""Compiled inner loops for sifting.

Everything here works on plain float64 arrays; the public wrappers live in
:mod:`modesep.emd`.
"""

import numpy as np
from numba import njit


@njit(cache=True, error_model="numpy")
def extrema(x):
    """Indices of strict local maxima and minima (plateaus -> first index)."""
    n = x.size
    imax = np.empty(n, np.int64)
    imin = np.empty(n, np.int64)
    nmax = 0
    nmin = 0
    last = 0
    cand = -1
    for i in range(n - 1):
        d = x[i + 1] - x[i]
        if d > 0:
            s = 1
        elif d < 0:
            s = -1
        else:
            continue
        if last != 0 and s != last:
            if last > 0:
                imax[nmax] = cand
                nmax += 1
            else:
                imin[nmin] = cand
                nmin += 1
        last = s
        cand = i + 1
    return imax[:nmax], imin[:nmin]


@njit(cache=True, error_model="numpy")
def zero_crossings(x):
    count = 0
    prev = 0.0
    for v in x:
        if v == 0.0:
            continue
        if prev != 0.0 and (v > 0.0) != (prev > 0.0):
            count += 1
        prev = v
    return count


@njit(cache=True, error_model="numpy")
def _spline_prep(xk, yk):
    m = xk.size
    h = np.empty(m - 1)
    inv_h = np.empty(m - 1)
    slope = np.empty(m - 1)
    for i in range(m - 1):
        h[i] = xk[i + 1] - xk[i]
        inv_h[i] = 1.0 / h[i]
        slope[i] = (yk[i + 1] - yk[i]) * inv_h[i]
    return h, inv_h, slope


@njit(cache=True, error_model="numpy")
def _forward_step(h, slope, r, cp_prev, dp_prev):
    a = h[r] if r > 0 else 0.0
    inv = 1.0 / (2.0 * (h[r] + h[r + 1]) - a * cp_prev)
    return h[r + 1] * inv, (6.0 * (slope[r + 1] - slope[r]) - a * dp_prev) * inv


@njit(cache=True, error_model="numpy")
def _back_substitute(cp, dp, m):
    M = np.zeros(m)
    k = m - 2
    if k > 0:
        M[k] = dp[k - 1]
        for r in range(k - 2, -1, -1):
            M[r + 1] = dp[r] - cp[r] * M[r + 2]
    return M


@njit(cache=True, error_model="numpy")
def _second_derivatives(h, slope):
    """Interior second derivatives of a natural spline (Thomas algorithm)."""
    m = h.size + 1
    k = max(m - 2, 0)
    cp = np.empty(k)
    dp = np.empty(k)
    c, d = 0.0, 0.0
    for r in range(k):
        c, d = _forward_step(h, slope, r, c, d)
        cp[r] = c
        dp[r] = d
    return _back_substitute(cp, dp, m)


@njit(cache=True, error_model="numpy")
def _second_derivatives_pair(h1, s1, h2, s2):
    # two independent sweeps in one loop so their division latencies overlap
    m1 = h1.size + 1
    m2 = h2.size + 1
    k1 = max(m1 - 2, 0)
    k2 = max(m2 - 2, 0)
    cp1 = np.empty(k1)
    dp1 = np.empty(k1)
    cp2 = np.empty(k2)
    dp2 = np.empty(k2)
    c1, d1, c2, d2 = 0.0, 0.0, 0.0, 0.0
    for r in range(max(k1, k2)):
        if r < k1:
            c1, d1 = _forward_step(h1, s1, r, c1, d1)
            cp1[r] = c1
            dp1[r] = d1
        if r < k2:
            c2, d2 = _forward_step(h2, s2, r, c2, d2)
            cp2[r] = c2
            dp2[r] = d2
    return _back_substitute(cp1, dp1, m1), _back_substitute(cp2, dp2, m2)


@njit(cache=True, error_model="numpy")
def _spline_eval(xk, yk, h, inv_h, slope, M, n):
    # segment j covers samples t with xk[j] <= t < xk[j+1]; local cubic in dt = t - xk[j]
    m = xk.size
    out = np.empty(n)
    sixth = 1.0 / 6.0
    for j in range(m - 1):
        lo = 0 if j == 0 else max(0, int(np.ceil(xk[j])))
        hi = n if j == m - 2 else min(n, int(np.ceil(xk[j + 1])))
        if lo >= hi:
            continue
        b = slope[j] - h[j] * (2.0 * M[j] + M[j + 1]) * sixth
        c = 0.5 * M[j]
        d = (M[j + 1] - M[j]) * sixth * inv_h[j]
        a = yk[j]
        x0 = xk[j]
        for t in range(lo, hi):
            dt = t - x0
            out[t] = a + dt * (b + dt * (c + dt * d))
    return out


@njit(cache=True, error_model="numpy")
def natural_spline(xk, yk, n):
    """Natural cubic spline through (xk, yk) evaluated at 0..n-1.

    ``xk`` must be strictly increasing with at least two knots; points
    outside the knot range use the polynomial of the nearest end segment.
    """
    h, inv_h, slope = _spline_prep(xk, yk)
    M = _second_derivatives(h, slope)
    return _spline_eval(xk, yk, h, inv_h, slope, M, n)


@njit(cache=True, error_model="numpy")
def mirror_knots(idx, val, n):
    """Reflect the two outermost knots about each endpoint (0 and n-1)."""
    m = idx.size
    e = min(2, m)
    xk = np.empty(m + 2 * e)
    yk = np.empty(m + 2 * e)
    for r in range(e):
        xk[r] = -float(idx[e - 1 - r])
        yk[r] = val[e - 1 - r]
    for r in range(m):
        xk[e + r] = float(idx[r])
        yk[e + r] = val[r]
    for r in range(e):
        src = m - 1 - r
        xk[e + m + r] = 2.0 * (n - 1) - float(idx[src])
        yk[e + m + r] = val[src]
    return xk, yk


@njit(cache=True, error_model="numpy")
def envelopes(x, imax, imin):
    n = x.size
    xu, yu = mirror_knots(imax, x[imax], n)
    xl, yl = mirror_knots(imin, x[imin], n)
    hu, iu, su = _spline_prep(xu, yu)
    hl, il, sl = _spline_prep(xl, yl)
    Mu, Ml = _second_derivatives_pair(hu, su, hl, sl)
    return (_spline_eval(xu, yu, hu, iu, su, Mu, n),
            _spline_eval(xl, yl, hl, il, sl, Ml, n))


@njit(cache=True, error_model="numpy")
def mean_envelope(x, imax, imin):
    upper, lower = envelopes(x, imax, imin)
    return 0.5 * (upper + lower)


@njit(cache=True, error_model="numpy")
def sd_sum(prev, curr):
    total = 0.0
    for i in range(prev.size):
        p = prev[i]
        if p != 0.0:
            diff = p - curr[i]
            total += diff * diff / (p * p)
    return total


@njit(cache=True, error_model="numpy")
def mean_is_small(upper, lower, tol, tol_max, fraction):
    """Mean envelope small against the half-range: |m|/a <= tol on all but
    ``fraction`` of the samples and < tol_max everywhere."""
    n = upper.size
    over = 0
    for i in range(n):
        m = 0.5 * (upper[i] + lower[i])
        a = 0.5 * (upper[i] - lower[i])
        if a <= 0.0:
            if m != 0.0:
                return False
            continue
        am = abs(m)
        if am >= tol_max * a:
            return False
        if am > tol * a:
            over += 1
    return over <= fraction * n


@njit(cache=True, error_model="numpy")
def extract_imf(x, sd_threshold, max_iter, tol, tol_max, fraction):
    """Sift until ``h`` meets both IMF conditions, or the SD test passes on
    an iterate with matching extrema and zero-crossing counts, or
    ``max_iter`` sifts have been applied.  Returns ``(imf, n_sifts)``.

    The IMF test on an iterate reuses the envelopes of the next sift, so at
    least one sift is always applied.  Each sift is a single pass that
    checks the mean envelope of the current iterate, writes the next one and
    counts its extrema and zero crossings.
    """
    n = x.size
    cur = x.copy()
    nxt = np.empty(n)
    # latest iterate whose counts matched, returned if the cap is reached
    fb = np.empty(n)
    have_fb = False
    emax = np.empty(n, np.int64)
    emin = np.empty(n, np.int64)
    imax, imin = extrema(x)
    nmax = imax.size
    nmin = imin.size
    emax[:nmax] = imax
    emin[:nmin] = imin
    counts_ok = False
    limit = fraction * n
    it = 0
    while it < max_iter:
        if nmax < 2 or nmin < 2:
            break
        upper, lower = envelopes(cur, emax[:nmax], emin[:nmin])
        check = it > 0 and counts_ok
        bad = False
        over = 0
        sd = 0.0
        zc = 0
        seen = False
        prev_pos = False
        prev_v = 0.0
        last = 0
        cand = 0
        nmax = 0
        nmin = 0
        for i in range(n):
            u = upper[i]
            lo = lower[i]
            m = 0.5 * (u + lo)
            if check and not bad:
                a = 0.5 * (u - lo)
                if a <= 0.0:
                    if m != 0.0:
                        bad = True
                else:
                    am = abs(m)
                    if am >= tol_max * a:
                        bad = True
                    elif am > tol * a:
                        over += 1
            p = cur[i]
            v = p - m
            nxt[i] = v
            # the SD sum only matters while it is below the threshold
            if p != 0.0 and sd < sd_threshold:
                sd += m * m / (p * p)
            # zero crossings and extrema of the new iterate, written without
            # data-dependent branches (noisy input defeats branch prediction)
            nz = v != 0.0
            pos = v > 0.0
            zc += nz and seen and pos != prev_pos
            prev_pos = pos if nz else prev_pos
            seen = seen or nz
            d = v - prev_v if i > 0 else 0.0
            step = (d > 0.0) - (d < 0.0)
            turn = step != 0 and last != 0 and step != last
            emax[nmax] = cand
            emin[nmin] = cand
            nmax += turn and last > 0
            nmin += turn and last < 0
            last = step if step != 0 else last
            cand = i if step != 0 else cand
            prev_v = v
        if check:
            if not bad and over <= limit:
                break
            fb, cur = cur, fb
            have_fb = True
        cur, nxt = nxt, cur
        it += 1
        counts_ok = abs(nmax + nmin - zc) <= 1
        # the SD test ends sifting only for candidates whose extrema and
        # zero-crossing counts already match
        if sd < sd_threshold and counts_ok:
            break
        if it == max_iter and not counts_ok and have_fb:
            return fb, it
    return cur, it
