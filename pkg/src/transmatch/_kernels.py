"""Compiled inner loops.

Everything here works on float64 arrays and plain integers so that the
numba signatures stay stable. Callers in the public modules handle
validation and shape bookkeeping.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def corr_at(tz, sigma_t, img, omega, x, y):
    """Correlation coefficient of the zero-mean template ``tz`` with the
    window of ``img`` whose top-left corner is (x, y).

    ``omega`` holds the zero-mean norm of every window; a zero entry marks
    a flat window, which scores 0.
    """
    om = omega[x, y]
    if om == 0.0:
        return 0.0
    m, n = tz.shape
    acc = 0.0
    for i in range(m):
        row = img[x + i]
        trow = tz[i]
        for j in range(n):
            acc += trow[j] * row[y + j]
    r = acc / (sigma_t * om)
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


@njit(cache=True, nogil=True)
def corr_surface(tz, sigma_t, img, omega):
    """corr_at over the whole extent.

    Accumulates a full output row at a time so the inner loop runs along
    contiguous memory; each location still sums its products in the same
    (i, j) order as corr_at, so both give identical bits.
    """
    pe, qe = omega.shape
    m, n = tz.shape
    out = np.empty((pe, qe))
    acc = np.empty(qe)
    for x in range(pe):
        acc[:] = 0.0
        for i in range(m):
            row = img[x + i]
            for j in range(n):
                c = tz[i, j]
                for y in range(qe):
                    acc[y] += c * row[y + j]
        for y in range(qe):
            om = omega[x, y]
            if om == 0.0:
                out[x, y] = 0.0
                continue
            r = acc[y] / (sigma_t * om)
            if r > 1.0:
                r = 1.0
            elif r < -1.0:
                r = -1.0
            out[x, y] = r
    return out


@njit(cache=True, nogil=True)
def corr_points(tz, sigma_t, img, omega, rows, cols):
    k = rows.shape[0]
    out = np.empty(k)
    for idx in range(k):
        out[idx] = corr_at(tz, sigma_t, img, omega, rows[idx], cols[idx])
    return out


@njit(cache=True, nogil=True)
def tightening_scan(tz, sigma_t, img, omega, rows, cols, upper, rho_tb):
    """Second-scan visit of candidate members in the given order.

    A member is evaluated only while its upper bound exceeds the running
    threshold; every evaluated non-flat value above the threshold raises
    it. Returns (evaluated flags, values, final threshold).
    """
    k = rows.shape[0]
    evaluated = np.zeros(k, dtype=np.bool_)
    values = np.full(k, np.nan)
    for idx in range(k):
        if upper[idx] <= rho_tb:
            continue
        x = rows[idx]
        y = cols[idx]
        v = corr_at(tz, sigma_t, img, omega, x, y)
        evaluated[idx] = True
        values[idx] = v
        if omega[x, y] != 0.0 and v > rho_tb:
            rho_tb = v
    return evaluated, values, rho_tb


@njit(cache=True, nogil=True)
def shifted_product_sums(v, di, dj, m, n, crows, ccols):
    """Window sums of ``v(x, y) * v(x + di, y + dj)`` at the window corners
    ``crows x ccols``.

    Builds the padded prefix table of the shifted product in one pass and
    reads each m x n window sum with four lookups. Product entries whose
    partner pixel falls outside the image are zero; callers only ask for
    corners where both windows are inside.
    """
    p, q = v.shape
    table = np.zeros((p + 1, q + 1))
    for x in range(p):
        xs = x + di
        run = 0.0
        if xs < 0 or xs >= p:
            for y in range(q):
                table[x + 1, y + 1] = table[x, y + 1]
            continue
        for y in range(q):
            ys = y + dj
            if 0 <= ys < q:
                run += v[x, y] * v[xs, ys]
            table[x + 1, y + 1] = table[x, y + 1] + run
    out = np.empty((crows.shape[0], ccols.shape[0]))
    for a in range(crows.shape[0]):
        x0 = crows[a]
        x1 = x0 + m
        for b in range(ccols.shape[0]):
            y0 = ccols[b]
            y1 = y0 + n
            out[a, b] = table[x1, y1] - table[x0, y1] - table[x1, y0] + table[x0, y0]
    return out
