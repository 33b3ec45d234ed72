"""Pure-Python kernels, used when the compiled extension is unavailable.

Both kernels operate on the rows of a C-contiguous float64 matrix and must
stay line-for-line equivalent to ``_kernels.pyx``.
"""

import numpy as np


def _tv_denoise_1d(y, lam, out):
    # Condat's direct algorithm; u is the dual variable, [vmin, vmax] bounds the current segment value.
    n = y.shape[0]
    if lam <= 0.0 or n < 2:
        out[:] = y
        return
    k = k0 = 0
    kplus = kminus = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    twolam = 2.0 * lam
    minlam = -lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = kplus = k0
                vmax = y[k]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += y[k + 1] - vmin
        if umin < minlam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin = lam
            umax = minlam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            while True:
                out[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin = lam
            umax = minlam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= minlam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = minlam


def tv_denoise_rows(Y, lam):
    """Exact TV proximal operator ``argmin_x lam * sum|x_i - x_{i-1}| + 0.5 ||x - y||^2`` per row."""
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty_like(Y)
    for i in range(Y.shape[0]):
        _tv_denoise_1d(Y[i], float(lam), out[i])
    return out


def _block_error(s, c, q, nonneg):
    if nonneg and s <= 0.0:
        return q
    return q - s * s / c


def _prefix_isotonic_errors(y, step, nonneg, errors):
    # errors[i] = squared error of the (clipped) non-decreasing fit to the first i+1 visited entries.
    n = errors.shape[0]
    sums = [0.0] * n
    counts = [0] * n
    squares = [0.0] * n
    top = -1
    total = 0.0
    start = 0 if step > 0 else n - 1
    for i in range(n):
        v = y[start + step * i]
        s, c, q = v, 1, v * v
        while top >= 0 and sums[top] * c >= s * counts[top]:
            total -= _block_error(sums[top], counts[top], squares[top], nonneg)
            s += sums[top]
            c += counts[top]
            q += squares[top]
            top -= 1
        top += 1
        sums[top], counts[top], squares[top] = s, c, q
        total += _block_error(s, c, q, nonneg)
        errors[i] = total


def _isotonic_fit(y, lo, hi, step, nonneg, out):
    # Write the (clipped) non-decreasing fit of y[lo:hi] visited in direction ``step`` into out[lo:hi].
    n = hi - lo
    if n <= 0:
        return
    sums = [0.0] * n
    counts = [0] * n
    top = -1
    start = lo if step > 0 else hi - 1
    for i in range(n):
        s, c = y[start + step * i], 1
        while top >= 0 and sums[top] * c >= s * counts[top]:
            s += sums[top]
            c += counts[top]
            top -= 1
        top += 1
        sums[top], counts[top] = s, c
    i = n
    for b in range(top, -1, -1):
        value = sums[b] / counts[b]
        if nonneg and value < 0.0:
            value = 0.0
        for _ in range(counts[b]):
            i -= 1
            out[start + step * i] = value


def _unimodal_1d(y, nonneg, tol, out):
    n = y.shape[0]
    inc = np.empty(n)
    dec = np.empty(n)
    _prefix_isotonic_errors(y, 1, nonneg, inc)
    _prefix_isotonic_errors(y, -1, nonneg, dec)
    threshold = tol * (1.0 + float(np.dot(y, y)))
    errors = inc.copy()
    errors[: n - 1] += dec[n - 2 :: -1]
    best = errors.min()
    mode = int(np.flatnonzero(errors <= best + threshold)[0])
    _isotonic_fit(y, 0, mode + 1, 1, nonneg, out)
    _isotonic_fit(y, mode + 1, n, -1, nonneg, out)


def unimodal_rows(Y, nonneg=False, tol=1e-12):
    """Least-squares unimodal (non-decreasing then non-increasing) fit to each row.

    The peak split is chosen by scanning all positions with prefix/suffix
    isotonic errors; near-ties (within ``tol * (1 + ||y||^2)``) resolve to the
    leftmost split.
    """
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty_like(Y)
    if Y.shape[1] == 0:
        return out
    for i in range(Y.shape[0]):
        _unimodal_1d(Y[i], bool(nonneg), float(tol), out[i])
    return out


def isotonic_rows(Y, increasing=True, nonneg=False):
    """Least-squares monotone fit to each row via pool-adjacent-violators."""
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty_like(Y)
    step = 1 if increasing else -1
    for i in range(Y.shape[0]):
        _isotonic_fit(Y[i], 0, Y.shape[1], step, bool(nonneg), out[i])
    return out
