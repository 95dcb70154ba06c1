"""Pure-Python LMS kernels, used when the compiled extension is unavailable.

Operation order matches ``_kernels.pyx`` exactly so the two backends agree
bit for bit.
"""
import math

import numpy as np


def _regressor(u, d, nb, na, k):
    r = [u[k - i] if k - i >= 0 else 0.0 for i in range(nb)]
    r.extend(d[k - j] if k - j >= 0 else 0.0 for j in range(1, na + 1))
    return r


def lms_run(u, d, coeffs, nb, na, mu, leakage, normalized, eps, stride):
    n = len(u)
    p = nb + na
    ul = np.asarray(u, dtype=np.float64).tolist()
    dl = np.asarray(d, dtype=np.float64).tolist()
    c = np.asarray(coeffs, dtype=np.float64).tolist()
    y = [0.0] * n
    e = [0.0] * n
    snaps = []
    diverged = -1
    keep = 1.0 - leakage
    for k in range(n):
        if stride > 0 and k % stride == 0:
            snaps.append(list(c))
        r = _regressor(ul, dl, nb, na, k)
        acc = 0.0
        for i in range(p):
            acc = acc + c[i] * r[i]
        if not math.isfinite(acc):
            diverged = k
            break
        err = dl[k] - acc
        y[k] = acc
        e[k] = err
        if normalized:
            power = 0.0
            for i in range(p):
                power = power + r[i] * r[i]
            mu_eff = mu / (eps + power)
        else:
            mu_eff = mu
        g = (2.0 * mu_eff) * err
        for i in range(p):
            c[i] = keep * c[i] + g * r[i]
    nsnap = (n + stride - 1) // stride if stride > 0 else 0
    snaps_arr = np.zeros((nsnap, p), dtype=np.float64)
    if snaps:
        snaps_arr[: len(snaps)] = snaps
    return (np.array(y, dtype=np.float64), np.array(e, dtype=np.float64),
            np.array(c, dtype=np.float64), snaps_arr, diverged)


def filter_block(u, d, c, nb, na, k0, k1, y, e):
    p = nb + na
    cl = c.tolist()
    lo = max(k0 - max(nb, na + 1), 0)
    ul = u[lo:k1].tolist()
    dl = d[lo:k1].tolist()
    for k in range(k0, k1):
        r = _regressor(ul, dl, nb, na, k - lo)
        acc = 0.0
        for i in range(p):
            acc = acc + cl[i] * r[i]
        if not math.isfinite(acc):
            return k
        y[k] = acc
        e[k] = dl[k - lo] - acc
    return -1


def update_block(u, d, e, c, nb, na, mu, leakage, normalized, eps, k0, k1):
    p = nb + na
    keep = 1.0 - leakage
    cl = c.tolist()
    lo = max(k0 - max(nb, na + 1), 0)
    ul = u[lo:k1].tolist()
    dl = d[lo:k1].tolist()
    for k in range(k0, k1):
        # lo keeps enough history that zero-padding only hits true pre-history
        r = _regressor(ul, dl, nb, na, k - lo)
        if normalized:
            power = 0.0
            for i in range(p):
                power = power + r[i] * r[i]
            mu_eff = mu / (eps + power)
        else:
            mu_eff = mu
        g = (2.0 * mu_eff) * float(e[k])
        for i in range(p):
            cl[i] = keep * cl[i] + g * r[i]
    c[:] = cl
