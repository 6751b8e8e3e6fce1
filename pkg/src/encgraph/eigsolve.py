"""Small dense eigensolvers run by the data owner on projected matrices."""
import math

import numpy as np


def tridiag_eigh(alphas, betas, max_iter=60):
    """Eigenpairs of the symmetric tridiagonal matrix (alphas on the diagonal,
    betas off it) by implicit QL with Wilkinson-style shifts.

    Returns (eigenvalues, Z) with Z's columns the orthonormal eigenvectors,
    in no particular order.
    """
    n = len(alphas)
    d = np.array(alphas, dtype=float)
    e = np.zeros(n)
    e[: n - 1] = betas[: n - 1]
    z = np.eye(n)
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= np.finfo(float).eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise ArithmeticError("implicit QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                z[:, i] = c * zi - s * z[:, i + 1]
                z[:, i + 1] = s * zi + c * z[:, i + 1]
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z


def jacobi_eigh(a, tol=1e-15, max_sweeps=100):
    """Cyclic Jacobi rotations for a small dense symmetric matrix."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a) or 1.0
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float(np.sum(a * a) - np.sum(np.diag(a) ** 2))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def order_by_magnitude(values, tie_rtol=1e-6):
    """Indices sorting eigenvalues by |value| descending.

    Magnitudes within ``tie_rtol`` of each other count as tied, and the
    positive member of a tied +/- pair comes first, so rounding noise cannot
    flip the order between iterations.
    """
    idx = sorted(range(len(values)), key=lambda i: (-abs(values[i]), -values[i]))
    swapped = True
    while swapped:
        swapped = False
        for j in range(len(idx) - 1):
            a, b = values[idx[j]], values[idx[j + 1]]
            tied = abs(abs(a) - abs(b)) <= tie_rtol * max(abs(a), abs(b), 1e-300)
            if tied and b > a:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                swapped = True
    return idx
