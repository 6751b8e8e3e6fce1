"""Pure-Python ring kernels; the reference the compiled kernel is checked against."""
import numpy as np


def negacyclic_schoolbook(a, b, q):
    a = [int(x) for x in a]
    b = [int(x) for x in b]
    n = len(a)
    acc = [0] * (2 * n)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            acc[i + j] += ai * bj
    out = [(acc[k] - acc[k + n]) % q for k in range(n)]
    return np.array(out, dtype=np.uint64)


def ntt_forward(a, psi_rev, q):
    f = [int(x) for x in a]
    w = [int(x) for x in psi_rev]
    n = len(f)
    t, m = n, 1
    while m < n:
        t >>= 1
        for i in range(m):
            j1 = 2 * i * t
            s = w[m + i]
            for j in range(j1, j1 + t):
                u = f[j]
                v = f[j + t] * s % q
                f[j] = (u + v) % q
                f[j + t] = (u - v) % q
        m <<= 1
    return np.array(f, dtype=np.uint64)


def ntt_inverse(a, psi_inv_rev, n_inv, q):
    f = [int(x) for x in a]
    w = [int(x) for x in psi_inv_rev]
    n = len(f)
    t, m = 1, n
    while m > 1:
        h = m >> 1
        j1 = 0
        for i in range(h):
            s = w[h + i]
            for j in range(j1, j1 + t):
                u = f[j]
                v = f[j + t]
                f[j] = (u + v) % q
                f[j + t] = (u - v) * s % q
            j1 += 2 * t
        t <<= 1
        m = h
    return np.array([x * n_inv % q for x in f], dtype=np.uint64)


def pointwise_mul(a, b, q):
    return np.array([int(x) * int(y) % q for x, y in zip(a, b)], dtype=np.uint64)
