"""Slow, independent reference computations used as test oracles."""

import math

import numpy as np


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def triple_loop_matmul(a, b):
    n, k = len(a), len(b)
    m = len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return np.array(out)


def _softmax_row(row):
    mx = max(row)
    e = [math.exp(v - mx) for v in row]
    s = sum(e)
    return [v / s for v in e]


def loop_assoc_losses(a, b, labels, clamp=1e-12):
    """Walker and visit losses written out with explicit loops."""
    n_s, n_t = len(a), len(b)
    m = [[float(np.dot(a[i], b[j])) for j in range(n_t)] for i in range(n_s)]
    p_ab = [_softmax_row(m[i]) for i in range(n_s)]
    p_ba = [_softmax_row([m[i][j] for i in range(n_s)]) for j in range(n_t)]
    walker = 0.0
    for i in range(n_s):
        same = [k for k in range(n_s) if labels[k] == labels[i]]
        for k in same:
            p = sum(p_ab[i][j] * p_ba[j][k] for j in range(n_t))
            walker -= (1.0 / len(same)) * math.log(max(p, clamp))
    walker /= n_s
    visit = 0.0
    for j in range(n_t):
        pv = sum(p_ab[i][j] for i in range(n_s)) / n_s
        visit -= math.log(max(pv, clamp)) / n_t
    return walker, visit


def loop_rbf(x, y, sigma):
    out = np.zeros((len(x), len(y)))
    for i in range(len(x)):
        for j in range(len(y)):
            d2 = sum((x[i][k] - y[j][k]) ** 2 for k in range(len(x[i])))
            out[i, j] = math.exp(-d2 / (2 * sigma**2))
    return out


def loop_mmd2(x, y, sigmas, unbiased=False):
    total = 0.0
    m, n = len(x), len(y)
    for s in sigmas:
        kxx, kyy, kxy = loop_rbf(x, x, s), loop_rbf(y, y, s), loop_rbf(x, y, s)
        if unbiased:
            sxx = sum(kxx[i, j] for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
            syy = sum(kyy[i, j] for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
        else:
            sxx = sum(kxx[i, j] for i in range(m) for j in range(m)) / m**2
            syy = sum(kyy[i, j] for i in range(n) for j in range(n)) / n**2
        sxy = sum(kxy[i, j] for i in range(m) for j in range(n)) / (m * n)
        total += sxx + syy - 2 * sxy
    return total / len(sigmas)
