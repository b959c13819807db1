"""Compiled pairwise-interaction loops for the opinion models.

All routines take time-major arrays: targets ``x`` of shape (m, K) and a
cloud of shape (m, N); row ``k`` of ``x`` interacts only with row ``k`` of the
cloud. The ``*_self`` variants handle x == cloud and visit each pair once.
"""

import math

import numpy as np
from numba import njit

# exponent scale of the mollified window
_MOLLIFIER = 0.01


@njit(cache=True, fastmath=True)
def _bump(r, center):
    # exp(-0.01 / (1 - (r - center)^2)) on the open window, 0 outside
    u = r - center
    v = 1.0 - u * u
    if v <= 0.0:
        return 0.0, 0.0
    e = math.exp(-_MOLLIFIER / v)
    if e == 0.0:
        return 0.0, 0.0
    # derivative of the bump with respect to ``center``
    return e, e * 2.0 * _MOLLIFIER * u / (v * v)


@njit(cache=True, fastmath=True)
def smooth_opinion_drift(x, cloud, center, scale):
    m, K = x.shape
    N = cloud.shape[1]
    out = np.zeros((m, K))
    for k in range(m):
        for i in range(K):
            xi = x[k, i]
            acc = 0.0
            for j in range(N):
                d = xi - cloud[k, j]
                e, _ = _bump(abs(d), center)
                if e != 0.0:
                    acc += e * d
            out[k, i] = -scale * acc / N
    return out


@njit(cache=True, fastmath=True)
def smooth_opinion_grad(x, cloud, center, scale):
    m, K = x.shape
    N = cloud.shape[1]
    out = np.zeros((2, m, K))
    for k in range(m):
        for i in range(K):
            xi = x[k, i]
            g_center = 0.0
            g_scale = 0.0
            for j in range(N):
                d = xi - cloud[k, j]
                e, de = _bump(abs(d), center)
                if e != 0.0:
                    g_scale += e * d
                    g_center += de * d
            out[0, k, i] = -scale * g_center / N
            out[1, k, i] = -g_scale / N
    return out


@njit(cache=True, fastmath=True)
def indicator_opinion_drift(x, cloud, height, radius, width):
    m, K = x.shape
    N = cloud.shape[1]
    out = np.zeros((m, K))
    for k in range(m):
        for i in range(K):
            xi = x[k, i]
            acc = 0.0
            for j in range(N):
                d = xi - cloud[k, j]
                r = abs(d)
                if width > 0.0:
                    w = 1.0 / (1.0 + math.exp(-(radius - r) / width))
                else:
                    w = 1.0 if r <= radius else 0.0
                acc += w * d
            out[k, i] = -height * acc / N
    return out


@njit(cache=True, fastmath=True)
def indicator_opinion_grad(x, cloud, height, radius, width):
    # only meaningful for width > 0
    m, K = x.shape
    N = cloud.shape[1]
    out = np.zeros((2, m, K))
    for k in range(m):
        for i in range(K):
            xi = x[k, i]
            g_h = 0.0
            g_r = 0.0
            for j in range(N):
                d = xi - cloud[k, j]
                s = 1.0 / (1.0 + math.exp(-(radius - abs(d)) / width))
                g_h += s * d
                g_r += s * (1.0 - s) / width * d
            out[0, k, i] = -g_h / N
            out[1, k, i] = -height * g_r / N
    return out


@njit(cache=True, fastmath=True)
def smooth_opinion_drift_self(x, center, scale):
    m, N = x.shape
    out = np.zeros((m, N))
    for k in range(m):
        row = x[k]
        acc = out[k]
        for i in range(N):
            xi = row[i]
            for j in range(i + 1, N):
                d = xi - row[j]
                e, _ = _bump(abs(d), center)
                if e != 0.0:
                    acc[i] += e * d
                    acc[j] -= e * d
        for i in range(N):
            acc[i] *= -scale / N
    return out


@njit(cache=True, fastmath=True)
def smooth_opinion_grad_self(x, center, scale):
    m, N = x.shape
    out = np.zeros((2, m, N))
    for k in range(m):
        row = x[k]
        gc = out[0, k]
        gs = out[1, k]
        for i in range(N):
            xi = row[i]
            for j in range(i + 1, N):
                d = xi - row[j]
                e, de = _bump(abs(d), center)
                if e != 0.0:
                    gs[i] += e * d
                    gs[j] -= e * d
                    gc[i] += de * d
                    gc[j] -= de * d
        for i in range(N):
            gc[i] *= -scale / N
            gs[i] *= -1.0 / N
    return out


# ---------------------------------------------------------------------------
# compiled Euler steppers: advance x through the rows of z (steps, N) and
# return the state after every step, shape (steps, N)


@njit(cache=True)
def linear_euler(x, z, h, t11, t12, t2):
    L, N = z.shape
    out = np.empty((L, N))
    sd = math.sqrt(t2) * math.sqrt(h)
    x = x.copy()
    for s in range(L):
        mean = 0.0
        for i in range(N):
            mean += x[i]
        mean /= N
        for i in range(N):
            b = -(t11 * x[i] + t12 * (x[i] - mean))
            x[i] = x[i] + b * h + sd * z[s, i]
        out[s] = x
    return out


@njit(cache=True, fastmath=True)
def smooth_opinion_euler(x, z, h, center, scale, t2):
    L, N = z.shape
    out = np.empty((L, N))
    sd = math.sqrt(t2) * math.sqrt(h)
    x = x.copy()
    b = np.empty(N)
    for s in range(L):
        b[:] = 0.0
        for i in range(N):
            xi = x[i]
            for j in range(i + 1, N):
                d = xi - x[j]
                e, _ = _bump(abs(d), center)
                if e != 0.0:
                    b[i] += e * d
                    b[j] -= e * d
        for i in range(N):
            x[i] = x[i] + (-scale * b[i] / N) * h + sd * z[s, i]
        out[s] = x
    return out
