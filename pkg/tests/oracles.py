"""Independent reference implementations used to cross-check the package.

Everything here is written in the most literal way possible (double loops,
explicit index arithmetic) so that agreement with the library is meaningful.
Nothing in this module imports from deepconv.
"""

from __future__ import annotations

import math

import numpy as np


def conv_direct(w, v):
    """(w*v)[i] = sum_k w[i-k] v[k], by explicit double loop."""
    w = list(map(float, w))
    v = list(map(float, v))
    out = [0.0] * (len(w) + len(v) - 1)
    for i in range(len(out)):
        acc = 0.0
        for k, vk in enumerate(v):
            j = i - k
            if 0 <= j < len(w):
                acc += w[j] * vk
        out[i] = acc
    return np.array(out)


def toeplitz_direct(w, in_dim):
    """Entry (i, k) = w[i-k] for 0 <= i-k <= degree, else 0."""
    w = list(map(float, w))
    deg = len(w) - 1
    mat = np.zeros((in_dim + deg, in_dim))
    for i in range(in_dim + deg):
        for k in range(in_dim):
            j = i - k
            if 0 <= j <= deg:
                mat[i, k] = w[j]
    return mat


def downsample_direct(v, m):
    """1-based: picks entries m, 2m, ..., floor(len/m)*m."""
    v = list(map(float, v))
    n = len(v) // m
    return np.array([v[i * m - 1] for i in range(1, n + 1)])


def polyval_direct(coeffs, z):
    """Evaluate sum_k coeffs[k] z^k by Horner from the top coefficient."""
    acc = 0.0 + 0.0j
    for c in reversed(list(coeffs)):
        acc = acc * z + c
    return acc


def relu(z):
    return np.maximum(z, 0.0)


def dcnn_forward_direct(x, filters, biases, downsamples, c, a):
    """Forward pass of the network using conv_direct / downsample_direct only.

    filters: list of tap lists; biases: list of vectors; downsamples: list of
    Optional[int]; c, a: output head.  Returns (per-layer outputs, y).
    """
    h = np.asarray(x, dtype=float)
    outs = []
    for w, b, m in zip(filters, biases, downsamples):
        t = conv_direct(w, h)
        if m is not None:
            t = downsample_direct(t, m)
        h = relu(t - np.asarray(b, dtype=float))
        outs.append(h)
    y = float(np.dot(np.asarray(c, dtype=float), h) + a)
    return outs, y


def hat_value(u, eps):
    """Piecewise-linear bump from three ramps: peak 1 at 0, support [-eps, eps]."""
    s = lambda t: max(t, 0.0)
    return (s(u + eps) - 2.0 * s(u) + s(u - eps)) / eps


def pdim_general_direct(J, widths, ks, theta, p):
    """Base-2-log pseudo-dimension bound, spelled out term by term."""
    R = sum(theta**i for i in range(J + 1))
    for i in range(1, J + 1):
        R += widths[i - 1] * p * sum(theta**t for t in range(i))
    coef = widths[-1] + sum((J - j + 2) * ks[j - 1] for j in range(1, J + 1))
    e = math.e
    return J + 1 + coef * (math.log2(4 * e * R) + math.log2(math.log2(2 * e * R))), R
