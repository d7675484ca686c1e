"""Independent reference implementations used only by the tests.

Nothing here imports the code under test.
"""

import math

import numpy as np


def norm_cdf_erf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def inv_norm_bisect(p, lo=-40.0, hi=40.0, iters=200):
    """Quantile by bisection on the erfc-based CDF.

    Above the median the survival function is bisected instead, since the
    CDF itself saturates near 1.
    """
    if p > 0.5:
        tail = 1.0 - p
        below = lambda x: 0.5 * math.erfc(x / math.sqrt(2.0)) > tail
    else:
        below = lambda x: norm_cdf_erf(x) < p
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if below(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def se_kernel_loops(A, B, sigma0_sq, length_scales):
    K = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            s = sum((ai - bi) ** 2 / l**2 for ai, bi, l in zip(a, b, length_scales))
            K[i, j] = sigma0_sq * math.exp(-0.5 * s)
    return K


def lml_dense(X, y, mu0, sigma0_sq, length_scales, nugget):
    K = se_kernel_loops(X, X, sigma0_sq, length_scales) + nugget * np.eye(len(X))
    r = np.asarray(y) - mu0
    _, logdet = np.linalg.slogdet(K)
    return float(-0.5 * r @ np.linalg.inv(K) @ r - 0.5 * logdet - 0.5 * len(X) * math.log(2 * math.pi))


def posterior_dense(X, y, mu0, sigma0_sq, length_scales, nugget, Xq):
    K = se_kernel_loops(X, X, sigma0_sq, length_scales) + nugget * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    Ks = se_kernel_loops(Xq, X, sigma0_sq, length_scales)
    Kss = se_kernel_loops(Xq, Xq, sigma0_sq, length_scales)
    mean = mu0 + Ks @ Kinv @ (np.asarray(y) - mu0)
    cov = Kss - Ks @ Kinv @ Ks.T
    return mean, cov


def ishigami_scalar(x1, x2, x3, a=7.0, b=0.1):
    return math.sin(x1) + a * math.sin(x2) ** 2 + b * x3**4 * math.sin(x1)


def ishigami_indices(a=7.0, b=0.1):
    """Analytic variance decomposition on [-pi, pi]^3."""
    pi = math.pi
    v1 = 0.5 * (1 + b * pi**4 / 5) ** 2
    v2 = a**2 / 8
    v13 = b**2 * pi**8 * (1 / 18 - 1 / 50)
    total = a**2 / 8 + b * pi**4 / 5 + b**2 * pi**8 / 18 + 0.5
    first = np.array([v1, v2, 0.0]) / total
    tot = np.array([v1 + v13, v2, v13]) / total
    return first, tot, total


def g_function_scalar(x, a):
    out = 1.0
    for xi, ai in zip(x, a):
        out *= (abs(4 * xi - 2) + ai) / (1 + ai)
    return out


def g_function_indices(a):
    """Analytic first-order and total indices of the g-function."""
    a = np.asarray(a, dtype=float)
    vi = (1.0 / 3.0) / (1.0 + a) ** 2
    total = np.prod(1.0 + vi) - 1.0
    first = vi / total
    tot = np.array([vi[i] * np.prod(np.delete(1.0 + vi, i)) for i in range(a.size)]) / total
    return first, tot


def lame_hoop(inner, outer, pressure):
    return pressure * (outer**2 + inner**2) / (outer**2 - inner**2)
