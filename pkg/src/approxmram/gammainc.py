"""Regularized upper incomplete gamma function Q(k, x).

The tail of the gamma distribution is what turns a pulse duration into a
switching-failure probability, so it is evaluated deep into the tail
(Q ~ 1e-10 and below) and must keep relative accuracy there.

Switchover: the power series for the lower function P is used where
``x < k + 1`` and Q = 1 - P is returned; elsewhere the Legendre continued
fraction (modified Lentz) yields Q directly, without cancellation.
"""

import math

import numpy as np
from scipy.special import gammaln

EPS = 2.0 * np.finfo(float).eps
FPMIN = 1e-300
MAX_ITER = 1000


def _prefactor(k, x):
    # x^k e^-x / Gamma(k), computed in log space; x > 0 here
    return np.exp(k * np.log(x) - x - gammaln(k))


def _series_p(k, x):
    ap = k.copy()
    term = 1.0 / k
    total = term.copy()
    for _ in range(MAX_ITER):
        ap += 1.0
        term = term * x / ap
        total += term
        if np.all(np.abs(term) < np.abs(total) * EPS):
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * _prefactor(k, x)


def _contfrac_q(k, x):
    b = x + 1.0 - k
    c = np.full_like(x, 1.0 / FPMIN)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, MAX_ITER):
        an = -i * (i - k)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < FPMIN, FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < FPMIN, FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < EPS):
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return _prefactor(k, x) * h


def _q_scalar(k: float, x: float) -> float:
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    pref = math.exp(k * math.log(x) - x - math.lgamma(k))
    if x < k + 1.0:
        ap, term = k, 1.0 / k
        total = term
        for _ in range(MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * EPS:
                return min(max(1.0 - total * pref, 0.0), 1.0)
        raise ArithmeticError("incomplete gamma series did not converge")
    b = x + 1.0 - k
    c = 1.0 / FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITER):
        an = -i * (i - k)
        b += 2.0
        d = an * d + b
        if abs(d) < FPMIN:
            d = FPMIN
        c = b + an / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return min(max(pref * h, 0.0), 1.0)
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


def upper_reg_gamma(k, x):
    """Return Q(k, x) = Gamma(k, x) / Gamma(k); scalars in, float out.

    Raises ValueError for k <= 0, x < 0 or NaN arguments.
    """
    if isinstance(k, (int, float)) and isinstance(x, (int, float)):
        k, x = float(k), float(x)
        if math.isnan(k) or math.isnan(x):
            raise ValueError("upper_reg_gamma: NaN argument")
        if k <= 0:
            raise ValueError("upper_reg_gamma: shape k must be > 0")
        if x < 0:
            raise ValueError("upper_reg_gamma: x must be >= 0")
        return _q_scalar(k, x)

    k_arr, x_arr = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(x, dtype=float))
    if np.any(np.isnan(k_arr)) or np.any(np.isnan(x_arr)):
        raise ValueError("upper_reg_gamma: NaN argument")
    if np.any(k_arr <= 0):
        raise ValueError("upper_reg_gamma: shape k must be > 0")
    if np.any(x_arr < 0):
        raise ValueError("upper_reg_gamma: x must be >= 0")

    out = np.ones(k_arr.shape, dtype=float)
    inf = np.isinf(x_arr)
    out[inf] = 0.0
    series = (x_arr > 0) & (x_arr < k_arr + 1.0)
    frac = (x_arr >= k_arr + 1.0) & ~inf
    if np.any(series):
        p = _series_p(k_arr[series], x_arr[series])
        out[series] = np.clip(1.0 - p, 0.0, 1.0)
    if np.any(frac):
        out[frac] = np.clip(_contfrac_q(k_arr[frac], x_arr[frac]), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out
