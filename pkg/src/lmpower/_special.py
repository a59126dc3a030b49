"""Exponential integral E1 on the positive real axis.

Power series below x = 1, modified-Lentz continued fraction above.
"""
import numpy as np

EULER_GAMMA = 0.5772156649015329
_EPS = 1e-16
_MAX_ITER = 500


def _e1_series(x):
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, _MAX_ITER):
        term = term * (-x) / k
        contrib = term / k
        total += contrib
        if np.all(np.abs(contrib) <= _EPS * np.abs(total)):
            break
    return -EULER_GAMMA - np.log(x) - total


def _e1_scaled_cf(x):
    """exp(x) * E1(x) by the continued fraction 1/(x+1- 1/(x+3- 4/(x+5- ...)))."""
    tiny = 1e-300
    b = x + 1.0
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAX_ITER):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) <= _EPS):
            break
    return h


def exp1(x):
    """Exponential integral ``E1(x) = int_x^inf exp(-t)/t dt`` for ``x >= 0``.

    Returns ``inf`` at zero. Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("exp1 is implemented for non-negative arguments only")
    out = np.empty_like(x)
    zero = x == 0
    small = (x > 0) & (x <= 1.0)
    large = x > 1.0
    out[zero] = np.inf
    if small.any():
        out[small] = _e1_series(x[small])
    if large.any():
        xl = x[large]
        out[large] = np.exp(-xl) * _e1_scaled_cf(xl)
    return out[0] if scalar else out


def exp1_scaled(x):
    """``exp(x) * E1(x)``, finite for large arguments where ``E1`` underflows."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    large = x > 1.0
    out[~large] = np.exp(x[~large]) * exp1(x[~large])
    if large.any():
        out[large] = _e1_scaled_cf(x[large])
    return out[0] if scalar else out
