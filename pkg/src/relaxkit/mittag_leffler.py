"""Mittag-Leffler functions on the non-positive real axis.

``E_{a,b}(z) = sum_n z^n / Gamma(a n + b)``.  Three evaluation regimes:

* power series in double precision when the largest term is modest;
* the same series in extended precision (mpmath) when alternating terms
  would cancel catastrophically in double precision;
* the algebraic asymptotic expansion
  ``E_{a,b}(-x) ~ sum_{k>=1} (-1)^{k+1} x^{-k} / Gamma(b - a k)``
  truncated at its smallest term, used when that term is negligible.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy.special import gammaln, rgamma

from .errors import ConvergenceError, DomainError, ParameterError

__all__ = ["mittag_leffler", "ml_two_param"]

SERIES_SWITCH = 5.0
_EPS = 1e-16
_MAX_TERMS = 200_000
# double-precision series is trusted while the peak term stays below this
_CANCEL_LIMIT = 1e3


def _series_float(a, b, z):
    total = 0.0
    n = 0
    while n < _MAX_TERMS:
        term = z**n * rgamma(a * n + b) if z != 0 else (rgamma(b) if n == 0 else 0.0)
        total += term
        if n > 2 and abs(term) <= _EPS * abs(total) and (n * a > abs(z) ** (1 / a) or z == 0):
            return total
        if z == 0:
            return total
        n += 1
    raise ConvergenceError("Mittag-Leffler series did not converge")


def _log_peak_term(a, b, x):
    # log of max_n x^n / Gamma(a n + b), scanned until terms decay
    if x <= 0:
        return -gammaln(b)
    best = -np.inf
    n = 0
    lx = math.log(x)
    while n < _MAX_TERMS:
        lt = n * lx - gammaln(a * n + b)
        best = max(best, lt)
        if lt < best - 5 and n * a > 1:
            break
        n += 1
    return best


def _series_mp(a, b, z, log_peak):
    dps = 20 + int(max(log_peak, 0) / math.log(10)) + 5
    with mpmath.workdps(dps):
        za, aa, ba = mpmath.mpf(z), mpmath.mpf(a), mpmath.mpf(b)
        total = mpmath.mpf(0)
        eps = mpmath.mpf(10) ** (-20)
        n = 0
        while n < _MAX_TERMS:
            term = za**n * mpmath.rgamma(aa * n + ba)
            total += term
            if n * a > 1 and abs(term) < eps * abs(total) and n * a > abs(z) ** (1 / a):
                return float(total)
            n += 1
    raise ConvergenceError("extended-precision Mittag-Leffler series did not converge")


def _asymptotic(a, b, x):
    """Optimally truncated expansion; returns (value, smallest |term|)."""
    total = 0.0
    prev = math.inf
    smallest = math.inf
    lx = math.log(x)
    k = 1
    while k < 10_000:
        arg = b - a * k
        sign = np.sign(rgamma(arg))
        if sign == 0.0:
            # pole of Gamma: the term vanishes exactly
            k += 1
            continue
        mag = math.exp(-k * lx - gammaln(arg))
        if mag > prev:
            break
        prev = smallest = mag
        total += (-1) ** (k + 1) * sign * mag
        k += 1
    if smallest == math.inf:
        smallest = 0.0
    return total, smallest


def _ml_scalar(a, b, z):
    if z > 0:
        if z > 50.0:
            raise DomainError("Mittag-Leffler evaluation only supported for z <= 50")
        return _series_mp(a, b, z, _log_peak_term(a, b, z))
    x = -z
    if a == 1.0 and b == 1.0:
        return math.exp(z)
    if x > SERIES_SWITCH and a < 1.0:
        val, smallest = _asymptotic(a, b, x)
        if smallest <= 1e-15 * max(abs(val), 1e-300):
            return val
    log_peak = _log_peak_term(a, b, x)
    if log_peak < math.log(_CANCEL_LIMIT):
        return _series_float(a, b, z)
    if log_peak > 3000:
        raise ConvergenceError(f"Mittag-Leffler argument {z} too large for series evaluation")
    return _series_mp(a, b, z, log_peak)


def ml_two_param(a, b, z):
    """Two-parameter Mittag-Leffler function ``E_{a,b}(z)`` for ``a, b > 0``.

    Vectorised over ``z``; intended for ``z <= 0`` (relaxation regime) and
    small positive ``z``.
    """
    if not a > 0 or not b > 0:
        raise ParameterError(f"need a > 0 and b > 0, got a={a}, b={b}")
    z_arr = np.asarray(z, dtype=float)
    out = np.vectorize(lambda v: _ml_scalar(float(a), float(b), float(v)), otypes=[float])(z_arr)
    return float(out) if out.ndim == 0 else out


def mittag_leffler(beta, z):
    """One-parameter Mittag-Leffler function ``E_beta(z)`` for ``0 < beta <= 1``.

    >>> round(mittag_leffler(1.0, -1.0), 7)
    0.3678794
    """
    if not 0 < beta <= 1:
        raise ParameterError(f"beta must lie in (0, 1], got {beta}")
    return ml_two_param(beta, 1.0, z)
