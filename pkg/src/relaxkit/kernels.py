"""Convolution kernels on (0, inf) with their first two antiderivatives.

Every kernel ``k`` exposes

* ``k(t)`` -- pointwise values,
* ``k.integral(t)`` -- ``K1(t) = int_0^t k``,
* ``k.double_integral(t)`` -- ``K2(t) = int_0^t K1``,
* ``k.cell_moments(h, n)`` -- for cells ``[j h, (j+1) h]``, ``j < n``,
  the pair ``(int k, int (u - j h) k)``.

Cell moments are all the product-integration weights need, so a kernel
that is singular at the origin is integrated exactly against piecewise
linear data as long as ``K1``/``K2`` are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma, gammainc, gammaincc

from .laplace import DEFAULT_CONFIG, InversionConfig, stehfest_invert, talbot_invert
from .mittag_leffler import ml_two_param


class Kernel:
    """Base class; subclasses implement ``__call__``, ``integral`` and ``double_integral``."""

    singular_at_zero = True

    def __call__(self, t):
        raise NotImplementedError

    def integral(self, t):
        raise NotImplementedError

    def double_integral(self, t):
        raise NotImplementedError

    def cell_moments(self, h, n):
        nodes = h * np.arange(n + 1)
        k1 = self.integral(nodes)
        k2 = self.double_integral(nodes)
        m0 = np.diff(k1)
        m1 = h * k1[1:] - np.diff(k2)
        return m0, m1


def _zero_safe(fn, t):
    # evaluate fn on the positive part only; K1(0) = K2(0) = 0
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    if np.any(pos):
        out[pos] = fn(t[pos])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PowerKernel(Kernel):
    """``sum_i coefs[i] * t**powers[i]`` with every power > -1."""

    coefs: tuple = ()
    powers: tuple = ()

    def __post_init__(self):
        if any(p <= -1 for p in self.powers):
            raise ValueError("power kernel must be locally integrable (powers > -1)")

    @property
    def singular_at_zero(self):
        return any(p < 0 for p in self.powers)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = sum((c * t**p for c, p in zip(self.coefs, self.powers)), np.zeros_like(t))
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, t):
        return _zero_safe(
            lambda s: sum(c * s ** (p + 1) / (p + 1) for c, p in zip(self.coefs, self.powers))
            + np.zeros_like(s),
            t,
        )

    def double_integral(self, t):
        return _zero_safe(
            lambda s: sum(
                c * s ** (p + 2) / ((p + 1) * (p + 2)) for c, p in zip(self.coefs, self.powers)
            )
            + np.zeros_like(s),
            t,
        )


@dataclass(frozen=True)
class TemperedTailKernel(Kernel):
    """``a + (beta/Gamma(1-beta)) int_t^inf w^(-beta-1) e^(-c w) dw``.

    The unkilled part is written with regularised incomplete gamma
    functions: ``t^-beta e^-ct / Gamma(1-beta) - c^beta Q(1-beta, ct)``.
    """

    beta: float
    c: float
    a: float = 0.0

    def _bare(self, t):
        b, c = self.beta, self.c
        return t ** (-b) * np.exp(-c * t) / gamma(1 - b) - c**b * gammaincc(1 - b, c * t)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.a + self._bare(t)
        return float(out) if out.ndim == 0 else out

    def integral(self, t):
        b, c = self.beta, self.c
        return _zero_safe(
            lambda s: s * self._bare(s) + b * c ** (b - 1) * gammainc(1 - b, c * s) + self.a * s, t
        )

    def double_integral(self, t):
        b, c = self.beta, self.c
        return _zero_safe(
            lambda s: 0.5 * s**2 * self._bare(s)
            + b * c ** (b - 1) * s * gammainc(1 - b, c * s)
            - 0.5 * b * (1 - b) * c ** (b - 2) * gammainc(2 - b, c * s)
            + 0.5 * self.a * s**2,
            t,
        )


@dataclass(frozen=True)
class GammaKernel(Kernel):
    """``t^(beta-1) e^(-c t) / Gamma(beta)``, the inverse transform of ``(phi + c)^-beta``."""

    beta: float
    c: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = t ** (self.beta - 1) * np.exp(-self.c * t) / gamma(self.beta)
        return float(out) if out.ndim == 0 else out

    def integral(self, t):
        b, c = self.beta, self.c
        return _zero_safe(lambda s: c ** (-b) * gammainc(b, c * s), t)

    def double_integral(self, t):
        b, c = self.beta, self.c
        return _zero_safe(
            lambda s: c ** (-b) * (s * gammainc(b, c * s) - b / c * gammainc(b + 1, c * s)), t
        )


@dataclass(frozen=True)
class RetardingKernel(Kernel):
    """Inverse transform of ``1 / (p1 phi^b1 + p2 phi^b2)`` for ``b1 < b2``.

    ``M(t) = t^(b2-1) E_{b2-b1, b2}(-(p1/p2) t^(b2-b1)) / p2``; the
    antiderivatives raise the second Mittag-Leffler parameter by one each.
    """

    p1: float
    b1: float
    p2: float
    b2: float

    def _eval(self, t, shift):
        alpha = self.b2 - self.b1
        r = self.p1 / self.p2
        return (
            t ** (self.b2 - 1 + shift)
            * ml_two_param(alpha, self.b2 + shift, -r * t**alpha)
            / self.p2
        )

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self._eval(t, 0)
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, t):
        return _zero_safe(lambda s: self._eval(s, 1), t)

    def double_integral(self, t):
        return _zero_safe(lambda s: self._eval(s, 2), t)


@dataclass(frozen=True)
class LaplaceKernel(Kernel):
    """Kernel known only through its Laplace transform ``G``; inverted numerically.

    ``method="stehfest"`` samples ``G`` on the positive real axis only, for
    transforms that cannot be continued onto the Talbot contour.
    """

    transform: Callable
    cfg: InversionConfig = field(default=DEFAULT_CONFIG)
    method: str = "talbot"

    def _invert(self, G, t):
        if self.method == "stehfest":
            return stehfest_invert(G, t, self.cfg)
        return talbot_invert(G, t, self.cfg)

    def __call__(self, t):
        return self._invert(self.transform, t)

    def integral(self, t):
        return _zero_safe(lambda s: self._invert(lambda p: self.transform(p) / p, s), t)

    def double_integral(self, t):
        return _zero_safe(lambda s: self._invert(lambda p: self.transform(p) / p**2, s), t)


@dataclass(frozen=True)
class QuadKernel(Kernel):
    """Kernel given only pointwise; integrals by adaptive quadrature."""

    fn: Callable

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.vectorize(self.fn, otypes=[float])(t)
        return float(out) if out.ndim == 0 else out

    def integral(self, t):
        return _zero_safe(
            np.vectorize(lambda s: integrate.quad(self.fn, 0.0, s, limit=200)[0], otypes=[float]),
            t,
        )

    def double_integral(self, t):
        return _zero_safe(
            np.vectorize(
                lambda s: integrate.quad(lambda u: (s - u) * self.fn(u), 0.0, s, limit=200)[0],
                otypes=[float],
            ),
            t,
        )

    def cell_moments(self, h, n):
        m0 = np.empty(n)
        m1 = np.empty(n)
        for j in range(n):
            lo = j * h
            m0[j] = integrate.quad(self.fn, lo, lo + h, limit=200)[0]
            m1[j] = integrate.quad(lambda u: (u - lo) * self.fn(u), lo, lo + h, limit=200)[0]
        return m0, m1
