"""Relaxation patterns ``q(lambda, t)`` and the generalized Caputo operator.

Three independent routes are provided:

* :func:`relax_transform` inverts ``q~(phi) = (f(phi)/phi) / (f(phi) - lambda)``;
* :func:`mittag_leffler` gives the closed form ``E_beta(lambda t^beta)`` for
  the stable family;
* :func:`solve_backward_cq` and :func:`solve_adjoint_cq` march the two
  convolution equations in time with product integration.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .bernstein import BernsteinFunction, ConjugatePair, conjugate, make_family
from .errors import ConvergenceError, DomainError
from .laplace import DEFAULT_CONFIG, InversionConfig, invert_checked, talbot_invert
from .mittag_leffler import mittag_leffler, ml_two_param

__all__ = [
    "RelaxationCurve",
    "relax_transform",
    "relax_integral",
    "relax_series",
    "relaxation_transform",
    "mittag_leffler",
    "ml_two_param",
    "solve_backward_cq",
    "solve_adjoint_cq",
    "apply_Df",
    "asymptotic_ratio",
    "lag_weights",
]

METHODS = ("transform", "series", "cq_backward", "cq_adjoint", "monte_carlo")
MAX_STEPS = 10**7
# slack for the [0, 1] step-acceptance test of the implicit solvers
_STEP_SLACK = 1e-6


@dataclass(frozen=True)
class RelaxationCurve:
    """Samples of ``q(lambda, t)`` on a grid starting at ``t = 0``."""

    lam: float
    times: np.ndarray
    values: np.ndarray
    method: str
    err: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        err = np.zeros_like(values) if self.err is None else np.asarray(self.err, dtype=float)
        if times.shape != values.shape or err.shape != values.shape:
            raise ValueError("times, values and err must have equal shapes")
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "err", err)

    def __len__(self):
        return self.times.size

    def at(self, t):
        """Linear interpolation of the samples."""
        return np.interp(t, self.times, self.values)

    def clamped(self):
        """Values clipped to ``[0, 1]`` (reporting only)."""
        return np.clip(self.values, 0.0, 1.0)

    def to_csv(self, path=None, comment: str | None = None) -> str:
        """Write ``t,q,err,method`` rows with 17 significant digits."""
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        buf.write("t,q,err,method\n")
        for t, q, e in zip(self.times, self.values, self.err):
            buf.write(f"{t:.17g},{q:.17g},{e:.17g},{self.method}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _check_lambda(lam):
    lam = float(lam)
    if not lam <= 0 or not math.isfinite(lam):
        raise DomainError(f"lambda must be finite and <= 0, got {lam}")
    return lam


def _check_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a nonempty 1-d grid")
    if np.any(~np.isfinite(times)) or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise DomainError("times must be finite, nonnegative and strictly increasing")
    return times


def relaxation_transform(f: BernsteinFunction, lam: float):
    """Callable ``phi -> (f(phi)/phi) / (f(phi) - lambda)``."""
    return lambda p: (f(p) / p) / (f(p) - lam)


def relax_transform(
    f, lam: float, times, cfg: InversionConfig = DEFAULT_CONFIG
) -> RelaxationCurve:
    """``q(lambda, t)`` by numerical Laplace inversion at each grid point.

    The value at ``t = 0`` is set to 1.  ``err`` holds the Talbot/Stehfest
    disagreement; ``meta["disagree"]`` counts points beyond tolerance.
    """
    f = make_family(f)
    lam = _check_lambda(lam)
    times = _check_times(times)
    values = np.ones_like(times)
    err = np.zeros_like(times)
    pos = times > 0
    n_bad = 0
    if lam != 0 and np.any(pos):
        res = invert_checked(relaxation_transform(f, lam), times[pos], cfg)
        values[pos] = res.value
        err[pos] = res.error
        n_bad = int(np.count_nonzero(res.disagree))
    return RelaxationCurve(lam, times, values, "transform", err, {"disagree": n_bad})


def relax_series(beta: float, lam: float, times) -> RelaxationCurve:
    """Closed form ``E_beta(lambda t^beta)`` for the stable family ``phi^beta``."""
    lam = _check_lambda(lam)
    times = _check_times(times)
    values = np.asarray(mittag_leffler(beta, lam * times**beta), dtype=float).reshape(times.shape)
    values[times == 0] = 1.0
    return RelaxationCurve(lam, times, values, "series")


def relax_integral(f, lam: float, times, cfg: InversionConfig = DEFAULT_CONFIG):
    """``int_0^t q(lambda, s) ds`` by inverting ``q~(phi) / phi``."""
    f = make_family(f)
    lam = _check_lambda(lam)
    times = _check_times(times)
    out = times.copy()
    pos = times > 0
    if lam != 0 and np.any(pos):
        qt = relaxation_transform(f, lam)
        out[pos] = talbot_invert(lambda p: qt(p) / p, times[pos], cfg)
    return out


# -- product integration -------------------------------------------------------

def lag_weights(kernel, h: float, n: int):
    """Hat-function weights ``(a, b)`` for piecewise-linear data.

    For the cell at lag ``m`` (``u`` in ``[m h, (m+1) h]`` with ``u = t - s``)
    ``a[m]`` multiplies the node nearer to ``t`` and ``b[m]`` the farther one.
    """
    m0, m1 = kernel.cell_moments(h, n)
    return m0 - m1 / h, m1 / h


def _node_weights(a, b):
    # combined weight of interior node at lag m (m >= 1), and of the newest node (m = 0)
    om = np.empty(a.size)
    om[0] = a[0]
    om[1:] = a[1:] + b[:-1]
    return om


def _grid(dt, T):
    if not dt > 0 or not T > 0:
        raise DomainError("dt and T must be positive")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not an integer multiple of dt={dt}")
    if n > MAX_STEPS:
        raise DomainError(f"T/dt = {n} exceeds the limit {MAX_STEPS}")
    return n, dt * np.arange(n + 1)


_GL_Y, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_Y = 0.5 * (_GL_Y + 1.0)
_GL_W = 0.5 * _GL_W


def _first_cell_weights(tail_k, g, h, t):
    """``W[n] = int_0^h g(s)/g(h) nu_bar(t_n - s) ds`` for ``n >= 1``."""
    n_tot = t.size - 1
    W = np.zeros(t.size)
    gh = float(g(h))
    if gh <= 0:
        raise ConvergenceError("first-cell basis g(h) is not positive")
    n_quad = min(n_tot, 3)
    for n in range(1, n_quad + 1):
        tn = t[n]
        W[n] = integrate.quad(
            lambda s: float(g(s)) / gh * float(tail_k(tn - s)), 0.0, h, limit=200
        )[0]
    if n_tot > n_quad:
        # s = h y^4 smooths the s^beta behaviour of g at the origin
        s = h * _GL_Y**4
        wq = 4 * h * _GL_Y**3 * _GL_W * np.asarray(g(s), dtype=float) / gh
        W[n_quad + 1:] = np.asarray(tail_k(t[n_quad + 1:, None] - s), dtype=float) @ wq
    return W


def _accept(q, n):
    if not -_STEP_SLACK <= q <= 1 + _STEP_SLACK or not math.isfinite(q):
        raise ConvergenceError(f"implicit step {n} left [0, 1] (q={q}); reduce dt")


def _estimate(solver, f, lam, dt, T, values):
    # first-order scheme: |q_dt - q_2dt| estimates the error of q_dt
    n = values.size - 1
    if n < 4 or n % 2:
        return np.zeros_like(values)
    coarse = solver(f, lam, 2 * dt, T, estimate_error=False).values
    diff = np.abs(values[::2] - coarse)
    return np.interp(np.arange(n + 1), np.arange(0, n + 1, 2), diff)


def solve_backward_cq(f, lam: float, dt: float, T: float, estimate_error: bool = True):
    """Solve ``d/dt int q(s) nu_bar(t-s) ds - nu_bar(t) + b q' = lambda q``.

    The equation is integrated once in time and discretised by product
    integration with piecewise-linear ``q``; the right-hand integral uses the
    implicit rectangle rule.  On the first cell ``q - 1`` is interpolated by
    ``g(s)/g(h)`` with ``g = int_0^s M``, which carries the leading small-time
    behaviour of the solution.  ``lambda = 0`` returns ones exactly.
    """
    f = make_family(f)
    lam = _check_lambda(lam)
    n_steps, t = _grid(dt, T)
    h = dt
    if lam == 0:
        return RelaxationCurve(lam, t, np.ones_like(t), "cq_backward", meta={"dt": dt})
    drift = f.b
    tail_k = f.tail_kernel()
    a, b = lag_weights(tail_k, h, n_steps)
    om = _node_weights(a, b)
    W = _first_cell_weights(tail_k, f.conjugate_kernel().integral, h, t)
    q = np.ones(n_steps + 1)
    u = np.zeros(n_steps + 1)
    S = 0.0
    for n in range(1, n_steps + 1):
        if n == 1:
            wn, hist = W[1], 0.0
        else:
            wn = om[0]
            hist = (b[n - 2] + W[n]) * u[1]
            if n > 2:
                hist += np.dot(om[n - 2:0:-1], u[2:n])
        wn += drift
        qn = (lam * S - hist + wn) / (wn - lam * h)
        _accept(qn, n)
        q[n] = qn
        u[n] = qn - 1.0
        S += h * qn
    err = _estimate(solve_backward_cq, f, lam, dt, T, q) if estimate_error else None
    return RelaxationCurve(lam, t, q, "cq_backward", err, {"dt": dt})


def solve_adjoint_cq(pair, lam: float, dt: float, T: float, estimate_error: bool = True):
    """Solve ``q(t) = 1 + lambda int_0^t q(s) M(t-s) ds`` with ``M = nu_bar*``.

    Accepts a :class:`ConjugatePair` or anything :func:`make_family` takes.
    Product integration with piecewise-linear ``q``, implicit in ``q(t_n)``.
    """
    if not isinstance(pair, ConjugatePair):
        pair = conjugate(make_family(pair))
    lam = _check_lambda(lam)
    n_steps, t = _grid(dt, T)
    h = dt
    if lam == 0:
        return RelaxationCurve(lam, t, np.ones_like(t), "cq_adjoint", meta={"dt": dt})
    a, b = lag_weights(pair.kernel_M, h, n_steps)
    om = _node_weights(a, b)
    q = np.ones(n_steps + 1)
    denom = 1.0 - lam * om[0]
    for n in range(1, n_steps + 1):
        hist = b[n - 1] * q[0]
        if n > 1:
            hist += np.dot(om[n - 1:0:-1], q[1:n])
        qn = (1.0 + lam * hist) / denom
        _accept(qn, n)
        q[n] = qn
    err = _estimate(solve_adjoint_cq, pair, lam, dt, T, q) if estimate_error else None
    return RelaxationCurve(lam, t, q, "cq_adjoint", err, {"dt": dt})


def convolve_tail(values, kernel, h: float):
    """``int_0^{t_n} (v(s) - v(0)) k(t_n - s) ds`` for piecewise-linear ``v``.

    ``values`` has the time axis first; trailing axes are carried along, so
    matrix-valued samples are supported.
    """
    v = np.asarray(values, dtype=float)
    n_steps = v.shape[0] - 1
    u = v - v[0]
    a, b = lag_weights(kernel, h, n_steps)
    om = _node_weights(a, b)
    out = np.zeros_like(u)
    flat = u.reshape(u.shape[0], -1)
    res = out.reshape(out.shape[0], -1)
    for n in range(1, n_steps + 1):
        # node 0 contributes nothing since u[0] = 0
        res[n] = om[n - 1::-1] @ flat[1:n + 1]
    return out


def _uniform_step(t_grid, n_values):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size != n_values:
        raise DomainError("grid and samples must have matching lengths")
    if t.size < 2 or t[0] != 0:
        raise DomainError("grid must start at t = 0 and have at least two points")
    h = t[1] - t[0]
    if np.any(np.abs(np.diff(t) - h) > 1e-9 * max(h, t[-1] * 1e-6)):
        raise DomainError("grid must be uniform")
    return h


def apply_Df(u, f, t_grid):
    """Generalized Caputo derivative ``b u' + d/dt int (u(s) - u(0)) nu_bar(t-s) ds``.

    ``u`` sampled on a uniform grid from ``t = 0``; piecewise-linear product
    integration followed by a backward difference.  The first entry repeats
    the first-step value.
    """
    f = make_family(f)
    u = np.asarray(u, dtype=float)
    h = _uniform_step(t_grid, u.shape[0])
    conv = convolve_tail(u, f.tail_kernel(), h)
    out = np.empty_like(u)
    out[1:] = (np.diff(conv, axis=0) + f.b * np.diff(u, axis=0)) / h
    out[0] = out[1]
    return out


def asymptotic_ratio(f, lam: float, t, cfg: InversionConfig = DEFAULT_CONFIG):
    """``q(lambda, t) (a - lambda) / nu_bar(t)``, which tends to 1 for large ``t``."""
    f = make_family(f)
    lam = _check_lambda(lam)
    if lam == 0:
        raise DomainError("asymptotic_ratio needs lambda < 0")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    q = talbot_invert(relaxation_transform(f, lam), t, cfg)
    out = np.asarray(q) * (f.a - lam) / np.asarray(f.tail(t))
    return float(out[0]) if out.size == 1 else out
