"""Subordinator paths, the inverse subordinator and Monte Carlo oracles.

Samplers
--------
``stable_exact``
    Kanter's representation of a positive stable variable.
``tempered_reject``
    Stable proposals accepted with probability ``exp(-c Y)``.
``distributed_exact``
    Independent sum of stable parts, one per order.
``compound_poisson``
    Jumps larger than ``eps`` plus a compensating drift; works for any
    triplet and is an approximation of order ``eps``.
``drift``
    Deterministic ``b * dt``.

Killed subordinators are not simulated.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma

from . import _rng
from .bernstein import (
    BernsteinFunction,
    DistributedOrder,
    Linear,
    Stable,
    Tempered,
    make_family,
)
from .errors import ConvergenceError, DomainError, ExtensionNeeded, InversionError
from .laplace import DEFAULT_CONFIG, InversionConfig, stehfest_invert, talbot_invert

__all__ = [
    "SubordinatorPath",
    "MCResult",
    "make_sampler",
    "sample_increment",
    "simulate_path",
    "inverse_at",
    "sample_inverse",
    "default_step",
    "mc_q",
    "mc_mean_inverse",
    "sample_inverse_stable",
    "density_l",
    "subordinated_gaussian",
    "mean_inverse",
]

_MAX_REJECT_ROUNDS = 10_000


def _stable_unit(beta, size, rng):
    """Positive stable variables with ``E exp(-phi X) = exp(-phi^beta)``."""
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    a = (
        np.sin((1 - beta) * u)
        * np.sin(beta * u) ** (beta / (1 - beta))
        / np.sin(u) ** (1 / (1 - beta))
    )
    return (a / e) ** ((1 - beta) / beta)


class _Sampler:
    method = ""

    def draw(self, dt, size, rng):
        raise NotImplementedError


class _DriftSampler(_Sampler):
    method = "drift"

    def __init__(self, b):
        self.b = b

    def draw(self, dt, size, rng):
        return np.broadcast_to(self.b * np.asarray(dt, dtype=float), size).copy()


class _StableSampler(_Sampler):
    method = "stable_exact"

    def __init__(self, beta):
        self.beta = beta

    def draw(self, dt, size, rng):
        return np.asarray(dt, dtype=float) ** (1 / self.beta) * _stable_unit(self.beta, size, rng)


class _DistributedSampler(_Sampler):
    method = "distributed_exact"

    def __init__(self, alphas, weights):
        self.parts = [(a, w) for a, w in zip(alphas, weights) if w > 0]

    def draw(self, dt, size, rng):
        dt = np.asarray(dt, dtype=float)
        out = np.zeros(size)
        for a, w in self.parts:
            out += (w * dt) ** (1 / a) * _stable_unit(a, size, rng)
        return out


class _TemperedSampler(_Sampler):
    method = "tempered_reject"

    def __init__(self, beta, c):
        self.beta = beta
        self.c = c

    def draw(self, dt, size, rng):
        dt = np.broadcast_to(np.asarray(dt, dtype=float), size).ravel()
        # sub-steps keep the acceptance rate exp(-dt c^beta) above 1/e
        k = np.maximum(np.ceil(dt * self.c**self.beta), 1).astype(np.int64)
        sub = dt / k
        out = np.zeros(dt.size)
        need = k.copy()
        rounds = 0
        while True:
            idx = np.nonzero(need > 0)[0]
            if idx.size == 0:
                break
            rounds += 1
            if rounds > _MAX_REJECT_ROUNDS:
                raise ConvergenceError("tempered rejection sampler exceeded its round limit")
            y = sub[idx] ** (1 / self.beta) * _stable_unit(self.beta, idx.size, rng)
            ok = rng.random(idx.size) < np.exp(-self.c * y)
            acc = idx[ok]
            out[acc] += y[ok]
            need[acc] -= 1
        return out.reshape(size)


class _CompoundPoissonSampler(_Sampler):
    """Jumps above ``eps`` at rate ``nu(eps, inf)`` plus compensating drift."""

    def __init__(self, f: BernsteinFunction, eps: float):
        tr = f.triplet
        if not eps > 0:
            raise DomainError("eps must be positive")
        self.eps = eps
        self.method = f"compound_poisson({eps:g})"
        self.rate = float(tr.nu_tail(eps))
        small = integrate.quad(tr.nu_tail, 0.0, eps, limit=200)[0]
        # b + int_0^eps s nu(ds) after integration by parts
        self.drift = tr.b + small - eps * self.rate
        if self.rate > 0:
            # inverse of the normalised tail on a log grid out to 1e-13 mass
            s = eps * np.logspace(0, 1, 64)
            while tr.nu_tail(s[-1]) / self.rate > 1e-13 and s[-1] < eps * 1e40:
                s = np.concatenate([s, s[-1] * np.logspace(0, 1, 65)[1:]])
            p = np.array([tr.nu_tail(v) for v in s]) / self.rate
            keep = np.concatenate([[True], np.diff(p) < 0])
            self._logp = np.log(np.maximum(p[keep], 1e-300))[::-1]
            self._logs = np.log(s[keep])[::-1]

    def _jumps(self, n, rng):
        u = rng.random(n)
        logu = np.log(np.maximum(u, 1e-300))
        out = np.interp(logu, self._logp, self._logs)
        # beyond the table: extend the last log-log slope
        lo = logu < self._logp[0]
        if np.any(lo):
            slope = (self._logs[1] - self._logs[0]) / (self._logp[1] - self._logp[0])
            out[lo] = self._logs[0] + slope * (logu[lo] - self._logp[0])
        return np.exp(out)

    def draw(self, dt, size, rng):
        dt = np.broadcast_to(np.asarray(dt, dtype=float), size).ravel()
        out = self.drift * dt
        if self.rate > 0:
            counts = rng.poisson(self.rate * dt)
            total = int(counts.sum())
            if total:
                owner = np.repeat(np.arange(dt.size), counts)
                out = out + np.bincount(owner, weights=self._jumps(total, rng), minlength=dt.size)
        return out.reshape(size)


def make_sampler(f, method: str | None = None, eps: float | None = None) -> _Sampler:
    """Sampler for increments of the subordinator with exponent ``f``.

    ``method="compound_poisson"`` forces the eps-approximation for any
    family; otherwise the exact sampler of the family is used.
    """
    f = make_family(f)
    if f.a > 0:
        raise DomainError("killed subordinators (a > 0) are not path-simulated")
    if method == "compound_poisson" or (method is None and f.family == "custom"):
        return _CompoundPoissonSampler(f, 1e-4 if eps is None else eps)
    if method not in (None, "exact"):
        raise DomainError(f"unknown sampling method {method!r}")
    if isinstance(f, Linear):
        return _DriftSampler(f.b)
    if isinstance(f, Stable):
        return _StableSampler(f.beta)
    if isinstance(f, Tempered):
        return _TemperedSampler(f.beta, f.c)
    if isinstance(f, DistributedOrder):
        return _DistributedSampler(f.alphas, f.weights)
    raise DomainError(f"no exact sampler for family {f.family!r}")


def sample_increment(f, dt_op, rng, size=None, method=None, eps=None):
    """Draw ``sigma(dt_op)``; ``dt_op`` may be an array (broadcast against ``size``)."""
    dt = np.asarray(dt_op, dtype=float)
    if np.any(dt <= 0):
        raise DomainError("dt_op must be positive")
    shape = np.shape(dt) if size is None else size
    out = make_sampler(f, method, eps).draw(dt, shape, _rng.as_generator(rng))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SubordinatorPath:
    """``sigma`` sampled on ``s_grid = h_s * arange(n + 1)``, ``sigma[0] = 0``."""

    s_grid: np.ndarray
    sigma_values: np.ndarray
    method: str
    drift: float = 0.0

    @property
    def h_s(self):
        return float(self.s_grid[1] - self.s_grid[0])

    def to_csv(self, path=None) -> str:
        lines = ["s,sigma"] + [f"{s:.17g},{v:.17g}" for s, v in zip(self.s_grid, self.sigma_values)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def simulate_path(f, s_max: float, h_s: float, rng, method=None, eps=None) -> SubordinatorPath:
    """Path of ``sigma`` on a uniform operational-time grid up to ``s_max``."""
    if not h_s > 0 or not s_max > 0:
        raise DomainError("h_s and s_max must be positive")
    n = int(math.ceil(s_max / h_s - 1e-12))
    sampler = make_sampler(f, method, eps)
    inc = sampler.draw(h_s, n, _rng.as_generator(rng))
    sigma = np.concatenate([[0.0], np.cumsum(inc)])
    drift = sampler.b if isinstance(sampler, _DriftSampler) else 0.0
    return SubordinatorPath(h_s * np.arange(n + 1), sigma, sampler.method, drift)


def inverse_at(path: SubordinatorPath, t):
    """``L(t) = inf{s : sigma(s) > t}`` on the path grid (right-continuous).

    Returns the left edge of the first cell in which ``sigma`` exceeds ``t``;
    pure-drift paths return ``t / b`` exactly.  Raises
    :class:`ExtensionNeeded` when the path ends before exceeding ``t``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be nonnegative")
    sig = path.sigma_values
    if np.any(sig[-1] <= t_arr):
        raise ExtensionNeeded(
            "path does not cover t; simulate further", needed_time=float(np.max(t_arr))
        )
    if path.method == "drift":
        out = t_arr / path.drift
    else:
        k = np.searchsorted(sig, t_arr, side="right")
        out = path.s_grid[k - 1]
    return float(out) if out.ndim == 0 else out


def mean_inverse(f, t, cfg: InversionConfig = DEFAULT_CONFIG):
    """``E L(t) = int_0^t M``."""
    f = make_family(f)
    return f.conjugate_kernel().integral(t)


def default_step(f, t, n_paths: int, lam: float = 0.0) -> float:
    """Operational step so that the overshoot bias stays below about a third of the SE."""
    el = float(np.min(np.atleast_1d(mean_inverse(f, np.min(t)))))
    return 0.25 * el / (math.sqrt(n_paths) * max(1.0, abs(lam)))


def _inverse_block(sampler, times, h_s, size, rng, chunk=512):
    """Grid inverse ``L`` at every ``times`` for ``size`` independent paths."""
    nt = times.size
    out = np.full((size, nt), np.nan)
    if isinstance(sampler, _DriftSampler):
        out[:] = times / sampler.b
        return out
    cur = np.zeros(size)
    start = np.zeros(size, dtype=np.int64)
    alive = np.arange(size)
    while alive.size:
        inc = sampler.draw(h_s, (alive.size, chunk), rng)
        cums = cur[alive, None] + np.cumsum(inc, axis=1)
        for j in range(nt):
            col = out[alive, j]
            todo = np.isnan(col)
            if not np.any(todo):
                continue
            below = np.count_nonzero(cums[todo] <= times[j], axis=1)
            hit = below < chunk
            rows = alive[todo][hit]
            out[rows, j] = (start[rows] + below[hit]) * h_s
        cur[alive] = cums[:, -1]
        start[alive] += chunk
        alive = alive[np.isnan(out[alive, -1])]
        if start[0] > 10**8:
            raise ConvergenceError("inverse simulation exceeded 1e8 steps")
    return out


def sample_inverse(f, times, n_paths: int, seed: int, h_s: float | None = None,
                   method=None, eps=None, workers: int = 1, stream: int = _rng.STREAM_INVERSE):
    """Samples of ``L(t)`` for every ``t`` in ``times`` (shape ``(n_paths, len(times))``).

    Each path is simulated until ``sigma`` exceeds ``max(times)``; paths are
    grouped into fixed blocks with their own streams.
    """
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    if np.any(times <= 0):
        raise DomainError("times must be positive")
    sampler = make_sampler(f, method, eps)
    h = default_step(f, times, n_paths) if h_s is None else float(h_s)

    def run(block, size):
        return _inverse_block(sampler, times, h, size, _rng.block_rng(seed, stream, block))

    parts = _rng.map_blocks(run, n_paths, workers)
    return np.concatenate(parts, axis=0), h, sampler.method


@dataclass(frozen=True)
class MCResult:
    """Monte Carlo mean with its standard error and the settings used."""

    estimate: float
    se: float
    n: int
    h_s: float
    seed: int
    method: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def contains(self, value, k=3.29):
        return abs(self.estimate - value) <= k * self.se


def _summarise(samples, n, h, seed, method):
    est = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(est)
    return [MCResult(float(e), float(s), n, h, seed, method) for e, s in zip(est, se)]


def mc_q(f, lam: float, t, n_paths: int, seed: int, h_s=None, method=None, eps=None,
         workers: int = 1):
    """Monte Carlo ``q(lambda, t) = E exp(lambda L(t))``; a list of results for array ``t``."""
    if n_paths < 1000:
        raise DomainError("mc_q needs n_paths >= 1000")
    if lam > 0:
        raise DomainError("lambda must be <= 0")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if lam == 0:
        res = [MCResult(1.0, 0.0, n_paths, 0.0, seed, "exact") for _ in t_arr]
    else:
        if h_s is None:
            h_s = default_step(f, t_arr, n_paths, lam)
        order = np.argsort(t_arr)
        L, h, m = sample_inverse(f, t_arr, n_paths, seed, h_s, method, eps, workers)
        res_sorted = _summarise(np.exp(lam * L), n_paths, h, seed, m)
        res = [None] * t_arr.size
        for pos, k in enumerate(order):
            res[k] = res_sorted[pos]
    return res[0] if np.ndim(t) == 0 else res


def mc_mean_inverse(f, t, n_paths: int, seed: int, h_s=None, workers: int = 1):
    """Monte Carlo ``E L(t)`` from simulated paths."""
    L, h, m = sample_inverse(f, [t], n_paths, seed, h_s, workers=workers)
    return _summarise(L, n_paths, h, seed, m)[0]


def sample_inverse_stable(beta: float, t: float, size: int, rng):
    """Exact draws of ``L(t)`` for ``f = phi^beta`` via ``L(t) = (t / X)^beta``."""
    x = _stable_unit(beta, size, _rng.as_generator(rng))
    return (t / x) ** beta


def density_l(f, x, t: float, cfg: InversionConfig = DEFAULT_CONFIG, check: bool = False):
    """Density of ``L(t)`` at ``x`` from ``(f(phi)/phi) exp(-x f(phi))``.

    Points where Talbot overflows or goes negative are recomputed with
    Stehfest.  Negative values still beyond ``1e-10`` are reported with a
    warning and left as computed.  ``check=True`` compares against Stehfest and raises on
    disagreement above ``1e-5`` absolute.
    """
    f = make_family(f)
    if f.b > 0 or math.isfinite(f.total_mass()):
        raise DomainError("L(t) has no density when b > 0 or the Levy measure is finite")
    if not t > 0:
        raise DomainError("t must be positive")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise DomainError("x must be positive")
    xs = x_arr.reshape(-1)
    tt = np.full(xs.shape, float(t))

    def transform(xv):
        # p has shape (len(xv), nodes): row i belongs to xv[i]
        def G(p):
            fp = f(p)
            return fp / p * np.exp(-xv[:, None] * fp)
        return G

    G = transform(xs)
    try:
        val = np.atleast_1d(talbot_invert(G, tt, cfg))
    except InversionError:
        val = np.full(xs.shape, np.nan)
    # exp(-x f) grows on the part of the contour where Re f < 0, so for large
    # x Talbot can overflow or cancel; the real-axis method is safe there
    bad = ~np.isfinite(val) | (val < -1e-10)
    if np.any(bad):
        Gb = transform(xs[bad])
        val[bad] = np.atleast_1d(stehfest_invert(lambda p: np.real(Gb(p + 0j)), tt[bad], cfg))
    if check:
        ref = np.atleast_1d(stehfest_invert(lambda p: np.real(G(p + 0j)), tt, cfg))
        if np.max(np.abs(val - ref)) > 1e-5:
            raise InversionError("density inversion: Talbot and Stehfest disagree")
    if np.any(val < -1e-10):
        warnings.warn("negative density values from inversion", RuntimeWarning, stacklevel=2)
    val = val.reshape(x_arr.shape)
    return float(val) if val.ndim == 0 else val


def subordinated_gaussian(f, x, t: float, D: float = 1.0, cfg: InversionConfig = DEFAULT_CONFIG):
    """``p(x, t) = int_0^inf N(x; 0, 2 D s) l(s, t) ds`` by adaptive quadrature."""
    if not D > 0:
        raise DomainError("D must be positive")
    f = make_family(f)
    x_arr = np.abs(np.asarray(x, dtype=float))

    def one(xv):
        g = lambda s: (
            math.exp(-xv * xv / (4 * D * s)) / math.sqrt(4 * math.pi * D * s) * density_l(f, s, t, cfg)
            if s > 0 else 0.0
        )
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                head = integrate.quad(g, 0.0, 1.0, limit=200, epsabs=1e-12)[0]
                tail = integrate.quad(g, 1.0, np.inf, limit=200, epsabs=1e-12)[0]
            except integrate.IntegrationWarning as exc:
                raise ConvergenceError(f"subordinated Gaussian quadrature failed: {exc}") from None
        return head + tail

    out = np.vectorize(one, otypes=[float])(x_arr)
    return float(out) if out.ndim == 0 else out
