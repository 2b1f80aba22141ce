"""Bernstein functions, their Levy triplets, conjugates and tails.

A Bernstein function is represented as ``f(phi) = a + b phi + int (1 - e^{-phi s}) nu(ds)``.
Built-in families carry closed forms for ``f``, for the tail
``nu_bar(s) = a + nu(s, inf)`` and, where known, for the conjugate kernel
``M`` with ``L[M](phi) = 1 / f(phi)``.  Custom functions are described by
their tail alone and evaluated by quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma

from . import kernels
from .errors import ConfigError, DomainError, ParameterError, RelaxkitError

__all__ = [
    "LevyTriplet",
    "BernsteinFunction",
    "Stable",
    "TemperedKilled",
    "Tempered",
    "DistributedOrder",
    "Linear",
    "Custom",
    "ConjugatePair",
    "CMReport",
    "make_family",
    "parse_family",
    "tail",
    "conjugate",
    "levy_khintchine_quad",
    "cm_probe",
]

_INF_MASS = 1e12


@dataclass(frozen=True)
class LevyTriplet:
    """Killing rate ``a``, drift ``b`` and the Levy measure given by its tail.

    ``nu_tail(s) = nu(s, inf)`` for ``s > 0`` (killing excluded);
    ``nu_density`` is optional and only used by :func:`levy_khintchine_quad`.
    """

    a: float
    b: float
    nu_tail: Callable
    nu_density: Optional[Callable] = None

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ParameterError(f"triplet needs a >= 0 and b >= 0, got a={self.a}, b={self.b}")

    def check(self, grid=None):
        """Probe the triplet invariants numerically; raise on violation."""
        grid = np.geomspace(1e-6, 1e3, 200) if grid is None else np.asarray(grid, float)
        vals = np.array([self.nu_tail(s) for s in grid], dtype=float)
        if np.any(vals < 0) or np.any(~np.isfinite(vals)):
            raise ParameterError("nu_tail must be finite and nonnegative")
        if np.any(np.diff(vals) > 1e-12 * np.max(np.abs(vals))):
            raise ParameterError("nu_tail must be nonincreasing")
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                integrate.quad(self.nu_tail, 0.0, 1.0, limit=200)
            except integrate.IntegrationWarning as exc:
                raise ParameterError(f"nu_tail not integrable at 0: {exc}") from None
        if not np.isfinite(self.nu_tail(1.0)):
            raise ParameterError("nu_tail(1) must be finite")


def _tail_laplace_quad(tail_fn, phi):
    """``int_0^inf e^{-phi s} tail(s) ds`` for real or complex ``phi`` (Re phi > 0)."""

    def part(fn):
        head = integrate.quad(fn, 0.0, 1.0, limit=200, epsabs=1e-13)[0]
        rest = integrate.quad(fn, 1.0, np.inf, limit=200, epsabs=1e-13)[0]
        return head + rest

    if np.iscomplexobj(phi) and phi.imag != 0:
        re = part(lambda s: (np.exp(-phi * s) * tail_fn(s)).real if s > 0 else 0.0)
        im = part(lambda s: (np.exp(-phi * s) * tail_fn(s)).imag if s > 0 else 0.0)
        return re + 1j * im
    phi = float(np.real(phi))
    return part(lambda s: math.exp(-phi * s) * tail_fn(s) if s > 0 else 0.0)


class BernsteinFunction:
    """Common interface of all families.

    Subclasses are frozen dataclasses; instances are immutable and safe to
    share between threads.
    """

    family = "custom"

    # -- evaluation --------------------------------------------------------
    def __call__(self, phi):
        raise NotImplementedError

    @property
    def triplet(self) -> LevyTriplet:
        raise NotImplementedError

    @property
    def a(self) -> float:
        return self.triplet.a

    @property
    def b(self) -> float:
        return self.triplet.b

    def tail(self, s):
        """``nu_bar(s) = a + nu(s, inf)`` for ``s > 0``."""
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0):
            raise DomainError("tail is defined for s > 0 only")
        return self.tail_kernel()(s)

    def tail_kernel(self) -> kernels.Kernel:
        tr = self.triplet
        return kernels.QuadKernel(lambda s: tr.a + tr.nu_tail(s))

    def conjugate_kernel(self) -> kernels.Kernel:
        """Kernel ``M`` with ``L[M] = 1/f``; numerical inversion by default."""
        return kernels.LaplaceKernel(lambda p: 1.0 / self(p))

    # -- measure summaries -------------------------------------------------
    def total_mass(self) -> float:
        """``nu(0, inf)``; ``inf`` for infinite-activity measures."""
        val = self.triplet.nu_tail(1e-300)
        return math.inf if not np.isfinite(val) or val > _INF_MASS else float(val)

    def mean_jump(self) -> float:
        """``int t nu(dt) = int_0^inf nu(s, inf) ds``; ``inf`` when divergent."""
        fn = self.triplet.nu_tail
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                head = integrate.quad(fn, 0.0, 1.0, limit=200)[0]
                rest = integrate.quad(fn, 1.0, np.inf, limit=200)[0]
            except integrate.IntegrationWarning:
                return math.inf
        val = head + rest
        return math.inf if val > _INF_MASS else val

    def killed(self) -> bool:
        return self.a > 0

    def descriptor(self) -> str:
        return self.family


@dataclass(frozen=True)
class Stable(BernsteinFunction):
    """``f(phi) = phi^beta``."""

    beta: float
    family = "stable"

    def __post_init__(self):
        _check_beta(self.beta)

    def __call__(self, phi):
        return np.asarray(phi) ** self.beta if np.ndim(phi) else phi**self.beta

    @property
    def triplet(self):
        b = self.beta
        return LevyTriplet(
            0.0, 0.0,
            nu_tail=lambda s: s ** (-b) / gamma(1 - b),
            nu_density=lambda s: b * s ** (-b - 1) / gamma(1 - b),
        )

    def tail_kernel(self):
        return kernels.PowerKernel((1 / gamma(1 - self.beta),), (-self.beta,))

    def conjugate_kernel(self):
        return kernels.PowerKernel((1 / gamma(self.beta),), (self.beta - 1,))

    def total_mass(self):
        return math.inf

    def mean_jump(self):
        return math.inf

    def descriptor(self):
        return f"stable:beta={self.beta!r}"


@dataclass(frozen=True)
class TemperedKilled(BernsteinFunction):
    """``f(phi) = (phi + c)^beta``: tempered stable killed at rate ``c^beta``."""

    beta: float
    c: float
    family = "tempered_killed"

    def __post_init__(self):
        _check_beta(self.beta)
        _check_positive("c", self.c)

    def __call__(self, phi):
        return (phi + self.c) ** self.beta

    @property
    def triplet(self):
        bare = kernels.TemperedTailKernel(self.beta, self.c)
        b, c = self.beta, self.c
        return LevyTriplet(
            c**b, 0.0, nu_tail=bare,
            nu_density=lambda s: b * s ** (-b - 1) * np.exp(-c * s) / gamma(1 - b),
        )

    def tail_kernel(self):
        return kernels.TemperedTailKernel(self.beta, self.c, self.c**self.beta)

    def conjugate_kernel(self):
        return kernels.GammaKernel(self.beta, self.c)

    def total_mass(self):
        return math.inf

    def mean_jump(self):
        return self.beta * self.c ** (self.beta - 1)

    def descriptor(self):
        return f"tempered_killed:beta={self.beta!r},c={self.c!r}"


@dataclass(frozen=True)
class Tempered(BernsteinFunction):
    """``f(phi) = (phi + c)^beta - c^beta``: unkilled tempered stable."""

    beta: float
    c: float
    family = "tempered"

    def __post_init__(self):
        _check_beta(self.beta)
        _check_positive("c", self.c)

    def __call__(self, phi):
        # (phi+c)^beta - c^beta loses digits for tiny |phi|; use expm1/log1p form
        return self.c**self.beta * np.expm1(self.beta * np.log1p(phi / self.c))

    @property
    def triplet(self):
        bare = kernels.TemperedTailKernel(self.beta, self.c)
        b, c = self.beta, self.c
        return LevyTriplet(
            0.0, 0.0, nu_tail=bare,
            nu_density=lambda s: b * s ** (-b - 1) * np.exp(-c * s) / gamma(1 - b),
        )

    def tail_kernel(self):
        return kernels.TemperedTailKernel(self.beta, self.c)

    def total_mass(self):
        return math.inf

    def mean_jump(self):
        return self.beta * self.c ** (self.beta - 1)

    def descriptor(self):
        return f"tempered:beta={self.beta!r},c={self.c!r}"


@dataclass(frozen=True)
class DistributedOrder(BernsteinFunction):
    """``f(phi) = sum_k weights[k] * phi^alphas[k]`` (finite mixture of orders)."""

    alphas: tuple
    weights: tuple
    family = "distributed"

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(x) for x in self.alphas))
        object.__setattr__(self, "weights", tuple(float(x) for x in self.weights))
        if not self.alphas or len(self.alphas) != len(self.weights):
            raise ParameterError("alphas and weights must be nonempty and of equal length")
        for al in self.alphas:
            _check_beta(al, name="alpha")
        if any(w < 0 for w in self.weights) or not sum(self.weights) > 0:
            raise ParameterError("weights must be nonnegative with a positive sum")

    def __call__(self, phi):
        return sum(w * phi**al for al, w in zip(self.alphas, self.weights))

    @property
    def triplet(self):
        pairs = list(zip(self.alphas, self.weights))
        return LevyTriplet(
            0.0, 0.0,
            nu_tail=lambda s: sum(w * s ** (-al) / gamma(1 - al) for al, w in pairs),
            nu_density=lambda s: sum(w * al * s ** (-al - 1) / gamma(1 - al) for al, w in pairs),
        )

    def tail_kernel(self):
        coefs = tuple(w / gamma(1 - al) for al, w in zip(self.alphas, self.weights))
        return kernels.PowerKernel(coefs, tuple(-al for al in self.alphas))

    def conjugate_kernel(self):
        active = [(al, w) for al, w in zip(self.alphas, self.weights) if w > 0]
        if len(active) == 1:
            al, w = active[0]
            return kernels.PowerKernel((1 / (w * gamma(al)),), (al - 1,))
        if len(active) == 2:
            (b1, p1), (b2, p2) = sorted(active)
            if b1 < b2:
                return kernels.RetardingKernel(p1, b1, p2, b2)
        return super().conjugate_kernel()

    def total_mass(self):
        return math.inf

    def mean_jump(self):
        return math.inf

    def descriptor(self):
        al = ",".join(repr(x) for x in self.alphas)
        wt = ",".join(repr(x) for x in self.weights)
        return f"distributed:alphas={al};weights={wt}"


@dataclass(frozen=True)
class Linear(BernsteinFunction):
    """``f(phi) = b phi``: pure drift, the inverse subordinator is ``t / b``."""

    b_coef: float = 1.0
    family = "linear"

    def __post_init__(self):
        _check_positive("b", self.b_coef)

    def __call__(self, phi):
        return self.b_coef * phi

    @property
    def triplet(self):
        return LevyTriplet(0.0, self.b_coef, nu_tail=lambda s: 0.0 * s)

    def tail_kernel(self):
        return kernels.PowerKernel()

    def conjugate_kernel(self):
        return kernels.PowerKernel((1 / self.b_coef,), (0.0,))

    def total_mass(self):
        return 0.0

    def mean_jump(self):
        return 0.0

    def descriptor(self):
        return f"linear:b={self.b_coef!r}"


@dataclass(frozen=True)
class Custom(BernsteinFunction):
    """Bernstein function defined by a user triplet; ``f`` evaluated by quadrature.

    The tail must be absolutely continuous on ``(0, inf)``; this cannot be
    verified numerically and is the caller's responsibility.
    """

    custom_triplet: LevyTriplet
    family = "custom"

    @property
    def triplet(self):
        return self.custom_triplet

    def __call__(self, phi):
        tr = self.custom_triplet
        arr = np.asarray(phi)
        flat = arr.ravel()
        out = np.empty(flat.shape, dtype=complex if np.iscomplexobj(arr) else float)
        for i, p in enumerate(flat):
            out[i] = tr.a + tr.b * p + p * _tail_laplace_quad(tr.nu_tail, p)
        out = out.reshape(arr.shape)
        return out.item() if out.ndim == 0 else out

    def conjugate_kernel(self):
        # quadrature for f only converges for Re(phi) > 0, so stay on the real axis
        return kernels.LaplaceKernel(lambda p: 1.0 / self(p), method="stehfest")


def _check_beta(beta, name="beta"):
    if not 0 < beta < 1:
        raise ParameterError(f"{name} must lie in (0, 1), got {beta}")


def _check_positive(name, val):
    if not val > 0:
        raise ParameterError(f"{name} must be > 0, got {val}")


# -- descriptors ----------------------------------------------------------

def parse_family(text: str) -> dict:
    """Parse ``name:key=value,...`` (lists separated by ``;``) into a dict.

    >>> parse_family("distributed:alphas=0.3,0.7;weights=0.5,0.5")
    {'family': 'distributed', 'alphas': [0.3, 0.7], 'weights': [0.5, 0.5]}
    """
    name, _, rest = text.strip().partition(":")
    desc = {"family": name.strip().lower()}
    if not rest:
        return desc
    if ";" in rest:
        for part in rest.split(";"):
            key, _, val = part.partition("=")
            try:
                desc[key.strip()] = [float(v) for v in val.split(",")]
            except ValueError:
                raise ConfigError(f"bad list value in family descriptor {text!r}") from None
        return desc
    for part in rest.split(","):
        key, eq, val = part.partition("=")
        if not eq:
            raise ConfigError(f"expected key=value in family descriptor {text!r}")
        try:
            desc[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"bad numeric value in family descriptor {text!r}") from None
    return desc


def make_family(desc) -> BernsteinFunction:
    """Build a family from a descriptor string or dict.

    Raises :class:`ParameterError` for out-of-range parameters and
    :class:`ConfigError` for unknown families or missing keys.
    """
    if isinstance(desc, BernsteinFunction):
        return desc
    if isinstance(desc, str):
        desc = parse_family(desc)
    desc = dict(desc)
    name = desc.pop("family")
    try:
        if name == "stable":
            return Stable(float(desc["beta"]))
        if name == "tempered_killed":
            return TemperedKilled(float(desc["beta"]), float(desc["c"]))
        if name == "tempered":
            return Tempered(float(desc["beta"]), float(desc["c"]))
        if name == "distributed":
            return DistributedOrder(tuple(desc["alphas"]), tuple(desc["weights"]))
        if name == "linear":
            return Linear(float(desc.get("b", 1.0)))
        if name == "custom":
            return Custom(desc["triplet"])
    except KeyError as exc:
        raise ConfigError(f"family {name!r} is missing parameter {exc}") from None
    raise ConfigError(f"unknown family {name!r}")


def tail(f: BernsteinFunction, s):
    """``nu_bar(s) = a + nu(s, inf)``; raises :class:`DomainError` for ``s <= 0``."""
    return f.tail(s)


def levy_khintchine_quad(f: BernsteinFunction, phi: float) -> float:
    """Evaluate ``a + b phi + int (1 - e^{-phi s}) nu(ds)`` by adaptive quadrature.

    Uses the Levy density when the triplet has one, otherwise the
    integrated-by-parts tail form.  Serves as an oracle for closed forms.
    """
    tr = f.triplet
    if tr.nu_density is None:
        return tr.a + tr.b * phi + phi * _tail_laplace_quad(tr.nu_tail, phi)
    g = lambda s: -math.expm1(-phi * s) * tr.nu_density(s)
    head = integrate.quad(g, 0.0, 1.0, limit=200, epsabs=1e-10)[0]
    # on [1, inf): nu(1, inf) minus the exponentially damped part
    damped = integrate.quad(lambda s: math.exp(-phi * s) * tr.nu_density(s), 1.0, np.inf,
                            limit=200, epsabs=1e-12)[0]
    return tr.a + tr.b * phi + head + float(tr.nu_tail(1.0)) - damped


# -- conjugates -------------------------------------------------------------

@dataclass(frozen=True)
class ConjugatePair:
    """``f`` with its conjugate ``f*(phi) = phi / f(phi)`` and the kernel ``M = nu_bar*``."""

    f: BernsteinFunction
    a_star: float
    b_star: float
    kernel_M: kernels.Kernel = field(repr=False)

    def f_star(self, phi):
        return phi / self.f(phi)


_PROBE = np.geomspace(1e-3, 1e3, 20)


def conjugate(f: BernsteinFunction) -> ConjugatePair:
    """Conjugate pair of a special Bernstein function.

    ``b* = 0`` if ``b > 0`` else ``1 / (a + nu(0, inf))``;
    ``a* = 0`` if ``a > 0`` else ``1 / (b + int t nu(dt))``.
    """
    vals = np.asarray(f(_PROBE), dtype=float)
    if np.all(vals == 0):
        raise RelaxkitError("degenerate conjugate: f vanishes on the probe grid")
    a, b = f.a, f.b
    mass = f.total_mass()
    b_star = 0.0 if b > 0 else (0.0 if math.isinf(mass) else 1.0 / (a + mass))
    if a > 0:
        a_star = 0.0
    else:
        mean = f.mean_jump()
        a_star = 0.0 if math.isinf(mean) else 1.0 / (b + mean)
    return ConjugatePair(f, a_star, b_star, f.conjugate_kernel())


# -- complete monotonicity probe ---------------------------------------------

@dataclass(frozen=True)
class CMReport:
    """Outcome of :func:`cm_probe`; ``worst[n]`` is the most negative scaled value at order n."""

    passed: bool
    order: int
    failures: tuple
    worst: tuple

    def __bool__(self):
        return self.passed


def cm_probe(g, grid, order: int = 6) -> CMReport:
    """Finite-difference probe of complete monotonicity.

    Checks ``(-1)^n n! g[x_i, ..., x_{i+n}] >= -tol`` for ``n = 0..order``
    using Newton divided differences, so uniform and geometric grids are
    both accepted.  ``tol = 1e-10 * max|g| * n! * h^-n`` where ``h`` is the
    mean spacing of the stencil.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise DomainError("grid must be one-dimensional and strictly increasing")
    if not 0 <= order <= 8:
        raise DomainError("order must lie in [0, 8]")
    y = np.asarray(g(x) if callable(g) else g, dtype=float)
    if np.any(~np.isfinite(y)):
        raise DomainError("non-finite values of g on the probe grid")
    scale = np.max(np.abs(y)) or 1.0
    failures = []
    worst = []
    dd = y.copy()
    for n in range(order + 1):
        if n > 0:
            dd = (dd[1:] - dd[:-1]) / (x[n:] - x[:-n])
        if dd.size == 0:
            break
        signed = (-1) ** n * math.factorial(n) * dd
        h = (x[n:] - x[: x.size - n]) / n if n else np.ones_like(dd)
        tol = 1e-10 * scale * math.factorial(n) * h ** (-n)
        bad = np.nonzero(signed < -tol)[0]
        failures.extend((n, int(i), float(signed[i])) for i in bad[:5])
        worst.append(float(np.min(signed / tol)))
    return CMReport(not failures, order, tuple(failures), tuple(worst))
