"""Finite-state semi-Markov chains driven by an inverse subordinator.

The generator is ``A = theta (H - I)`` for a stochastic matrix ``H``.  The
transition matrices ``q(A, t)`` are obtained by the spectral calculus
``sum_j q(lambda_j, t) v_j v_j^T`` or by marching the renewal equation,
and compared with simulated paths whose holding times are
``J = sigma(E)``, ``E ~ Exp(theta)``.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _rng
from .bernstein import BernsteinFunction, make_family
from .errors import ConfigError, ConvergenceError, DomainError
from .invsub import density_l, make_sampler
from .laplace import DEFAULT_CONFIG, InversionConfig
from .relaxation import (
    _grid,
    _node_weights,
    lag_weights,
    relax_integral,
    relax_transform,
    convolve_tail,
)

__all__ = [
    "SemiMarkovModel",
    "SpectralDecomposition",
    "TransitionMatrixCurve",
    "SemiMarkovPath",
    "ResidualReport",
    "OccupationReport",
    "jacobi_eigen",
    "matrix_relax",
    "matrix_relax_bochner",
    "renewal_solve",
    "kolmogorov_residual",
    "simulate",
    "sample_waiting_times",
    "occupancy",
    "occupation_stats",
    "load_model",
    "flip_model",
    "reflected_walk",
    "biased_walk",
]

SYM_TOL = 1e-12


# -- eigen-decomposition --------------------------------------------------------

@dataclass(frozen=True)
class SpectralDecomposition:
    """``A = V diag(eigenvalues) V^T`` with eigenvalues sorted descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _round_robin(m):
    # rounds of disjoint pairs covering every pair once (circle method)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        rounds.append((np.array(players[:half]), np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigen(A, max_sweeps: int = 60) -> SpectralDecomposition:
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Rotations on disjoint index pairs are applied together (round-robin
    ordering), so each sweep costs ``n - 1`` vectorised passes.
    """
    a = np.array(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("matrix must be square")
    n = a.shape[0]
    if n > 2000:
        raise DomainError("jacobi_eigen supports at most 2000 states")
    scale = max(np.max(np.abs(a)), 1.0) if n else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * scale:
        raise DomainError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n > 1:
        m = n + (n % 2)
        rounds = []
        for p, q in _round_robin(m):
            keep = (p < n) & (q < n)
            p, q = np.minimum(p[keep], q[keep]), np.maximum(p[keep], q[keep])
            rounds.append((p, q))
        fro = np.linalg.norm(a)
        prev = math.inf
        for sweep in range(max_sweeps + 1):
            off = np.linalg.norm(a - np.diag(np.diag(a)))
            # converged, or stagnating at the round-off floor
            if off <= 1e-14 * fro or (off <= 1e-12 * fro and off >= 0.5 * prev):
                break
            prev = off
            if sweep == max_sweeps:
                raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
            for p, q in rounds:
                apq = a[p, q]
                act = np.abs(apq) > 1e-300
                if not np.any(act):
                    continue
                p, q, apq = p[act], q[act], apq[act]
                theta = (a[q, q] - a[p, p]) / (2 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t[theta == 0] = 1.0
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c[:, None] * ap - s[:, None] * aq
                a[q, :] = s[:, None] * ap + c[:, None] * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    # sign convention: first entry of largest magnitude is positive
    lead = np.argmax(np.abs(v) > np.max(np.abs(v), axis=0) - 1e-12, axis=0)
    v = v * np.where(v[lead, np.arange(n)] < 0, -1.0, 1.0)
    return SpectralDecomposition(w, v)


# -- model ------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiMarkovModel:
    """Jump matrix ``H``, rate ``theta = -lambda`` and Bernstein function ``f``.

    ``symmetric=False`` admits a non-symmetric ``H`` for simulation-only use
    (spectral routines then refuse the model).
    """

    H: np.ndarray
    theta: float
    f: BernsteinFunction
    states: tuple = None
    symmetric: bool = True

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] == 0:
            raise ConfigError("H must be a nonempty square matrix")
        if np.any(H < -1e-14):
            raise ConfigError("H must have nonnegative entries")
        if np.max(np.abs(H.sum(axis=1) - 1)) > 1e-12:
            raise ConfigError("rows of H must sum to 1")
        if self.symmetric and np.max(np.abs(H - H.T)) > SYM_TOL:
            raise ConfigError("H must be symmetric")
        if not self.theta > 0:
            raise ConfigError("theta must be positive")
        f = make_family(self.f)
        if f.a > 0:
            raise ConfigError("killed subordinators give defective waiting times; not supported")
        states = tuple(range(H.shape[0])) if self.states is None else tuple(self.states)
        if len(states) != H.shape[0]:
            raise ConfigError("states must match the size of H")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def size(self):
        return self.H.shape[0]

    @property
    def A(self):
        return self.theta * (self.H - np.eye(self.size))

    @property
    def lam(self):
        return -self.theta

    @classmethod
    def from_dict(cls, d, symmetric=True):
        try:
            H = np.array(d["H"], dtype=float)
            n = len(d.get("states", [])) or int(round(math.sqrt(H.size)))
            return cls(H.reshape(n, n), float(d["theta"]), make_family(d["family"]),
                       tuple(d["states"]) if "states" in d else None, symmetric)
        except KeyError as exc:
            raise ConfigError(f"model is missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model: {exc}") from None

    def to_dict(self):
        return {
            "states": list(self.states),
            "H": self.H.ravel().tolist(),
            "theta": self.theta,
            "family": self.f.descriptor(),
        }


def load_model(path, symmetric=True) -> SemiMarkovModel:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from None
    return SemiMarkovModel.from_dict(d, symmetric)


def flip_model(theta=1.0, family="stable:beta=0.5"):
    """Two states that always swap."""
    return SemiMarkovModel(np.array([[0.0, 1.0], [1.0, 0.0]]), theta, make_family(family))


def reflected_walk(n_states, theta=1.0, family="stable:beta=0.5"):
    """Symmetric nearest-neighbour walk on ``0..n-1``; the ends hold with probability 1/2."""
    H = np.zeros((n_states, n_states))
    i = np.arange(n_states - 1)
    H[i, i + 1] = H[i + 1, i] = 0.5
    H[0, 0] = H[-1, -1] = 0.5
    return SemiMarkovModel(H, theta, make_family(family))


def biased_walk(n_states, p_up, theta=1.0, family="stable:beta=0.5"):
    """Walk drifting upward with an absorbing top state (non-symmetric ``H``)."""
    H = np.zeros((n_states, n_states))
    for k in range(n_states - 1):
        H[k, k + 1] = p_up
        H[k, max(k - 1, 0)] += 1 - p_up
    H[-1, -1] = 1.0
    return SemiMarkovModel(H, theta, make_family(family), symmetric=False)


# -- matrix curves ------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionMatrixCurve:
    times: np.ndarray
    matrices: np.ndarray
    method: str = "spectral"
    meta: dict = field(default_factory=dict, compare=False)

    def invariants(self):
        """Deviations from ``q(A, 0) = I``, unit row sums, bounds and symmetry."""
        m = self.matrices
        n = m.shape[-1]
        return {
            "initial": float(np.max(np.abs(m[0] - np.eye(n)))) if self.times[0] == 0 else 0.0,
            "row_sum": float(np.max(np.abs(m.sum(axis=2) - 1))),
            "lower": float(max(0.0, -np.min(m))),
            "upper": float(max(0.0, np.max(m) - 1)),
            "symmetry": float(np.max(np.abs(m - np.swapaxes(m, 1, 2)))),
        }

    def to_csv(self, path=None, comment=None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        buf.write("t,i,j,value\n")
        n = self.matrices.shape[-1]
        for t, mat in zip(self.times, self.matrices):
            for i in range(n):
                for j in range(n):
                    buf.write(f"{t:.17g},{i},{j},{mat[i, j]:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _spectral(model: SemiMarkovModel):
    if not model.symmetric:
        raise DomainError("spectral routines need a symmetric H")
    dec = jacobi_eigen(model.A)
    lam = dec.eigenvalues.copy()
    # the generator is negative semi-definite; clear round-off above 0
    lam[lam > -1e-12 * model.theta] = 0.0
    return lam, dec.eigenvectors


def matrix_relax(model: SemiMarkovModel, times, cfg: InversionConfig = DEFAULT_CONFIG,
                 workers: int = 1) -> TransitionMatrixCurve:
    """``q(A, t) = sum_j q(lambda_j, t) v_j v_j^T`` with curves from transform inversion."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lam, v = _spectral(model)
    uniq = np.unique(np.round(lam, 12))

    def curve(l):
        return relax_transform(model.f, float(l), times, cfg).values

    if workers > 1 and uniq.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            curves = list(pool.map(curve, uniq))
    else:
        curves = [curve(l) for l in uniq]
    table = dict(zip(uniq, curves))
    qlam = np.stack([table[l] for l in np.round(lam, 12)], axis=1)
    mats = np.einsum("tj,ij,kj->tik", qlam, v, v)
    mats[times == 0] = np.eye(model.size)
    return TransitionMatrixCurve(times, mats, "spectral")


def matrix_relax_bochner(model: SemiMarkovModel, t: float, cfg: InversionConfig = DEFAULT_CONFIG):
    """``int_0^inf exp(A s) l(s, t) ds`` by vector quadrature (needs a density of ``L``)."""
    lam, v = _spectral(model)

    def integrand(s):
        if s <= 0:
            return np.zeros(model.size**2)
        return ((v * np.exp(lam * s)) @ v.T).ravel() * density_l(model.f, s, t, cfg)

    val, _ = integrate.quad_vec(integrand, 0.0, np.inf, epsabs=1e-11, epsrel=1e-10)
    return val.reshape(model.size, model.size)


def renewal_solve(model: SemiMarkovModel, dt: float, T: float,
                  cfg: InversionConfig = DEFAULT_CONFIG) -> TransitionMatrixCurve:
    """March ``Q(t) = q(t) I + H int_0^t Q(s) f_J(t - s) ds`` with product integration.

    ``f_J = -dq/dt`` is never evaluated pointwise: its cell moments follow
    from ``q`` and ``int q``, both by transform inversion, which handles the
    singularity of ``f_J`` at the origin exactly.
    """
    n_steps, t = _grid(dt, T)
    if n_steps < 100 and T / dt < 100:
        raise DomainError("renewal_solve needs dt <= T / 100")
    q = relax_transform(model.f, model.lam, t, cfg).values
    Qint = relax_integral(model.f, model.lam, t, cfg)
    h = dt
    m0 = q[:-1] - q[1:]
    m1 = -h * q[1:] + np.diff(Qint)
    a, b = m0 - m1 / h, m1 / h
    om = _node_weights(a, b)
    n = model.size
    H = model.H
    eye = np.eye(n)
    solve = np.linalg.inv(eye - om[0] * H)
    Q = np.empty((n_steps + 1, n, n))
    Q[0] = eye
    flat = Q.reshape(n_steps + 1, -1)
    for k in range(1, n_steps + 1):
        hist = b[k - 1] * flat[0]
        if k > 1:
            hist = hist + om[k - 1:0:-1] @ flat[1:k]
        Q[k] = solve @ (q[k] * eye + H @ hist.reshape(n, n))
    return TransitionMatrixCurve(t, Q, "renewal", {"dt": dt})


@dataclass(frozen=True)
class ResidualReport:
    form: str
    residual: float
    commutation: float
    coarse_residual: float
    ratio: float
    too_coarse: bool

    def as_dict(self):
        return dict(self.__dict__)


_FORMS = ("backward", "forward", "backward_adjoint", "forward_adjoint")


def _residual_series(times, mats, model, form):
    h = times[1] - times[0]
    A = model.A
    eye = np.eye(model.size)
    if form in ("backward", "forward"):
        conv = convolve_tail(mats, model.f.tail_kernel(), h) + model.f.b * (mats - eye)
        integ = np.concatenate(
            [np.zeros((1,) + mats.shape[1:]),
             np.cumsum(0.5 * h * (mats[1:] + mats[:-1]), axis=0)]
        )
        rhs = A @ integ if form == "backward" else integ @ A
        return conv - rhs
    # q = I + A (M * q): product integration over every cell, q(0) = I included
    M = model.f.conjugate_kernel()
    n_steps = times.size - 1
    a, b = lag_weights(M, h, n_steps)
    om = _node_weights(a, b)
    flat = mats.reshape(n_steps + 1, -1)
    conv = np.zeros_like(flat)
    for k in range(1, n_steps + 1):
        conv[k] = b[k - 1] * flat[0] + om[k - 1::-1] @ flat[1:k + 1]
    conv = conv.reshape(mats.shape)
    rhs = A @ conv if form == "backward_adjoint" else conv @ A
    return mats - eye - rhs


def kolmogorov_residual(curve: TransitionMatrixCurve, model: SemiMarkovModel,
                        form: str = "backward", skip: int = 5) -> ResidualReport:
    """Residual of the generalized Kolmogorov equation on a sampled curve.

    The non-adjoint forms are checked after one integration in time,
    ``int (q - I) nu_bar(t - s) ds + b (q - I) = A int q``, which avoids
    differentiating the singular convolution.  The maximum is taken over
    grid points ``n >= skip``.  The same residual on every second point
    (step ``2 dt``) is reported with the ratio; a ratio near 1 means the
    residual is not yet dominated by the discretisation and is flagged.
    """
    if form not in _FORMS:
        raise DomainError(f"form must be one of {_FORMS}")
    times = np.asarray(curve.times, dtype=float)
    _check_uniform(times)
    mats = curve.matrices
    res = _residual_series(times, mats, model, form)
    r = float(np.max(np.abs(res[skip:]))) if res.shape[0] > skip else 0.0
    coarse = _residual_series(times[::2], mats[::2], model, form)
    rc = float(np.max(np.abs(coarse[skip:]))) if coarse.shape[0] > skip else 0.0
    A = model.A
    comm = float(np.max(np.abs(np.einsum("ij,tjk->tik", A, mats) - mats @ A)))
    ratio = r / rc if rc > 0 else 0.0
    return ResidualReport(form, r, comm, rc, ratio, bool(ratio > 0.8))


def _check_uniform(times):
    if times.size < 3 or times[0] != 0:
        raise DomainError("residual needs a uniform grid from t = 0 with at least 3 points")
    d = np.diff(times)
    if np.max(np.abs(d - d[0])) > 1e-9 * max(d[0], 1e-300) * times.size:
        raise DomainError("residual needs a uniform grid")


# -- simulation ---------------------------------------------------------------------

@dataclass(frozen=True)
class SemiMarkovPath:
    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t):
        k = np.searchsorted(self.jump_times, t, side="right") - 1
        return self.states[k]

    def to_csv(self, path=None) -> str:
        lines = ["T_n,Y_n"] + [f"{t:.17g},{y}" for t, y in zip(self.jump_times, self.states)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _waiting(sampler, theta, size, rng):
    e = rng.standard_exponential(size) / theta
    return sampler.draw(e, size, rng)


def _next_states(cumH, states, rng):
    u = rng.random(states.size)
    rows = cumH[states]
    nxt = np.count_nonzero(rows <= u[:, None], axis=1)
    return np.minimum(nxt, cumH.shape[1] - 1)


def simulate(model: SemiMarkovModel, horizon: float, rng, start: int = 0) -> SemiMarkovPath:
    """One path ``(T_n, Y_n)`` with ``T_0 = 0`` up to the first jump after ``horizon``."""
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    rng = _rng.as_generator(rng)
    sampler = make_sampler(model.f)
    cumH = np.cumsum(model.H, axis=1)
    times, states = [0.0], [int(start)]
    t, y = 0.0, np.array([int(start)])
    while t <= horizon:
        t += float(_waiting(sampler, model.theta, 1, rng)[0])
        y = _next_states(cumH, y, rng)
        times.append(t)
        states.append(int(y[0]))
    return SemiMarkovPath(np.array(times), np.array(states), horizon)


def sample_waiting_times(model: SemiMarkovModel, n: int, seed: int, workers: int = 1):
    """``n`` i.i.d. holding times ``J = sigma(E)``."""
    sampler = make_sampler(model.f)

    def run(block, size):
        return _waiting(sampler, model.theta, size, _rng.block_rng(seed, _rng.STREAM_WAITING, block))

    return np.concatenate(_rng.map_blocks(run, n, workers))


def _population(model, start, horizons, size, rng, state=None):
    """Vectorised paths; returns states at each horizon and per-horizon statistics."""
    sampler = make_sampler(model.f)
    cumH = np.cumsum(model.H, axis=1)
    horizons = np.asarray(horizons, dtype=float)
    t = np.zeros(size)
    y = np.full(size, int(start))
    at = np.full((size, horizons.size), -1)
    visits = np.zeros((size, horizons.size), dtype=np.int64)
    jumps = np.zeros((size, horizons.size), dtype=np.int64)
    occ = np.zeros((size, horizons.size))
    alive = np.arange(size)
    while alive.size:
        w = _waiting(sampler, model.theta, alive.size, rng)
        t0 = t[alive]
        t1 = t0 + w
        if state is not None:
            inside = (y[alive] == state)[:, None]
            occ[alive] += inside * np.clip(np.minimum(t1[:, None], horizons) - t0[:, None], 0, None)
        done = t1[:, None] > horizons
        newly = done & (at[alive] < 0)
        at_rows = at[alive]
        at_rows[newly] = np.broadcast_to(y[alive][:, None], newly.shape)[newly]
        at[alive] = at_rows
        nxt = _next_states(cumH, y[alive], rng)
        before = ~done
        jumps[alive] += before
        if state is not None:
            visits[alive] += before & (nxt == state)[:, None]
        t[alive] = t1
        y[alive] = nxt
        alive = alive[at[alive, -1] < 0]
    return at, visits, jumps, occ


@dataclass(frozen=True)
class OccupancyResult:
    fractions: np.ndarray
    se: np.ndarray
    n: int


def occupancy(model: SemiMarkovModel, start: int, t: float, n_paths: int, seed: int,
              workers: int = 1) -> OccupancyResult:
    """Fraction of paths in each state at time ``t``, with binomial SE."""

    def run(block, size):
        rng = _rng.block_rng(seed, _rng.STREAM_OCCUPANCY, block)
        at, *_ = _population(model, start, [t], size, rng)
        return np.bincount(at[:, 0], minlength=model.size)

    counts = np.sum(_rng.map_blocks(run, n_paths, workers), axis=0)
    p = counts / n_paths
    return OccupancyResult(p, np.sqrt(p * (1 - p) / n_paths), n_paths)


@dataclass(frozen=True)
class OccupationReport:
    horizons: tuple
    median_returns: tuple
    mean_occupation: tuple
    jump_rate: tuple
    diagnosis: str
    n_paths: int
    stable_median: bool

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def occupation_stats(model: SemiMarkovModel, state: int, horizons, n_paths: int, seed: int,
                     workers: int = 1) -> OccupationReport:
    """Return counts to ``state`` (started there) over a ladder of horizons.

    ``diagnosis`` is ``"growing"`` when the median return count strictly
    increases along the ladder and ``"saturating"`` otherwise.
    ``jump_rate`` is the mean number of jumps per unit time, ``N(t)/t``.
    """
    horizons = np.sort(np.asarray(horizons, dtype=float))
    if n_paths < 11:
        raise DomainError("occupation_stats needs at least 11 paths")

    def run(block, size):
        rng = _rng.block_rng(seed, _rng.STREAM_RETURNS, block)
        _, visits, jumps, occ = _population(model, state, horizons, size, rng, state)
        return visits, jumps, occ

    parts = _rng.map_blocks(run, n_paths, workers)
    visits = np.concatenate([p[0] for p in parts])
    jumps = np.concatenate([p[1] for p in parts])
    occ = np.concatenate([p[2] for p in parts])
    med = np.median(visits, axis=0)
    # the median is reliable when the order statistics around it agree
    lo, hi = np.quantile(visits, [0.5 - 1 / math.sqrt(n_paths), 0.5 + 1 / math.sqrt(n_paths)],
                         axis=0)
    growing = bool(np.all(np.diff(med) > 0))
    return OccupationReport(
        tuple(horizons.tolist()),
        tuple(med.tolist()),
        tuple(occ.mean(axis=0).tolist()),
        tuple((jumps.mean(axis=0) / horizons).tolist()),
        "growing" if growing else "saturating",
        int(n_paths),
        bool(np.all(hi - lo <= np.maximum(1.0, 0.2 * med))),
    )
