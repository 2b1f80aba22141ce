"""Acceptance checks shared by ``relaxkit validate`` and the test-suite.

Every check returns a :class:`CheckResult` holding the measured numbers,
its tolerance verdict and its wall time against a budget.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import erfcx, gamma

from .bernstein import cm_probe, conjugate, make_family
from .invsub import mc_mean_inverse, mc_q, subordinated_gaussian
from .relaxation import (
    asymptotic_ratio,
    relax_transform,
    solve_adjoint_cq,
    solve_backward_cq,
)
from .semimarkov import (
    SemiMarkovModel,
    biased_walk,
    flip_model,
    kolmogorov_residual,
    matrix_relax,
    occupancy,
    occupation_stats,
    reflected_walk,
    renewal_solve,
    sample_waiting_times,
)

DEFAULT_SEED = 7
STABLE = "stable:beta=0.5"
FAMILIES = {
    "stable": STABLE,
    "tempered_killed": "tempered_killed:beta=0.5,c=1.0",
    "tempered": "tempered:beta=0.5,c=1.0",
    "distributed": "distributed:alphas=0.3,0.7;weights=0.5,0.5",
}


@dataclass
class CheckResult:
    number: int
    name: str
    ok: bool
    runtime: float
    budget: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.ok and self.runtime < self.budget

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        why = "" if self.ok else " (tolerance)"
        if self.ok and not self.passed:
            why = " (runtime)"
        return (f"[{verdict}] criterion {self.number:2d} {self.name}: "
                f"{self.runtime:.2f}s / {self.budget:g}s{why}")

    def as_dict(self, with_time=True):
        d = {"number": self.number, "name": self.name, "ok": self.ok,
             "passed": self.passed, "budget": self.budget, "details": _plain(self.details)}
        if with_time:
            d["runtime"] = self.runtime
        return d


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _timed(number, name, budget, fn):
    t0 = time.perf_counter()
    ok, details = fn()
    return CheckResult(number, name, bool(ok), time.perf_counter() - t0, budget, details)


def check_mittag_leffler(seed=DEFAULT_SEED):
    def run():
        t = np.array([0.1, 1.0, 10.0])
        q = relax_transform(STABLE, -1.0, t).values
        rel = np.abs(q / erfcx(np.sqrt(t)) - 1)
        return bool(np.all(rel <= 1e-6)), {"t": t, "rel_err": rel}

    return _timed(1, "Mittag-Leffler relaxation", 1.0, run)


def check_solver_triangle(seed=DEFAULT_SEED):
    def run():
        rows = []
        for fam in (STABLE, FAMILIES["tempered"]):
            pair = conjugate(make_family(fam))
            for lam in (-0.5, -4.0):
                bwd = solve_backward_cq(fam, lam, 1e-3, 5.0, estimate_error=False)
                adj = solve_adjoint_cq(pair, lam, 1e-3, 5.0, estimate_error=False)
                tr = relax_transform(fam, lam, bwd.times).values
                d = {
                    "family": fam, "lambda": lam,
                    "transform_vs_backward": float(np.max(np.abs(tr - bwd.values))),
                    "transform_vs_adjoint": float(np.max(np.abs(tr - adj.values))),
                    "backward_vs_adjoint": float(np.max(np.abs(bwd.values - adj.values))),
                }
                rows.append(d)
        worst = max(max(v for k, v in r.items() if "_vs_" in k) for r in rows)
        return worst <= 1e-2, {"rows": rows, "worst": worst}

    return _timed(2, "solver triangle", 30.0, run)


def check_monte_carlo(seed=DEFAULT_SEED):
    def run():
        t = [0.5, 1.0, 2.0]
        res = mc_q(STABLE, -1.0, t, 100_000, seed)
        ref = relax_transform(STABLE, -1.0, t).values
        z = [(r.estimate - q) / r.se for r, q in zip(res, ref)]
        return all(abs(v) <= 3.29 for v in z), {
            "t": t, "estimate": [r.estimate for r in res], "se": [r.se for r in res],
            "transform": ref, "z": z, "h_s": res[0].h_s, "seed": seed,
        }

    return _timed(3, "Monte Carlo consistency", 60.0, run)


def check_asymptotics(seed=DEFAULT_SEED):
    def run():
        r1 = asymptotic_ratio(STABLE, -1.0, 1e4)
        r2 = asymptotic_ratio(FAMILIES["tempered_killed"], -1.0, 50.0)
        return (0.99 <= r1 <= 1.01 and 0.95 <= r2 <= 1.05), {
            "stable_t1e4": r1, "tempered_killed_t50": r2}

    return _timed(4, "regular-variation asymptotics", 5.0, run)


def check_complete_monotonicity(seed=DEFAULT_SEED):
    def run():
        grid = np.geomspace(1e-2, 1e2, 64)
        out = {}
        for name, fam in FAMILIES.items():
            q = relax_transform(fam, -1.0, grid).values
            out[name] = cm_probe(q, grid, 6).passed
        ctrl = cm_probe(lambda t: np.sin(t) + 2, np.linspace(0.0, 6.0, 64), 6).passed
        out["control_sin_fails"] = not ctrl
        return all(out.values()), out

    return _timed(5, "complete monotonicity probes", 5.0, run)


def _residual_pair(model):
    reps = []
    for dt in (1e-3, 5e-4):
        n = int(round(2.0 / dt))
        curve = matrix_relax(model, dt * np.arange(n + 1))
        reps.append(kolmogorov_residual(curve, model, "backward"))
    return reps


def check_matrix_relaxation(seed=DEFAULT_SEED):
    def run():
        m = flip_model()
        entry = float(matrix_relax(m, [1.0]).matrices[0, 0, 0])
        oracle = 0.5 * (1 + erfcx(2.0))
        ren = renewal_solve(m, 1e-3, 3.0)
        spectral = matrix_relax(m, ren.times)
        diff = float(np.max(np.abs(ren.matrices - spectral.matrices)))
        r1, r2 = _residual_pair(m)
        ratio = r2.residual / r1.residual
        ok = (abs(entry - 0.6276978) <= 1e-5 and diff <= 5e-3 and r1.residual <= 1e-2
              and 0.35 <= ratio <= 0.65)
        return ok, {"entry": entry, "oracle": oracle, "renewal_sup_diff": diff,
                    "residual_dt1e-3": r1.residual, "residual_dt5e-4": r2.residual,
                    "ratio": ratio}

    return _timed(6, "matrix relaxation", 60.0, run)


def random_model(n=5, seed=11, family=STABLE, theta=1.0):
    """Symmetric doubly stochastic ``H`` from a random symmetric weight matrix."""
    rng = np.random.default_rng(seed)
    w = rng.random((n, n))
    w = w + w.T
    np.fill_diagonal(w, 0.0)
    w /= w.sum(axis=1).max()
    H = w + np.diag(1 - w.sum(axis=1))
    return SemiMarkovModel(H, theta, make_family(family))


def check_structure(seed=DEFAULT_SEED):
    def run():
        times = np.concatenate([[0.0], np.linspace(0.2, 2.0, 10)])
        out = {}
        ok = True
        for name, model in (("flip", flip_model()), ("random5", random_model())):
            c = matrix_relax(model, times)
            inv = c.invariants()
            comm = float(np.max(np.abs(model.A @ c.matrices - c.matrices @ model.A)))
            out[name] = dict(inv, commutation=comm)
            ok &= (inv["initial"] == 0.0 and inv["row_sum"] <= 1e-8 and inv["symmetry"] <= 1e-10
                   and inv["lower"] <= 1e-8 and inv["upper"] <= 1e-8 and comm <= 1e-8)
        m = flip_model()
        q1, q2 = matrix_relax(m, [1.0, 2.0]).matrices
        dev = float(np.max(np.abs(q2 - q1 @ q1)))
        out["semigroup_deviation"] = dev
        return ok and dev >= 0.01, out

    return _timed(7, "structural invariants", 10.0, run)


def check_sampling(seed=DEFAULT_SEED):
    def run():
        m = flip_model()
        n = 100_000
        J = sample_waiting_times(m, n, seed)
        t = np.array([0.5, 1.0, 2.0])
        q = erfcx(np.sqrt(t))
        emp = np.array([(J > v).mean() for v in t])
        z_surv = (emp - q) / np.sqrt(q * (1 - q) / n)
        occ = occupancy(m, 0, 1.0, n, seed)
        ref = matrix_relax(m, [1.0]).matrices[0, 0]
        z_occ = (occ.fractions - ref) / occ.se
        ok = bool(np.all(np.abs(z_surv) <= 3) and np.all(np.abs(z_occ) <= 3))
        return ok, {"survival_z": z_surv, "occupancy": occ.fractions, "spectral": ref,
                    "occupancy_z": z_occ}

    return _timed(8, "semi-Markov sampling", 120.0, run)


def check_classification(seed=DEFAULT_SEED):
    def run():
        horizons = [1e2, 1e3, 1e4]
        rec = occupation_stats(reflected_walk(21), 0, horizons, 4000, seed)
        tra = occupation_stats(biased_walk(201, 0.8), 0, horizons, 4000, seed + 1)
        decay = rec.jump_rate[0] / rec.jump_rate[-1]
        ok = (rec.diagnosis == "growing" and tra.median_returns[-1] == tra.median_returns[-2]
              and decay >= 2.0)
        return ok, {"recurrent": rec.as_dict(), "transient": tra.as_dict(),
                    "jump_rate_decay": decay}

    return _timed(9, "classification experiment", 300.0, run)


def check_moments(seed=DEFAULT_SEED):
    def run():
        D = 1.0
        ref = 1 / gamma(1.5)
        mean = mc_mean_inverse(STABLE, 1.0, 100_000, seed)
        z = (mean.estimate - ref) / mean.se
        g = lambda x: x * x * subordinated_gaussian(STABLE, x, 1.0, D)
        m2 = 2 * (integrate.quad(g, 0.0, 5.0, limit=100)[0]
                  + integrate.quad(g, 5.0, np.inf, limit=100)[0])
        rel = abs(m2 / (2 * D * ref) - 1)
        return abs(z) <= 3 and rel <= 1e-2, {"mean_L": mean.estimate, "se": mean.se, "z": z,
                                              "second_moment": m2, "rel_err": rel}

    return _timed(10, "moment identities", 60.0, run)


CHECKS = {
    1: check_mittag_leffler,
    2: check_solver_triangle,
    3: check_monte_carlo,
    4: check_asymptotics,
    5: check_complete_monotonicity,
    6: check_matrix_relaxation,
    7: check_structure,
    8: check_sampling,
    9: check_classification,
    10: check_moments,
}

SUITES = {
    "quick": (1, 4, 5, 6, 7),
    "full": tuple(range(1, 11)),
}


def run_suite(name: str, seed: int = DEFAULT_SEED, echo=None):
    """Run a named suite; ``echo`` receives each result line as it completes."""
    if name not in SUITES:
        raise KeyError(name)
    results = []
    for k in SUITES[name]:
        res = CHECKS[k](seed)
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results


def report_json(results, suite, seed, with_time=False) -> str:
    return json.dumps(
        {"suite": suite, "seed": seed, "passed": all(r.passed for r in results),
         "checks": [r.as_dict(with_time) for r in results]},
        indent=2, sort_keys=True,
    )
