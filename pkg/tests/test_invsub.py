import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import erf, gamma

from relaxkit.bernstein import make_family
from relaxkit.errors import DomainError, ExtensionNeeded
from relaxkit.invsub import (
    density_l,
    inverse_at,
    make_sampler,
    mc_mean_inverse,
    mc_q,
    mean_inverse,
    sample_increment,
    sample_inverse,
    sample_inverse_stable,
    simulate_path,
    subordinated_gaussian,
)
from relaxkit.relaxation import relax_transform

STABLE = "stable:beta=0.5"
SAMPLED = [
    ("stable", STABLE, None),
    ("tempered", "tempered:beta=0.5,c=1.0", None),
    ("distributed", "distributed:alphas=0.3,0.7;weights=0.5,0.5", None),
    ("compound_poisson", STABLE, "compound_poisson"),
]


def test_linear_increment_is_deterministic():
    assert sample_increment("linear:b=1", 0.37, np.random.default_rng(0)) == 0.37
    out = sample_increment("linear:b=2", 0.5, 0, size=4)
    np.testing.assert_array_equal(out, 1.0)


@pytest.mark.parametrize("name,fam,method", SAMPLED, ids=[s[0] for s in SAMPLED])
@pytest.mark.parametrize("phi", [0.5, 1.0, 2.0])
def test_laplace_functional(name, fam, method, phi):
    f = make_family(fam)
    rng = np.random.default_rng(12345)
    x = sample_increment(f, 1.0, rng, size=100_000, method=method)
    g = np.exp(-phi * x)
    se = g.std(ddof=1) / math.sqrt(g.size)
    assert abs(g.mean() - math.exp(-f(phi))) <= 3 * se


def test_tempered_large_c_uses_substeps():
    f = make_family("tempered:beta=0.5,c=50.0")
    x = sample_increment(f, 4.0, np.random.default_rng(3), size=20_000)
    g = np.exp(-x)
    se = g.std(ddof=1) / math.sqrt(g.size)
    assert abs(g.mean() - math.exp(-4 * f(1.0))) <= 3 * se


def test_increment_rejects_nonpositive_step():
    with pytest.raises(DomainError):
        sample_increment(STABLE, 0.0, 0)


def test_killed_family_not_simulated():
    with pytest.raises(DomainError):
        make_sampler("tempered_killed:beta=0.5,c=1.0")


def test_path_is_nondecreasing():
    p = simulate_path(STABLE, 5.0, 0.01, np.random.default_rng(1))
    assert p.sigma_values[0] == 0.0
    assert np.all(np.diff(p.sigma_values) > 0)
    assert p.h_s == pytest.approx(0.01)
    assert p.to_csv().startswith("s,sigma\n")


def test_inverse_linear_is_identity():
    p = simulate_path("linear:b=1", 10.0, 0.1, 0)
    t = np.array([0.0, 0.05, 1.0, 3.3333, 9.9])
    np.testing.assert_array_equal(inverse_at(p, t), t)


@pytest.mark.parametrize("seed", range(5))
def test_duality_exhaustive(seed):
    p = simulate_path(STABLE, 2.0, 0.01, np.random.default_rng(seed))
    sig, s = p.sigma_values, p.s_grid
    mids = 0.5 * (sig[1:] + sig[:-1])
    ts = np.concatenate([sig[:-1], mids])
    L = inverse_at(p, ts)
    # L(t) >= x  <=>  sigma(x) <= t, for every grid x
    lhs = L[:, None] >= s[None, :] - 1e-15
    rhs = sig[None, :] <= ts[:, None]
    assert np.array_equal(lhs, rhs)


def test_extension_needed():
    p = simulate_path(STABLE, 0.1, 0.01, np.random.default_rng(0))
    with pytest.raises(ExtensionNeeded) as exc:
        inverse_at(p, p.sigma_values[-1] + 1.0)
    assert exc.value.needed_time == pytest.approx(p.sigma_values[-1] + 1.0)


def test_mc_q_lambda_zero_exact():
    r = mc_q(STABLE, 0.0, 1.0, 1000, 1)
    assert r.estimate == 1.0 and r.se == 0.0


def test_mc_q_linear_exact():
    r = mc_q("linear:b=1", -2.0, 1.0, 1000, 1)
    assert r.estimate == pytest.approx(math.exp(-2), rel=1e-14)
    assert r.se <= 1e-15


def test_mc_q_needs_enough_paths():
    with pytest.raises(DomainError):
        mc_q(STABLE, -1.0, 1.0, 999, 1)


def test_mc_q_json_round_trip():
    import json

    r = mc_q(STABLE, -1.0, 1.0, 2000, 5)
    d = json.loads(r.to_json())
    assert d["estimate"] == r.estimate and d["seed"] == 5 and d["h_s"] > 0


COMBOS = [
    (fam, lam, t)
    for fam in ("stable", "tempered", "distributed")
    for lam in (-0.5, -2.0)
    for t in (0.5, 2.0)
]


@pytest.mark.parametrize("fam,lam,t", COMBOS)
def test_mc_transform_consistency(fam, lam, t):
    desc = dict((s[0], s[1]) for s in SAMPLED)[fam]
    r = mc_q(desc, lam, t, 10_000, 2024)
    ref = relax_transform(desc, lam, [t]).values[0]
    assert r.contains(ref, 3.29)


def test_mc_q_array_t_matches_scalar_order():
    res = mc_q(STABLE, -1.0, [2.0, 0.5], 2000, 9)
    assert res[0].estimate < res[1].estimate


def test_mc_deterministic_across_workers():
    a = mc_q(STABLE, -1.0, [0.5, 1.0], 20_000, 77, workers=1)
    b = mc_q(STABLE, -1.0, [0.5, 1.0], 20_000, 77, workers=4)
    assert [r.estimate for r in a] == [r.estimate for r in b]


def test_compound_poisson_convergence():
    ref = relax_transform(STABLE, -1.0, [1.0]).values[0]
    coarse = mc_q(STABLE, -1.0, 1.0, 20_000, 31, method="compound_poisson", eps=1e-2)
    fine = mc_q(STABLE, -1.0, 1.0, 20_000, 32, method="compound_poisson", eps=5e-3)
    joint = math.hypot(coarse.se, fine.se)
    assert abs(coarse.estimate - fine.estimate) <= 3 * joint
    assert coarse.contains(ref, 4) and fine.contains(ref, 4)


def test_mean_inverse_distributed():
    fam = "distributed:alphas=0.3,0.7;weights=0.5,0.5"
    r = mc_mean_inverse(fam, 1.0, 20_000, 8)
    assert abs(r.estimate - mean_inverse(fam, 1.0)) <= 3 * r.se


def test_mean_inverse_stable_closed_form():
    assert mean_inverse(STABLE, 1.0) == pytest.approx(1 / gamma(1.5), rel=1e-12)


def test_sample_inverse_shape():
    L, h, m = sample_inverse(STABLE, [0.5, 1.0], 100, 3)
    assert L.shape == (100, 2)
    assert np.all(L[:, 0] <= L[:, 1])
    assert m == "stable_exact"


def _half_normal(x, t):
    # L(t) for beta = 1/2 is |N(0, 2t)|
    return np.exp(-x * x / (4 * t)) / np.sqrt(math.pi * t)


def test_density_stable_closed_form():
    x = np.array([0.1, 0.5, 1.0, 2.5])
    np.testing.assert_allclose(density_l(STABLE, x, 1.0), _half_normal(x, 1.0), rtol=1e-9)


@pytest.mark.parametrize("fam", [STABLE, "tempered:beta=0.5,c=1.0",
                                 "distributed:alphas=0.3,0.7;weights=0.5,0.5"])
def test_density_normalised(fam):
    g = lambda x: density_l(fam, x, 1.0)
    total = integrate.quad(g, 0, 1, limit=200)[0] + integrate.quad(g, 1, np.inf, limit=200)[0]
    assert abs(total - 1) <= 1e-4


def test_density_moment_generating_function():
    g = lambda x: math.exp(-x) * density_l(STABLE, x, 1.0)
    val = integrate.quad(g, 0, 1)[0] + integrate.quad(g, 1, np.inf)[0]
    assert abs(val - relax_transform(STABLE, -1.0, [1.0]).values[0]) <= 1e-4


def test_density_check_mode():
    assert density_l(STABLE, 0.7, 2.0, check=True) == pytest.approx(_half_normal(0.7, 2.0),
                                                                     rel=1e-9)


def test_density_needs_infinite_mass():
    with pytest.raises(DomainError):
        density_l("linear:b=1", 1.0, 1.0)


def test_density_against_exact_histogram():
    n = 1_000_000
    L = sample_inverse_stable(0.5, 1.0, n, np.random.default_rng(2))
    edges = np.linspace(0.0, 4.0, 41)
    counts = np.histogram(L, edges)[0]
    p = np.array([integrate.quad(lambda x: density_l(STABLE, x, 1.0), a, b)[0]
                  for a, b in zip(edges[:-1], edges[1:])])
    se = np.sqrt(p * (1 - p) / n)
    assert np.max(np.abs(counts / n - p) / se) <= 4
    # the bin masses also agree with the half-normal CDF
    np.testing.assert_allclose(p, np.diff(erf(edges / 2)), atol=1e-9)


def test_subordinated_gaussian_symmetric():
    x = np.array([0.3, 1.7])
    np.testing.assert_array_equal(subordinated_gaussian(STABLE, x, 1.0),
                                  subordinated_gaussian(STABLE, -x, 1.0))


def test_subordinated_gaussian_normalised():
    g = lambda x: subordinated_gaussian(STABLE, x, 1.0, 1.0)
    total = 2 * (integrate.quad(g, 0, 5, limit=100)[0]
                 + integrate.quad(g, 5, np.inf, limit=100)[0])
    assert abs(total - 1) <= 1e-3


def test_subordinated_gaussian_needs_positive_d():
    with pytest.raises(DomainError):
        subordinated_gaussian(STABLE, 0.0, 1.0, 0.0)
