import numpy as np
import pytest
from scipy import integrate

from relaxkit import kernels


def _quad_moments(k, t):
    k1 = integrate.quad(k, 0, t, limit=200, epsabs=0, epsrel=1e-12)[0]
    k2 = integrate.quad(lambda u: (t - u) * k(u), 0, t, limit=200, epsabs=0, epsrel=1e-12)[0]
    return k1, k2


KERNELS = {
    "power": kernels.PowerKernel((0.7, 0.2), (-0.5, 0.3)),
    "tempered_tail": kernels.TemperedTailKernel(0.5, 1.0),
    "tempered_tail_killed": kernels.TemperedTailKernel(0.4, 2.0, 0.8),
    "gamma": kernels.GammaKernel(0.5, 1.0),
    "retarding": kernels.RetardingKernel(0.5, 0.3, 0.5, 0.7),
    "laplace": kernels.LaplaceKernel(lambda p: 1 / (p**0.5 + p)),
}


@pytest.mark.parametrize("name", sorted(KERNELS))
@pytest.mark.parametrize("t", [0.05, 0.7, 3.0])
def test_antiderivatives_match_quadrature(name, t):
    k = KERNELS[name]
    k1, k2 = _quad_moments(k, t)
    assert k.integral(t) == pytest.approx(k1, rel=1e-8, abs=1e-12)
    assert k.double_integral(t) == pytest.approx(k2, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_zero_at_origin(name):
    k = KERNELS[name]
    assert k.integral(0.0) == 0.0
    assert k.double_integral(0.0) == 0.0


def test_cell_moments_sum_to_integral():
    k = KERNELS["power"]
    m0, m1 = k.cell_moments(0.1, 20)
    assert m0.sum() == pytest.approx(k.integral(2.0), rel=1e-12)
    assert np.all(m1 > 0) and np.all(m1 < 0.1 * m0)


def test_quad_kernel_matches_closed_form():
    ref = KERNELS["gamma"]
    qk = kernels.QuadKernel(lambda t: float(ref(t)))
    m0, m1 = qk.cell_moments(0.25, 8)
    r0, r1 = ref.cell_moments(0.25, 8)
    np.testing.assert_allclose(m0, r0, rtol=1e-8)
    np.testing.assert_allclose(m1, r1, rtol=1e-7)


def test_stehfest_laplace_kernel():
    k = kernels.LaplaceKernel(lambda p: 1 / (p + 1), method="stehfest")
    assert k(1.0) == pytest.approx(np.exp(-1), abs=1e-5)


@pytest.mark.parametrize("phi", [0.5, 1.0, 2.0])
def test_retarding_kernel_transform(phi):
    # forward Laplace transform of M times f equals 1
    k = KERNELS["retarding"]
    f = 0.5 * phi**0.3 + 0.5 * phi**0.7
    g = lambda t: np.exp(-phi * t) * k(t)
    val = integrate.quad(g, 0, 1, limit=200)[0] + integrate.quad(g, 1, np.inf, limit=200)[0]
    assert abs(val * f - 1) <= 1e-5


def test_power_kernel_rejects_nonintegrable():
    with pytest.raises(ValueError):
        kernels.PowerKernel((1.0,), (-1.0,))
