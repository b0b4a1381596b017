import numpy as np
import pytest

from levyvolterra.charfn import (GrowthClassError, cf_M, cf_M_Qg, damped_poly,
                                 ddt_cf_M_Qg, ddt_s_G_of_M, gaussian_bump,
                                 quadratic, s_G_of_M)
from levyvolterra.kernels import frac_kernel, indicator_kernel, l2_norm_sq
from levyvolterra.levy import (AtomicLaw, CompoundPoisson, LevyModel,
                               simulate_paths)
from levyvolterra.quadrature import QuadratureSpec, graded_lattice
from levyvolterra.stransform import (TestFunctional, WeightMaker,
                                     default_battery)
from levyvolterra.volterra import batch_values

CP_2D2 = CompoundPoisson(2.0, AtomicLaw(((2.0, 1.0),)))
MIXED = LevyModel(sigma=1.0, jumps=CP_2D2)
GAUSS = LevyModel(sigma=1.0)
FRAC = frac_kernel(0.25)
IND = indicator_kernel()
A = 2.0
TIGHT = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-11)


@pytest.fixture(scope="module")
def mixed_paths():
    return simulate_paths(MIXED, (A, 1.0), 600, 10_000, seed=2718)


# --- G family ----------------------------------------------------------------

def test_gaussian_bump_fourier_vs_numerical():
    from scipy.integrate import quad as squad
    G = gaussian_bump(center=0.4, width=0.7, amp=1.3)
    for u in (0.0, 0.8, 2.5):
        re = squad(lambda x: G(x) * np.cos(u * x), -12, 12, limit=200)[0]
        im = squad(lambda x: -G(x) * np.sin(u * x), -12, 12, limit=200)[0]
        want = (re + 1j * im) / np.sqrt(2 * np.pi)
        got = complex(np.asarray(G.fourier(np.array([u])))[0])
        assert got == pytest.approx(want, abs=1e-10)


def test_damped_poly_fourier_and_derivatives():
    from scipy.integrate import quad as squad
    G = damped_poly((0.5, -1.0, 0.8), width=0.9, center=-0.2)
    for u in (0.3, 1.7):
        re = squad(lambda x: G(x) * np.cos(u * x), -12, 12, limit=200)[0]
        im = squad(lambda x: -G(x) * np.sin(u * x), -12, 12, limit=200)[0]
        want = (re + 1j * im) / np.sqrt(2 * np.pi)
        got = complex(np.asarray(G.fourier(np.array([u])))[0])
        assert got == pytest.approx(want, abs=1e-10)
    x = np.linspace(-3, 3, 41)
    h = 1e-6
    np.testing.assert_allclose(G.d1(x), (G(x + h) - G(x - h)) / (2 * h),
                               rtol=1e-6, atol=1e-8)
    h2 = 1e-4
    np.testing.assert_allclose(G.d2(x), (G(x + h2) - 2 * G(x) + G(x - h2)) / h2 ** 2,
                               rtol=1e-5, atol=1e-6)


# --- base characteristic function ---------------------------------------------

def test_cf_at_zero_frequency():
    assert cf_M(FRAC, MIXED, 1.0, 0.0, window_a=A).value == pytest.approx(1.0, abs=1e-12)


def test_cf_gaussian_indicator_analytic():
    for u in (0.5, 1.0, 3.0):
        got = cf_M(IND, GAUSS, 0.7, u, TIGHT, window_a=A).value
        want = np.exp(-u * u * 0.7 / 2.0)
        assert complex(got) == pytest.approx(want, rel=1e-9)


def test_cf_modulus_and_hermitian_symmetry():
    for u in (0.5, 2.0, 4.5):
        r1 = cf_M(FRAC, MIXED, 1.0, u, window_a=A)
        r2 = cf_M(FRAC, MIXED, 1.0, -u, window_a=A)
        assert abs(r1.value) <= 1.0 + 1e-12
        assert complex(r2.value) == pytest.approx(np.conj(r1.value), abs=1e-9)


def test_cf_vs_empirical(mixed_paths):
    mt = batch_values(FRAC, mixed_paths, np.array([1.0]))[:, 0]
    for u in (-3.0, -1.0, 0.5, 2.0, 5.0):
        emp = np.exp(1j * u * mt)
        se = np.sqrt((emp.real.var(ddof=1) + emp.imag.var(ddof=1)) / len(mt))
        r = cf_M(FRAC, MIXED, 1.0, u, window_a=A)
        assert abs(emp.mean() - r.value) <= 3.0 * se + r.error, u


def test_cf_tempered_stable_density_measure():
    # exercises the nested x-integral route (no atoms available)
    from levyvolterra.levy import TemperedStable
    model = LevyModel(sigma=0.4,
                      jumps=TemperedStable(alpha=0.6, tempering=1.2, scale=0.4))
    paths = simulate_paths(model, (1.0, 1.0), 300, 2500, seed=55)
    mt = batch_values(FRAC, paths, np.array([1.0]))[:, 0]
    for u in (0.5, 2.0):
        r = cf_M(FRAC, model, 1.0, u, window_a=1.0)
        emp = np.exp(1j * u * mt)
        se = np.sqrt((emp.real.var(ddof=1) + emp.imag.var(ddof=1)) / len(mt))
        assert abs(emp.mean() - r.value) <= 3.0 * se + r.error


# --- tilted characteristic function -------------------------------------------

def test_cf_qg_reduces_at_zero_functional():
    for u in (0.3, 1.5, 4.0):
        a = cf_M_Qg(FRAC, MIXED, TestFunctional.zero(), 1.0, u, window_a=A)
        b = cf_M(FRAC, MIXED, 1.0, u, window_a=A)
        assert complex(a.value) == pytest.approx(complex(b.value),
                                                 abs=a.error + b.error + 1e-10)


def test_cf_qg_unit_mass():
    g = default_battery()[6]
    r = cf_M_Qg(FRAC, MIXED, g, 1.0, 0.0, window_a=A)
    assert complex(r.value) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("gi", [0, 3, 6])
def test_cf_qg_vs_weighted_empirical(mixed_paths, gi):
    g = default_battery()[gi]
    wm = WeightMaker(g, MIXED, mixed_paths[0].grid)
    w = wm.weights(mixed_paths)
    mt = batch_values(FRAC, mixed_paths, np.array([1.0]))[:, 0]
    for u in (-2.0, 1.0, 3.5):
        emp = w * np.exp(1j * u * mt)
        se = np.sqrt((emp.real.var(ddof=1) + emp.imag.var(ddof=1)) / len(mt))
        r = cf_M_Qg(FRAC, MIXED, g, 1.0, u, window_a=A)
        assert abs(emp.mean() - r.value) <= 3.0 * se + r.error, (g.label, u)


def test_gaussian_damping_envelope(mixed_paths):
    # |cf_Qg(t,u)| <= e_g exp(-c u^2), c = sigma^2 v(t) / 2, e_g measured
    g = default_battery()[6]
    wm = WeightMaker(g, MIXED, mixed_paths[0].grid)
    e_g = float(np.sqrt(np.mean(wm.weights(mixed_paths) ** 2)))
    c = 0.5 * MIXED.sigma_eff ** 2 * l2_norm_sq(FRAC, 1.0, window_a=A).value
    for u in np.linspace(-5, 5, 11):
        r = cf_M_Qg(FRAC, MIXED, g, 1.0, float(u), window_a=A)
        assert abs(r.value) <= 1.02 * e_g * np.exp(-c * u * u) + 1e-9


# --- time derivative -----------------------------------------------------------

def test_ddt_cf_zero_frequency():
    g = default_battery()[6]
    r = ddt_cf_M_Qg(FRAC, MIXED, g, 0.6, 0.0, window_a=A)
    assert abs(r.value) <= 1e-10


def test_ddt_cf_gaussian_analytic():
    # nu = 0, indicator kernel, g = 0: d/dt exp(-sigma^2 u^2 t / 2)
    u, t, sig = 1.3, 0.6, 1.0
    r = ddt_cf_M_Qg(IND, GAUSS, TestFunctional.zero(), t, u, TIGHT, window_a=A)
    want = -0.5 * sig ** 2 * u ** 2 * np.exp(-0.5 * sig ** 2 * u ** 2 * t)
    assert complex(r.value) == pytest.approx(want, rel=1e-8)


@pytest.mark.parametrize("tu", [(0.4, 0.8), (0.75, 2.0)])
def test_ddt_cf_fd_oracle(tu):
    t, u = tu
    g = default_battery()[6]
    h = 1e-4
    got = ddt_cf_M_Qg(FRAC, MIXED, g, t, u, TIGHT, window_a=A).value
    fp = cf_M_Qg(FRAC, MIXED, g, t + h, u, TIGHT, window_a=A).value
    fm = cf_M_Qg(FRAC, MIXED, g, t - h, u, TIGHT, window_a=A).value
    fd = (fp - fm) / (2.0 * h)
    assert abs(got - fd) <= 1e-4 * max(abs(fd), 1e-6)


# --- Fourier route -------------------------------------------------------------

def test_sG_constant_limit():
    # a very wide bump behaves like the constant c on the support of M's law
    c = 2.2
    G = gaussian_bump(center=0.0, width=60.0, amp=c)
    r = s_G_of_M(G, IND, GAUSS, TestFunctional.zero(), 1.0, window_a=A)
    assert r.value == pytest.approx(c, rel=2e-3)


def test_sG_gaussian_expectation_oracle():
    # g = 0, indicator, nu = 0: E G(N(0, t)) in closed form
    m, w, amp, t = 0.3, 0.8, 1.0, 0.9
    G = gaussian_bump(center=m, width=w, amp=amp)
    r = s_G_of_M(G, IND, GAUSS, TestFunctional.zero(), t, TIGHT, window_a=A)
    want = amp * w / np.sqrt(w * w + t) * np.exp(-m * m / (2.0 * (w * w + t)))
    assert r.value == pytest.approx(want, rel=1e-8)


def test_sG_vs_weighted_mc(mixed_paths):
    G = gaussian_bump(center=0.2, width=1.0)
    g = default_battery()[6]
    mt = batch_values(FRAC, mixed_paths, np.array([1.0]))[:, 0]
    wm = WeightMaker(g, MIXED, mixed_paths[0].grid)
    w = wm.weights(mixed_paths)
    prods = w * G(mt)
    se = prods.std(ddof=1) / np.sqrt(len(prods))
    r = s_G_of_M(G, FRAC, MIXED, g, 1.0, window_a=A)
    assert abs(prods.mean() - r.value) <= 3.0 * se + r.error


def test_ddt_sG_fd_oracle():
    G = gaussian_bump(center=0.1, width=0.9)
    g = default_battery()[0]
    t, h = 0.6, 1e-3
    got = ddt_s_G_of_M(G, IND, MIXED, g, t, window_a=A).value
    fp = s_G_of_M(G, IND, MIXED, g, t + h, TIGHT, window_a=A).value
    fm = s_G_of_M(G, IND, MIXED, g, t - h, TIGHT, window_a=A).value
    fd = (fp - fm) / (2.0 * h)
    assert got == pytest.approx(fd, rel=1e-3)


def test_fundamental_theorem_consistency():
    # S(G(M(T)))(g) - G(0) = int_0^T d/dt S(G(M(t)))(g) dt
    G = gaussian_bump(center=0.0, width=1.1)
    g = default_battery()[1]
    T = 1.0
    lhs = s_G_of_M(G, IND, MIXED, g, T, window_a=A)
    ts, ws = graded_lattice([0.0, T / 16.0, T / 4.0, T], 12)
    dvals = np.array([ddt_s_G_of_M(G, IND, MIXED, g, float(t), window_a=A).value
                      for t in ts])
    rhs = float(np.dot(ws, dvals))
    g0 = float(G(np.array([0.0]))[0])
    assert lhs.value - g0 == pytest.approx(rhs, abs=5e-4)


# --- growth-class gates ---------------------------------------------------------

def test_polynomial_without_fourier_rejected():
    with pytest.raises(GrowthClassError):
        s_G_of_M(quadratic(), FRAC, MIXED, TestFunctional.zero(), 1.0, window_a=A)


def test_class_A_required_without_gaussian_part():
    jumps_only = LevyModel(sigma=0.0, jumps=CP_2D2)
    G = gaussian_bump()  # class A: fine even with sigma = 0
    r = s_G_of_M(G, IND, jumps_only, TestFunctional.zero(), 0.5, window_a=A)
    assert np.isfinite(r.value)
    # a poly-class object with a fourier transform attached must be rejected
    bad = quadratic()
    object.__setattr__(bad, "fourier", gaussian_bump().fourier)
    with pytest.raises(GrowthClassError):
        s_G_of_M(bad, IND, jumps_only, TestFunctional.zero(), 0.5, window_a=A)
