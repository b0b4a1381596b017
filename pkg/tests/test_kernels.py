import math

import numpy as np
import pytest
from scipy import special
from scipy.integrate import quad as scipy_quad

from levyvolterra.kernels import (KernelHandle, ProbeConfig, ddt_l2_norm_sq,
                                  dt_weighted_integral, frac_kernel,
                                  indicator_kernel, l2_norm_sq,
                                  validate_class_K)
from levyvolterra.quadrature import QuadratureSpec

TIGHT = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-12)


# --- fractional kernel -------------------------------------------------------

def test_frac_vanishes_at_t_zero():
    k = frac_kernel(0.3)
    s = np.linspace(-5.0, 5.0, 101)
    assert np.max(np.abs(k.eval(0.0, s))) == 0.0


def test_frac_closed_form_value():
    k = frac_kernel(0.25)
    want = 0.5 ** 0.25 / special.gamma(1.25)
    assert float(k.eval(1.0, np.array([0.5]))[0]) == pytest.approx(want, rel=1e-14)


def test_frac_dt_closed_form_and_fd():
    k = frac_kernel(0.25)
    want = 0.25 * 0.5 ** -0.75 / special.gamma(1.25)
    got = float(k.eval_dt(1.0, np.array([0.5]))[0])
    assert got == pytest.approx(want, rel=1e-14)
    h = 1e-6
    fd = float((k.eval(1.0 + h, np.array([0.5])) - k.eval(1.0 - h, np.array([0.5])))[0]) / (2 * h)
    assert got == pytest.approx(fd, rel=1e-8)


def test_frac_domain_guard():
    with pytest.raises(ValueError):
        frac_kernel(0.5)
    with pytest.raises(ValueError):
        frac_kernel(0.0)


def test_gap_forms_match():
    # the gap form avoids the t-s cancellation, so compare only where the
    # s-space evaluation is itself exact
    k = frac_kernel(0.2)
    t = 0.8
    u = np.array([1e-4, 0.3, 1.7])
    np.testing.assert_allclose(k.eval_gap(t, u), k.eval(t, t - u), rtol=1e-10)
    np.testing.assert_allclose(k.eval_dt_gap(t, u), k.eval_dt(t, t - u), rtol=1e-8)
    # at tiny gaps the gap form follows the exact power law
    tiny = np.array([1e-12])
    want = (tiny ** 0.2) / special.gamma(1.2)
    np.testing.assert_allclose(k.eval_gap(t, tiny), want, rtol=1e-12)


# --- indicator kernel --------------------------------------------------------

def test_indicator_values():
    k = indicator_kernel()
    assert float(k.eval(1.0, np.array([0.5]))[0]) == 1.0
    assert float(k.eval(0.5, np.array([1.0]))[0]) == 0.0
    assert float(k.eval(1.0, np.array([-0.2]))[0]) == 0.0
    assert float(k.eval(1.0, np.array([1.0]))[0]) == 1.0


# --- Volterra / derivative-consistency invariants ----------------------------

def test_volterra_property_random_points():
    rng = np.random.Generator(np.random.Philox(1))
    t = rng.uniform(0.0, 2.0, 10_000)
    s = t + rng.uniform(1e-9, 3.0, 10_000)
    for k in (frac_kernel(0.1), frac_kernel(0.25), frac_kernel(0.4), indicator_kernel()):
        assert np.max(np.abs(k.eval(t, s))) == 0.0


def test_derivative_consistency_fd():
    rng = np.random.Generator(np.random.Philox(2))
    for k in (frac_kernel(0.1), frac_kernel(0.25), frac_kernel(0.4)):
        t = rng.uniform(0.2, 2.0, 200)
        s = t - 10 ** rng.uniform(-2.0, 0.3, 200)  # stay off the diagonal
        s[::3] = -(10 ** rng.uniform(-2.0, 1.0, len(s[::3])))  # and off s=0
        h = 1e-6
        fd = (k.eval(t + h, s) - k.eval(t - h, s)) / (2 * h)
        good = np.abs(fd - k.eval_dt(t, s)) <= 1e-5 * np.maximum(np.abs(fd), 1e-12)
        assert np.all(good)


# --- squared-norm integrals --------------------------------------------------

def test_l2_indicator():
    assert l2_norm_sq(indicator_kernel(), 1.0).value == pytest.approx(1.0, abs=1e-12)
    assert l2_norm_sq(indicator_kernel(), 0.0).value == 0.0


def test_l2_frac_brute_force_oracle():
    k = frac_kernel(0.25)
    A = 50.0
    got = l2_norm_sq(k, 1.0, TIGHT, window_a=A)
    s = np.linspace(-A, 1.0, 1_000_001)
    mids = 0.5 * (s[:-1] + s[1:])
    brute = float(np.sum(np.asarray(k.eval(1.0, mids)) ** 2) * (s[1] - s[0]))
    assert got.value == pytest.approx(brute, rel=1e-6)


def test_l2_at_zero_any_kernel():
    assert l2_norm_sq(frac_kernel(0.3), 0.0).value == 0.0


def test_l2_monotone_for_frac():
    k = frac_kernel(0.25)
    ts = np.linspace(0.1, 2.0, 8)
    vals = [l2_norm_sq(k, float(t), window_a=20.0).value for t in ts]
    assert np.all(np.diff(vals) > 0)


def test_ddt_l2_indicator():
    for t in (0.3, 1.0, 1.7):
        assert ddt_l2_norm_sq(indicator_kernel(), t).value == pytest.approx(1.0, abs=1e-12)


def test_ddt_l2_frac_fd_oracle():
    k = frac_kernel(0.25)
    A = 20.0
    h = 1e-4
    for t in (0.5, 1.0):
        got = ddt_l2_norm_sq(k, t, TIGHT, window_a=A).value
        fd = (l2_norm_sq(k, t + h, TIGHT, window_a=A).value
              - l2_norm_sq(k, t - h, TIGHT, window_a=A).value) / (2 * h)
        assert got == pytest.approx(fd, rel=1e-4)


def test_ddt_l2_frac_small_t_limit():
    k = frac_kernel(0.25)
    v1 = ddt_l2_norm_sq(k, 1e-3, window_a=20.0).value
    v4 = ddt_l2_norm_sq(k, 4e-3, window_a=20.0).value
    # f(t,t) = 0, so v'(t) = 2 int df/dt f ~ t^(2d) -> 0 as t -> 0+
    assert 0.0 < v1 < v4 < 0.5
    assert v1 / v4 == pytest.approx(0.5, abs=0.05)  # t^(1/2) scaling at d=1/4


def test_dt_weighted_integral_vs_scipy_oracle():
    k = frac_kernel(0.25)
    t, A = 0.9, 10.0
    phi = lambda s, u: np.cos(3.0 * s)
    got = dt_weighted_integral(k, t, phi, -A, TIGHT)
    want, werr = scipy_quad(
        lambda s: float(k.eval_dt(t, np.array([s]))[0]) * math.cos(3.0 * s),
        -A, t, points=[0.0], limit=400)
    assert got.value == pytest.approx(want, abs=5e-8 + 10 * werr)


# --- validator ---------------------------------------------------------------

@pytest.mark.parametrize("d", [0.1, 0.25, 0.4])
def test_validator_accepts_frac_with_appendix_constants(d):
    rep = validate_class_K(frac_kernel(d))
    assert rep.accepted, rep.to_text()
    assert rep.gamma == pytest.approx(1.0 - d, abs=0.05)
    assert rep.theta == pytest.approx(1.0 - d, abs=0.05)
    assert abs(rep.beta) <= 0.02  # boundary case the appendix uses


def test_validator_accepts_indicator_with_zero_envelope():
    rep = validate_class_K(indicator_kernel())
    assert rep.accepted, rep.to_text()
    assert rep.c0 == 0.0


def _shifted_indicator():
    def f(t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0.0) & (s <= t + 1.0), 1.0, 0.0)
    zero = lambda t, s: np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)
    return KernelHandle(eval=f, eval_dt=zero, eval_ds=zero, tau=0.0,
                        label="violates-volterra", dt_zero=True)


def _zero_kernel():
    zero = lambda t, s: np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)
    return KernelHandle(eval=zero, eval_dt=zero, eval_ds=zero, tau=0.0,
                        label="null-support", dt_zero=True)


def _negative_d_kernel():
    d = -0.2
    def _pow(x, p):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0.0, np.abs(x) ** p, 0.0)
    f = lambda t, s: _pow(np.asarray(t, float) - np.asarray(s, float), d) - _pow(-np.asarray(s, float), d)
    fdt = lambda t, s: d * _pow(np.asarray(t, float) - np.asarray(s, float), d - 1.0)
    fds = lambda t, s: d * (_pow(-np.asarray(s, float), d - 1.0)
                            - _pow(np.asarray(t, float) - np.asarray(s, float), d - 1.0))
    return KernelHandle(eval=f, eval_dt=fdt, eval_ds=fds, tau=-np.inf,
                        label="gamma-too-strong", dt_gamma=1.0 - d)


def test_validator_rejects_volterra_violator():
    rep = validate_class_K(_shifted_indicator())
    assert not rep.accepted
    assert not rep.conditions["i"]["passed"]


def test_validator_rejects_null_support():
    rep = validate_class_K(_zero_kernel())
    assert not rep.accepted
    assert not rep.conditions["iv"]["passed"]
    assert rep.conditions["i"]["passed"]  # fails only where it should


def test_validator_rejects_strong_derivative_singularity():
    rep = validate_class_K(_negative_d_kernel())
    assert not rep.accepted
    assert not rep.conditions["v"]["passed"]
    assert rep.gamma > 1.0  # fitted exponent outside (0,1)


def test_report_serialises():
    rep = validate_class_K(indicator_kernel())
    d = rep.to_dict()
    assert d["accepted"] is True
    assert "conditions" in d and "i" in d["conditions"]
    assert isinstance(rep.to_json(), str)
    assert "ACCEPTED" in rep.to_text()
