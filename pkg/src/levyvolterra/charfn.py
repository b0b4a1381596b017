"""Characteristic functions of M(t) under the base and tilted measures, their
time derivatives, and the Fourier route to S-transforms of G(M(t)).

The tilted characteristic function is

    E_g exp(iu M(t)) = exp( iu * S(M(t))(g) - sigma^2 u^2/2 * v(t)
        + int int (e^{iuxf(t,s)} - 1 - iuxf(t,s)) (1 + g*(x,s)) nu(dx) ds ),

with v(t) the squared kernel norm; at g = 0 it reduces to the base law.  For
sigma > 0 the Gaussian factor damps like exp(-c u^2) with
c = sigma^2 v(t) / 2, which is what makes the Fourier inversion

    S(G(M(t)))(g) = (2 pi)^{-1/2} int FG(u) E_g exp(iuM(t)) du

absolutely convergent for merely polynomially-bounded smooth G; without a
Gaussian part the route needs G and FG integrable, and other combinations
are rejected.

All time integrals run over the scenario window and the simulated jump
measure (see stransform), so quadrature values match what signed-measure
Monte Carlo estimates on the same paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import (KernelHandle, ddt_l2_norm_sq, dt_weighted_integral,
                      l2_norm_sq)
from .levy import LevyModel, NoJumps
from .quadrature import (DEFAULT_SPEC, QuadratureSpec, QuadResult,
                         integrate_singular, nu_integrate)
from .stransform import TestFunctional, ddt_s_M, s_M

__all__ = [
    "GrowthClassError", "SmoothTestFunction",
    "gaussian_bump", "damped_poly", "quadratic",
    "cf_M", "cf_M_Qg", "ddt_cf_M_Qg", "s_G_of_M", "ddt_s_G_of_M",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class GrowthClassError(ValueError):
    """Raised when a test function's growth class rules out the Fourier route."""


@dataclass(frozen=True)
class SmoothTestFunction:
    """A C^2 test function G with optional analytic Fourier transform.

    ``growth`` is either ("A", None) -- G, G', G'' and FG absolutely
    integrable -- or ("poly", q) for polynomial growth of degree q.
    ``fourier`` uses the symmetric convention
    FG(u) = (2 pi)^{-1/2} int G(x) e^{-iux} dx.
    """

    value: object
    d1: object
    d2: object
    fourier: object | None
    growth: tuple
    label: str

    def __call__(self, x):
        return self.value(x)

    @property
    def poly_degree(self) -> float:
        return self.growth[1] if self.growth[0] == "poly" else 0.0


def gaussian_bump(center: float = 0.0, width: float = 1.0,
                  amp: float = 1.0) -> SmoothTestFunction:
    """G(x) = amp exp(-(x-m)^2 / (2 w^2)); FG is again Gaussian."""
    m, w = center, width

    def G(x):
        z = (np.asarray(x, dtype=float) - m) / w
        return amp * np.exp(-0.5 * z * z)

    def G1(x):
        z = (np.asarray(x, dtype=float) - m) / w
        return -amp * z / w * np.exp(-0.5 * z * z)

    def G2(x):
        z = (np.asarray(x, dtype=float) - m) / w
        return amp * (z * z - 1.0) / w ** 2 * np.exp(-0.5 * z * z)

    def FG(u):
        u = np.asarray(u, dtype=float)
        return amp * w * np.exp(-1j * u * m - 0.5 * (w * u) ** 2)

    return SmoothTestFunction(G, G1, G2, FG, ("A", None),
                              f"bump(m={m:g},w={w:g})")


def damped_poly(coeffs, width: float = 1.0, center: float = 0.0) -> SmoothTestFunction:
    """G(x) = (c0 + c1 z + c2 z^2) exp(-z^2/(2 w^2)), z = x - center."""
    coeffs = tuple(float(c) for c in coeffs)
    if len(coeffs) > 3:
        raise ValueError("degree <= 2 supported analytically")
    c = coeffs + (0.0,) * (3 - len(coeffs))
    w, m = width, center

    def G(x):
        z = np.asarray(x, dtype=float) - m
        return (c[0] + c[1] * z + c[2] * z * z) * np.exp(-0.5 * (z / w) ** 2)

    def G1(x):
        z = np.asarray(x, dtype=float) - m
        e = np.exp(-0.5 * (z / w) ** 2)
        p = c[0] + c[1] * z + c[2] * z * z
        return (c[1] + 2.0 * c[2] * z - p * z / w ** 2) * e

    def G2(x):
        z = np.asarray(x, dtype=float) - m
        e = np.exp(-0.5 * (z / w) ** 2)
        p = c[0] + c[1] * z + c[2] * z * z
        dp = c[1] + 2.0 * c[2] * z
        return (2.0 * c[2] - 2.0 * dp * z / w ** 2 - p / w ** 2
                + p * (z / w ** 2) ** 2) * e

    def FG(u):
        u = np.asarray(u, dtype=float)
        E = w * np.exp(-0.5 * (w * u) ** 2)
        f0 = E
        f1 = -1j * w ** 2 * u * E            # i d/du of E
        f2 = w ** 2 * (1.0 - (w * u) ** 2) * E  # - d^2/du^2 of E
        return (c[0] * f0 + c[1] * f1 + c[2] * f2) * np.exp(-1j * u * m)

    return SmoothTestFunction(G, G1, G2, FG, ("A", None),
                              f"damped_poly{coeffs}")


def quadratic() -> SmoothTestFunction:
    """G(x) = x^2: polynomial growth, no integrable Fourier transform."""
    return SmoothTestFunction(lambda x: np.asarray(x, dtype=float) ** 2,
                              lambda x: 2.0 * np.asarray(x, dtype=float),
                              lambda x: 2.0 * np.ones_like(np.asarray(x, dtype=float)),
                              None, ("poly", 2), "x^2")


# ---------------------------------------------------------------------------
# Characteristic functions
# ---------------------------------------------------------------------------

def _jump_cf_sum(model: LevyModel, u: float, fvals: np.ndarray,
                 weight=None, quad: QuadratureSpec | None = None) -> np.ndarray:
    """sum over nu of (e^{iuxF} - 1 - iuxF) [* weight(x, .)], vectorised in F."""
    nu = model.effective_jumps
    fvals = np.asarray(fvals, dtype=float)
    atoms = getattr(nu, "atom_list", None)
    if atoms is not None:
        out = np.zeros(fvals.shape, dtype=complex)
        for x, mass in atoms:
            term = np.exp(1j * u * x * fvals) - 1.0 - 1j * u * x * fvals
            if weight is not None:
                term = term * weight(x)
            out += mass * term
        return out
    if getattr(nu, "density", None) is None:
        return np.zeros(fvals.shape, dtype=complex)
    out = np.empty(fvals.shape, dtype=complex)
    for idx, F in np.ndenumerate(fvals):
        def h(x):
            t_ = np.exp(1j * u * x * F) - 1.0 - 1j * u * x * F
            return t_ * weight(x) if weight is not None else t_
        out[idx] = nu_integrate(nu, h, quad)
    return out


def cf_exponent_terms(kernel: KernelHandle, model: LevyModel,
                      g: TestFunctional | None, t: float, u: float,
                      quad: QuadratureSpec, window_a: float | None):
    """(linear term iu*S(M(t)), gaussian term, jump integral, error bound)."""
    A = quad.tail_cutoff if window_a is None else window_a
    lo = kernel.support_start(A)
    v = l2_norm_sq(kernel, t, quad, window_a)
    gauss = -0.5 * (model.sigma_eff * u) ** 2 * v.value
    gauss_err = 0.5 * (model.sigma_eff * u) ** 2 * v.error

    lin = 0.0 + 0.0j
    lin_err = 0.0
    if g is not None and not g.is_zero:
        sm = s_M(kernel, model, g, t, quad, window_a)
        lin = 1j * u * sm.value
        lin_err = abs(u) * sm.error

    def integrand(s):
        s = np.asarray(s, dtype=float)
        fv = np.asarray(kernel.eval(t, s), dtype=float)
        if g is not None and g.terms:
            return _jump_cf_sum(model, u, fv,
                                weight=lambda x, s=s: 1.0 + g.gstar(x, s), quad=quad)
        return _jump_cf_sum(model, u, fv, quad=quad)

    if u == 0.0 or isinstance(model.jumps, NoJumps) or t <= lo:
        jump, jerr = 0.0 + 0.0j, 0.0
    else:
        jump, jerr = integrate_singular(integrand, lo, t, quad, knots=(-1.0, 0.0))
    return lin, gauss, jump, gauss_err + lin_err + jerr


def cf_M(kernel: KernelHandle, model: LevyModel, t: float, u: float,
         quad: QuadratureSpec | None = None,
         window_a: float | None = None) -> QuadResult:
    """E exp(iu M(t)) by quadrature; |value| <= 1."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    quad = quad or DEFAULT_SPEC
    _, gauss, jump, err = cf_exponent_terms(kernel, model, None, t, u, quad, window_a)
    expo = gauss + jump
    # the exact real part is nonpositive; clamp quadrature jitter
    expo = complex(min(expo.real, 0.0), expo.imag)
    val = np.exp(expo)
    return QuadResult(val, min(abs(val) * err, 2.0))


def cf_M_Qg(kernel: KernelHandle, model: LevyModel, g: TestFunctional,
            t: float, u: float, quad: QuadratureSpec | None = None,
            window_a: float | None = None) -> QuadResult:
    """E_g exp(iu M(t)) under the signed measure of g (may exceed 1 in
    modulus; reduces to cf_M at g = 0)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    quad = quad or DEFAULT_SPEC
    lin, gauss, jump, err = cf_exponent_terms(kernel, model, g, t, u, quad, window_a)
    val = np.exp(lin + gauss + jump)
    return QuadResult(val, abs(val) * err)


def ddt_cf_M_Qg(kernel: KernelHandle, model: LevyModel, g: TestFunctional,
                t: float, u: float, quad: QuadratureSpec | None = None,
                window_a: float | None = None,
                _hoisted=None) -> QuadResult:
    """d/dt of the tilted characteristic function: cf times the four-term
    bracket (linear drift, Gaussian norm growth, diagonal jump term, and the
    mixed df/dt jump integral)."""
    if t <= 0:
        raise ValueError("t must be positive")
    quad = quad or DEFAULT_SPEC
    A = quad.tail_cutoff if window_a is None else window_a
    lo = kernel.support_start(A)
    cf = cf_M_Qg(kernel, model, g, t, u, quad, window_a)

    if _hoisted is None:
        d_sm = ddt_s_M(kernel, model, g, t, quad, window_a)
        d_v = ddt_l2_norm_sq(kernel, t, quad, window_a)
    else:
        d_sm, d_v = _hoisted
    b1 = 1j * u * d_sm.value
    b2 = -0.5 * (model.sigma_eff * u) ** 2 * d_v.value
    berr = abs(u) * d_sm.error + 0.5 * (model.sigma_eff * u) ** 2 * d_v.error

    ftt = float(np.asarray(kernel.eval(t, np.array([t])))[0])
    w3 = None
    if g.terms:
        w3 = lambda x: 1.0 + float(g.gstar(x, np.array([t]))[0])
    b3 = complex(np.sum(_jump_cf_sum(model, u, np.array([ftt]), weight=w3,
                                     quad=quad)))

    if isinstance(model.jumps, NoJumps) or kernel.dt_zero or u == 0.0:
        b4, b4err = 0.0 + 0.0j, 0.0
    else:
        nu = model.effective_jumps
        atoms = getattr(nu, "atom_list", None)
        if atoms is None:
            raise NotImplementedError("df/dt jump bracket needs an atomic or "
                                      "truncated measure with atoms")

        def phi(s, ugap):
            s = np.asarray(s, dtype=float)
            F = np.asarray(kernel.eval_gap(t, ugap), dtype=float)
            out = np.zeros(F.shape, dtype=complex)
            for x, mass in atoms:
                term = 1j * u * x * (np.exp(1j * u * x * F) - 1.0)
                if g.terms:
                    term = term * (1.0 + g.gstar(x, s))
                out += mass * term
            return out

        res = dt_weighted_integral(kernel, t, phi, lo, quad)
        b4, b4err = res.value, res.error

    bracket = b1 + b2 + b3 + b4
    val = cf.value * bracket
    err = abs(cf.value) * (berr + b4err) + cf.error * abs(bracket)
    return QuadResult(val, err)


# ---------------------------------------------------------------------------
# Fourier route to S(G(M(t)))
# ---------------------------------------------------------------------------

def _require_fourier_route(Gt: SmoothTestFunction, model: LevyModel) -> None:
    if Gt.fourier is None:
        raise GrowthClassError(
            f"{Gt.label}: no Fourier transform available; the Fourier route "
            "needs it (polynomial-growth G without one is rejected)")
    if Gt.growth[0] != "A" and model.sigma_eff <= 0.0:
        raise GrowthClassError(
            f"{Gt.label}: without a Gaussian part the Fourier route needs "
            "G, G', G'' and FG absolutely integrable")


def _u_cutoff(Gt: SmoothTestFunction, cf_abs, tol: float) -> float:
    ref = abs(complex(np.asarray(Gt.fourier(np.array([0.0])))[0])) + 1e-300
    U = 2.0
    while U < 1e4:
        mag = abs(complex(np.asarray(Gt.fourier(np.array([U])))[0])) * cf_abs(U)
        if mag < tol * ref:
            return U
        U *= 1.5
    return U


def s_G_of_M(Gt: SmoothTestFunction, kernel: KernelHandle, model: LevyModel,
             g: TestFunctional, t: float, quad: QuadratureSpec | None = None,
             window_a: float | None = None) -> QuadResult:
    """S(G(M(t)))(g) via Fourier inversion against the tilted characteristic
    function.  Requires an analytic FG and (class A, or sigma > 0)."""
    _require_fourier_route(Gt, model)
    quad = quad or DEFAULT_SPEC
    if t == 0.0:
        return QuadResult(float(np.asarray(Gt.value(np.array([0.0])))[0]), 0.0)

    cf_err_seen = [0.0]

    def cf_vec(u_arr):
        out = np.empty(len(u_arr), dtype=complex)
        for i, u in enumerate(u_arr):
            r = cf_M_Qg(kernel, model, g, t, float(u), quad, window_a)
            out[i] = r.value
            cf_err_seen[0] = max(cf_err_seen[0], r.error)
        return out

    damping = 0.5 * (model.sigma_eff ** 2) * l2_norm_sq(kernel, t, quad, window_a).value
    cf_abs = lambda u: math.exp(-damping * u * u + 1.0)
    U = _u_cutoff(Gt, cf_abs, 1e-13)

    def integrand(u_arr):
        u_arr = np.asarray(u_arr, dtype=float)
        return np.asarray(Gt.fourier(u_arr)) * cf_vec(u_arr)

    v, e = integrate_singular(integrand, 0.0, U, quad)
    # Hermitian symmetry: the full line integral is twice the real part
    fg_l1, _ = integrate_singular(lambda u: np.abs(np.asarray(Gt.fourier(u))), 0.0, U, quad)
    val = 2.0 * np.real(v) / _SQRT2PI
    err = (2.0 * e + 2.0 * cf_err_seen[0] * fg_l1) / _SQRT2PI + 1e-12 * abs(val)
    return QuadResult(float(val), float(err))


def ddt_s_G_of_M(Gt: SmoothTestFunction, kernel: KernelHandle, model: LevyModel,
                 g: TestFunctional, t: float, quad: QuadratureSpec | None = None,
                 window_a: float | None = None) -> QuadResult:
    """d/dt S(G(M(t)))(g): Fourier inversion against the cf time derivative."""
    _require_fourier_route(Gt, model)
    if t <= 0:
        raise ValueError("t must be positive")
    quad = quad or DEFAULT_SPEC
    hoisted = (ddt_s_M(kernel, model, g, t, quad, window_a),
               ddt_l2_norm_sq(kernel, t, quad, window_a))
    err_seen = [0.0]

    def dcf_vec(u_arr):
        out = np.empty(len(u_arr), dtype=complex)
        for i, u in enumerate(u_arr):
            r = ddt_cf_M_Qg(kernel, model, g, t, float(u), quad, window_a,
                            _hoisted=hoisted)
            out[i] = r.value
            err_seen[0] = max(err_seen[0], r.error)
        return out

    damping = 0.5 * (model.sigma_eff ** 2) * l2_norm_sq(kernel, t, quad, window_a).value
    cf_abs = lambda u: (1.0 + u * u) * math.exp(-damping * u * u + 1.0)
    U = _u_cutoff(Gt, cf_abs, 1e-13)

    def integrand(u_arr):
        u_arr = np.asarray(u_arr, dtype=float)
        return np.asarray(Gt.fourier(u_arr)) * dcf_vec(u_arr)

    v, e = integrate_singular(integrand, 0.0, U, quad)
    fg_l1, _ = integrate_singular(lambda u: np.abs(np.asarray(Gt.fourier(u))), 0.0, U, quad)
    val = 2.0 * np.real(v) / _SQRT2PI
    err = (2.0 * e + 2.0 * err_seen[0] * fg_l1) / _SQRT2PI + 1e-12 * abs(val)
    return QuadResult(float(val), float(err))
