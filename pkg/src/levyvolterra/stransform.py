"""Test functionals, the signed change of measure, and S-transforms.

A test functional g has two components mirroring the chaos-space measure
sigma^2 delta_0 (+) x^2 nu: a finite sum of separable jump terms
mu * g1(x) * g2(t) (g1 a smooth bump supported away from 0, g2 rapidly
decreasing) and an explicit x = 0 slice g(0, .) coupling to the Brownian
part.  The signed measure attached to g re-weights paths by the
Doleans-Dade exponential

    exp{ sigma int g(0,t) W(dt) - sigma^2/2 int g(0,t)^2 dt
         - int int x g(x,t) nu(dx) dt } * prod_jumps (1 + g*(dL(t), t)),

with g*(x,t) = x g(x,t).  The Wiener integral and its quadratic compensator
are discretised on the same midpoint grid, so the weight has mean exactly 1
path-measure-wise; a factor (1 + g*) may be negative, which is legal (signed
measure) and only reported in the diagnostics.

Under this weight the Brownian motion acquires drift sigma*g(0,t)dt and the
jump intensity tilts to (1 + g*(x,t)) nu(dx)dt; all deterministic formulas
below carry the matching sigma^2 factor on Brownian couplings so that
Monte Carlo and quadrature agree identically.

All time integrals are restricted to the simulation window [-A, T] and the
simulated jump measure (small-jump truncation included): the transform pair
being verified is the one the paths actually realise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .kernels import KernelHandle, dt_weighted_integral
from .levy import LevyModel, LevyPath
from .quadrature import (DEFAULT_SPEC, QuadratureSpec, QuadResult,
                         graded_lattice, integrate_singular, nu_integrate)

__all__ = [
    "Bump", "TimeProfile", "TestFunctional", "SEstimate",
    "default_battery", "doleans_weight", "WeightMaker",
    "s_transform_mc", "s_M", "ddt_s_M",
    "s_lambda_rhs", "s_N_rhs", "s_M_diamond_rhs",
]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bump:
    """Smooth bump amp * exp(1 - 1/(1-y^2)) on [a, b] in |x|, 0 < a < b.

    mode: 'pos' supports [a, b] only; 'even' mirrors with the same sign;
    'odd' mirrors with the opposite sign.  Bounded by |amp|, support away
    from 0 -- a valid jump-direction test function.
    """

    a: float
    b: float
    amp: float = 1.0
    mode: str = "pos"

    def __post_init__(self):
        if not 0.0 < self.a < self.b:
            raise ValueError("need 0 < a < b")
        if self.mode not in ("pos", "even", "odd"):
            raise ValueError("mode must be pos, even or odd")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        y = (2.0 * ax - self.a - self.b) / (self.b - self.a)
        inside = (ax > self.a) & (ax < self.b)
        out = np.zeros_like(ax)
        ys = y[inside]
        out[inside] = self.amp * np.exp(1.0 - 1.0 / (1.0 - ys * ys))
        if self.mode == "pos":
            out = np.where(x > 0.0, out, 0.0)
        elif self.mode == "odd":
            out = np.where(x > 0.0, out, -out)
        return out

    @property
    def bound(self) -> float:
        return abs(self.amp)


@dataclass(frozen=True)
class TimeProfile:
    """Rapidly decreasing smooth profile p(tau) exp(-tau^2/2),
    tau = (t - center)/width, with polynomial coefficients ``coeffs``."""

    coeffs: tuple[float, ...] = (1.0,)
    center: float = 0.0
    width: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tau = (t - self.center) / self.width
        p = np.zeros_like(tau)
        for c in reversed(self.coeffs):
            p = p * tau + c
        return p * np.exp(-0.5 * tau * tau)


@dataclass(frozen=True)
class TestFunctional:
    """g(x, t) = sum_j mu_j g1_j(x) g2_j(t) for x != 0, plus the x = 0 slice
    ``gauss`` driving the Brownian coupling.  g*(x,t) = x g(x,t)."""

    terms: tuple[tuple[float, Bump, TimeProfile], ...] = ()
    gauss: TimeProfile | None = None
    label: str = "g"

    __test__ = False  # not a pytest class

    @staticmethod
    def zero() -> "TestFunctional":
        return TestFunctional(terms=(), gauss=None, label="0")

    @property
    def is_zero(self) -> bool:
        return not self.terms and self.gauss is None

    def g_jump(self, x, t):
        """g(x, t) for x != 0 (broadcasts)."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(x, t).shape)
        for mu, g1, g2 in self.terms:
            out = out + mu * g1(x) * g2(t)
        return out

    def g0(self, t):
        """The x = 0 slice g(0, t)."""
        t = np.asarray(t, dtype=float)
        if self.gauss is None:
            return np.zeros_like(t)
        return self.gauss(t)

    def gstar(self, x, t):
        """g*(x, t) = x g(x, t); vanishes at x = 0 by construction."""
        return np.asarray(x, dtype=float) * self.g_jump(x, t)

    def jump_x_moments(self, model: LevyModel) -> list[float]:
        """c_j = integral of x^2 g1_j(x) over the simulated jump measure."""
        nu = model.effective_jumps
        return [nu_integrate(nu, lambda x, g1=g1: x * x * g1(x)) for _, g1, _ in self.terms]


def default_battery(scale: float = 1.0, n: int = 8) -> list[TestFunctional]:
    """A battery of linearly independent test functionals, scaled so the
    weight variance stays tame for the built-in drivers."""
    wide = Bump(0.3, 3.0, 0.22 * scale)
    wide_even = Bump(0.3, 3.0, 0.2 * scale, mode="even")
    wide_odd = Bump(0.3, 3.0, 0.2 * scale, mode="odd")
    narrow = Bump(1.0, 3.0, 0.25 * scale)
    p_flat = TimeProfile((1.0,))
    p_lin = TimeProfile((0.0, 1.0))
    p_quad = TimeProfile((1.0, 0.0, -0.5), width=1.2)
    p_off = TimeProfile((1.0,), center=0.4, width=0.8)
    gs = [
        TestFunctional((), TimeProfile((0.45 * scale,)), label="g1:gauss-flat"),
        TestFunctional(((1.0, wide, p_flat),), None, label="g2:jump-wide"),
        TestFunctional(((1.0, wide_even, p_lin),), None, label="g3:jump-even-lin"),
        TestFunctional(((1.0, wide_odd, p_flat),),
                       TimeProfile((0.3 * scale,), center=0.2), label="g4:odd+gauss"),
        TestFunctional(((1.0, narrow, p_off),), None, label="g5:jump-narrow-off"),
        TestFunctional((), TimeProfile((0.0, 0.4 * scale), width=1.1), label="g6:gauss-lin"),
        TestFunctional(((0.7, wide, p_quad), (0.5, narrow, p_flat)),
                       TimeProfile((0.25 * scale,)), label="g7:mixed"),
        TestFunctional(((1.0, wide_even, p_off),),
                       TimeProfile((0.2 * scale, 0.0, -0.15 * scale)), label="g8:even+gauss-quad"),
    ]
    return gs[:n]


# ---------------------------------------------------------------------------
# Doleans-Dade weights
# ---------------------------------------------------------------------------

class WeightMaker:
    """Precomputed Doleans-Dade weight evaluator for one (g, model, grid)."""

    def __init__(self, g: TestFunctional, model: LevyModel, grid: np.ndarray,
                 quad: QuadratureSpec | None = None):
        self.g = g
        self.model = model
        quad = quad or DEFAULT_SPEC
        grid = np.asarray(grid, dtype=float)
        mids = 0.5 * (grid[:-1] + grid[1:])
        widths = np.diff(grid)
        self._g0_mids = g.g0(mids)
        self._sigma = model.sigma_eff
        # quadratic compensator on the same midpoint grid: mean weight is
        # exactly 1 for the discretised Wiener part
        self._gauss_comp = 0.5 * self._sigma ** 2 * float(np.dot(self._g0_mids ** 2, widths))
        A, T = -grid[0], grid[-1]
        self._jump_comp = 0.0
        if g.terms:
            nu = model.effective_jumps
            for mu, g1, g2 in g.terms:
                cx = nu_integrate(nu, lambda x, g1=g1: x * g1(x))
                tv, _ = integrate_singular(g2, -A, T, quad)
                self._jump_comp += mu * float(np.real(cx)) * tv

    def weight(self, lp: LevyPath) -> float:
        w = self._sigma * float(np.dot(self._g0_mids, lp.gaussian_increments))
        expo = w - self._gauss_comp - self._jump_comp
        prod = 1.0
        if len(lp.jump_times):
            prod = float(np.prod(1.0 + self.g.gstar(lp.jump_sizes, lp.jump_times)))
        return math.exp(expo) * prod

    def weights(self, paths) -> np.ndarray:
        return np.array([self.weight(p) for p in paths])


def doleans_weight(g: TestFunctional, lp: LevyPath, model: LevyModel,
                   quad: QuadratureSpec | None = None) -> float:
    """The Doleans-Dade exponential of g evaluated on one path.

    A factor (1 + g*(dL(t), t)) <= 0 makes the weight nonpositive; that is
    legal (the change of measure is signed) and never an error.
    """
    return WeightMaker(g, model, lp.grid, quad).weight(lp)


@dataclass(frozen=True)
class SEstimate:
    """A signed-measure Monte Carlo estimate with its diagnostics."""

    value: float | complex
    std_error: float
    n_paths: int
    weight_diagnostics: dict = field(default_factory=dict)


def weight_diagnostics(w: np.ndarray) -> dict:
    return {
        "mean": float(w.mean()),
        "variance": float(w.var(ddof=1)) if len(w) > 1 else 0.0,
        "neg_fraction": float(np.mean(w < 0.0)),
        "e_g": float(np.sqrt(np.mean(w ** 2))),
    }


def s_transform_mc(phi, g: TestFunctional, paths, model: LevyModel,
                   quad: QuadratureSpec | None = None) -> SEstimate:
    """Monte Carlo S-transform: mean of phi(path) * weight(path).

    ``phi`` maps a LevyPath to a scalar (complex allowed).  The standard
    error is the delete-one jackknife, which for a plain mean coincides with
    the classical estimator.
    """
    if not paths:
        raise ValueError("empty path collection")
    wm = WeightMaker(g, model, paths[0].grid, quad)
    w = wm.weights(paths)
    vals = np.array([phi(p) for p in paths])
    prods = w * vals
    n = len(prods)
    val = prods.mean()
    if np.iscomplexobj(prods):
        se = float(np.sqrt((np.var(prods.real, ddof=1) + np.var(prods.imag, ddof=1)) / n))
    else:
        val = float(val)
        se = float(np.std(prods, ddof=1) / np.sqrt(n)) if n > 1 else np.inf
    return SEstimate(value=val, std_error=se, n_paths=n,
                     weight_diagnostics=weight_diagnostics(w))


# ---------------------------------------------------------------------------
# Deterministic S-transform formulas
# ---------------------------------------------------------------------------

def s_M(kernel: KernelHandle, model: LevyModel, g: TestFunctional, t: float,
        quad: QuadratureSpec | None = None, window_a: float | None = None) -> QuadResult:
    """S-transform of M(t): sigma^2 int f(t,s) g(0,s) ds
    + int int f(t,s) x g*(x,s) nu(dx) ds   (all over [-A v tau, t])."""
    quad = quad or DEFAULT_SPEC
    A = quad.tail_cutoff if window_a is None else window_a
    lo = kernel.support_start(A)
    if t <= max(lo, 0.0) and t <= 0.0:
        return QuadResult(0.0, 0.0)
    total, err = 0.0, 0.0
    if g.gauss is not None and model.sigma_eff > 0.0:
        v, e = integrate_singular(lambda s: kernel.eval(t, s) * g.g0(s), lo, t,
                                  quad, knots=(-1.0, 0.0))
        total += model.sigma_eff ** 2 * v
        err += model.sigma_eff ** 2 * e
    if g.terms:
        cs = g.jump_x_moments(model)
        for (mu, _, g2), c in zip(g.terms, cs):
            v, e = integrate_singular(lambda s: kernel.eval(t, s) * g2(s), lo, t,
                                      quad, knots=(-1.0, 0.0))
            total += mu * c * v
            err += abs(mu * c) * e
    return QuadResult(total, err)


def ddt_s_M(kernel: KernelHandle, model: LevyModel, g: TestFunctional, t: float,
            quad: QuadratureSpec | None = None,
            window_a: float | None = None) -> QuadResult:
    """d/dt of the S-transform of M(t):

    sigma^2 (f(t,t) g(0,t) + int df/dt(t,s) g(0,s) ds)
    + f(t,t) int x g*(x,t) nu(dx)
    + int int df/dt(t,s) x g*(x,s) nu(dx) ds.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    quad = quad or DEFAULT_SPEC
    A = quad.tail_cutoff if window_a is None else window_a
    lo = kernel.support_start(A)
    ftt = float(np.asarray(kernel.eval(t, np.array([t])))[0])
    total, err = 0.0, 0.0
    if g.gauss is not None and model.sigma_eff > 0.0:
        g0t = float(g.g0(np.array([t]))[0])
        res = dt_weighted_integral(kernel, t, lambda s, u: g.g0(s), lo, quad)
        total += model.sigma_eff ** 2 * (ftt * g0t + res.value)
        err += model.sigma_eff ** 2 * res.error
    if g.terms:
        cs = g.jump_x_moments(model)
        for (mu, _, g2), c in zip(g.terms, cs):
            g2t = float(g2(np.array([t]))[0])
            total += ftt * mu * c * g2t
            res = dt_weighted_integral(kernel, t, lambda s, u, g2=g2: g2(s), lo, quad)
            total += mu * c * res.value
            err += abs(mu * c) * res.error
    return QuadResult(total, err)


def s_lambda_rhs(sX, g: TestFunctional, model: LevyModel,
                 domain: tuple[float, float],
                 quad: QuadratureSpec | None = None) -> QuadResult:
    """S-transform of the anticipating integral of X against the combined
    random measure (jump part + sigma * delta_0 (x) Brownian part):

        int int S(X(x,t))(g) g*(x,t) x nu(dx) dt
        + sigma^2 int S(X(0,t))(g) g(0,t) dt.

    ``sX`` is a callable (x, t_array) -> array of S-transform values; the
    x = 0 slice is queried explicitly.
    """
    quad = quad or DEFAULT_SPEC
    lo, hi = domain
    total, err = 0.0, 0.0
    if g.terms:
        nu = model.effective_jumps
        atoms = getattr(nu, "atom_list", None)

        def t_integral(xi):
            return integrate_singular(
                lambda t, xi=xi: np.asarray(sX(xi, t)) * g.gstar(xi, t),
                lo, hi, quad)

        if atoms is not None:
            for x, mass in atoms:
                v, e = t_integral(x)
                total += mass * x * v
                err += abs(mass * x) * e
        else:
            def x_part(x):
                xs = np.atleast_1d(np.asarray(x, dtype=float))
                out = np.array([xi * t_integral(xi)[0] for xi in xs])
                return out if np.ndim(x) else out[0]
            total += float(np.real(nu_integrate(nu, x_part, quad)))
            err += 10.0 * quad.abs_tol
    if g.gauss is not None and model.sigma_eff > 0.0:
        v, e = integrate_singular(lambda t: np.asarray(sX(0.0, t)) * g.g0(t),
                                  lo, hi, quad)
        total += model.sigma_eff ** 2 * v
        err += model.sigma_eff ** 2 * e
    return QuadResult(total, err)


def s_N_rhs(sX, g: TestFunctional, model: LevyModel,
            domain: tuple[float, float],
            quad: QuadratureSpec | None = None) -> QuadResult:
    """S-transform of the anticipating integral of X against the jump
    measure: int int S(X(x,t))(g) (1 + g*(x,t)) nu(dx) dt."""
    quad = quad or DEFAULT_SPEC
    lo, hi = domain
    nu = model.effective_jumps
    atoms = getattr(nu, "atom_list", None)

    def t_integral(xi):
        return integrate_singular(
            lambda t, xi=xi: np.asarray(sX(xi, t)) * (1.0 + g.gstar(xi, t)),
            lo, hi, quad)

    if atoms is not None:
        total, err = 0.0, 0.0
        for x, mass in atoms:
            v, e = t_integral(x)
            total += mass * v
            err += abs(mass) * e
        return QuadResult(total, err)

    def x_part(x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([t_integral(xi)[0] for xi in xs])
        return out if np.ndim(x) else out[0]

    total = float(np.real(nu_integrate(nu, x_part, quad)))
    return QuadResult(total, 10.0 * quad.abs_tol)


def s_M_diamond_rhs(sX, kernel: KernelHandle, model: LevyModel,
                    g: TestFunctional, interval: tuple[float, float],
                    quad: QuadratureSpec | None = None,
                    window_a: float | None = None,
                    n_nodes: int = 16) -> QuadResult:
    """S-transform of the Hitsuda-Skorokhod integral of X against M:
    int over the interval of S(X(t))(g) * d/dt S(M(t))(g) dt.

    ``sX``: callable t_array -> S-transform values.  Uses a graded composite
    Gauss lattice with one doubling for the error estimate (the integrand's
    derivative factor costs a few singular integrals per node).
    """
    quad = quad or DEFAULT_SPEC
    lo, hi = interval
    edges = [lo, lo + (hi - lo) / 64.0, lo + (hi - lo) / 8.0, hi]

    def rule(n):
        ts, ws = graded_lattice(edges, n)
        dvals = np.array([ddt_s_M(kernel, model, g, float(t), quad, window_a).value
                          for t in ts])
        return float(np.dot(ws, np.asarray(sX(ts)) * dvals))

    v1 = rule(n_nodes)
    v2 = rule(2 * n_nodes)
    return QuadResult(v2, abs(v2 - v1) + quad.abs_tol)
