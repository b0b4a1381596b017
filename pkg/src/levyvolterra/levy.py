"""Square-integrable centred two-sided Levy drivers and their simulation.

A driver is described by a Gaussian volatility ``sigma`` and a jump
specification (none, compound Poisson, or symmetric tempered stable).  Paths
are simulated on a finite window ``[-A, T]`` whose grid always contains 0 as
a node; jumps are carried as an explicit list of (time, size) pairs, never
folded into cell increments, so the jump relation of the derived Volterra
process and the Doleans-Dade product stay exact.

Randomness is counter-based: each path derives its own Philox substream from
``(seed, path_index)``, so ensembles are reproducible independently of
worker count or evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from . import quadrature
from .quadrature import QuadratureSpec, nu_integrate

__all__ = [
    "AtomicLaw", "UniformLaw", "DensityLaw",
    "NoJumps", "CompoundPoisson", "TemperedStable",
    "LevyModel", "LevyPath",
    "drift_gamma", "nu_moment",
    "simulate_path", "simulate_paths", "path_seed",
    "reconstruct", "coarsen", "export_levy_csv",
]

SMALL_JUMP_X2_FRACTION = 1e-4


# ---------------------------------------------------------------------------
# Jump size laws for compound Poisson drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomicLaw:
    """Discrete jump law with atoms (x_i, p_i); all x_i nonzero, sum p_i = 1."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("atomic law needs at least one atom")
        if any(x == 0.0 for x, _ in self.atoms):
            raise ValueError("jump atoms must be nonzero")
        total = sum(p for _, p in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {total}, not 1")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        xs = np.array([x for x, _ in self.atoms])
        ps = np.array([p for _, p in self.atoms])
        return rng.choice(xs, size=n, p=ps)

    def moment_abs(self, k: float) -> float:
        return sum(p * abs(x) ** k for x, p in self.atoms)

    def mean(self) -> float:
        return sum(p * x for x, p in self.atoms)

    def tail_mean(self) -> float:
        """E[x ; |x| > 1]."""
        return sum(p * x for x, p in self.atoms if abs(x) > 1.0)


@dataclass(frozen=True)
class UniformLaw:
    """Uniform jump sizes on [a, b] (0 inside the support is fine)."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")

    def sample(self, rng, n):
        return rng.uniform(self.a, self.b, size=n)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    @property
    def support(self):
        return (self.a, self.b)

    def moment_abs(self, k: float) -> float:
        # integral of |x|^k / (b-a) over [a,b]
        def prim(x):
            return abs(x) ** (k + 1.0) / (k + 1.0) * math.copysign(1.0, x)
        return (prim(self.b) - prim(self.a)) / (self.b - self.a)

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def tail_mean(self) -> float:
        lo, hi = self.a, self.b
        total = 0.0
        if hi > 1.0:
            l = max(lo, 1.0)
            total += 0.5 * (hi ** 2 - l ** 2) / (hi - lo)
        if lo < -1.0:
            h = min(hi, -1.0)
            total += 0.5 * (h ** 2 - lo ** 2) / (hi - lo)
        return total


@dataclass(frozen=True)
class DensityLaw:
    """Bounded density on a finite support, sampled by rejection."""

    pdf_fn: object
    support: tuple[float, float]
    bound: float

    def sample(self, rng, n):
        lo, hi = self.support
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = 2 * (n - filled) + 16
            xs = rng.uniform(lo, hi, m)
            us = rng.uniform(0.0, self.bound, m)
            acc = xs[us < self.pdf_fn(xs)]
            take = min(len(acc), n - filled)
            out[filled:filled + take] = acc[:take]
            filled += take
        return out

    def pdf(self, x):
        return self.pdf_fn(np.asarray(x, dtype=float))

    def moment_abs(self, k: float) -> float:
        v, _ = quadrature.integrate_singular(
            lambda x: np.abs(x) ** k * self.pdf(x), *self.support)
        return v

    def mean(self) -> float:
        v, _ = quadrature.integrate_singular(
            lambda x: x * self.pdf(x), *self.support)
        return v

    def tail_mean(self) -> float:
        lo, hi = self.support
        total = 0.0
        if hi > 1.0:
            v, _ = quadrature.integrate_singular(
                lambda x: x * self.pdf(x), max(lo, 1.0), hi)
            total += v
        if lo < -1.0:
            v, _ = quadrature.integrate_singular(
                lambda x: x * self.pdf(x), lo, min(hi, -1.0))
            total += v
        return total


# ---------------------------------------------------------------------------
# Jump specifications (the Levy measure nu)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoJumps:
    """nu = 0."""

    def moment_abs(self, k: float) -> float:
        return 0.0

    def mean_x(self) -> float:
        return 0.0

    def tail_mean_x(self) -> float:
        return 0.0


@dataclass(frozen=True)
class CompoundPoisson:
    """Finite-activity jumps: nu = rate * jump_law."""

    rate: float
    law: AtomicLaw | UniformLaw | DensityLaw

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    # -- protocol used by quadrature.nu_integrate --
    @property
    def atom_list(self):
        if isinstance(self.law, AtomicLaw):
            return [(x, self.rate * p) for x, p in self.law.atoms]
        return None

    @property
    def density(self):
        if isinstance(self.law, AtomicLaw):
            return None
        return lambda x: self.rate * self.law.pdf(x)

    @property
    def density_support(self):
        return self.law.support

    infinite_activity = False

    # -- moments --
    def moment_abs(self, k: float) -> float:
        return self.rate * self.law.moment_abs(k)

    def mean_x(self) -> float:
        return self.rate * self.law.mean()

    def tail_mean_x(self) -> float:
        return self.rate * self.law.tail_mean()


@dataclass(frozen=True)
class TemperedStable:
    """Symmetric tempered stable measure c |x|^(-1-alpha) exp(-lam |x|) dx."""

    alpha: float
    tempering: float
    scale: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (0, 2)")
        if self.tempering <= 0 or self.scale <= 0:
            raise ValueError("tempering and scale must be positive")

    atom_list = None
    infinite_activity = True

    @property
    def density(self):
        a, lam, c = self.alpha, self.tempering, self.scale
        return lambda x: c * np.abs(x) ** (-1.0 - a) * np.exp(-lam * np.abs(x))

    @property
    def density_support(self):
        return (-np.inf, np.inf)

    def moment_abs(self, k: float) -> float:
        if k <= self.alpha:
            return math.inf
        return 2.0 * self.scale * special.gamma(k - self.alpha) \
            * self.tempering ** (self.alpha - k)

    def mean_x(self) -> float:
        return 0.0  # symmetric

    def tail_mean_x(self) -> float:
        return 0.0

    def x2_below(self, eps: float) -> float:
        """integral of x^2 nu(dx) over |x| < eps."""
        a, lam, c = self.alpha, self.tempering, self.scale
        return 2.0 * c * lam ** (a - 2.0) * special.gammainc(2.0 - a, lam * eps) \
            * special.gamma(2.0 - a)

    def rate_above(self, eps: float) -> float:
        """nu(|x| >= eps), finite for any eps > 0."""
        v, _ = quadrature.integrate_singular(
            lambda x: self.density(x), eps, _ts_cut(self))
        return 2.0 * v


def _ts_cut(ts: TemperedStable) -> float:
    return max(5.0, -math.log(1e-18) / ts.tempering)


@dataclass(frozen=True)
class _TruncatedTS:
    """Tempered stable restricted to |x| >= eps (the simulated jump measure)."""

    base: TemperedStable
    eps: float

    atom_list = None
    infinite_activity = False

    @property
    def density(self):
        eps, d = self.eps, self.base.density
        return lambda x: np.where(np.abs(np.asarray(x, dtype=float)) >= eps, d(x), 0.0)

    @property
    def density_support(self):
        return (-np.inf, np.inf)

    @property
    def density_segments(self):
        cut = _ts_cut(self.base)
        return [(-cut, -self.eps), (self.eps, cut)]

    @property
    def tempering(self):
        return self.base.tempering

    def moment_abs(self, k: float) -> float:
        v, _ = quadrature.integrate_singular(
            lambda x: x ** k * self.base.density(x), self.eps, _ts_cut(self.base))
        return 2.0 * v

    def mean_x(self) -> float:
        return 0.0


JumpSpec = NoJumps | CompoundPoisson | TemperedStable


# ---------------------------------------------------------------------------
# Module-level measure operations
# ---------------------------------------------------------------------------

def drift_gamma(jumps) -> float:
    """Drift making the driver centred: -integral of x nu(dx) over |x| > 1."""
    if isinstance(jumps, NoJumps):
        return 0.0
    if isinstance(jumps, TemperedStable):
        return 0.0  # symmetric measure
    return -jumps.tail_mean_x()


def nu_moment(jumps, k) -> float:
    """integral of |x|^k nu(dx); returns math.inf when divergent."""
    if k < 2:
        raise ValueError("nu_moment requires k >= 2")
    if isinstance(jumps, NoJumps):
        return 0.0
    return jumps.moment_abs(float(k))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyModel:
    """Centred square-integrable driver: triplet (derived gamma, sigma, nu)
    plus the simulation policy for small jumps."""

    sigma: float
    jumps: JumpSpec = field(default_factory=NoJumps)
    small_jump_cutoff: float | None = None
    gauss_compensation: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not math.isfinite(nu_moment(self.jumps, 2)):
            raise ValueError("jump measure has infinite second moment")

    @cached_property
    def gamma(self) -> float:
        return drift_gamma(self.jumps)

    @cached_property
    def eps(self) -> float | None:
        """Resolved small-jump cutoff (infinite-activity specs only)."""
        if not isinstance(self.jumps, TemperedStable):
            return None
        if self.small_jump_cutoff is not None:
            if self.small_jump_cutoff <= 0:
                raise ValueError("cutoff must be positive")
            return self.small_jump_cutoff
        target = SMALL_JUMP_X2_FRACTION * self.jumps.moment_abs(2.0)
        lo, hi = 1e-12, 1.0
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if self.jumps.x2_below(mid) > target:
                hi = mid
            else:
                lo = mid
        return lo

    @cached_property
    def sigma_eff(self) -> float:
        """Diffusion actually simulated (small-jump variance folded in)."""
        if isinstance(self.jumps, TemperedStable) and self.gauss_compensation:
            return math.sqrt(self.sigma ** 2 + self.jumps.x2_below(self.eps))
        return self.sigma

    @cached_property
    def effective_jumps(self):
        """The jump measure actually simulated (nu truncated at eps)."""
        if isinstance(self.jumps, TemperedStable):
            return _TruncatedTS(self.jumps, self.eps)
        return self.jumps

    @cached_property
    def drift_rate(self) -> float:
        """b = integral of x over the simulated jump measure (compensator rate)."""
        return self.effective_jumps.mean_x() if not isinstance(self.jumps, NoJumps) else 0.0

    @cached_property
    def var_rate(self) -> float:
        """Var L(1) = sigma^2 + integral x^2 nu(dx) (untruncated)."""
        return self.sigma ** 2 + nu_moment(self.jumps, 2)

    @cached_property
    def var_rate_eff(self) -> float:
        """Variance rate of the simulated driver."""
        if isinstance(self.jumps, NoJumps):
            return self.sigma_eff ** 2
        return self.sigma_eff ** 2 + self.effective_jumps.moment_abs(2.0)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyPath:
    """One simulated two-sided driver path on a window grid containing 0.

    ``gaussian_increments`` are standard N(0, dt) draws per cell; the driver's
    cell increment is ``sigma_eff * dW - drift_rate * dt`` plus in-cell jumps.
    Immutable and safe to share read-only.
    """

    grid: np.ndarray
    gaussian_increments: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    seed: object
    sigma_eff: float
    drift_rate: float

    @property
    def n_cells(self) -> int:
        return len(self.grid) - 1

    @cached_property
    def cell_widths(self) -> np.ndarray:
        return np.diff(self.grid)

    @cached_property
    def cell_mids(self) -> np.ndarray:
        return 0.5 * (self.grid[:-1] + self.grid[1:])

    @cached_property
    def zero_index(self) -> int:
        i = int(np.searchsorted(self.grid, 0.0))
        if self.grid[i] != 0.0:
            raise ValueError("grid does not contain 0")
        return i

    @property
    def window(self) -> tuple[float, float]:
        return (-float(self.grid[0]), float(self.grid[-1]))

    @cached_property
    def base_increments(self) -> np.ndarray:
        """Continuous-part increments sigma_eff*dW - b*dt per cell."""
        return self.sigma_eff * self.gaussian_increments - self.drift_rate * self.cell_widths


def _make_grid(A: float, T: float, n_cells: int) -> np.ndarray:
    if A < 0 or T <= 0:
        raise ValueError("need A >= 0 and T > 0")
    if n_cells < 1:
        raise ValueError("need at least one cell")
    if A == 0.0:
        return np.linspace(0.0, T, n_cells + 1)
    n_neg = min(max(1, round(n_cells * A / (A + T))), n_cells - 1)
    n_pos = n_cells - n_neg
    neg = np.linspace(-A, 0.0, n_neg + 1)
    pos = np.linspace(0.0, T, n_pos + 1)
    return np.concatenate([neg[:-1], pos])


def path_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Substream seed for path ``index`` of an ensemble keyed by ``seed``."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def simulate_path(model: LevyModel, window: tuple[float, float], n_cells: int,
                  seed) -> LevyPath:
    """Simulate one driver path on [-A, T].

    ``window`` is (A, T) with A >= 0, T > 0.  Deterministic given
    (model, window, n_cells, seed) regardless of worker count.
    """
    A, T = float(window[0]), float(window[1])
    grid = _make_grid(A, T, n_cells)
    span = T + A
    if isinstance(model.jumps, CompoundPoisson):
        expect = model.jumps.rate * span
        if expect > 5e7:
            raise ValueError(f"expected jump count {expect:.3g} too large")

    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(ss))

    dW = rng.normal(0.0, np.sqrt(np.diff(grid)))

    jt = np.empty(0)
    js = np.empty(0)
    if isinstance(model.jumps, CompoundPoisson):
        n = rng.poisson(model.jumps.rate * span)
        jt = rng.uniform(-A, T, n)
        js = model.jumps.law.sample(rng, n)
    elif isinstance(model.jumps, TemperedStable):
        eps = model.eps
        a, lam, c = model.jumps.alpha, model.jumps.tempering, model.jumps.scale
        lam_prop = 2.0 * c * eps ** (-a) / a  # un-tempered tail mass above eps
        n = rng.poisson(lam_prop * span)
        times = rng.uniform(-A, T, n)
        mags = eps * rng.uniform(0.0, 1.0, n) ** (-1.0 / a)
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        accept = rng.random(n) < np.exp(-lam * mags)   # thinning
        jt = times[accept]
        js = (signs * mags)[accept]

    if len(jt):
        order = np.argsort(jt, kind="stable")
        jt, js = jt[order], js[order]
        # never place a jump exactly on a node (measure-zero tie break)
        on_node = np.isin(jt, grid)
        if np.any(on_node):
            jt = jt + on_node * 1e-12 * max(span, 1.0)

    return LevyPath(grid=grid, gaussian_increments=dW, jump_times=jt,
                    jump_sizes=js, seed=seed, sigma_eff=model.sigma_eff,
                    drift_rate=model.drift_rate)


def simulate_paths(model: LevyModel, window, n_cells: int, n_paths: int,
                   seed: int) -> list[LevyPath]:
    """Independent paths with per-path substreams (deterministic, parallel-safe)."""
    return [simulate_path(model, window, n_cells, path_seed(seed, i))
            for i in range(n_paths)]


# ---------------------------------------------------------------------------
# Reconstruction, coarsening, export
# ---------------------------------------------------------------------------

def reconstruct(lp: LevyPath, times: np.ndarray | None = None) -> np.ndarray:
    """Values of the driver L at the given grid nodes (default: all nodes).

    Anchored at L(0) = 0; cadlag by construction.
    """
    if times is None:
        times = lp.grid
    times = np.asarray(times, dtype=float)
    mids = lp.cell_mids
    # +1 for cells in (0, t], -1 for cells in (t, 0]
    wpos = ((mids > 0.0)[None, :] & (mids < times[:, None])).astype(float)
    wneg = ((mids < 0.0)[None, :] & (mids > times[:, None])).astype(float)
    cont = (wpos - wneg) @ lp.base_increments
    # accumulate jumps separately and add once: the same association order as
    # the Volterra convolution, so the indicator reduction is bit-exact
    jump = np.zeros_like(cont)
    for s, x in zip(lp.jump_times, lp.jump_sizes):
        if s > 0:
            jump[times >= s] += x
        else:
            jump[times < s] -= x
    return cont + jump


def coarsen(lp: LevyPath, factor: int) -> LevyPath:
    """Merge cells `factor` at a time on each side of 0 (common-random-numbers
    coupling across grid refinements).  Both sides' cell counts must divide."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return lp
    z = lp.zero_index
    n_neg, n_pos = z, lp.n_cells - z
    if n_neg % factor or n_pos % factor:
        raise ValueError("cell counts on each side of 0 must be divisible by factor")
    grid = np.concatenate([lp.grid[:z:factor], lp.grid[z::factor]])
    dW = lp.gaussian_increments.reshape(-1, factor).sum(axis=1)
    return LevyPath(grid=grid, gaussian_increments=dW, jump_times=lp.jump_times,
                    jump_sizes=lp.jump_sizes, seed=lp.seed,
                    sigma_eff=lp.sigma_eff, drift_rate=lp.drift_rate)


def export_levy_csv(lp: LevyPath, path) -> None:
    """CSV with columns time, gaussian_cumsum, jump_time, jump_size."""
    gc = np.concatenate([[0.0], np.cumsum(lp.sigma_eff * lp.gaussian_increments)])
    gc -= gc[lp.zero_index]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "gaussian_cumsum", "jump_time", "jump_size"])
        for i, t in enumerate(lp.grid):
            jt = f"{lp.jump_times[i]!r}" if i < len(lp.jump_times) else ""
            js = f"{lp.jump_sizes[i]!r}" if i < len(lp.jump_times) else ""
            w.writerow([repr(float(t)), repr(float(gc[i])), jt, js])
