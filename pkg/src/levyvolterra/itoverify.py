"""Term-by-term verification of the generalised change-of-variable identity

    G(M(T)) = G(0)
      + sigma^2/2 int_0^T G''(M(t)) v'(t) dt                      (term_sigma)
      + sum_{0<t<=T} [G(M(t)) - G(M(t-)) - G'(M(t-)) dM(t)]       (term_jumpsum)
      + int int int (G'(M(t)+xf(t,s)) - G'(M(t))) x df/dt dt nu(dx) ds
                                                                   (term_nu)
      + anticipating measure term                                  (term_lambda)
      + int_0^T G'(M(t-)) f(t,t) dL(t)                             (term_L)

at three levels:

- pathwise: kernels with df/dt == 0 (the classical reduction); the lambda
  and nu terms vanish and the residual is an exact per-path number whose RMS
  must shrink under grid refinement;
- expectation: the anticipating terms have zero mean, so the identity closes
  in Monte Carlo means of the remaining terms;
- S-transform: every term is estimated under the signed weight of a test
  functional g; term_lambda exists only through its S-transform and is
  assembled from lattice estimates of the inner transforms, exactly how the
  anticipating integral is defined.  The left side is computed twice (signed
  Monte Carlo and the Fourier route) as mutually checking oracles.

Statistical errors use delete-one-group jackknife over fixed path groups;
the groups are also the deterministic reduction unit, so results do not
depend on worker count.  Quadrature lattices are evaluated at two
refinement levels and the difference is folded into the budget.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .charfn import GrowthClassError, SmoothTestFunction, s_G_of_M
from .kernels import KernelHandle, ddt_l2_norm_sq
from .levy import LevyModel, NoJumps, nu_moment, path_seed, simulate_path
from .quadrature import DEFAULT_SPEC, QuadratureSpec, gauss_legendre_panel
from .stransform import TestFunctional, WeightMaker, weight_diagnostics
from .volterra import ConvolutionOperator

__all__ = [
    "MomentGateError", "TermValue", "ItoTermSet", "LatticeConfig",
    "VerificationEngine", "eval_terms_pathwise", "pathwise_rms_study",
    "eval_terms_expectation", "eval_terms_stransform",
    "VerificationReport", "verification_report",
]


class MomentGateError(ValueError):
    """The driver lacks the jump moments the identity needs for this G."""


@dataclass
class TermValue:
    value: float
    se: float = 0.0        # statistical error (0 for exact pathwise sums)
    error: float = 0.0     # deterministic quadrature/lattice bound
    reference: float | None = None   # independent dual-route value
    reference_error: float = 0.0
    note: str = ""

    def to_dict(self):
        d = {"value": self.value, "se": self.se, "error": self.error}
        if self.reference is not None:
            d["reference"] = self.reference
            d["reference_error"] = self.reference_error
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class ItoTermSet:
    mode: str
    label: str
    lhs: TermValue
    terms: dict
    residual: float
    budget: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if math.isnan(self.budget):
            return True  # pathwise cells are judged at study level (RMS decay)
        return abs(self.residual) <= self.budget

    def to_dict(self):
        return {"mode": self.mode, "label": self.label,
                "lhs": self.lhs.to_dict(),
                "terms": {k: v.to_dict() for k, v in self.terms.items()},
                "residual": self.residual, "budget": self.budget,
                "passed": self.passed, "diagnostics": self.diagnostics}


# ---------------------------------------------------------------------------
# Pathwise mode (classical reduction)
# ---------------------------------------------------------------------------

def eval_terms_pathwise(Gt: SmoothTestFunction, kernel: KernelHandle,
                        vp, lp) -> ItoTermSet:
    """Evaluate every term on a single path.  Requires df/dt == 0 (otherwise
    the anticipating term cannot be sampled pathwise and the mode is
    rejected)."""
    if not kernel.dt_zero:
        raise ValueError("pathwise mode needs a kernel with df/dt == 0; "
                         "anticipating terms cannot be sampled on one path")
    T = float(vp.times[-1])
    nodes = vp.times
    mvals = vp.values
    fdiag = np.asarray(kernel.eval(nodes, nodes), dtype=float)
    g0 = float(np.asarray(Gt.value(np.array([0.0])))[0])
    lhs = float(np.asarray(Gt.value(np.array([mvals[-1]])))[0]) - g0

    dt = np.diff(nodes)
    # v'(t) = f(t,t)^2 when df/dt == 0; left-node forward rule
    sig = 0.5 * lp.sigma_eff ** 2 * float(
        np.dot(np.asarray(Gt.d2(mvals[:-1])) * fdiag[:-1] ** 2, dt))

    if len(vp.jump_times):
        gl = np.asarray(Gt.value(vp.jump_values))
        gl_m = np.asarray(Gt.value(vp.jump_left_values))
        gp_m = np.asarray(Gt.d1(vp.jump_left_values))
        js = float(np.sum(gl - gl_m - gp_m * vp.jump_deltas))
    else:
        js = 0.0

    # forward Ito sum over cells plus exact jump contributions
    zi = int(np.searchsorted(lp.grid, 0.0))
    cells = slice(zi, lp.n_cells)
    lefts = lp.grid[zi:-1]
    m_left = mvals[:-1]
    base = lp.base_increments[cells]
    f_left = np.asarray(kernel.eval(lefts, lefts), dtype=float)
    t_l = float(np.dot(np.asarray(Gt.d1(m_left)) * f_left, base))
    if len(vp.jump_times):
        fj = np.asarray(kernel.eval(vp.jump_times, vp.jump_times), dtype=float)
        in_win = (lp.jump_times > 0.0) & (lp.jump_times <= T)
        t_l += float(np.dot(np.asarray(Gt.d1(vp.jump_left_values)) * fj,
                            lp.jump_sizes[in_win]))

    terms = {
        "term_sigma": TermValue(sig),
        "term_jumpsum": TermValue(js),
        "term_nu": TermValue(0.0, note="df/dt == 0"),
        "term_L": TermValue(t_l),
        "term_lambda": TermValue(0.0, note="df/dt == 0"),
    }
    residual = lhs - sig - js - t_l
    return ItoTermSet(mode="pathwise", label=f"{Gt.label}|{kernel.label}",
                      lhs=TermValue(lhs), terms=terms,
                      residual=residual, budget=math.nan)


def _fast_dt_zero_volterra(kernel: KernelHandle, lp):
    """O(n) evaluation of M for kernels with df/dt == 0 (f(t, s) does not
    depend on t for s < t): node values on [0, T] plus jump records.

    Matches the convolution semantics of simulate_M; usable on the fine
    grids of the pathwise refinement study where a dense weight matrix
    would be quadratic.
    """
    from .volterra import VolterraPath
    grid, mids = lp.grid, lp.cell_mids
    T = grid[-1]
    w_mid = np.asarray(kernel.eval(np.full(len(mids), T + 1.0), mids), dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(w_mid * lp.base_increments)])
    zi = int(np.searchsorted(grid, 0.0))
    nodes = grid[grid >= 0.0]
    values = cum[zi:] - cum[zi]
    sel = (lp.jump_times > 0.0) & (lp.jump_times <= T)
    jt, jx = lp.jump_times[sel], lp.jump_sizes[sel]
    wj = np.asarray(kernel.eval(np.full(len(jt), T + 1.0), jt), dtype=float)
    for s, wx in zip(jt, wj * jx):
        values[nodes >= s] += wx
    # left limits at jump instants: full cells, bridge fraction, earlier jumps
    cells = np.searchsorted(grid, jt, side="right") - 1
    mleft = np.empty(len(jt))
    for i, (s, c) in enumerate(zip(jt, cells)):
        rho = (s - grid[c]) / (grid[c + 1] - grid[c])
        part_mid = 0.5 * (grid[c] + s)
        wpart = float(np.asarray(kernel.eval(T + 1.0, np.array([part_mid])))[0])
        val = cum[c] - cum[zi] + wpart * rho * lp.base_increments[c]
        earlier = jt < s
        val += float(np.sum((wj * jx)[earlier]))
        neg = lp.jump_times <= 0.0
        if np.any(neg):
            wn = np.asarray(kernel.eval(np.full(neg.sum(), T + 1.0),
                                        lp.jump_times[neg]), dtype=float)
            val += float(np.sum(wn * lp.jump_sizes[neg]))
        mleft[i] = val
    if np.any(lp.jump_times <= 0.0):
        neg = lp.jump_times <= 0.0
        wn = np.asarray(kernel.eval(np.full(neg.sum(), T + 1.0),
                                    lp.jump_times[neg]), dtype=float)
        values += float(np.sum(wn * lp.jump_sizes[neg]))
    fdiag = np.asarray(kernel.eval(jt, jt), dtype=float)
    deltas = fdiag * jx
    return VolterraPath(times=nodes, values=values, left_values=values.copy(),
                        jump_times=jt, jump_deltas=deltas,
                        jump_values=mleft + deltas, jump_left_values=mleft,
                        provenance={"kernel": kernel.label, "fast": True})


def pathwise_rms_study(Gt: SmoothTestFunction, kernel: KernelHandle,
                       model: LevyModel, T: float, n_cells: int, n_paths: int,
                       seed: int, n_levels: int = 4) -> dict:
    """RMS residual of the pathwise identity across grid refinements, with
    common random numbers (coarse paths derived from the finest)."""
    from .levy import coarsen
    if not kernel.dt_zero:
        raise ValueError("pathwise mode needs a kernel with df/dt == 0")
    finest_factor = 2 ** (n_levels - 1)
    residuals = [[] for _ in range(n_levels)]
    lhs_sq = []
    for i in range(n_paths):
        fine = simulate_path(model, (0.0, T), n_cells * finest_factor,
                             path_seed(seed, i))
        for lev in range(n_levels):
            lp = coarsen(fine, 2 ** (n_levels - 1 - lev))
            vp = _fast_dt_zero_volterra(kernel, lp)
            ts = eval_terms_pathwise(Gt, kernel, vp, lp)
            residuals[lev].append(ts.residual)
            if lev == 0:
                lhs_sq.append((ts.lhs.value
                               + float(np.asarray(Gt.value(np.array([0.0])))[0])) ** 2)
    rms = [float(np.sqrt(np.mean(np.array(r) ** 2))) for r in residuals]
    return {"rms_residuals": rms,
            "rms_G": float(np.sqrt(np.mean(lhs_sq))),
            "ratios": [rms[i] / rms[i + 1] if rms[i + 1] > 0 else math.inf
                       for i in range(n_levels - 1)]}


# ---------------------------------------------------------------------------
# Shared ensemble engine for the expectation and S-transform modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeConfig:
    n_t_panel: int = 16    # per panel of the time lattice (3 panels)
    n_s_panel: int = 8     # per panel of the s lattice (6 panels)
    n_inner: int = 12      # inner time-quadrature nodes per s node


def _moment_gate(Gt: SmoothTestFunction, kernel: KernelHandle,
                 model: LevyModel, T: float) -> None:
    if isinstance(model.jumps, NoJumps):
        return
    ts = np.linspace(T / 64.0, T, 32)
    continuous_M = float(np.max(np.abs(kernel.eval(ts, ts)))) <= 1e-14
    q = Gt.poly_degree
    p = max(4.0, 2.0 * q + 2.0)
    if continuous_M and Gt.growth[0] == "A":
        p = 2.0  # weaker gate for continuous M
    if not math.isfinite(nu_moment(model.jumps, max(2.0, p))):
        raise MomentGateError(
            f"driver lacks the order-{p:g} jump moment required by {Gt.label}")


class VerificationEngine:
    """Simulates one ensemble and evaluates all per-path quantities the
    expectation- and S-transform-level checks need, group by group.

    Prepare once with the G and g batteries, then query terms per (G, g);
    all heavy arrays are shared across the batteries.
    """

    def __init__(self, kernel: KernelHandle, model: LevyModel,
                 window: tuple[float, float], n_cells: int, n_paths: int,
                 seed: int, quad: QuadratureSpec | None = None,
                 n_groups: int = 20, lattice: LatticeConfig | None = None,
                 workers: int = 1):
        self.kernel = kernel
        self.model = model
        self.window = (float(window[0]), float(window[1]))
        self.n_cells = n_cells
        self.n_paths = n_paths
        self.seed = seed
        self.quad = quad or DEFAULT_SPEC
        self.n_groups = min(n_groups, n_paths)
        self.lattice = lattice or LatticeConfig()
        self.workers = max(1, workers)
        self._prepared = False

    # -- lattice construction ------------------------------------------------

    def _time_lattice(self, level: int):
        T = self.window[1]
        n = self.lattice.n_t_panel * level
        edges = [0.0, T / 64.0, T / 8.0, T]
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            x, w = gauss_legendre_panel(a, b, n)
            xs.append(x)
            ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)

    def _s_lattice(self, level: int):
        A, T = self.window
        n = self.lattice.n_s_panel * level
        edges = [-A, -1.0, -0.1, 0.0, T / 8.0, 7.0 * T / 8.0, T]
        edges = sorted({e for e in edges if -A <= e <= T} | {-A, T})
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            if b <= a:
                continue
            x, w = gauss_legendre_panel(a, b, n)
            xs.append(x)
            ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)

    def _inner_rule(self, s: float, level: int):
        """Nodes t_m and effective weights W_m so that
        sum_m W_m phi(t_m) ~ int_{0 v s}^T (df/dt)(t, s) phi(t) dt.

        Exact power substitution in the gap u = t - s."""
        k = self.kernel
        T = self.window[1]
        gamma = k.dt_gamma if (k.dt_gamma is not None and s >= 0.0) else 0.0
        p = 1.0 - gamma
        u_lo, u_hi = max(0.0, s) - s, T - s
        v, gw = gauss_legendre_panel(u_lo ** p, u_hi ** p, self.lattice.n_inner * level)
        u = v ** (1.0 / p)
        t = s + u
        jac = (1.0 / p) * v ** (1.0 / p - 1.0)
        W = np.asarray(k.eval_dt_gap(t, u), dtype=float) * jac * gw
        F = np.asarray(k.eval_gap(t, u), dtype=float)
        return t, W, F

    # -- heavy pass ------------------------------------------------------------

    def prepare(self, Gts, battery) -> None:
        """Simulate the ensemble and evaluate all per-path quantities for the
        given G battery and g battery."""
        k, model = self.kernel, self.model
        A, T = self.window
        self.Gts = list(Gts)
        self.battery = list(battery)
        for Gt in self.Gts:
            _moment_gate(Gt, k, model, T)

        self.atoms = []
        if not isinstance(model.jumps, NoJumps):
            atoms = getattr(model.effective_jumps, "atom_list", None)
            if atoms is None:
                raise NotImplementedError(
                    "nu-term lattices need an atomic simulated jump measure; "
                    "use a compound Poisson driver or discretise the density")
            self.atoms = list(atoms)

        grid = simulate_path(model, self.window, self.n_cells, path_seed(self.seed, 0)).grid
        self.grid = grid
        probe = np.linspace(T / 64.0, T, 32)
        self.f_diag_zero = float(np.max(np.abs(k.eval(probe, probe)))) <= 1e-14
        self.has_dt = not k.dt_zero

        # lattices (two refinement levels for the budget)
        self.tlat = {lev: self._time_lattice(lev) for lev in (1, 2)}
        self.slat = {lev: self._s_lattice(lev) for lev in (1, 2)}
        self.vprime = {lev: np.array([ddt_l2_norm_sq(k, float(t), self.quad,
                                                     window_a=A).value
                                      for t in self.tlat[lev][0]])
                       for lev in (1, 2)}
        self.inner = {}
        if self.has_dt:
            for lev in (1, 2):
                rules = [self._inner_rule(float(s), lev) for s in self.slat[lev][0]]
                self.inner[lev] = rules

        # operators shared across groups
        ops = {"T": ConvolutionOperator(k, grid, np.array([T]))}
        ops["tlat"] = {lev: ConvolutionOperator(k, grid, self.tlat[lev][0])
                       for lev in (1, 2)}
        if self.has_dt:
            ops["inner"] = {lev: ConvolutionOperator(
                k, grid, np.concatenate([r[0] for r in self.inner[lev]]))
                for lev in (1, 2)}
        if not self.f_diag_zero:
            ops["nodes"] = ConvolutionOperator(k, grid, grid[(grid >= 0.0) & (grid < T)])
            self._node_lefts = grid[(grid >= 0.0) & (grid < T)]
            self._fdiag_nodes = np.asarray(k.eval(self._node_lefts, self._node_lefts),
                                           dtype=float)
        self.ops = ops

        self._weightmakers = [WeightMaker(g, model, grid, self.quad)
                              for g in self.battery]

        group_sizes = np.full(self.n_groups, self.n_paths // self.n_groups)
        group_sizes[: self.n_paths % self.n_groups] += 1
        starts = np.concatenate([[0], np.cumsum(group_sizes)])
        jobs = [(gi, int(starts[gi]), int(group_sizes[gi]))
                for gi in range(self.n_groups)]
        results = [None] * self.n_groups
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                for gi, res in zip([j[0] for j in jobs],
                                   ex.map(lambda j: self._run_group(*j), jobs)):
                    results[gi] = res
        else:
            for job in jobs:
                results[job[0]] = self._run_group(*job)
        self.groups = results
        self._terms_cache = {}
        self._xlat_cache = {}
        self._prepared = True

    def _run_group(self, gi: int, start: int, size: int) -> dict:
        k, model = self.kernel, self.model
        A, T = self.window
        paths = [simulate_path(model, self.window, self.n_cells,
                               path_seed(self.seed, start + i))
                 for i in range(size)]
        base = np.stack([p.base_increments for p in paths], axis=1)

        def eval_op(op):
            vals = np.ascontiguousarray(op.continuous_part_batch(base).T)
            for i, p in enumerate(paths):
                vals[i] += op.jump_part(p)
            return vals

        out = {"size": size}
        out["M_T"] = eval_op(self.ops["T"])[:, 0]
        out["M_tlat"] = {lev: eval_op(self.ops["tlat"][lev]) for lev in (1, 2)}
        if self.has_dt:
            out["M_inner"] = {lev: eval_op(self.ops["inner"][lev]) for lev in (1, 2)}
        if not self.f_diag_zero:
            out["M_nodes"] = eval_op(self.ops["nodes"])

        # per-path jump records: M(s-),  dM = f(s,s) x
        jdata = []
        for p in paths:
            sel = (p.jump_times > 0.0) & (p.jump_times <= T)
            jt, jx = p.jump_times[sel], p.jump_sizes[sel]
            if len(jt):
                opj = ConvolutionOperator(k, self.grid, jt)
                mleft = opj.continuous_part(p) + opj.jump_part(p, strict=True)
                fj = np.asarray(k.eval(jt, jt), dtype=float)
                jdata.append((jt, jx, mleft, fj * jx))
            else:
                jdata.append((jt, jx, np.empty(0), np.empty(0)))
        out["jumps"] = jdata

        out["weights"] = np.stack([wm.weights(paths) for wm in self._weightmakers]) \
            if self.battery else np.zeros((0, size))

        # term_L ingredients (only when the diagonal does not vanish)
        if not self.f_diag_zero:
            zi = int(np.searchsorted(self.grid, 0.0))
            out["base_pos"] = base[zi:, :].T.copy()  # (size, n_pos_cells)
        return out

    # -- per-(G, g) assembly ---------------------------------------------------

    def _per_path_terms(self, Gt: SmoothTestFunction, lev: int) -> dict:
        """Per-path values of lhs, term_sigma, term_jumpsum, term_nu, term_L
        (cached across the g battery)."""
        key = (id(Gt), lev)
        if key in self._terms_cache:
            return self._terms_cache[key]
        out = self._per_path_terms_impl(Gt, lev)
        self._terms_cache[key] = out
        return out

    def _per_path_terms_impl(self, Gt: SmoothTestFunction, lev: int) -> dict:
        k, model = self.kernel, self.model
        A, T = self.window
        g0 = float(np.asarray(Gt.value(np.array([0.0])))[0])
        t_nodes, t_w = self.tlat[lev]
        vprime = self.vprime[lev]
        s_nodes, s_w = self.slat[lev]
        out = {"lhs": [], "term_sigma": [], "term_jumpsum": [],
               "term_nu": [], "term_L": []}
        for grp in self.groups:
            m_t = grp["M_T"]
            out["lhs"].append(np.asarray(Gt.value(m_t)) - g0)
            mlat = grp["M_tlat"][lev]
            sig = 0.5 * model.sigma_eff ** 2 * (np.asarray(Gt.d2(mlat)) @ (t_w * vprime))
            out["term_sigma"].append(sig)

            js = np.zeros(grp["size"])
            for i, (jt, jx, mleft, dmj) in enumerate(grp["jumps"]):
                if len(jt):
                    js[i] = float(np.sum(np.asarray(Gt.value(mleft + dmj))
                                         - np.asarray(Gt.value(mleft))
                                         - np.asarray(Gt.d1(mleft)) * dmj))
            out["term_jumpsum"].append(js)

            if self.has_dt and self.atoms:
                nu_acc = np.zeros(grp["size"])
                minner = grp["M_inner"][lev]
                col = 0
                for (t_m, W_m, F_m), sw, s in zip(self.inner[lev], s_w, s_nodes):
                    mm = minner[:, col:col + len(t_m)]
                    col += len(t_m)
                    for x, mass in self.atoms:
                        diff = np.asarray(Gt.d1(mm + x * F_m)) - np.asarray(Gt.d1(mm))
                        nu_acc += sw * mass * x * (diff @ W_m)
                out["term_nu"].append(nu_acc)
            else:
                out["term_nu"].append(np.zeros(grp["size"]))

            if not self.f_diag_zero:
                mn = grp["M_nodes"]
                gl = np.asarray(Gt.d1(mn)) * self._fdiag_nodes
                tl = np.einsum("ij,ij->i", gl, grp["base_pos"])
                for i, (jt, jx, mleft, dmj) in enumerate(grp["jumps"]):
                    if len(jt):
                        fj = np.asarray(k.eval(jt, jt), dtype=float)
                        tl[i] += float(np.dot(np.asarray(Gt.d1(mleft)) * fj, jx))
                out["term_L"].append(tl)
            else:
                out["term_L"].append(np.zeros(grp["size"]))
        return {key: vals for key, vals in out.items()}

    def _lambda_lattice(self, Gt: SmoothTestFunction, lev: int) -> list:
        """Per-group per-path inner transforms X_i(x, s_j) (and the x=0 slice)
        on the s lattice: X = int (df/dt)(t,s) G'(M(t) + x f(t,s)) dt."""
        key = (id(Gt), lev)
        if key in self._xlat_cache:
            return self._xlat_cache[key]
        out = self._lambda_lattice_impl(Gt, lev)
        self._xlat_cache[key] = out
        return out

    def _lambda_lattice_impl(self, Gt: SmoothTestFunction, lev: int) -> list:
        if not self.has_dt:
            return [None] * len(self.groups)
        s_nodes, _ = self.slat[lev]
        nx = len(self.atoms) + 1  # slot 0: x = 0
        res = []
        for grp in self.groups:
            minner = grp["M_inner"][lev]
            X = np.zeros((grp["size"], len(s_nodes), nx))
            col = 0
            for j, (t_m, W_m, F_m) in enumerate(self.inner[lev]):
                mm = minner[:, col:col + len(t_m)]
                col += len(t_m)
                X[:, j, 0] = np.asarray(Gt.d1(mm)) @ W_m
                for a, (x, _) in enumerate(self.atoms):
                    X[:, j, a + 1] = np.asarray(Gt.d1(mm + x * F_m)) @ W_m
            res.append(X)
        return res

    def _lambda_value(self, g: TestFunctional, Xlat: list, lev: int,
                      weights_by_group: list) -> np.ndarray:
        """Per-group lattice estimate of the S-transform of term_lambda."""
        s_nodes, s_w = self.slat[lev]
        out = np.zeros(len(self.groups))
        g0s = g.g0(s_nodes)
        gstars = {a: g.gstar(x, s_nodes) for a, (x, _) in enumerate(self.atoms)} \
            if g.terms else {}
        for gidx, (grp, X) in enumerate(zip(self.groups, Xlat)):
            if X is None:
                continue
            w = weights_by_group[gidx]
            Sx = np.tensordot(w, X, axes=(0, 0)) / len(w)  # (n_s, nx)
            val = 0.0
            if g.gauss is not None and self.model.sigma_eff > 0.0:
                val += self.model.sigma_eff ** 2 * float(np.dot(s_w * g0s, Sx[:, 0]))
            for a, (x, mass) in enumerate(self.atoms):
                if g.terms:
                    val += mass * x * float(np.dot(s_w * gstars[a], Sx[:, a + 1]))
            out[gidx] = val
        return out

    # -- public term sets -------------------------------------------------------

    def expectation_terms(self, Gt: SmoothTestFunction) -> ItoTermSet:
        if not self._prepared:
            raise RuntimeError("call prepare() first")
        per1 = self._per_path_terms(Gt, 1)
        per2 = self._per_path_terms(Gt, 2)

        def flat(per, key):
            return np.concatenate(per[key])

        vals2 = {key: flat(per2, key) for key in per2}
        n = len(vals2["lhs"])
        res_path = (vals2["lhs"] - vals2["term_sigma"] - vals2["term_jumpsum"]
                    - vals2["term_nu"])
        residual = float(res_path.mean())
        se = float(res_path.std(ddof=1) / math.sqrt(n))
        lattice_delta = abs(float((flat(per1, "term_sigma") - vals2["term_sigma"]).mean())) \
            + abs(float((flat(per1, "term_nu") - vals2["term_nu"]).mean()))

        terms = {}
        for key in ("term_sigma", "term_jumpsum", "term_nu"):
            v = vals2[key]
            terms[key] = TermValue(float(v.mean()), se=float(v.std(ddof=1) / math.sqrt(n)))
        terms["term_L"] = TermValue(0.0, note="zero mean: predictable integrand "
                                              "against a centred driver")
        terms["term_lambda"] = TermValue(0.0, note="zero mean: the anticipating "
                                                   "transform vanishes at g = 0")
        budget = 3.0 * se + lattice_delta
        diag = {"n_paths": n,
                "jumpsum_m2": float(np.mean(vals2["term_jumpsum"] ** 2)),
                "lattice_delta": lattice_delta}
        return ItoTermSet(mode="expectation", label=f"{Gt.label}|{self.kernel.label}",
                          lhs=TermValue(float(vals2["lhs"].mean()),
                                        se=float(vals2["lhs"].std(ddof=1) / math.sqrt(n))),
                          terms=terms, residual=residual, budget=budget,
                          diagnostics=diag)

    def stransform_terms(self, Gt: SmoothTestFunction, g: TestFunctional,
                         fourier_lhs: bool = True,
                         fault_injection: dict | None = None) -> ItoTermSet:
        if not self._prepared:
            raise RuntimeError("call prepare() first")
        gi = next(i for i, b in enumerate(self.battery) if b is g or b == g)
        w_groups = [grp["weights"][gi] for grp in self.groups]
        w_all = np.concatenate(w_groups)

        per = {lev: self._per_path_terms(Gt, lev) for lev in (1, 2)}
        Xlat = {lev: self._lambda_lattice(Gt, lev) for lev in (1, 2)}
        lam_g = {lev: self._lambda_value(g, Xlat[lev], lev, w_groups)
                 for lev in (1, 2)}

        inject = fault_injection or {}

        def gmeans(lev, key):
            return np.array([np.mean(w * v) for w, v in zip(w_groups, per[lev][key])])

        keys = ("lhs", "term_sigma", "term_jumpsum", "term_nu", "term_L")
        gm2 = {key: gmeans(2, key) + inject.get(key, 0.0) for key in keys}
        gm1 = {key: gmeans(1, key) for key in keys}
        lam2 = lam_g[2] + inject.get("term_lambda", 0.0)
        res_groups = (gm2["lhs"] - gm2["term_sigma"] - gm2["term_jumpsum"]
                      - gm2["term_nu"] - gm2["term_L"] - lam2)
        K = len(res_groups)
        residual = float(res_groups.mean())
        se = float(res_groups.std(ddof=1) / math.sqrt(K))
        lattice_delta = (abs(float(gm1["term_sigma"].mean() - gm2["term_sigma"].mean()))
                         + abs(float(gm1["term_nu"].mean() - gm2["term_nu"].mean()))
                         + abs(float(lam_g[1].mean() - lam_g[2].mean())))
        budget = 3.0 * se + lattice_delta

        def tv(key):
            v = gm2[key]
            return TermValue(float(v.mean()),
                             se=float(v.std(ddof=1) / math.sqrt(K)))

        terms = {key: tv(key) for key in keys if key != "lhs"}
        terms["term_lambda"] = TermValue(float(lam2.mean()),
                                         se=float(lam2.std(ddof=1) / math.sqrt(K)),
                                         error=abs(float(lam_g[1].mean() - lam2.mean())))
        lhs_tv = tv("lhs")

        diag = {"weights": weight_diagnostics(w_all), "n_groups": K,
                "lattice_delta": lattice_delta, "g": g.label}
        if fourier_lhs:
            try:
                g0v = float(np.asarray(Gt.value(np.array([0.0])))[0])
                r = s_G_of_M(Gt, self.kernel, self.model, g, self.window[1],
                             self.quad, window_a=self.window[0])
                lhs_tv.reference = r.value - g0v
                lhs_tv.reference_error = r.error
                diag["lhs_cross_gap"] = abs(lhs_tv.value - lhs_tv.reference)
                diag["lhs_cross_budget"] = 3.0 * lhs_tv.se + r.error
            except GrowthClassError as exc:
                diag["fourier_lhs"] = f"rejected: {exc}"

        # dual route for the jump sum when the diagonal does not vanish:
        # the anticipating jump-measure transform of the second-order bracket
        if not self.f_diag_zero and self.atoms:
            ref, ref_err = self._jumpsum_via_N(Gt, g, gi, w_groups)
            terms["term_jumpsum"].reference = ref
            terms["term_jumpsum"].reference_error = ref_err

        return ItoTermSet(mode="stransform",
                          label=f"{Gt.label}|{self.kernel.label}|{g.label}",
                          lhs=lhs_tv, terms=terms, residual=residual,
                          budget=budget, diagnostics=diag)

    def connection_check(self, X, g: TestFunctional, label: str = "X") -> dict:
        """Check the link between the Hitsuda-Skorokhod integral of a
        predictable X against M and its classical decomposition:

            int S(X(t))(g) d/dt S(M(t))(g) dt
                =  S( int f(t,t) X(t) dL(t) )(g)
                 + S-transform of the anticipating measure term with
                   integrand int (df/dt)(t,s) X(t) dt.

        ``X`` maps M-values to integrand values (applied pathwise,
        predictable by construction).  Both sides share the ensemble, so the
        difference carries only quadrature error plus residual Monte Carlo
        noise, estimated group-wise.
        """
        from .stransform import ddt_s_M as _ddt_s_M
        gi = next(i for i, b in enumerate(self.battery) if b is g or b == g)
        w_groups = [grp["weights"][gi] for grp in self.groups]
        A, T = self.window
        sides = {}
        for lev in (1, 2):
            t_nodes, t_w = self.tlat[lev]
            ddt_vals = np.array([_ddt_s_M(self.kernel, self.model, g, float(t),
                                          self.quad, window_a=A).value
                                 for t in t_nodes])
            s_nodes, s_w = self.slat[lev]
            bracket = np.zeros(len(s_nodes))
            if g.gauss is not None and self.model.sigma_eff > 0.0:
                bracket += self.model.sigma_eff ** 2 * g.g0(s_nodes)
            for x, mass in self.atoms:
                if g.terms:
                    bracket += mass * x * g.gstar(x, s_nodes)
            side1 = np.zeros(len(self.groups))
            side2 = np.zeros(len(self.groups))
            for gidx, grp in enumerate(self.groups):
                w = w_groups[gidx]
                sx_t = (w @ np.asarray(X(grp["M_tlat"][lev]))) / len(w)
                side1[gidx] = float(np.dot(t_w, sx_t * ddt_vals))
                if self.has_dt:
                    minner = grp["M_inner"][lev]
                    y = np.zeros((grp["size"], len(s_nodes)))
                    col = 0
                    for j, (t_m, W_m, _) in enumerate(self.inner[lev]):
                        y[:, j] = np.asarray(X(minner[:, col:col + len(t_m)])) @ W_m
                        col += len(t_m)
                    sy = (w @ y) / len(w)
                    side2[gidx] = float(np.dot(s_w, sy * bracket))
                if not self.f_diag_zero:
                    mn = grp["M_nodes"]
                    gl = np.asarray(X(mn)) * self._fdiag_nodes
                    tl = np.einsum("ij,ij->i", gl, grp["base_pos"])
                    for i, (jt, jx, mleft, dmj) in enumerate(grp["jumps"]):
                        if len(jt):
                            fj = np.asarray(self.kernel.eval(jt, jt), dtype=float)
                            tl[i] += float(np.dot(np.asarray(X(mleft)) * fj, jx))
                    side2[gidx] += float(np.mean(w * tl))
            sides[lev] = (side1, side2)
        s1, s2 = sides[2]
        diff = s1 - s2
        K = len(diff)
        se = float(diff.std(ddof=1) / math.sqrt(K))
        d1, d2 = sides[1]
        lattice_delta = abs(float((d1 - d2).mean() - diff.mean()))
        budget = 3.0 * se + lattice_delta
        return {"label": f"{label}|{g.label}",
                "side_diamond": float(s1.mean()), "side_classical": float(s2.mean()),
                "gap": float(diff.mean()), "se": se,
                "lattice_delta": lattice_delta, "budget": budget,
                "passed": bool(abs(diff.mean()) <= budget)}

    def _jumpsum_via_N(self, Gt, g, gi, w_groups):
        """III*: int_0^T int S(G(M+xf(t,t)) - G(M) - xf(t,t)G'(M)) (1+g*) nu dt
        estimated on the time lattice (dual route for term_jumpsum)."""
        vals = {}
        for lev in (1, 2):
            t_nodes, t_w = self.tlat[lev]
            fd = np.asarray(self.kernel.eval(t_nodes, t_nodes), dtype=float)
            acc = np.zeros(len(self.groups))
            for gidx, grp in enumerate(zip(self.groups, w_groups)):
                grp_data, w = grp
                mlat = grp_data["M_tlat"][lev]
                inner = np.zeros(len(t_nodes))
                for x, mass in self.atoms:
                    br = (np.asarray(Gt.value(mlat + x * fd))
                          - np.asarray(Gt.value(mlat))
                          - np.asarray(Gt.d1(mlat)) * (x * fd))
                    s_br = w @ br / len(w)
                    wgt = (1.0 + g.gstar(x, t_nodes)) if g.terms else 1.0
                    inner += mass * wgt * s_br
                acc[gidx] = float(np.dot(t_w, inner))
            vals[lev] = acc
        ref = float(vals[2].mean())
        err = (3.0 * float(vals[2].std(ddof=1) / math.sqrt(len(vals[2])))
               + abs(float(vals[1].mean() - ref)))
        return ref, err


# ---------------------------------------------------------------------------
# Module-level one-shot wrappers
# ---------------------------------------------------------------------------

def eval_terms_expectation(Gt: SmoothTestFunction, kernel: KernelHandle,
                           model: LevyModel, *, window, n_cells: int,
                           n_paths: int, seed: int,
                           quad: QuadratureSpec | None = None,
                           lattice: LatticeConfig | None = None) -> ItoTermSet:
    eng = VerificationEngine(kernel, model, window, n_cells, n_paths, seed,
                             quad, lattice=lattice)
    eng.prepare([Gt], [])
    return eng.expectation_terms(Gt)


def eval_terms_stransform(Gt: SmoothTestFunction, kernel: KernelHandle,
                          model: LevyModel, g: TestFunctional, *, window,
                          n_cells: int, n_paths: int, seed: int,
                          quad: QuadratureSpec | None = None,
                          lattice: LatticeConfig | None = None,
                          fourier_lhs: bool = True) -> ItoTermSet:
    eng = VerificationEngine(kernel, model, window, n_cells, n_paths, seed,
                             quad, lattice=lattice)
    eng.prepare([Gt], [g])
    return eng.stransform_terms(Gt, g, fourier_lhs=fourier_lhs)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    cells: list

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.cells)

    @property
    def max_ratio(self) -> float:
        ratios = [abs(c["residual"]) / c["budget"] for c in self.cells
                  if c["budget"] and not math.isnan(c["budget"])]
        return max(ratios, default=0.0)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_residual_over_budget": self.max_ratio,
                "n_cells": len(self.cells), "cells": self.cells}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=float)

    def to_text(self) -> str:
        lines = [f"verification: {'PASS' if self.passed else 'FAIL'} "
                 f"({len(self.cells)} cells, max |residual|/budget = {self.max_ratio:.3f})"]
        hdr = f"{'cell':<46} {'mode':<12} {'residual':>12} {'budget':>12} verdict"
        lines.append(hdr)
        lines.append("-" * len(hdr))
        for c in self.cells:
            verdict = "pass" if c["passed"] else "FAIL"
            lines.append(f"{c['label']:<46} {c['mode']:<12} "
                         f"{c['residual']:>12.4e} {c['budget']:>12.4e} {verdict}")
            if not c["passed"]:
                for name in c.get("suspect_terms", []):
                    lines.append(f"    suspect term: {name}")
        return "\n".join(lines)

    def to_csv_rows(self) -> list:
        rows = [("label", "mode", "residual", "budget", "passed")]
        rows += [(c["label"], c["mode"], c["residual"], c["budget"], c["passed"])
                 for c in self.cells]
        return rows


def verification_report(results) -> VerificationReport:
    """Aggregate term sets into a machine/human-readable report.

    A failing cell names the terms whose dual-route values disagree beyond
    their own budgets (when a second route exists); with no term-level
    culprit the identity residual itself is flagged.
    """
    if not results:
        raise ValueError("no term sets to report")
    cells = []
    for ts in results:
        cell = ts.to_dict()
        suspects = []
        for name, term in ts.terms.items():
            if term.reference is not None:
                gap = abs(term.value - term.reference)
                tol = 3.0 * term.se + term.reference_error + term.error
                if gap > tol:
                    suspects.append(name)
        if ts.lhs.reference is not None:
            gap = abs(ts.lhs.value - ts.lhs.reference)
            if gap > 3.0 * ts.lhs.se + ts.lhs.reference_error:
                suspects.append("lhs")
        if not ts.passed and not suspects:
            suspects.append("identity_residual")
        cell["suspect_terms"] = suspects
        cell["passed"] = bool(ts.passed and not any(
            s for s in suspects if s != "identity_residual"))
        cells.append(cell)
    return VerificationReport(cells=cells)
