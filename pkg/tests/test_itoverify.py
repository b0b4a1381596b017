import math

import numpy as np
import pytest

from levyvolterra.charfn import gaussian_bump, quadratic
from levyvolterra.itoverify import (ItoTermSet, MomentGateError, TermValue,
                                    VerificationEngine, eval_terms_expectation,
                                    eval_terms_pathwise, eval_terms_stransform,
                                    pathwise_rms_study, verification_report)
from levyvolterra.kernels import frac_kernel, indicator_kernel, l2_norm_sq
from levyvolterra.levy import (AtomicLaw, CompoundPoisson, LevyModel, NoJumps,
                               UniformLaw, simulate_path)
from levyvolterra.stransform import TestFunctional, default_battery
from levyvolterra.volterra import simulate_M

CP_2D2 = CompoundPoisson(2.0, AtomicLaw(((2.0, 1.0),)))
CP_UNIF = CompoundPoisson(2.0, UniformLaw(-1.0, 1.0))
MIXED = LevyModel(sigma=1.0, jumps=CP_2D2)
IND = indicator_kernel()
FRAC = frac_kernel(0.25)


# --- pathwise mode -----------------------------------------------------------

def test_pathwise_rejects_non_indicator():
    lp = simulate_path(MIXED, (1.0, 1.0), 100, seed=3)
    vp = simulate_M(FRAC, lp)
    with pytest.raises(ValueError):
        eval_terms_pathwise(quadratic(), FRAC, vp, lp)


def test_pathwise_constant_G_all_zero():
    G = gaussian_bump(width=1e6)  # constant to 1e-12 over the path range
    lp = simulate_path(MIXED, (0.0, 1.0), 200, seed=5)
    vp = simulate_M(IND, lp)
    ts = eval_terms_pathwise(G, IND, vp, lp)
    assert abs(ts.residual) <= 1e-10
    assert abs(ts.terms["term_sigma"].value) <= 1e-10


def test_pathwise_trivial_driver():
    lp = simulate_path(LevyModel(sigma=0.0, jumps=NoJumps()), (0.0, 1.0), 50, seed=2)
    vp = simulate_M(IND, lp)
    ts = eval_terms_pathwise(quadratic(), IND, vp, lp)
    assert ts.residual == 0.0
    assert all(t.value == 0.0 for t in ts.terms.values())


def test_pathwise_pure_jump_square():
    # for G = x^2 the jump-sum term is exactly sum (dL)^2
    model = LevyModel(sigma=0.0, jumps=CP_2D2)
    lp = simulate_path(model, (0.0, 1.0), 500, seed=11)
    vp = simulate_M(IND, lp)
    ts = eval_terms_pathwise(quadratic(), IND, vp, lp)
    in_win = (lp.jump_times > 0) & (lp.jump_times <= 1.0)
    assert ts.terms["term_jumpsum"].value == pytest.approx(
        float(np.sum(lp.jump_sizes[in_win] ** 2)), abs=1e-12)


def test_pathwise_rms_decay_gaussian():
    # classical Ito for W^2: RMS residual ~ O(dt^(1/2)) under refinement
    study = pathwise_rms_study(quadratic(), IND, LevyModel(sigma=1.0),
                               T=1.0, n_cells=128, n_paths=400, seed=9, n_levels=4)
    assert all(r >= 1.2 for r in study["ratios"]), study
    r0, r3 = study["rms_residuals"][0], study["rms_residuals"][-1]
    assert r0 / r3 >= 2.2  # sqrt(8) in theory over three halvings


def test_pathwise_pure_jump_centred_law_exact():
    # centred jump law: no compensator drift, so the x^2 identity closes
    # exactly on every path at any grid
    model = LevyModel(sigma=0.0, jumps=CP_UNIF)
    study = pathwise_rms_study(quadratic(), IND, model, T=1.0, n_cells=128,
                               n_paths=60, seed=21, n_levels=2)
    assert study["rms_residuals"][0] <= 1e-12


def test_pathwise_rms_decay_pure_jump_with_drift():
    # non-centred atoms carry a compensator drift whose Riemann sum is the
    # only discretisation error: residual ~ O(dt)
    model = LevyModel(sigma=0.0, jumps=CP_2D2)
    study = pathwise_rms_study(quadratic(), IND, model, T=1.0, n_cells=128,
                               n_paths=150, seed=21, n_levels=3)
    assert study["rms_residuals"][-1] < 0.5 * study["rms_residuals"][0]


# --- shared engine fixture -----------------------------------------------------

@pytest.fixture(scope="module")
def engine():
    eng = VerificationEngine(FRAC, MIXED, (2.0, 1.0), 1200, 2500, seed=424,
                             n_groups=20)
    eng.prepare([quadratic(), gaussian_bump(0.2, 1.0)], default_battery())
    return eng


@pytest.fixture(scope="module")
def engine_ind():
    eng = VerificationEngine(IND, MIXED, (1.0, 1.0), 900, 2500, seed=77,
                             n_groups=20)
    eng.prepare([quadratic(), gaussian_bump(0.2, 1.0)], default_battery())
    return eng


# --- expectation mode ----------------------------------------------------------

def test_expectation_isometry_square(engine):
    ts = engine.expectation_terms(quadratic())
    assert ts.passed, (ts.residual, ts.budget)
    # residual check is the Ito isometry: E M(T)^2 = var_rate * v(T)
    v = l2_norm_sq(FRAC, 1.0, window_a=2.0).value
    assert ts.lhs.value == pytest.approx(MIXED.var_rate * v,
                                         abs=3.2 * ts.lhs.se)
    # jump-sum finiteness gate: second moment reported and finite
    assert np.isfinite(ts.diagnostics["jumpsum_m2"])


def test_worker_count_does_not_change_results():
    # groups are the reduction unit, so thread count is invisible
    G = gaussian_bump(0.2, 1.0)
    g = default_battery()[2]
    outs = []
    for workers in (1, 3):
        eng = VerificationEngine(FRAC, MIXED, (1.0, 1.0), 300, 300, seed=63,
                                 n_groups=6, workers=workers)
        eng.prepare([G], [g])
        st = eng.stransform_terms(G, g, fourier_lhs=False)
        outs.append((st.residual, st.budget, st.terms["term_lambda"].value))
    assert outs[0] == outs[1]


def test_expectation_bump(engine):
    ts = engine.expectation_terms(gaussian_bump(0.2, 1.0))
    assert ts.passed, (ts.residual, ts.budget)


def test_expectation_constant_G():
    G = gaussian_bump(width=1e6)
    ts = eval_terms_expectation(G, IND, MIXED, window=(1.0, 1.0), n_cells=400,
                                n_paths=400, seed=1)
    assert abs(ts.residual) <= 1e-10


def test_expectation_gaussian_wick_oracle():
    # nu = 0: M(t) ~ N(0, sigma^2 v(t)); E G(M(T)) has a closed form
    G = gaussian_bump(center=0.0, width=1.0)
    model = LevyModel(sigma=1.0)
    ts = eval_terms_expectation(G, FRAC, model, window=(2.0, 1.0), n_cells=1200,
                                n_paths=4000, seed=31)
    assert ts.passed
    v = l2_norm_sq(FRAC, 1.0, window_a=2.0).value
    want = 1.0 / np.sqrt(1.0 + v)
    assert ts.lhs.value + 1.0 == pytest.approx(want, abs=3.5 * ts.lhs.se)


def test_moment_gate_polynomial_G():
    # a jump law with infinite 6th moment must be rejected for G = x^2
    class HeavyLaw:
        support = (1.0, np.inf)
        def pdf(self, x):
            x = np.asarray(x, dtype=float)
            return np.where(x >= 1.0, 4.0 * x ** -5.0, 0.0)  # E x^4 infinite
        def sample(self, rng, n):
            return (1.0 - rng.random(n)) ** (-1.0 / 4.0)
        def moment_abs(self, k):
            return math.inf if k >= 4.0 else 4.0 / (4.0 - k)
        def mean(self):
            return 4.0 / 3.0
        def tail_mean(self):
            return 4.0 / 3.0
    heavy = LevyModel(sigma=1.0, jumps=CompoundPoisson(1.0, HeavyLaw()))
    with pytest.raises(MomentGateError):
        eval_terms_expectation(quadratic(), IND, heavy, window=(0.5, 1.0),
                               n_cells=50, n_paths=10, seed=0)


# --- S-transform mode ------------------------------------------------------------

def test_stransform_zero_functional_reduces_to_expectation(engine):
    g0 = TestFunctional.zero()
    eng = VerificationEngine(FRAC, MIXED, (2.0, 1.0), 600, 500, seed=5,
                             n_groups=10)
    G = gaussian_bump(0.2, 1.0)
    eng.prepare([G], [g0])
    st = eng.stransform_terms(G, g0, fourier_lhs=False)
    ex = eng.expectation_terms(G)
    assert st.lhs.value == pytest.approx(ex.lhs.value, abs=1e-12)
    for k in ("term_sigma", "term_jumpsum", "term_nu"):
        assert st.terms[k].value == pytest.approx(ex.terms[k].value, abs=1e-12)
    assert abs(st.terms["term_lambda"].value) <= 1e-14
    assert abs(st.terms["term_L"].value) <= 3.0 * st.terms["term_L"].se + 1e-9


def test_stransform_indicator_classical(engine_ind):
    # indicator kernel: term_lambda and term_nu vanish; classical identity
    G = gaussian_bump(0.2, 1.0)
    for gi in (1, 6):
        g = default_battery()[gi]
        st = engine_ind.stransform_terms(G, g)
        assert st.terms["term_lambda"].value == 0.0
        assert st.terms["term_nu"].value == 0.0
        assert st.passed, (g.label, st.residual, st.budget)
        assert st.diagnostics["lhs_cross_gap"] <= st.diagnostics["lhs_cross_budget"]


def test_stransform_jumpsum_dual_route(engine_ind):
    # III* via the jump-measure transform must match the pathwise jump sum
    G = gaussian_bump(0.2, 1.0)
    g = default_battery()[6]
    st = engine_ind.stransform_terms(G, g)
    tj = st.terms["term_jumpsum"]
    assert tj.reference is not None
    assert abs(tj.value - tj.reference) <= 3.0 * tj.se + tj.reference_error


@pytest.mark.parametrize("gi", [0, 4, 6])
def test_stransform_frac_battery(engine, gi):
    G = gaussian_bump(0.2, 1.0)
    g = default_battery()[gi]
    st = engine.stransform_terms(G, g)
    assert st.passed, (g.label, st.residual, st.budget)
    assert st.diagnostics["lhs_cross_gap"] <= st.diagnostics["lhs_cross_budget"], g.label


# --- report ----------------------------------------------------------------------

def test_report_aggregation(engine):
    G = gaussian_bump(0.2, 1.0)
    cells = [engine.expectation_terms(quadratic()),
             engine.expectation_terms(G),
             engine.stransform_terms(G, default_battery()[6])]
    rep = verification_report(cells)
    assert rep.passed
    assert rep.max_ratio <= 1.0
    assert "PASS" in rep.to_text()
    d = rep.to_dict()
    assert d["n_cells"] == 3
    assert rep.to_json().startswith("{")


def test_report_fault_injection_names_term(engine):
    G = gaussian_bump(0.2, 1.0)
    g = default_battery()[6]
    good = engine.stransform_terms(G, g)
    bad = engine.stransform_terms(G, g, fault_injection={
        "term_jumpsum": 20.0 * good.budget})
    rep = verification_report([good, bad])
    assert not rep.passed
    assert rep.cells[0]["passed"] and not rep.cells[1]["passed"]
    assert "identity_residual" in rep.cells[1]["suspect_terms"] or \
        "term_jumpsum" in rep.cells[1]["suspect_terms"]
    assert "FAIL" in rep.to_text()


def test_report_requires_results():
    with pytest.raises(ValueError):
        verification_report([])
