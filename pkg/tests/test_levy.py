import numpy as np
import pytest

from levyvolterra.levy import (AtomicLaw, CompoundPoisson, LevyModel, NoJumps,
                               TemperedStable, UniformLaw, coarsen,
                               drift_gamma, nu_moment, path_seed, reconstruct,
                               simulate_path, simulate_paths)

CP_2D2 = CompoundPoisson(2.0, AtomicLaw(((2.0, 1.0),)))
CP_UNIF = CompoundPoisson(5.0, UniformLaw(-1.0, 1.0))
TS_SYM = TemperedStable(alpha=0.5, tempering=1.0, scale=1.0)


# --- measure operations ------------------------------------------------------

def test_drift_gamma_atom():
    assert drift_gamma(CP_2D2) == pytest.approx(-4.0, abs=1e-14)


def test_drift_gamma_uniform_inside_unit_ball():
    assert drift_gamma(CP_UNIF) == pytest.approx(0.0, abs=1e-14)


def test_drift_gamma_symmetric_tempered_stable():
    assert drift_gamma(TS_SYM) == 0.0


def test_nu_moment_atoms():
    assert nu_moment(CP_2D2, 2) == pytest.approx(8.0, abs=1e-12)
    assert nu_moment(CP_2D2, 3) == pytest.approx(16.0, abs=1e-12)


def test_nu_moment_empty():
    assert nu_moment(NoJumps(), 5) == 0.0


def test_nu_moment_tempered_stable_closed_form_vs_quadrature():
    from levyvolterra.quadrature import integrate_singular
    got = nu_moment(TS_SYM, 2)
    dens = TS_SYM.density
    brute, _ = integrate_singular(lambda x: x ** 2 * dens(x), 1e-12, 60.0)
    assert got == pytest.approx(2.0 * brute, rel=1e-6)


# --- simulation --------------------------------------------------------------

def test_pure_gaussian_path():
    model = LevyModel(sigma=1.0)
    lp = simulate_path(model, (0.0, 1.0), 400, seed=7)
    assert len(lp.jump_times) == 0
    L = reconstruct(lp)
    assert L[0] == 0.0
    # terminal value over many seeds ~ N(0,1)
    vals = [reconstruct(simulate_path(model, (0.0, 1.0), 50, seed=s))[-1]
            for s in range(2000)]
    vals = np.array(vals)
    assert abs(vals.mean()) <= 3.0 * vals.std() / np.sqrt(len(vals))
    assert abs(vals.var() - 1.0) <= 0.1


def test_jump_count_mean():
    model = LevyModel(sigma=0.0, jumps=CP_2D2)
    counts = np.array([len(simulate_path(model, (0.0, 1.0), 10, path_seed(1, i)).jump_times)
                       for i in range(10_000)])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - 2.0) <= 3.0 * se


def test_centring_and_variance_all_builtin_specs():
    for jumps in (NoJumps(), CP_2D2, CP_UNIF, TS_SYM):
        model = LevyModel(sigma=0.7, jumps=jumps)
        paths = simulate_paths(model, (0.5, 1.0), 60, 10_000, seed=42)
        L1 = np.array([reconstruct(p, np.array([1.0]))[0] for p in paths])
        se = L1.std(ddof=1) / np.sqrt(len(L1))
        assert abs(L1.mean()) <= 3.0 * se, jumps
        target = model.var_rate  # Ito isometry oracle: sigma^2 + int x^2 nu
        v = L1.var(ddof=1)
        se_var = np.sqrt(max(np.mean((L1 - L1.mean()) ** 4) - v ** 2, 0.0) / len(L1))
        # truncated small jumps shave a bounded variance fraction
        tol = 3.0 * se_var + 2e-4 * target
        assert abs(v - target) <= tol, (jumps, v, target, tol)


def test_two_sided_halves_uncorrelated():
    model = LevyModel(sigma=1.0, jumps=CP_UNIF)
    pos, neg = [], []
    for i in range(4000):
        lp = simulate_path(model, (1.0, 1.0), 40, path_seed(9, i))
        L = reconstruct(lp, np.array([-1.0, 1.0]))
        neg.append(L[0])
        pos.append(L[1])
    r = np.corrcoef(neg, pos)[0, 1]
    assert abs(r) <= 3.0 / np.sqrt(4000)


def test_reproducibility_bitwise():
    model = LevyModel(sigma=0.3, jumps=CP_2D2)
    a = simulate_path(model, (1.0, 2.0), 300, seed=123)
    b = simulate_path(model, (1.0, 2.0), 300, seed=123)
    assert np.array_equal(a.gaussian_increments, b.gaussian_increments)
    assert np.array_equal(a.jump_times, b.jump_times)
    assert np.array_equal(a.jump_sizes, b.jump_sizes)
    c = simulate_path(model, (1.0, 2.0), 300, seed=124)
    assert not np.array_equal(a.gaussian_increments, c.gaussian_increments)


def test_jumps_never_on_nodes():
    model = LevyModel(sigma=0.0, jumps=CompoundPoisson(60.0, UniformLaw(-2.0, 2.0)))
    lp = simulate_path(model, (1.0, 1.0), 500, seed=5)
    assert not np.any(np.isin(lp.jump_times, lp.grid))
    assert np.all(lp.jump_times > -1.0) and np.all(lp.jump_times <= 1.0)
    assert np.all(np.diff(lp.jump_times) >= 0)


def test_grid_contains_zero_and_window():
    lp = simulate_path(LevyModel(sigma=1.0), (2.0, 1.0), 300, seed=0)
    assert lp.grid[0] == -2.0 and lp.grid[-1] == 1.0
    assert 0.0 in lp.grid
    assert np.all(np.diff(lp.grid) > 0)


def test_tempered_stable_cutoff_policy():
    model = LevyModel(sigma=0.5, jumps=TS_SYM)
    eps = model.eps
    assert eps > 0
    frac = TS_SYM.x2_below(eps) / TS_SYM.moment_abs(2.0)
    assert frac <= 1e-4 * 1.05
    # compensation folds the below-cutoff variance into the diffusion
    assert model.sigma_eff ** 2 == pytest.approx(0.25 + TS_SYM.x2_below(eps), rel=1e-12)
    lp = simulate_path(model, (0.0, 1.0), 100, seed=11)
    if len(lp.jump_sizes):
        assert np.min(np.abs(lp.jump_sizes)) >= eps


def test_coarsen_couples_paths():
    model = LevyModel(sigma=1.0, jumps=CP_UNIF)
    fine = simulate_path(model, (1.0, 1.0), 400, seed=3)
    coarse = coarsen(fine, 4)
    assert coarse.n_cells == 100
    assert np.array_equal(coarse.jump_times, fine.jump_times)
    assert coarse.gaussian_increments.sum() == pytest.approx(
        fine.gaussian_increments.sum(), abs=1e-12)
    Lf = reconstruct(fine, coarse.grid)
    Lc = reconstruct(coarse)
    np.testing.assert_allclose(Lf, Lc, atol=1e-12)


def test_export_csv(tmp_path):
    from levyvolterra.levy import export_levy_csv
    lp = simulate_path(LevyModel(sigma=1.0, jumps=CP_2D2), (0.5, 0.5), 40, seed=2)
    out = tmp_path / "path.csv"
    export_levy_csv(lp, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "time,gaussian_cumsum,jump_time,jump_size"
    assert len(lines) == len(lp.grid) + 1
