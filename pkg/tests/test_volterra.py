import numpy as np
import pytest

from levyvolterra.kernels import frac_kernel, indicator_kernel, l2_norm_sq
from levyvolterra.levy import (AtomicLaw, CompoundPoisson, LevyModel, NoJumps,
                               UniformLaw, coarsen, path_seed, reconstruct,
                               simulate_path, simulate_paths)
from levyvolterra.volterra import moment_estimate, simulate_M

CP_2D2 = CompoundPoisson(2.0, AtomicLaw(((2.0, 1.0),)))
MIXED = LevyModel(sigma=1.0, jumps=CP_2D2)


def test_indicator_reduction_bit_exact():
    lp = simulate_path(MIXED, (1.0, 1.0), 200, seed=17)
    vp = simulate_M(indicator_kernel(), lp)
    L = reconstruct(lp, vp.times)
    assert np.array_equal(vp.values, L)


def test_M_at_zero_is_zero():
    lp = simulate_path(MIXED, (1.0, 1.0), 100, seed=4)
    for k in (indicator_kernel(), frac_kernel(0.25)):
        vp = simulate_M(k, lp)
        assert vp.values[0] == 0.0


def test_frac_kernel_jumps_vanish_on_diagonal():
    # f_d(t,t) = 0 for t > 0, so M is continuous although L jumps
    lp = simulate_path(LevyModel(sigma=0.0, jumps=CP_2D2), (0.5, 1.0), 100, seed=29)
    vp = simulate_M(frac_kernel(0.25), lp)
    assert np.all(vp.jump_deltas == 0.0)
    np.testing.assert_array_equal(vp.jump_values, vp.jump_left_values)


def test_jump_relation_exact_for_indicator():
    lp = simulate_path(MIXED, (0.5, 1.0), 150, seed=8)
    vp = simulate_M(indicator_kernel(), lp)
    in_win = (lp.jump_times > 0) & (lp.jump_times <= 1.0)
    assert np.array_equal(vp.jump_deltas, lp.jump_sizes[in_win])
    np.testing.assert_array_equal(vp.jump_values,
                                  vp.jump_left_values + vp.jump_deltas)


def test_isometry_invariant():
    # Var M(T) = (sigma^2 + int x^2 nu) * int f(T,s)^2 ds within 3 SE
    from levyvolterra.volterra import batch_values
    T, A, n_cells, n_paths = 1.0, 2.0, 900, 10_000
    paths = simulate_paths(MIXED, (A, T), n_cells, n_paths, seed=99)
    for kernel in (indicator_kernel(), frac_kernel(0.25)):
        mT = batch_values(kernel, paths, np.array([T]))[:, 0]
        v = mT.var(ddof=1)
        target = MIXED.var_rate * l2_norm_sq(kernel, T, window_a=A).value
        se = np.sqrt(max(np.mean((mT - mT.mean()) ** 4) - v ** 2, 0.0) / n_paths)
        assert abs(v - target) <= 3.0 * se, (kernel.label, v, target, 3 * se)


def test_grid_refinement_cauchy():
    # common-random-numbers coupling: M(T) converges as cells double
    model = LevyModel(sigma=1.0, jumps=CP_2D2)
    k = frac_kernel(0.25)
    gaps = []
    fine_paths = [simulate_path(model, (1.0, 1.0), 1024, path_seed(5, i))
                  for i in range(40)]
    for factor in (8, 4, 2, 1):
        vals = [float(simulate_M(k, coarsen(p, factor), np.array([1.0])).values[0])
                for p in fine_paths]
        gaps.append(np.array(vals))
    d1 = np.sqrt(np.mean((gaps[0] - gaps[3]) ** 2))
    d2 = np.sqrt(np.mean((gaps[1] - gaps[3]) ** 2))
    d3 = np.sqrt(np.mean((gaps[2] - gaps[3]) ** 2))
    assert d1 > d2 > d3 > 0


def test_moment_estimate_gate():
    paths = [simulate_M(indicator_kernel(), simulate_path(LevyModel(sigma=1.0),
                                                          (0.0, 1.0), 200, path_seed(3, i)))
             for i in range(2000)]
    est, se = moment_estimate(paths, 2)
    est2, _ = moment_estimate(paths[:1000], 2)
    # E sup |W|^2 on [0,1] is finite (~1.5); estimate stable under halving
    assert 1.0 < est < 2.2
    assert abs(est - est2) <= 6.0 * se


def test_moment_zero_model():
    model = LevyModel(sigma=0.0, jumps=NoJumps())
    vps = [simulate_M(indicator_kernel(), simulate_path(model, (0.0, 1.0), 50, seed=i))
           for i in range(2)]
    est, se = moment_estimate(vps, 2)
    assert est == 0.0 and se == 0.0


def test_moment_errors():
    with pytest.raises(ValueError):
        moment_estimate([], 2)


def test_csv_export(tmp_path):
    from levyvolterra.volterra import export_volterra_csv
    lp = simulate_path(MIXED, (0.5, 1.0), 60, seed=12)
    vp = simulate_M(indicator_kernel(), lp)
    out = tmp_path / "m.csv"
    export_volterra_csv(vp, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "time,M,M_left,is_jump,jump_size"
    assert len(lines) == 1 + len(vp.times) + len(vp.jump_times)
