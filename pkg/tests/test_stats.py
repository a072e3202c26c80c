import math

import numpy as np
import pytest

from billiard_lab import geometry as geo
from billiard_lab import stats as st
from billiard_lab.induced import SpecCompatibilityError, SubsetSpec

STADIUM = geo.build_stadium(2.0, 1.0)
SEMI = geo.build_semidispersing(1.0, 1.0, [{"disc": ((0.5, 0.5), 0.25)}])


# ---------------------------------------------------------------------------
# power-law fit synthetic oracles


def test_fit_exact_power_law():
    n = np.arange(1, 5001)
    curve = st.SurvivalCurve.from_function(lambda m: m ** -2.0, n)
    fit = st.fit_power_law(curve)
    assert fit.exponent == pytest.approx(2.0, abs=1e-9)
    assert fit.r2 > 1 - 1e-12


def test_fit_log_corrected_power_law_bias():
    # S(n) = n^-2 (ln n)^2: fitted exponent lands short of 2 and drifts toward
    # 2 as the window grows; this quantifies the logarithmic-correction bias
    fn = lambda m: m ** -2.0 * math.log(m) ** 2
    n = np.unique(np.geomspace(100, 10_000, 400).astype(int))
    fit = st.fit_power_law(st.SurvivalCurve.from_function(fn, n),
                           st.WindowPolicy(n_min=100))
    assert 1.6 < fit.exponent < 2.0
    n2 = np.unique(np.geomspace(10_000, 10_000_000, 400).astype(int))
    fit2 = st.fit_power_law(st.SurvivalCurve.from_function(fn, n2),
                            st.WindowPolicy(n_min=10_000))
    assert fit2.exponent > fit.exponent  # drift toward 2


def test_fit_exponential_is_not_power_law():
    fn = lambda m: math.exp(-m / 10.0)
    n = np.arange(1, 200)
    curve = st.SurvivalCurve.from_function(fn, n)
    fit = st.fit_power_law(curve)
    assert fit.r2 < 0.9


def test_fit_window_too_small():
    n = np.arange(1, 8)
    curve = st.SurvivalCurve.from_function(lambda m: m ** -2.0, n)
    with pytest.raises(st.WindowTooSmallError):
        st.fit_power_law(curve, st.WindowPolicy(n_min=10))


def test_censored_bins_excluded():
    n = np.arange(1, 2001)
    curve = st.SurvivalCurve.from_function(lambda m: m ** -2.0, n)
    curve.r_max = 500
    fit = st.fit_power_law(curve)
    assert fit.n_hi < 500


# ---------------------------------------------------------------------------
# correlation estimator


def test_correlation_constant_observable_is_zero():
    const = st.Observable("one", lambda ev: 1.0)
    series = st.estimate_correlation(STADIUM, const, const, n_max=10,
                                     budget=20_000, seed=1)
    assert np.allclose(series.values, 0.0, atol=1e-12)


def test_correlation_lag0_is_variance():
    series = st.estimate_correlation(STADIUM, "cos-phi", "cos-phi", n_max=5,
                                     budget=30_000, seed=2)
    assert series.values[0] >= 0
    # lag-0 symmetric under swapping f and g
    series2 = st.estimate_correlation(STADIUM, "cos-phi", "free-path", n_max=5,
                                      budget=30_000, seed=2)
    series3 = st.estimate_correlation(STADIUM, "free-path", "cos-phi", n_max=5,
                                      budget=30_000, seed=2)
    assert series2.values[0] == pytest.approx(series3.values[0], rel=1e-9)
    assert (series.stderr[1:] > 0).all()


def test_correlation_deterministic():
    a = st.estimate_correlation(STADIUM, "free-path", "free-path", n_max=8,
                                budget=20_000, seed=7)
    b = st.estimate_correlation(STADIUM, "free-path", "free-path", n_max=8,
                                budget=20_000, seed=7)
    assert np.array_equal(a.values, b.values)


def test_correlation_induced_series():
    series = st.estimate_correlation(STADIUM, "free-path", "free-path",
                                     map_kind="induced", n_max=8,
                                     budget=40_000, seed=3)
    assert series.map_kind == "induced"
    assert series.n_samples < 40_000   # only returns to M contribute


# ---------------------------------------------------------------------------
# tails


def test_tail_spec_compat_error():
    with pytest.raises(SpecCompatibilityError):
        st.estimate_tail(geo.disc_table(1.0), "scatterer-collisions",
                         samples=1000, r_max=1000, seed=0)


def test_tail_stadium_smoke():
    spec = SubsetSpec.for_table(STADIUM)
    est = st.estimate_tail(STADIUM, spec, samples=40_000, r_max=100_000, seed=5,
                           chunk_size=20_000)
    sm = est.survival_m
    assert sm.survival[0] == pytest.approx(1.0)
    assert (np.diff(sm.survival) <= 1e-15).all()      # non-increasing
    assert est.mu_M > 0.2
    # Kac consistency: mean R ~ 1/mu(M)
    assert est.mean_R == pytest.approx(1.0 / est.mu_M, rel=0.05)
    # space-version at n=0 is 1 (Kac again)
    assert est.survival_space.survival[0] == pytest.approx(1.0, rel=0.05)
    # survival_space decays one power slower: ratio grows
    fit_m = st.fit_power_law(sm, st.WindowPolicy(n_min=8, min_count=50))
    fit_sp = st.fit_power_law(est.survival_space,
                              st.WindowPolicy(n_min=8, min_count=50))
    assert fit_m.exponent - fit_sp.exponent == pytest.approx(1.0, abs=0.6)


def test_tail_deterministic_and_chunk_invariant():
    spec = SubsetSpec.for_table(STADIUM)
    a = st.estimate_tail(STADIUM, spec, samples=15_000, r_max=10_000, seed=9,
                         chunk_size=5_000)
    b = st.estimate_tail(STADIUM, spec, samples=15_000, r_max=10_000, seed=9,
                         chunk_size=5_000)
    assert np.array_equal(a.survival_m.survival, b.survival_m.survival)


# ---------------------------------------------------------------------------
# cell measures and mean free path


def test_cell_measures_stadium_smoke():
    spec = SubsetSpec.for_table(STADIUM)
    cells = st.estimate_cell_measures(STADIUM, spec, samples=60_000,
                                      r_max=100_000, seed=4, chunk_size=30_000)
    n, p, se = cells.mass_by_index("flat-run-direct")
    assert len(n) > 5
    assert p.sum() > 0.01
    fit = st.fit_cell_slope(cells, "flat-run-direct", n_min=2, min_count=50)
    assert -4.5 < fit["slope"] < -1.5


@pytest.mark.parametrize("table,expect", [
    (STADIUM, math.pi * (4 + math.pi) / (4 + 2 * math.pi)),
    (geo.rectangle_table(1.0, 1.0), math.pi / 4),
    (geo.disc_table(1.0), math.pi / 2),
])
def test_mean_free_path(table, expect):
    res = st.mean_free_path(table, samples=200_000, seed=11)
    assert res["analytic"] == pytest.approx(expect, rel=1e-12)
    assert abs(res["estimate"] - expect) / expect < 0.005


def test_mean_free_path_semidispersing():
    res = st.mean_free_path(SEMI, samples=200_000, seed=12)
    assert abs(res["estimate"] - res["analytic"]) / res["analytic"] < 0.005
