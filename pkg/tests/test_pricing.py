import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughvix.errors import ConfigError, DomainError, InvalidBudget, NoSolution
from roughvix.model import GridSpec, ModelConfig, estimate_h0, simulate_outer
from roughvix.paths import CorrelationSpec
from roughvix.pricing import (
    black_call,
    black_vega,
    cheapest_meeting,
    compute_metrics,
    implied_vol,
    matched_ratio,
    oracle_h0,
    oracle_log_h,
    price_lsmc,
    price_nmc,
    price_oracle,
    rmse,
    simulation_count,
    smile_from_vix,
    vix_from_curve,
)
from roughvix.vol_of_vol import CirParams

# --------------------------------------------------------------------- VIX


def test_flat_curve_vix():
    assert vix_from_curve(np.full(210, 0.013)) == pytest.approx(0.114018, abs=1e-6)
    assert abs(vix_from_curve(np.full(210, 0.013)) - math.sqrt(0.013)) < 1e-15
    assert vix_from_curve(np.zeros(210)) == 0.0
    with pytest.raises(DomainError):
        vix_from_curve(np.array([0.01, -0.01]))


def test_linear_curve_rectangle_rule():
    g = GridSpec()
    u = g.inner_grid
    exact = math.sqrt((u[-1] ** 2 - g.T**2) / (2 * g.Delta))  # mean of u over [T, T + Delta]
    got = float(vix_from_curve(u))
    # right-endpoint rule: error in the mean is dt/2, so O(1/n)
    assert abs(got**2 - exact**2) <= g.dt / 2 + 1e-15
    assert abs(got**2 - exact**2) > 0


# ------------------------------------------------------------------- Black


def test_black_zero_vol_is_intrinsic():
    for K in (0.8, 1.0, 1.3):
        assert black_call(1.0, K, 0.5, 0.0) == max(1.0 - K, 0.0)
        for sigma in (1e-3, 1e-6, 1e-9):
            # the gap to intrinsic is at most the ATM time value F sigma sqrt(T) / sqrt(2 pi)
            gap = black_call(1.0, K, 0.5, sigma) - max(1.0 - K, 0.0)
            assert 0 <= gap <= sigma * math.sqrt(0.5) * 0.3989423 + 1e-15


@given(st.floats(0.1, 3.0), st.floats(0.5, 1.6), st.floats(1 / 365, 1.0))
def test_implied_vol_round_trip(sigma, m, T):
    F = 0.12
    price = black_call(F, m * F, T, sigma)
    if price - max(F - m * F, 0) < 1e-9 * F:
        return  # price indistinguishable from intrinsic at this tolerance
    assert implied_vol(price, F, m * F, T) == pytest.approx(sigma, abs=1e-8)


def test_atm_expansion():
    F, T = 0.12, 7 / 365
    sigma = 0.1 / math.sqrt(T)
    assert black_call(F, F, T, sigma) == pytest.approx(F * 0.1 * 0.398942, rel=0.01)


def test_implied_vol_bounds():
    with pytest.raises(NoSolution):
        implied_vol(0.01, 0.1, 0.08, 0.1)  # below intrinsic 0.02
    with pytest.raises(NoSolution):
        implied_vol(0.1, 0.1, 0.08, 0.1)  # equals F
    assert implied_vol(0.02, 0.1, 0.08, 0.1) == 0.0
    assert black_vega(0.1, 0.1, 0.1, 0.0) == 0.0


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=200))
@settings(max_examples=50)
def test_smile_prices_monotone_and_convex(vix):
    rep = smile_from_vix(np.array(vix) + 0.01, 7 / 365)
    dp = np.diff(rep.prices)
    assert np.all(dp <= 1e-15)
    dk = np.diff(rep.strikes)
    slopes = dp / dk
    assert np.all(np.diff(slopes) >= -1e-9)


# ------------------------------------------------------------------ oracle


def _rbergomi(eta=1.9, H=0.1):
    g = eta**2 * H / 2
    return ModelConfig(cir=CirParams(theta=0.0, m=0.0, delta=0.0, gamma0=g)), g


def test_oracle_rbergomi_matches_constant_vol_pipeline():
    c, g = _rbergomi()
    o = simulate_outer(c, 3, 500)
    sample, _ = price_oracle(c, 3, 500, outer=o, keep_curves=True)
    u, tau = c.grid.inner_grid, c.grid.tau
    xi = c.v0 * o.E0T * np.exp(g * (tau ** (2 * c.H) - u ** (2 * c.H)) / c.H)
    np.testing.assert_allclose(sample.xiT, xi, rtol=1e-6)
    np.testing.assert_allclose(sample.vix, np.sqrt(xi.mean(axis=1)), rtol=1e-6)


def test_oracle_h0_matches_path_average():
    c = ModelConfig()
    K = 50_000
    o = simulate_outer(c, 21, K)
    prod = o.E0T * np.exp(oracle_log_h(c, o.gamma_T))
    se = prod.std(axis=0, ddof=1) / math.sqrt(K)
    est = estimate_h0(o.E0T, np.exp(oracle_log_h(c, o.gamma_T)))
    assert np.all(np.abs(est - oracle_h0(c)) < 3 * se)


def test_oracle_refuses_non_markovian_settings():
    with pytest.raises(ConfigError):
        price_oracle(ModelConfig(vov="rough"), 1, 10)
    dep = ModelConfig(corr=CorrelationSpec(-0.95, -0.9, 0.9))
    with pytest.raises(ConfigError):
        price_oracle(dep, 1, 10)


def test_surrogate_substitution_identity():
    c = ModelConfig()
    o = simulate_outer(c, 4, 300)
    ref, rep_ref = price_oracle(c, 4, 300, outer=o)
    oracle_fn = lambda X: oracle_log_h(c, X[:, 0])
    got, rep = price_lsmc(c, 4, 300, 10, 10, oracle_fn, outer=o, h0="oracle")
    np.testing.assert_array_equal(got.vix, ref.vix)
    np.testing.assert_array_equal(rep.prices, rep_ref.prices)


# --------------------------------------------------------------------- NMC


def test_nmc_is_deterministic():
    c = ModelConfig()
    a = price_nmc(c, 5, 40, 20)[0].vix
    b = price_nmc(c, 5, 40, 20, threads=3)[0].vix
    np.testing.assert_array_equal(a, b)


def test_nmc_rmse_decreases_with_inner_budget():
    c = ModelConfig()
    o = simulate_outer(c, 6, 300)
    ref = np.exp(oracle_log_h(c, o.gamma_T))
    errs = [rmse(price_nmc(c, 6, 300, M, outer=o)[0].hT, ref) for M in (10, 100, 1000)]
    assert errs[0] > errs[1] > errs[2]
    # Monte Carlo rate: a hundredfold budget cuts the error about tenfold
    assert errs[0] / errs[2] > 5


@pytest.mark.slow
def test_nmc_future_converges_to_rbergomi_value():
    c, g = _rbergomi()
    K = 10_000
    o = simulate_outer(c, 7, K)
    exact, _ = price_oracle(c, 7, K, outer=o)
    nmc, _ = price_nmc(c, 7, K, 1000, outer=o)
    se = math.hypot(exact.vix.std(ddof=1), nmc.vix.std(ddof=1)) / math.sqrt(K)
    assert abs(nmc.vix.mean() - exact.vix.mean()) < 3 * se


def test_nmc_budget_checks():
    with pytest.raises(InvalidBudget):
        price_nmc(ModelConfig(), 1, 0, 10)
    with pytest.raises(InvalidBudget):
        price_nmc(ModelConfig(), 1, 10, 0)


# -------------------------------------------------------------------- LSMC


def test_full_sample_hermite_smooths_nmc():
    c = ModelConfig()
    K, M = 1000, 100
    o = simulate_outer(c, 8, K)
    ref = np.exp(oracle_log_h(c, o.gamma_T))
    nmc = price_nmc(c, 8, K, M, outer=o)[0]
    lsmc = price_lsmc(c, 8, K, K, M, "hermite", outer=o)[0]
    assert rmse(lsmc.hT, ref) <= rmse(nmc.hT, ref)


def test_lsmc_returns_fit_and_uses_stratified_rows():
    c = ModelConfig()
    _, rep, fit = price_lsmc(c, 9, 500, 50, 20, "linear", return_fit=True)
    assert fit.sample_index.size == 50 and fit.h_train.shape == (50, c.grid.n)
    assert rep.method == "lsmc-linear" and "regression bias" in rep.caveat
    assert rep.budget == {"K": 500, "N": 50, "M": 20}


def test_lsmc_errors():
    c = ModelConfig()
    with pytest.raises(InvalidBudget):
        price_lsmc(c, 1, 10, 11, 5)
    with pytest.raises(ConfigError):
        price_lsmc(ModelConfig(vov="rough"), 1, 10, 5, 5, "hermite")
    with pytest.raises(ConfigError):
        price_lsmc(c, 1, 10, 5, 5, target="sqrt")


def test_rough_lsmc_runs_with_forest():
    c = ModelConfig(vov="rough")
    sample, rep = price_lsmc(c, 10, 200, 40, 20, "rf", n_trees=5, split_rank=10)
    assert np.all(np.isfinite(sample.vix)) and np.all(sample.hT > 0)
    assert rep.forward > 0


# ----------------------------------------------------------------- metrics


def test_metrics_examples():
    rng = np.random.default_rng(11)
    ref = rng.normal(size=(100, 100))
    assert compute_metrics("x", {}, ref, ref).rmse_hT == 0.0
    assert compute_metrics("x", {}, ref + 0.3, ref).rmse_hT == pytest.approx(0.3, rel=1e-12)
    noisy = ref + 0.2 * rng.standard_normal(ref.shape)
    assert compute_metrics("x", {}, noisy, ref).rmse_hT == pytest.approx(0.2, rel=0.05)
    m = compute_metrics("x", {"K": 1}, ivols=[0.5, np.nan], ivols_ref=[0.4, 0.1], wall_time=2.0)
    assert m.rmse_ivol == pytest.approx(0.1) and math.isnan(m.rmse_hT) and m.wall_time == 2.0


def test_cost_accounting():
    assert simulation_count("nmc", {"K": 10, "M": 100}) == 1010
    assert simulation_count("lsmc-hermite", {"K": 10, "N": 4, "M": 100}) == 410
    assert simulation_count("oracle", {"K": 10}) == 10
    assert cheapest_meeting([0.3, 0.1, 0.05], [1, 5, 9], 0.1) == 5
    assert math.isinf(cheapest_meeting([0.3], [1], 0.1))
    assert matched_ratio([0.2, 0.05], [10, 100], [0.04], [7], 0.1) == pytest.approx(100 / 7)
    assert math.isnan(matched_ratio([0.05], [1], [0.2], [1], 0.1))
