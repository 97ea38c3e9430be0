import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughvix.errors import ConfigError, DomainError
from roughvix.kernel import riemann_E
from roughvix.model import (
    GridSpec,
    ModelConfig,
    assemble_forward_curve,
    estimate_h0,
    simulate_h0,
    simulate_inner,
    simulate_outer,
)
from roughvix.paths import CorrelationSpec
from roughvix.pricing import oracle_h0, oracle_log_h
from roughvix.vol_of_vol import CirParams


def test_grid_layout():
    g = GridSpec()
    assert g.n == 210 and g.n_outer == 49
    u = g.inner_grid
    assert u[-1] == g.T + g.Delta
    np.testing.assert_allclose(np.diff(u), g.dt, rtol=1e-9)
    assert u[0] == pytest.approx(g.T + 1 / 2555)


def test_grid_rejects_off_grid_maturity():
    with pytest.raises(DomainError):
        GridSpec(T=0.5 / 2555)


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="H"):
        ModelConfig(H=-0.1)
    with pytest.raises(ConfigError, match="vov"):
        ModelConfig(vov="jumps")


def test_outer_is_deterministic_and_batch_independent():
    c = ModelConfig(corr=CorrelationSpec(-0.95, -0.9, 0.9))
    a = simulate_outer(c, 4, 30)
    b = simulate_outer(c, 4, 30)
    np.testing.assert_array_equal(a.E0T, b.E0T)
    tail = simulate_outer(c, 4, 10, start=20)
    np.testing.assert_array_equal(a.E0T[20:], tail.E0T)
    np.testing.assert_array_equal(a.gamma_T[20:], tail.gamma_T)
    threaded = simulate_outer(c, 4, 30, threads=3)
    np.testing.assert_array_equal(a.gamma_T, threaded.gamma_T)


def test_short_maturity_limit():
    # one outer step: log E_{0,T}(u) is centred Gaussian with a known variance
    c = ModelConfig(grid=GridSpec(T=1 / 2555))
    K, dt, H = 5000, c.grid.dt, c.H
    o = simulate_outer(c, 1, K)
    logE = np.log(o.E0T)
    var = 4 * 0.05 * dt * (c.grid.inner_grid - dt / 2) ** (2 * H - 1)
    assert np.all(np.abs(logE.mean(axis=0)) < 3 * np.sqrt(var / K))
    assert np.all(np.abs(logE.var(axis=0, ddof=1) / var - 1) < 3 * np.sqrt(2 / (K - 1)))
    # one Euler step of CIR moves Gamma by O(sqrt(dt))
    p = c.cir
    step_sd = p.delta * np.sqrt(p.gamma0 * dt)
    drift = p.theta * (p.m - p.gamma0) * dt
    assert np.abs(o.gamma_T - p.gamma0 - drift).max() < 6 * step_sd
    c0 = ModelConfig(grid=GridSpec(T=0.0))
    o0 = simulate_outer(c0, 1, 5)
    np.testing.assert_array_equal(o0.E0T, 1.0)
    np.testing.assert_array_equal(o0.gamma_T, 0.05)


@given(st.integers(1, 20), st.integers(1, 20), st.floats(0.0, 0.5), st.integers(0, 1000))
def test_riemann_factors_split_at_any_date(m, k, gamma, seed):
    # E_{0,q}(u) = E_{0,T}(u) E_{T,q}(u) on a shared grid
    dt, H = 0.01, 0.1
    rng = np.random.default_rng(seed)
    dW = rng.standard_normal((3, m + k)) * np.sqrt(dt)
    T, q = m * dt, (m + k) * dt
    u = np.array([q + dt, q + 0.3])
    whole = riemann_E(gamma, dW, 0.0, q, u, H)
    parts = riemann_E(gamma, dW[:, :m], 0.0, T, u, H) * riemann_E(gamma, dW[:, m:], T, q, u, H)
    np.testing.assert_allclose(whole, parts, rtol=1e-10)


def test_inner_with_vanishing_vol_of_vol():
    c = ModelConfig(cir=CirParams(theta=0.0, m=0.0, delta=0.0, gamma0=0.0))
    o = simulate_outer(c, 2, 3)
    np.testing.assert_array_equal(simulate_inner(c, o, 2, 7), 1.0)


def test_inner_constant_gamma_matches_closed_form():
    gamma = 0.05
    c = ModelConfig(cir=CirParams(theta=0.0, m=0.0, delta=0.0, gamma0=gamma))
    o = simulate_outer(c, 3, 2)
    h, se = simulate_inner(c, o, 3, 10_000, return_se=True)
    tau = c.grid.tau
    exact = np.exp(gamma * tau ** (2 * c.H) / c.H)
    z = (np.log(h) - np.log(exact)) / (se / h)
    assert np.mean(np.abs(z) < 3) >= 0.99


def test_inner_matches_riccati_oracle():
    c = ModelConfig()
    o = simulate_outer(c, 17, 6)
    h, se = simulate_inner(c, o, 17, 10_000, return_se=True)
    ref = np.exp(oracle_log_h(c, o.gamma_T))
    assert np.mean(np.abs(h - ref) < 3 * se) >= 0.95


def test_inner_is_batch_independent():
    c = ModelConfig(vov="rough")
    o = simulate_outer(c, 5, 6)
    full = simulate_inner(c, o, 5, 20)
    part = simulate_inner(c, o.subset([4, 1]), 5, 20)
    np.testing.assert_array_equal(full[[4, 1]], part)


def test_h0_oracle_identity_over_outer_paths():
    c = ModelConfig()
    K = 10_000
    o = simulate_outer(c, 8, K)
    prod = o.E0T * np.exp(oracle_log_h(c, o.gamma_T))
    se = prod.std(axis=0, ddof=1) / np.sqrt(K)
    h0 = oracle_h0(c)
    assert np.all(np.abs(prod.mean(axis=0) - h0) < 3 * se)
    assert np.all(h0 >= 1.0)
    np.testing.assert_allclose(estimate_h0(o.E0T, np.exp(oracle_log_h(c, o.gamma_T))),
                               prod.mean(axis=0))


def test_direct_h0_matches_oracle():
    c = ModelConfig()
    h0, se = simulate_h0(c, 9, 5000)
    assert np.mean(np.abs(h0 - oracle_h0(c)) < 3 * se) >= 0.99


def test_forward_curve_assembly():
    xi0 = np.full(4, 0.013)
    h0 = np.array([1.1, 1.2, 1.3, 1.4])
    np.testing.assert_allclose(assemble_forward_curve(xi0, h0, np.ones(4), h0), xi0)
    out = assemble_forward_curve(xi0, h0, np.full((2, 4), 0.5), np.full((2, 4), 3.0))
    assert np.all(out > 0)
    with pytest.raises(DomainError):
        assemble_forward_curve(xi0, h0, np.zeros(4), h0)
    np.testing.assert_array_equal(estimate_h0(np.ones((3, 4)), np.ones((3, 4))), 1.0)


def test_martingale_with_oracle_pipeline():
    c = ModelConfig()
    K = 10_000
    o = simulate_outer(c, 12, K)
    xi = assemble_forward_curve(c.xi0_curve(), oracle_h0(c), o.E0T, np.exp(oracle_log_h(c, o.gamma_T)))
    se = xi.std(axis=0, ddof=1) / np.sqrt(K)
    assert np.all(np.abs(xi.mean(axis=0) - c.v0) < 3 * se)


def test_rough_outer_state_carries_zeta_curve():
    c = ModelConfig(vov="rough")
    o = simulate_outer(c, 1, 4)
    assert o.zeta_T.shape == (4, c.grid.n)
    assert o.predictors().shape == (4, c.grid.n + 1)
    assert np.all(o.zeta_T > 0)
