"""VIX futures and call options: nested MC, least-squares MC and the Riccati oracle.

All three pipelines share the same tail: given ``h_T`` on the outer paths
and ``h_0``, assemble the forward variance curves, integrate them into
VIX_T, and average payoffs. Implied volatilities use the undiscounted
Black formula with the Monte Carlo VIX future as forward.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, DomainError, InvalidBudget, NoSolution
from .model import (
    ModelConfig,
    OuterState,
    assemble_forward_curve,
    estimate_h0,
    simulate_h0,
    simulate_inner,
    simulate_outer,
)
from .regressors import Regressor, make_regressor, stratified_sample
from .riccati import RiccatiSolution, oracle_log_hT, solve_riccati

DEFAULT_MONEYNESS = tuple(np.round(np.arange(0.7, 1.5 + 1e-9, 0.1), 10))
LSMC_CAVEAT = "standard errors exclude regression bias"
_SQRT_2PI = math.sqrt(2.0 * math.pi)


# ------------------------------------------------------------------ Black


def black_call(F, K, T, sigma):
    """Undiscounted Black call price; ``sigma = 0`` gives the intrinsic value."""
    F, K, T, sigma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (F, K, T, sigma)))
    if np.any(F <= 0) or np.any(K <= 0) or np.any(T <= 0) or np.any(sigma < 0):
        raise DomainError("black_call needs F, K, T > 0 and sigma >= 0")
    sd = sigma * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(F / K) / sd + 0.5 * sd
        price = F * ndtr(d1) - K * ndtr(d1 - sd)
    price = np.where(sd > 0, price, np.maximum(F - K, 0.0))
    return float(price) if price.ndim == 0 else price


def black_vega(F, K, T, sigma):
    """d price / d sigma."""
    sd = sigma * math.sqrt(T)
    if sd <= 0:
        return 0.0
    d1 = math.log(F / K) / sd + 0.5 * sd
    return F * math.sqrt(T) * math.exp(-0.5 * d1 * d1) / _SQRT_2PI


def implied_vol(price, F, K, T, tol=1e-10, max_iter=200) -> float:
    """Black implied volatility by Newton steps safeguarded with bisection.

    Stops once ``|black_call - price| < tol * F`` and the next Newton
    correction is below ``1e-12`` in volatility (or the bracket collapses);
    the second condition matters where vega is small.

    Raises
    ------
    NoSolution
        If ``price`` is outside ``[(F - K)^+, F)``.
    """
    price, F, K, T = float(price), float(F), float(K), float(T)
    if F <= 0 or K <= 0 or T <= 0:
        raise DomainError("implied_vol needs F, K, T > 0")
    intrinsic = max(F - K, 0.0)
    eps = tol * F
    if not (intrinsic - eps <= price < F):
        raise NoSolution(f"price {price!r} outside arbitrage bounds [{intrinsic!r}, {F!r})")
    if price - intrinsic < eps:
        return 0.0
    lo, hi = 0.0, 1.0
    while black_call(F, K, T, hi) < price:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise NoSolution("implied volatility beyond 1e6")
    sigma = 0.5 * (lo + hi)
    for _ in range(max_iter):
        diff = black_call(F, K, T, sigma) - price
        vega = black_vega(F, K, T, sigma)
        if abs(diff) < eps and (diff == 0 or abs(diff) < 1e-12 * vega):
            return sigma
        if diff > 0:
            hi = sigma
        else:
            lo = sigma
        step = sigma - diff / vega if vega > 0 else -1.0
        sigma = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(hi, 1.0):
            return sigma
    return sigma


# -------------------------------------------------------------- VIX & smile


def vix_from_curve(xiT) -> np.ndarray:
    """VIX_T = sqrt(mean_j xi_T(u_j)) over the last axis.

    Rectangle rule on ``u_1 .. u_n`` whose weights add up to Delta; the
    normalization by Delta cancels.
    """
    xiT = np.asarray(xiT, dtype=float)
    if np.any(xiT < 0) or not np.all(np.isfinite(xiT)):
        raise DomainError("forward variances must be finite and nonnegative")
    return np.sqrt(xiT.mean(axis=-1))


@dataclass
class VixSample:
    """Per-path VIX_T plus optional diagnostics."""

    vix: np.ndarray
    gamma_T: Optional[np.ndarray] = None
    hT: Optional[np.ndarray] = None
    xiT: Optional[np.ndarray] = None
    h0: Optional[np.ndarray] = None


@dataclass
class SmileReport:
    """VIX future and call smile with Monte Carlo standard errors."""

    method: str
    forward: float
    forward_se: float
    moneyness: np.ndarray
    strikes: np.ndarray
    prices: np.ndarray
    price_se: np.ndarray
    ivols: np.ndarray
    ivol_se: np.ndarray
    maturity: float
    budget: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    caveat: str = ""

    def ivol_at(self, m: float) -> float:
        i = int(np.argmin(np.abs(self.moneyness - m)))
        if abs(self.moneyness[i] - m) > 1e-9:
            raise KeyError(f"moneyness {m} not on the strike grid")
        return float(self.ivols[i])

    def ivol_se_at(self, m: float) -> float:
        i = int(np.argmin(np.abs(self.moneyness - m)))
        return float(self.ivol_se[i])


def smile_from_vix(vix, T, moneyness=DEFAULT_MONEYNESS, method="", budget=None, timings=None) -> SmileReport:
    """Price calls on VIX_T at strikes ``moneyness * F``, F the MC future."""
    vix = np.asarray(vix, dtype=float)
    K = vix.size
    m = np.asarray(moneyness, dtype=float)
    F = float(vix.mean())
    F_se = float(vix.std(ddof=1) / math.sqrt(K)) if K > 1 else float("nan")
    strikes = m * F
    payoff = np.maximum(vix[:, None] - strikes[None, :], 0.0)
    prices = payoff.mean(axis=0)
    se = payoff.std(axis=0, ddof=1) / math.sqrt(K) if K > 1 else np.full(m.size, np.nan)
    iv = np.full(m.size, np.nan)
    iv_se = np.full(m.size, np.nan)
    for i, (k, p) in enumerate(zip(strikes, prices)):
        if T <= 0 or F <= 0:
            break
        try:
            iv[i] = implied_vol(p, F, k, T)
        except NoSolution:
            continue
        vega = black_vega(F, k, T, iv[i])
        iv_se[i] = se[i] / vega if vega > 0 else np.nan
    return SmileReport(
        method=method, forward=F, forward_se=F_se, moneyness=m, strikes=strikes,
        prices=prices, price_se=se, ivols=iv, ivol_se=iv_se, maturity=T,
        budget=dict(budget or {}), timings=dict(timings or {}),
        caveat=LSMC_CAVEAT if method.startswith("lsmc") else "",
    )


def _finish(config, outer, hT, h0, method, budget, timings, moneyness, keep_curves):
    t0 = time.perf_counter()
    xiT = assemble_forward_curve(config.xi0_curve(), h0, outer.E0T, hT)
    vix = vix_from_curve(xiT)
    timings["pricing"] = time.perf_counter() - t0
    report = smile_from_vix(vix, config.grid.T, moneyness, method, budget, timings)
    sample = VixSample(
        vix=vix, gamma_T=outer.gamma_T, hT=hT, h0=h0, xiT=xiT if keep_curves else None
    )
    return sample, report


# ------------------------------------------------------------------ oracle


@lru_cache(maxsize=16)
def _riccati(H, k, theta, delta, horizon) -> RiccatiSolution:
    return solve_riccati(H, k, theta, delta, horizon)


def riccati_for(config: ModelConfig) -> RiccatiSolution:
    """Riccati solution for ``config`` on ``[0, T + Delta]``."""
    if not config.independent:
        raise ConfigError(
            "the Riccati oracle needs an independent Markovian CIR vol-of-vol "
            "(vov='cir', rho_V=0)", field="vov" if config.vov != "cir" else "rho_V",
        )
    c, g = config.cir, config.grid
    return _riccati(config.H, c.theta, c.m, c.delta, g.T + g.Delta)


def oracle_log_h(config: ModelConfig, gamma_T) -> np.ndarray:
    """Exact ``log h_T(u_j)`` as a function of ``Gamma_T``, shape ``(K, n)``."""
    return oracle_log_hT(np.asarray(gamma_T, dtype=float), config.grid.tau, riccati_for(config))


def oracle_h0(config: ModelConfig) -> np.ndarray:
    """h_0(u_j) = exp(gamma_0 psi(u_j) + phi(u_j))."""
    sol = riccati_for(config)
    return np.exp(oracle_log_hT(config.cir.gamma0, config.grid.inner_grid, sol))


def _h0(config, method, outer, hT, seed, K, threads):
    if method == "paths":
        return estimate_h0(outer.E0T, hT)
    if method == "oracle":
        return oracle_h0(config)
    if method == "direct":
        return simulate_h0(config, seed, K, threads)[0]
    raise ConfigError(f"unknown h0 method {method!r}", field="h0")


def price_oracle(config: ModelConfig, seed: int, K: int, *, moneyness=DEFAULT_MONEYNESS,
                 threads=None, keep_curves=False, outer: Optional[OuterState] = None):
    """Price with the exact ``h_T`` and ``h_0`` from the Riccati solution."""
    riccati_for(config)  # validates the configuration before simulating
    timings = {}
    t0 = time.perf_counter()
    if outer is None:
        outer = simulate_outer(config, seed, K, threads=threads)
    timings["outer"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    hT = np.exp(oracle_log_h(config, outer.gamma_T))
    h0 = oracle_h0(config)
    timings["conditional"] = time.perf_counter() - t0
    return _finish(config, outer, hT, h0, "oracle", {"K": len(outer)}, timings, moneyness, keep_curves)


# --------------------------------------------------------------------- NMC


def price_nmc(config: ModelConfig, seed: int, K: int, M: int, *, moneyness=DEFAULT_MONEYNESS,
              threads=None, keep_curves=False, h0="paths", outer: Optional[OuterState] = None):
    """Nested Monte Carlo: M inner paths per outer path estimate ``h_T``."""
    if K < 1 or M < 1:
        raise InvalidBudget("K and M must be >= 1")
    timings = {}
    t0 = time.perf_counter()
    if outer is None:
        outer = simulate_outer(config, seed, K, threads=threads)
    timings["outer"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    hT = simulate_inner(config, outer, seed, M, threads=threads)
    timings["inner"] = time.perf_counter() - t0
    h0v = _h0(config, h0, outer, hT, seed, len(outer), threads)
    return _finish(config, outer, hT, h0v, "nmc", {"K": len(outer), "M": M}, timings,
                   moneyness, keep_curves)


# -------------------------------------------------------------------- LSMC

TARGETS = {
    "log": (lambda h: np.log(h), lambda y: y),
    "log3": (lambda h: np.log(h) ** 3, lambda y: np.cbrt(y)),
}


@dataclass
class LsmcFit:
    """Training data and fitted surrogate of an LSMC run."""

    sample_index: np.ndarray
    h_train: np.ndarray
    regressor: object
    target: str


def price_lsmc(
    config: ModelConfig,
    seed: int,
    K: int,
    N: int,
    M: int,
    regressor: Union[str, Regressor, Callable] = "hermite",
    *,
    degree: int = 3,
    n_trees: int = 100,
    max_depth: int = 5,
    split_rank: Optional[int] = None,
    n_bins: int = 20,
    per_bin_goal: Optional[int] = None,
    target: str = "log",
    moneyness=DEFAULT_MONEYNESS,
    threads=None,
    keep_curves=False,
    h0="paths",
    outer: Optional[OuterState] = None,
    return_fit=False,
):
    """Least-squares Monte Carlo price.

    ``N`` stratified outer paths get ``M`` inner paths each; a regressor
    from the predictors (``Gamma_T``, plus the ``zeta_T`` curve in the rough
    case) to the transformed targets then supplies ``h_T`` on all K paths.

    ``regressor`` is a kind name (``linear``, ``hermite``, ``rf``), an
    unfitted ``Regressor``, or a callable mapping predictors directly to
    ``log h_T``; with a callable no inner simulation or fit takes place.
    ``target="log3"`` regresses ``(log h)^3`` instead of ``log h``.
    """
    if K < 1 or M < 1 or N < 1:
        raise InvalidBudget("K, N and M must be >= 1")
    if N > K:
        raise InvalidBudget(f"N={N} exceeds K={K}")
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}", field="target")
    kind = regressor if isinstance(regressor, str) else getattr(regressor, "kind", "callable")
    if config.vov == "rough" and kind in ("linear", "hermite"):
        raise ConfigError("the rough vol-of-vol state is a curve; use the random forest",
                          field="method")
    fwd, inv = TARGETS[target]
    timings = {}
    t0 = time.perf_counter()
    if outer is None:
        outer = simulate_outer(config, seed, K, threads=threads)
    timings["outer"] = time.perf_counter() - t0
    X_all = outer.predictors()

    if callable(regressor) and not isinstance(regressor, Regressor):
        idx = np.arange(0)
        h_train = np.empty((0, config.grid.n))
        hT = np.exp(np.asarray(regressor(X_all), dtype=float))
        model = regressor
        timings["inner"] = timings["fit"] = 0.0
    else:
        idx = stratified_sample(outer.gamma_T, N, n_bins=n_bins, per_bin_goal=per_bin_goal, seed=seed)
        t0 = time.perf_counter()
        h_train = simulate_inner(config, outer.subset(idx), seed, M, threads=threads)
        timings["inner"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        if isinstance(regressor, str):
            model = make_regressor(regressor, degree=degree, n_trees=n_trees, max_depth=max_depth,
                                   seed=seed, threads=threads, split_rank=split_rank)
        else:
            model = regressor
        model.fit(X_all[idx], fwd(h_train))
        hT = np.exp(inv(model.predict(X_all)))
        timings["fit"] = time.perf_counter() - t0
    h0v = _h0(config, h0, outer, hT, seed, len(outer), threads)
    budget = {"K": len(outer), "N": N, "M": M}
    sample, report = _finish(config, outer, hT, h0v, f"lsmc-{kind}", budget, timings,
                             moneyness, keep_curves)
    if return_fit:
        return sample, report, LsmcFit(idx, h_train, model, target)
    return sample, report


# ----------------------------------------------------------------- metrics


def rmse(estimates, reference) -> float:
    """Root mean squared difference over all entries (NaNs ignored)."""
    d = np.asarray(estimates, dtype=float) - np.asarray(reference, dtype=float)
    return float(np.sqrt(np.nanmean(d * d)))


@dataclass
class MetricsReport:
    method: str
    budget: dict
    rmse_hT: float
    rmse_ivol: float
    wall_time: float
    time_ratio: float = float("nan")


def compute_metrics(method, budget, hT=None, hT_ref=None, ivols=None, ivols_ref=None,
                    wall_time=float("nan")) -> MetricsReport:
    """RMSE of ``h_T`` over paths x grid and of implied vols over strikes."""
    r_h = rmse(hT, hT_ref) if hT is not None and hT_ref is not None else float("nan")
    r_iv = rmse(ivols, ivols_ref) if ivols is not None and ivols_ref is not None else float("nan")
    return MetricsReport(method, dict(budget), r_h, r_iv, float(wall_time))


def cheapest_meeting(rmses, costs, target) -> float:
    """Smallest cost among runs whose RMSE is at most ``target`` (inf if none)."""
    ok = [c for r, c in zip(rmses, costs) if r <= target]
    return min(ok) if ok else float("inf")


def matched_ratio(rmse_a, cost_a, rmse_b, cost_b, target) -> float:
    """Cost ratio a / b at the cheapest runs of each reaching ``target``."""
    a = cheapest_meeting(rmse_a, cost_a, target)
    b = cheapest_meeting(rmse_b, cost_b, target)
    if math.isinf(b):
        return float("nan")
    return a / b


def simulation_count(method: str, budget: dict) -> int:
    """Outer plus inner paths simulated by a run."""
    K = budget.get("K", 0)
    if method == "nmc":
        return K * (1 + budget["M"])
    if method.startswith("lsmc"):
        return K + budget["N"] * budget["M"]
    return K
