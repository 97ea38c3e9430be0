"""Stochastic Volterra model: outer/inner simulation and forward variance assembly.

The variance is ``v_u = A_0(u) E_{0,u}(u)`` with

    E_{p,q}(u) = exp(2 int_p^q (u - s)^(H - 1/2) sqrt(Gamma_s) dW_s),

and the forward variance curve at the option date T is

    xi_T(u) = xi_0(u) / h_0(u) * E_{0,T}(u) * h_T(u),
    h_t(u) = E[E_{t,u}(u) | F_t].

Outer paths carry the state ``(Gamma_T, E_{0,T}(u_j), zeta_T(u_j))``; inner
paths estimate ``h_T(u_j)`` given that state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._parallel import chunks, ordered_map
from .errors import ConfigError, DomainError
from .kernel import hybrid_sum, riemann_E
from .paths import (
    STREAM_H0,
    STREAM_INNER,
    STREAM_OUTER,
    CorrelationSpec,
    IncrementLaw,
    build_correlation,
    generate_batch,
    path_rng,
)
from .vol_of_vol import (
    CirParams,
    RoughVovParams,
    cir_euler_time_major,
    rough_gamma_from_tbss,
    simulate_cir,
    simulate_rough_vov,
)

DAYS = 365.0
_ROWS_PER_CHUNK = 8192


@dataclass(frozen=True)
class GridSpec:
    """Option maturity ``T``, VIX horizon ``Delta`` and ``n_d`` grid points per day."""

    T: float = 7 / DAYS
    Delta: float = 30 / DAYS
    n_d: int = 7

    def __post_init__(self):
        if self.n_d < 1:
            raise DomainError("n_d must be >= 1")
        if self.T < 0 or self.Delta <= 0:
            raise DomainError("T must be >= 0 and Delta > 0")
        for name in ("T", "Delta"):
            steps = getattr(self, name) / self.dt
            if abs(steps - round(steps)) > 1e-6:
                raise DomainError(f"{name} is not a whole number of grid steps")

    @property
    def dt(self) -> float:
        return 1.0 / (DAYS * self.n_d)

    @property
    def n_outer(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def n(self) -> int:
        return int(round(self.Delta / self.dt))

    @property
    def inner_grid(self) -> np.ndarray:
        """u_j = T + j dt, j = 1..n; the last point is T + Delta."""
        u = self.T + self.dt * np.arange(1, self.n + 1)
        u[-1] = self.T + self.Delta
        return u

    @property
    def tau(self) -> np.ndarray:
        """u_j - T."""
        return self.dt * np.arange(1, self.n + 1)


@dataclass(frozen=True)
class ModelConfig:
    """Model and grid parameters. Defaults reproduce the independent CIR study."""

    H: float = 0.1
    v0: float = 0.013
    grid: GridSpec = field(default_factory=GridSpec)
    corr: CorrelationSpec = field(default_factory=lambda: CorrelationSpec(rho=-0.95))
    vov: str = "cir"
    cir: CirParams = field(default_factory=CirParams)
    rough: RoughVovParams = field(default_factory=RoughVovParams)
    xi0: Optional[tuple] = None  # tabulated xi_0(u_j); flat v0 when None

    def __post_init__(self):
        if not 0.0 < self.H <= 0.5:
            raise ConfigError("must lie in (0, 1/2]", field="H")
        if self.v0 <= 0:
            raise ConfigError("must be positive", field="v0")
        if self.vov not in ("cir", "rough"):
            raise ConfigError("must be 'cir' or 'rough'", field="vov")
        if self.xi0 is not None:
            if len(self.xi0) != self.grid.n or min(self.xi0) <= 0:
                raise ConfigError("needs one positive value per inner grid point", field="xi0")

    @property
    def independent(self) -> bool:
        """Markovian CIR vol-of-vol independent of W (Riccati oracle available)."""
        return self.vov == "cir" and self.corr.rho_V == 0.0

    @property
    def factor(self) -> np.ndarray:
        return build_correlation(self.corr)

    def xi0_curve(self) -> np.ndarray:
        if self.xi0 is None:
            return np.full(self.grid.n, self.v0)
        return np.asarray(self.xi0, dtype=float)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class OuterState:
    """State of K outer paths at T (struct of arrays).

    ``index`` holds the global path indices, which key the inner streams.
    """

    index: np.ndarray
    gamma_T: np.ndarray
    E0T: np.ndarray
    zeta_T: Optional[np.ndarray] = None

    def __len__(self):
        return self.index.size

    def subset(self, rows) -> "OuterState":
        if not isinstance(rows, slice):
            rows = np.asarray(rows)
        return OuterState(
            index=self.index[rows],
            gamma_T=self.gamma_T[rows],
            E0T=self.E0T[rows],
            zeta_T=None if self.zeta_T is None else self.zeta_T[rows],
        )

    def predictors(self) -> np.ndarray:
        """Regression inputs: Gamma_T, plus the zeta_T curve in the rough case."""
        if self.zeta_T is None:
            return self.gamma_T[:, None]
        return np.column_stack([self.gamma_T, self.zeta_T])


def _outer_chunk(config: ModelConfig, seed: int, start: int, stop: int) -> OuterState:
    g = config.grid
    n_T = g.n_outer
    u = g.inner_grid
    rows = stop - start
    index = np.arange(start, stop)
    if n_T == 0:
        gamma0 = config.cir.gamma0 if config.vov == "cir" else config.rough.zeta0
        zeta = None if config.vov == "cir" else np.full((rows, g.n), config.rough.zeta0)
        return OuterState(index, np.full(rows, gamma0), np.ones((rows, g.n)), zeta)
    H_vov = config.rough.H_vov if config.vov == "rough" else None
    batch = generate_batch(
        seed, rows, n_T, g.dt, config.H, config.factor, H_vov=H_vov, stream=STREAM_OUTER, start=start
    )
    if config.vov == "cir":
        gamma = simulate_cir(config.cir, batch.dZ, g.dt)
        zeta = None
    else:
        gamma, zeta = simulate_rough_vov(config.rough, batch.dZ, batch.Zt, g.dt, g.T, targets=u)
    E0T = riemann_E(gamma, batch.dW, 0.0, g.T, u, config.H)
    return OuterState(index, gamma[:, -1].copy(), E0T, zeta)


def _concat(states) -> OuterState:
    zeta = None if states[0].zeta_T is None else np.concatenate([s.zeta_T for s in states])
    return OuterState(
        index=np.concatenate([s.index for s in states]),
        gamma_T=np.concatenate([s.gamma_T for s in states]),
        E0T=np.concatenate([s.E0T for s in states]),
        zeta_T=zeta,
    )


def simulate_outer(config: ModelConfig, seed: int, K: int, start: int = 0, threads=None) -> OuterState:
    """Simulate outer paths ``start .. start + K - 1`` up to T."""
    if K < 1:
        raise DomainError("K must be >= 1")
    parts = ordered_map(
        lambda ab: _outer_chunk(config, seed, start + ab[0], start + ab[1]),
        chunks(K, _ROWS_PER_CHUNK),
        threads,
    )
    return _concat(parts)


def _inner_components(config: ModelConfig):
    comps = ("dW", "Wt", "dZ")
    return comps + ("Zt",) if config.vov == "rough" else comps


def _inner_law(config: ModelConfig) -> IncrementLaw:
    H_vov = config.rough.H_vov if config.vov == "rough" else None
    return IncrementLaw(config.grid.dt, config.corr.matrix, config.H, H_vov, _inner_components(config))


def _inner_gamma(config: ModelConfig, outer: OuterState, comps, M: int) -> np.ndarray:
    """Gamma at the left points ``T, u_1, .., u_{n-1}``, time-major ``(n, rows)``."""
    g = config.grid
    n = g.n
    gamma_T = np.repeat(outer.gamma_T, M)
    if config.vov == "cir":
        return cir_euler_time_major(config.cir, comps["dZ"], g.dt, gamma_T)[:n]
    rv = config.rough
    rows = gamma_T.size
    Y = hybrid_sum(np.ones((n, rows)), comps["dZ"], comps["Zt"], g.dt, rv.H_vov, time_major=True)
    zeta = np.repeat(outer.zeta_T, M, axis=0).T
    left = np.empty((n, rows))
    left[0] = gamma_T
    left[1:] = rough_gamma_from_tbss(
        zeta[: n - 1], Y[: n - 1], g.tau[: n - 1, None], rv.nu, rv.H_vov
    )
    return left


def inner_factors(config: ModelConfig, outer: OuterState, seed: int, M: int) -> np.ndarray:
    """E_{T,u_j}(u_j) for M inner paths per outer path, shape ``(len(outer), M, n)``."""
    g = config.grid
    law = _inner_law(config)
    xi = np.concatenate(
        [path_rng(seed, STREAM_INNER, i).standard_normal((law.dim, g.n, M)) for i in outer.index],
        axis=2,
    )
    comps = law.transform(xi)
    del xi
    left = _inner_gamma(config, outer, comps, M)
    np.sqrt(left, out=left)
    X = hybrid_sum(left, comps["dW"], comps["Wt"], g.dt, config.H, time_major=True)
    np.multiply(X, 2.0, out=X)
    np.exp(X, out=X)
    return X.reshape(g.n, len(outer), M).transpose(1, 2, 0)


def simulate_inner(
    config: ModelConfig, outer: OuterState, seed: int, M: int, threads=None, return_se: bool = False
):
    """Inner Monte Carlo estimate of ``h_T(u_j)`` for every outer path.

    The M inner paths of outer path ``i`` come from the stream keyed by
    ``(seed, inner, outer.index[i])``, independent of how paths are batched.

    Returns
    -------
    h_hat : ndarray, shape (len(outer), n)
    se : ndarray, shape (len(outer), n)
        Standard errors of ``h_hat``; only when ``return_se``.
    """
    if M < 1:
        raise DomainError("M must be >= 1")
    per_chunk = max(1, _ROWS_PER_CHUNK // M)

    def work(ab):
        E = inner_factors(config, outer.subset(slice(*ab)), seed, M)
        mean = E.mean(axis=1)
        if not return_se:
            return mean, None
        sd = E.std(axis=1, ddof=1) if M > 1 else np.full_like(mean, np.nan)
        return mean, sd / math.sqrt(M)

    parts = ordered_map(work, chunks(len(outer), per_chunk), threads)
    h_hat = np.concatenate([p[0] for p in parts])
    if return_se:
        return h_hat, np.concatenate([p[1] for p in parts])
    return h_hat


def _h0_chunk(config: ModelConfig, seed: int, start: int, stop: int) -> np.ndarray:
    g = config.grid
    n_T, n = g.n_outer, g.n
    n_tot = n_T + n
    H_vov = config.rough.H_vov if config.vov == "rough" else None
    batch = generate_batch(
        seed, stop - start, n_tot, g.dt, config.H, config.factor, H_vov=H_vov, stream=STREAM_H0, start=start
    )
    if config.vov == "cir":
        gamma = simulate_cir(config.cir, batch.dZ, g.dt)
    else:
        gamma, _ = simulate_rough_vov(config.rough, batch.dZ, batch.Zt, g.dt, g.T)
    X = hybrid_sum(np.sqrt(gamma[:, :n_tot]), batch.dW, batch.Wt, g.dt, config.H)
    return np.exp(2.0 * X[:, n_T:])


def simulate_h0(config: ModelConfig, seed: int, K: int, threads=None):
    """Direct Monte Carlo of ``h_0(u_j) = E[E_{0,u_j}(u_j)]`` on full paths.

    Returns ``(h0, se)``. Uses its own stream, independent of the outer paths.
    """
    parts = ordered_map(
        lambda ab: _h0_chunk(config, seed, *ab), chunks(K, _ROWS_PER_CHUNK // 4), threads
    )
    E = np.concatenate(parts)
    return E.mean(axis=0), E.std(axis=0, ddof=1) / math.sqrt(K)


def estimate_h0(E0T, hT) -> np.ndarray:
    """h_0(u_j) = mean over paths of ``E_{0,T}(u_j) h_T(u_j)``."""
    E0T = np.atleast_2d(E0T)
    hT = np.atleast_2d(hT)
    if E0T.shape != hT.shape:
        raise DomainError("E0T and hT must have the same shape")
    return (E0T * hT).mean(axis=0)


def assemble_forward_curve(xi0, h0, E0T, hT) -> np.ndarray:
    """xi_T(u_j) = xi_0(u_j) E_{0,T}(u_j) h_T(u_j) / h_0(u_j)."""
    xi0, h0, E0T, hT = (np.asarray(a, dtype=float) for a in (xi0, h0, E0T, hT))
    for name, a in (("xi0", xi0), ("h0", h0), ("E0T", E0T), ("hT", hT)):
        if not np.all(a > 0):
            raise DomainError(f"{name} must be strictly positive")
    return xi0 * E0T * hT / h0
