"""Vol-of-vol processes: CIR (Markovian) and rough log-TBSS (non-Markovian)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .kernel import hybrid_sum, riemann_E


@dataclass(frozen=True)
class CirParams:
    """dGamma = theta (m - Gamma) dt + delta sqrt(Gamma) dZ, Gamma_0 = gamma0.

    Zero ``theta`` or ``delta`` is accepted for the degenerate test cases.
    """

    theta: float = 0.4
    m: float = 0.8125
    delta: float = 0.8
    gamma0: float = 0.05

    def __post_init__(self):
        for name in ("theta", "m", "delta", "gamma0"):
            if getattr(self, name) < 0:
                raise DomainError(f"CIR parameter {name} must be nonnegative")

    def mean(self, t):
        """Closed-form E[Gamma_t]."""
        return self.m + (self.gamma0 - self.m) * np.exp(-self.theta * np.asarray(t))


def simulate_cir(params: CirParams, dZ, dt: float, gamma_start=None) -> np.ndarray:
    """Full-truncation Euler paths of the CIR process.

    Parameters
    ----------
    dZ : ndarray, shape (rows, n)
        Brownian increments of Z.
    gamma_start : float or ndarray, optional
        Initial values per row; defaults to ``params.gamma0``.

    Returns
    -------
    ndarray, shape (rows, n + 1)
        ``max(Gamma, 0)`` at every grid point, starting value included.
    """
    dZ = np.atleast_2d(np.asarray(dZ, dtype=float))
    start = params.gamma0 if gamma_start is None else gamma_start
    return cir_euler_time_major(params, np.ascontiguousarray(dZ.T), dt, start).T


def cir_euler_time_major(params: CirParams, dZ, dt: float, gamma_start) -> np.ndarray:
    """Same scheme on time-major arrays: ``dZ`` is ``(n, rows)``, output ``(n + 1, rows)``."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    n, rows = dZ.shape
    x = np.empty(rows)
    x[:] = gamma_start
    out = np.empty((n + 1, rows))
    np.maximum(x, 0.0, out=out[0])
    tmp = np.empty(rows)
    drift_scale = params.theta * dt
    for i in range(n):
        xp = out[i]
        # x += theta*dt*(m - x+) + delta*sqrt(x+)*dZ
        np.sqrt(xp, out=tmp)
        tmp *= dZ[i]
        tmp *= params.delta
        x += tmp
        np.multiply(xp, -drift_scale, out=tmp)
        tmp += drift_scale * params.m
        x += tmp
        np.maximum(x, 0.0, out=out[i + 1])
    return out


@dataclass(frozen=True)
class RoughVovParams:
    """Gamma_s = zeta0 * I_{0,s}(s) / E[I_{0,s}(s)], I_{0,s}(u) = exp(2 sqrt(nu) int_0^s g_u dZ)."""

    nu: float = 0.02
    H_vov: float = 0.1
    zeta0: float = 0.05

    def __post_init__(self):
        if self.nu < 0:
            raise DomainError("nu must be nonnegative")
        if not 0.0 < self.H_vov <= 0.5:
            raise DomainError("H_vov must lie in (0, 1/2]")
        if self.zeta0 <= 0:
            raise DomainError("zeta0 must be positive")


def _power(x, H):
    return np.asarray(x, dtype=float) ** (2 * H) / (2 * H)


def martingale_normalizer(nu, H_vov, s):
    """E[I_{0,s}(s)] = exp(2 nu s^(2H') / (2H'))."""
    return np.exp(2.0 * nu * _power(s, H_vov))


def zeta_update(nu, H_vov, T, u, I_0T, zeta0=1.0):
    """zeta_T(u) = zeta0 * q_T(u) * I_{0,T}(u).

    q_T(u) = exp(2 nu ((u - T)^(2H') - u^(2H')) / (2H')).
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < T):
        raise DomainError("zeta_update requires u >= T")
    q = np.exp(2.0 * nu * (_power(u - T, H_vov) - _power(u, H_vov)))
    return zeta0 * q * np.asarray(I_0T)


def rough_gamma_from_tbss(zeta_curve, Y, elapsed, nu, H_vov):
    """Gamma = zeta * exp(2 sqrt(nu) Y - 2 nu elapsed^(2H')/(2H')).

    ``zeta_curve`` is the conditional-expectation curve at the same times as
    ``Y``, ``elapsed`` the time since the conditioning date.
    """
    return zeta_curve * np.exp(2.0 * np.sqrt(nu) * Y - 2.0 * nu * _power(elapsed, H_vov))


def simulate_rough_vov(params: RoughVovParams, dZ, Zt, dt: float, T: float, targets=None):
    """Rough vol-of-vol path on a uniform grid and the curve zeta_T.

    Parameters
    ----------
    dZ, Zt : ndarray, shape (rows, n)
        Z increments and their power integrals with exponent ``H_vov - 1/2``.
    T : float
        Conditioning date; must be a grid point.
    targets : array_like, optional
        Times ``u >= T`` at which to return zeta_T; defaults to the grid
        points after ``T``.

    Returns
    -------
    gamma : ndarray, shape (rows, n + 1)
    zeta_T : ndarray, shape (rows, len(targets))
    """
    dZ = np.atleast_2d(np.asarray(dZ, dtype=float))
    Zt = np.atleast_2d(np.asarray(Zt, dtype=float))
    rows, n = dZ.shape
    n_T = int(round(T / dt))
    if n_T > n:
        raise DomainError("grid does not cover T")
    grid = dt * np.arange(n + 1)
    nu, Hv, z0 = params.nu, params.H_vov, params.zeta0
    Y = hybrid_sum(np.ones((rows, n)), dZ, Zt, dt, Hv)
    gamma = np.empty((rows, n + 1))
    gamma[:, 0] = z0
    gamma[:, 1:] = rough_gamma_from_tbss(z0, Y, grid[1:], nu, Hv)
    if targets is None:
        targets = grid[n_T + 1:]
    targets = np.asarray(targets, dtype=float)
    if n_T == 0:
        zeta = np.full((rows, targets.size), z0)
    else:
        I0T = riemann_E(nu, dZ[:, :n_T], 0.0, T, targets, Hv) if nu > 0 else 1.0
        zeta = zeta_update(nu, Hv, T, targets, np.broadcast_to(I0T, (rows, targets.size)), z0)
    return gamma, zeta
