"""Riccati-ODE closed form of h_t(u, gamma) for an independent diffusive CIR vol-of-vol.

For Gamma with generator ``k (theta - x) f' + delta^2 x f'' / 2`` independent
of W,

    h_t(u, gamma) = E[exp(2 int_t^u g(u - s)^2 Gamma_s ds) | Gamma_t = gamma]
                  = exp(gamma psi(u - t) + phi(u - t)),

    psi' = 2 tau^(2H - 1) + R(psi),   phi' = F(psi),   psi(0) = phi(0) = 0,

with ``R(x) = -k x + delta^2 x^2 / 2`` and ``F(x) = k theta x``.

The forcing is singular at ``tau = 0``. Integrating in ``s = tau^(2H)``
removes the singularity exactly:

    dpsi/ds = 1/H + R(psi) tau^(1-2H) / (2H),
    dphi/ds = F(psi) tau^(1-2H) / (2H),

so a fixed-step RK4 in ``s`` keeps its order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, Nonconvergence

OVERFLOW_GUARD = 1e8


def R_func(u, k, delta):
    return -k * u + 0.5 * delta * delta * u * u


def F_func(u, k, theta):
    return k * theta * u


@dataclass
class RiccatiSolution:
    """psi and phi on ``tau_grid`` (uniform in ``s = tau^(2H)``)."""

    H: float
    k: float
    theta: float
    delta: float
    tau_grid: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    dpsi_ds: np.ndarray
    dphi_ds: np.ndarray

    def __post_init__(self):
        s = self.tau_grid ** (2 * self.H)
        self._psi_spline = CubicHermiteSpline(s, self.psi, self.dpsi_ds)
        self._phi_spline = CubicHermiteSpline(s, self.phi, self.dphi_ds)

    @property
    def horizon(self) -> float:
        return float(self.tau_grid[-1])

    def at(self, tau):
        """Interpolated ``(psi(tau), phi(tau))``."""
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < 0) or np.any(tau > self.horizon * (1 + 1e-12)):
            raise DomainError(f"tau must lie in [0, {self.horizon}]")
        s = np.minimum(tau, self.horizon) ** (2 * self.H)
        return self._psi_spline(s), self._phi_spline(s)


def solve_riccati(H, k, theta, delta, horizon, n_steps=2000) -> RiccatiSolution:
    """Solve the diffusive Riccati system on ``[0, horizon]``.

    Parameters
    ----------
    H : float
        Hurst exponent of the rough kernel, ``0 < H <= 1/2``.
    k, theta, delta : float
        Mean-reversion speed, long-run mean and diffusion of the CIR.
    horizon : float
        Largest ``tau = u - t`` needed (``T + Delta`` to also cover h_0).
    n_steps : int
        RK4 steps in the transformed variable, at least 1000.

    Raises
    ------
    Nonconvergence
        If psi or phi leaves the finite range (blow-up before ``horizon``).
    """
    if not 0.0 < H <= 0.5:
        raise DomainError("H must lie in (0, 1/2]")
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if n_steps < 1000:
        raise DomainError("n_steps must be at least 1000")

    two_h = 2.0 * H
    expo = (1.0 - two_h) / two_h  # tau^(1-2H) = s^expo

    def rhs(s, y):
        jac = s**expo / two_h if expo > 0 else 1.0 / two_h
        return np.array([1.0 / H + R_func(y[0], k, delta) * jac, F_func(y[0], k, theta) * jac])

    s_end = horizon**two_h
    h = s_end / n_steps
    s_grid = h * np.arange(n_steps + 1)
    s_grid[-1] = s_end
    y = np.zeros((n_steps + 1, 2))
    dy = np.zeros((n_steps + 1, 2))
    dy[0] = rhs(0.0, y[0])
    for i in range(n_steps):
        s, yi = s_grid[i], y[i]
        k1 = dy[i]
        k2 = rhs(s + 0.5 * h, yi + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, yi + 0.5 * h * k2)
        k4 = rhs(s + h, yi + h * k3)
        y[i + 1] = yi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y[i + 1])) or np.abs(y[i + 1]).max() > OVERFLOW_GUARD:
            raise Nonconvergence(
                f"Riccati solution blew up at tau={s_grid[i + 1] ** (1 / two_h):.6g}"
            )
        dy[i + 1] = rhs(s_grid[i + 1], y[i + 1])
    tau_grid = s_grid ** (1.0 / two_h)
    tau_grid[-1] = horizon
    return RiccatiSolution(
        H=H, k=k, theta=theta, delta=delta, tau_grid=tau_grid,
        psi=y[:, 0], phi=y[:, 1], dpsi_ds=dy[:, 0], dphi_ds=dy[:, 1],
    )


def oracle_hT(gamma, tau, sol: RiccatiSolution):
    """exp(gamma psi(tau) + phi(tau)), broadcasting ``gamma[:, None]`` against ``tau``."""
    psi, phi = sol.at(tau)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 0:
        return np.exp(gamma * psi + phi)
    return np.exp(gamma[..., None] * psi + phi)


def oracle_log_hT(gamma, tau, sol: RiccatiSolution):
    psi, phi = sol.at(tau)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 0:
        return gamma * psi + phi
    return gamma[..., None] * psi + phi
