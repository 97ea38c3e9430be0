"""Rough kernel, hybrid-scheme TBSS simulation and Riemann-sum exponential factors.

The truncated Brownian semi-stationary process

    X_u = int_0^u sqrt(Gamma_s) (u - s)^(H - 1/2) dW_s

is simulated on a uniform grid with the hybrid scheme (kappa = 1): the
step adjacent to the singularity uses the exact power-kernel Wiener
integral ``Wt``, the older steps use the kernel evaluated at the optimal
points ``b_k * dt``. Away from the diagonal the kernel is bounded and
Riemann sums are used instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, ShapeMismatch
from .paths import PathBatch


def kernel_g(u, s, H):
    """Rough kernel ``(u - s)^(H - 1/2)``; requires ``s < u`` elementwise."""
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s >= u):
        raise DomainError("kernel_g requires s < u")
    out = (u - s) ** (H - 0.5)
    return float(out) if out.ndim == 0 else out


def hybrid_cov(dt: float, H: float) -> np.ndarray:
    """Covariance of ``(dW, int_0^dt (dt - s)^(H - 1/2) dW_s)`` over one step."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    c = dt ** (H + 0.5) / (H + 0.5)
    return np.array([[dt, c], [c, dt ** (2 * H) / (2 * H)]])


def hybrid_b(k, alpha: float):
    """Optimal evaluation point ``b_k`` of the hybrid scheme, ``k >= 2``.

    b_k = ((k^(alpha+1) - (k-1)^(alpha+1)) / (alpha+1))^(1/alpha)
    """
    k = np.asarray(k, dtype=float)
    if np.any(k < 2):
        raise DomainError("hybrid_b requires k >= 2")
    if alpha == 0.0:
        # Brownian limit; the kernel is identically 1 so any point in [k-1, k] works
        out = k - 0.5
    else:
        a1 = alpha + 1.0
        out = ((k**a1 - (k - 1.0) ** a1) / a1) ** (1.0 / alpha)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _weights(n: int, dt: float, H: float) -> np.ndarray:
    alpha = H - 0.5
    w = np.zeros(n + 1)
    if n >= 2:
        k = np.arange(2, n + 1)
        w[2:] = (hybrid_b(k, alpha) * dt) ** alpha
    w.setflags(write=False)
    return w


def hybrid_weights(n: int, dt: float, H: float) -> np.ndarray:
    """Kernel weights ``w[k] = g(b_k dt)`` for ``k = 2..n``; entries 0 and 1 are unused zeros."""
    return _weights(int(n), float(dt), float(H))


@lru_cache(maxsize=64)
def _conv_matrix(n: int, dt: float, H: float) -> np.ndarray:
    w = _weights(n, dt, H)
    m = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    lag = i - m + 1
    mat = np.where(lag >= 2, w[np.clip(lag, 0, n)], 0.0)
    mat.setflags(write=False)
    return mat


def convolution_matrix(n: int, dt: float, H: float) -> np.ndarray:
    """``(n, n)`` matrix ``C`` with ``(a @ C)[i] = sum_{k>=2} w_k a[i - k + 1]``."""
    return _conv_matrix(int(n), float(dt), float(H))


@dataclass(frozen=True)
class RoughKernel:
    H: float
    alpha: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.H <= 0.5:
            raise DomainError("H must lie in (0, 1/2]")
        object.__setattr__(self, "alpha", self.H - 0.5)

    def __call__(self, u, s):
        return kernel_g(u, s, self.H)

    def weights(self, n, dt):
        return hybrid_weights(n, dt, self.H)


def hybrid_sum(sqrt_gamma_left, dW, Wt, dt, H, method="direct", time_major=False):
    """Hybrid-scheme values ``X(t_1..t_n)`` from left-point integrands.

    Parameters
    ----------
    sqrt_gamma_left : ndarray, shape (rows, n)
        ``sqrt(Gamma)`` at the left end of each step.
    dW, Wt : ndarray, shape (rows, n)
        Brownian increments and their paired power integrals.
    method : {"direct", "fft"}
    time_major : bool
        Inputs and output have shape ``(n, rows)`` instead.
    """
    a = sqrt_gamma_left * dW
    if time_major:
        n = a.shape[0]
        if method != "direct":
            raise ValueError("time-major layout supports the direct method only")
        return sqrt_gamma_left * Wt + convolution_matrix(n, dt, H).T @ a
    n = a.shape[-1]
    if method == "direct":
        far = a @ convolution_matrix(n, dt, H)
    elif method == "fft":
        kern = np.zeros(n)
        kern[1:] = hybrid_weights(n, dt, H)[2:]
        far = fftconvolve(a, kern[None, :], axes=-1)[..., :n]
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return sqrt_gamma_left * Wt + far


@dataclass
class TbssPath:
    """Hybrid-scheme TBSS values on ``grid[1:]``; ``E = exp(2 X)``."""

    grid: np.ndarray
    X: np.ndarray
    E: np.ndarray


def simulate_tbss(gamma_path, batch: PathBatch, H: float, t0: float = 0.0, method="direct") -> TbssPath:
    """Simulate ``X_t = int_t0^t (t - s)^(H-1/2) sqrt(Gamma_s) dW_s`` on the batch grid.

    ``gamma_path`` holds Gamma at the ``n + 1`` grid points (or at least the
    ``n`` left points) for each row of ``batch``.
    """
    gamma_path = np.asarray(gamma_path, dtype=float)
    if gamma_path.ndim == 1:
        gamma_path = np.broadcast_to(gamma_path, (batch.n_paths, gamma_path.size))
    n = batch.n_steps
    if gamma_path.shape[0] != batch.n_paths or gamma_path.shape[1] not in (n, n + 1):
        raise ShapeMismatch(
            f"gamma_path shape {gamma_path.shape} does not match batch ({batch.n_paths}, {n})"
        )
    if np.any(gamma_path < 0):
        raise DomainError("vol-of-vol must be nonnegative")
    sg = np.sqrt(gamma_path[:, :n])
    X = hybrid_sum(sg, batch.dW, batch.Wt, batch.dt, H, method=method)
    grid = t0 + batch.dt * np.arange(n + 1)
    return TbssPath(grid=grid, X=X, E=np.exp(2.0 * X))


def riemann_matrix(nodes, targets, H) -> np.ndarray:
    """``G[i, j] = (u_j - t_i)^(H - 1/2)`` for kernel nodes ``t_i`` and targets ``u_j``."""
    t = np.asarray(nodes, dtype=float)[:, None]
    u = np.asarray(targets, dtype=float)[None, :]
    return kernel_g(u, t, H)


def riemann_E(gamma_path, dW_path, p, q, targets, H, rule="mid"):
    """Riemann-sum estimate of ``E_{p,q}(u_j) = exp(2 int_p^q g_{u_j}(s) sqrt(Gamma_s) dW_s)``.

    ``dW_path`` has shape ``(rows, n)`` over a uniform grid of ``[p, q]``;
    ``gamma_path`` supplies Gamma at (at least) the ``n`` left points, which
    keeps the integrand predictable. ``rule`` picks where the deterministic
    kernel is evaluated on each step: ``"mid"`` (default) or ``"left"``.
    The midpoint removes most of the variance deficit of the left rule for
    targets just beyond ``q``.

    Returns an array of shape ``(rows, len(targets))``.
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(targets <= q):
        raise DomainError("all targets must exceed q")
    if rule not in ("mid", "left"):
        raise ValueError(f"unknown Riemann rule {rule!r}")
    dW_path = np.atleast_2d(np.asarray(dW_path, dtype=float))
    n = dW_path.shape[1]
    gamma_path = np.asarray(gamma_path, dtype=float)
    if gamma_path.ndim == 0:
        gamma_path = np.full(dW_path.shape, float(gamma_path))
    gamma_path = np.atleast_2d(gamma_path)
    if gamma_path.shape[1] < n:
        raise ShapeMismatch("gamma_path shorter than the increment path")
    if n == 0:
        return np.ones((dW_path.shape[0], targets.size))
    offset = 0.5 if rule == "mid" else 0.0
    nodes = p + (q - p) * (np.arange(n) + offset) / n
    a = np.sqrt(gamma_path[:, :n]) * dW_path
    return np.exp(2.0 * (a @ riemann_matrix(nodes, targets, H)))
