"""Seedable Gaussian drivers: correlated Brownian increments and hybrid-scheme pairs.

Every simulated path owns an independent random stream derived from
``(seed, stream, path index)``, so any subset of paths can be regenerated
alone, in any order, and batches can be assembled in parallel.

The per-step Gaussian vector is built from three correlated Brownian
motions ``(B, W, Z)`` and, optionally, the power-kernel Wiener integrals

    Wt = int_0^dt (dt - s)^(H - 1/2) dW_s,
    Zt = int_0^dt (dt - s)^(H' - 1/2) dZ_s,

whose joint covariance with the increments is known in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, NotPositiveDefinite

# stream identifiers; keep them stable, they are part of the reproducibility contract
STREAM_OUTER = 0
STREAM_INNER = 1
STREAM_H0 = 2
STREAM_SAMPLE = 3
STREAM_FOREST = 4

_DRIVER = {"dB": 0, "dW": 1, "dZ": 2, "Wt": 1, "Zt": 2}


@dataclass(frozen=True)
class CorrelationSpec:
    """Pairwise correlations of the price, volatility and vol-of-vol drivers.

    Parameters
    ----------
    rho : float
        corr(B, W), price against volatility.
    rho_S : float
        corr(B, Z), price against vol-of-vol.
    rho_V : float
        corr(W, Z), volatility against vol-of-vol.
    """

    rho: float = 0.0
    rho_S: float = 0.0
    rho_V: float = 0.0

    def __post_init__(self):
        for name in ("rho", "rho_S", "rho_V"):
            value = getattr(self, name)
            if not -1.0 < value < 1.0:
                raise DomainError(f"{name}={value} must lie in (-1, 1)")

    @property
    def matrix(self) -> np.ndarray:
        r, rs, rv = self.rho, self.rho_S, self.rho_V
        return np.array([[1.0, r, rs], [r, 1.0, rv], [rs, rv, 1.0]])

    @property
    def determinant(self) -> float:
        r, rs, rv = self.rho, self.rho_S, self.rho_V
        return 1.0 - r * r - rs * rs - rv * rv + 2.0 * r * rs * rv


def build_correlation(spec: CorrelationSpec) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T`` the (B, W, Z) correlation matrix."""
    det = spec.determinant
    if det <= 0.0:
        raise NotPositiveDefinite(
            f"correlation matrix has determinant {det:.6g} <= 0 "
            f"(rho={spec.rho}, rho_S={spec.rho_S}, rho_V={spec.rho_V})"
        )
    return np.linalg.cholesky(spec.matrix)


def path_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent generator for one path of one stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.SFC64(ss))


def _moment(a: float, b: float, dt: float) -> float:
    # int_0^dt s^a s^b ds
    p = a + b + 1.0
    return dt**p / p


def increment_covariance(
    dt: float,
    corr: np.ndarray,
    H: float,
    H_vov: Optional[float] = None,
    components: Sequence[str] = ("dB", "dW", "dZ", "Wt"),
) -> np.ndarray:
    """Covariance of one step of the requested components.

    ``corr`` is the 3x3 (B, W, Z) correlation matrix. Power integrals use
    exponent ``H - 1/2`` for ``Wt`` and ``H_vov - 1/2`` for ``Zt``.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    powers = {"dB": 0.0, "dW": 0.0, "dZ": 0.0, "Wt": H - 0.5}
    if "Zt" in components:
        if H_vov is None:
            raise DomainError("H_vov is required for the Zt component")
        powers["Zt"] = H_vov - 0.5
    n = len(components)
    cov = np.empty((n, n))
    for i, ci in enumerate(components):
        for j, cj in enumerate(components):
            cov[i, j] = corr[_DRIVER[ci], _DRIVER[cj]] * _moment(powers[ci], powers[cj], dt)
    return cov


def psd_cholesky(cov: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Cholesky factor tolerating exactly degenerate directions.

    A pivot below ``rtol * cov[j, j]`` is treated as zero, which is the case
    for ``Wt == dW`` when ``H = 1/2``.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    L = np.zeros_like(cov)
    for j in range(n):
        d = cov[j, j] - L[j, :j] @ L[j, :j]
        if d <= rtol * cov[j, j]:
            if d < -1e-8 * max(cov[j, j], 1e-300):
                raise NotPositiveDefinite("covariance is not positive semi-definite")
            continue
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            L[i, j] = (cov[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


class IncrementLaw:
    """Exact one-step law of a set of Gaussian components.

    Parameters
    ----------
    dt : float
        Step size in years.
    corr : ndarray
        3x3 (B, W, Z) correlation matrix.
    H, H_vov : float
        Hurst exponents attached to ``Wt`` and ``Zt``.
    components : sequence of str
        Subset of ``("dB", "dW", "dZ", "Wt", "Zt")``.
    """

    def __init__(self, dt, corr, H, H_vov=None, components=("dB", "dW", "dZ", "Wt")):
        self.dt = float(dt)
        self.components = tuple(components)
        self.cov = increment_covariance(self.dt, np.asarray(corr), H, H_vov, self.components)
        self.factor = psd_cholesky(self.cov)

    @property
    def dim(self) -> int:
        return len(self.components)

    def transform(self, xi: np.ndarray) -> dict:
        """Map iid normals of shape ``(dim, ...)`` to named correlated components."""
        out = {}
        L = self.factor
        for k, name in enumerate(self.components):
            acc = None
            for j in range(k + 1):
                if L[k, j] == 0.0:
                    continue
                term = L[k, j] * xi[j]
                acc = term if acc is None else acc + term
            out[name] = acc if acc is not None else np.zeros(xi.shape[1:])
        return out

    def sample(self, rng: np.random.Generator, n_paths: int, n_steps: int) -> dict:
        return self.transform(rng.standard_normal((self.dim, n_paths, n_steps)))


@dataclass
class PathBatch:
    """Per-path, per-step Gaussian drivers, arrays of shape ``(n_paths, n_steps)``."""

    dt: float
    dB: np.ndarray
    dW: np.ndarray
    dZ: np.ndarray
    Wt: np.ndarray
    Zt: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def n_steps(self) -> int:
        return self.dW.shape[1]


def per_path_normals(seed: int, stream: int, indices: Iterable[int], dim: int, n_steps: int) -> np.ndarray:
    """Stack ``(dim, n_steps)`` normal draws of each path into ``(dim, n_paths, n_steps)``."""
    draws = [path_rng(seed, stream, i).standard_normal((dim, n_steps)) for i in indices]
    if not draws:
        return np.empty((dim, 0, n_steps))
    return np.ascontiguousarray(np.stack(draws, axis=1))


def generate_batch(
    seed: int,
    n_paths: int,
    n_steps: int,
    dt: float,
    H: float,
    factor: np.ndarray,
    *,
    H_vov: Optional[float] = None,
    stream: int = STREAM_OUTER,
    start: int = 0,
) -> PathBatch:
    """Generate paths ``start, ..., start + n_paths - 1`` of a stream.

    Path ``i`` depends on ``(seed, stream, i)`` only, so
    ``generate_batch(..., start=s)`` reproduces rows of any larger batch.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if not 0.0 < H <= 0.5:
        raise DomainError("H must lie in (0, 1/2]")
    components = ("dB", "dW", "dZ", "Wt") + (("Zt",) if H_vov is not None else ())
    law = IncrementLaw(dt, factor @ factor.T, H, H_vov, components)
    xi = per_path_normals(seed, stream, range(start, start + n_paths), law.dim, n_steps)
    c = law.transform(xi)
    return PathBatch(dt=dt, dB=c["dB"], dW=c["dW"], dZ=c["dZ"], Wt=c["Wt"], Zt=c.get("Zt"))
