"""Exact simulation of fractional Brownian motion increments on uniform grids.

Hosking's method (Durbin-Levinson recursion) is the production generator;
the Cholesky factorisation of the increment covariance is kept as an
independent oracle.  Components are independent, each drawing from its own
child stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, NumericalFailure
from .rng import RngStream

# Innovation variances below this fraction of the marginal variance mean the
# recursion has run out of precision.
INNOVATION_FLOOR = 1e-14
# Above this many steps the blocked factor (O(n^2) memory) is not cached and
# batches fall back to the streaming recursion.
MAX_FACTOR_STEPS = 8192
_BLOCK = 256


def _check_hurst(hurst):
    if not 0.0 < hurst < 1.0:
        raise DomainError(f"Hurst index must lie in (0, 1), got {hurst}")


def fbm_covariance(s, t, hurst):
    """E[X_s X_t] for one scalar fBM component."""
    _check_hurst(hurst)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("times must be nonnegative")
    h2 = 2.0 * hurst
    out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def increment_autocovariance(lag, mesh, hurst):
    """Covariance of two increments ``lag`` steps apart on a grid of ``mesh``."""
    _check_hurst(hurst)
    if mesh <= 0:
        raise DomainError("mesh must be positive")
    k = np.abs(np.asarray(lag, dtype=float))
    h2 = 2.0 * hurst
    out = 0.5 * mesh**h2 * ((k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
    return float(out) if out.ndim == 0 else out


def increment_covariance_matrix(n, mesh, hurst):
    """The n x n Toeplitz covariance matrix of consecutive increments."""
    gamma = increment_autocovariance(np.arange(n), mesh, hurst)
    idx = np.arange(n)
    return np.asarray(gamma)[np.abs(idx[:, None] - idx[None, :])]


@dataclass(frozen=True)
class FbmSpec:
    hurst: float
    horizon: float = 1.0
    n_steps: int = 64
    n_components: int = 1

    def __post_init__(self):
        _check_hurst(self.hurst)
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError("n_steps must be a positive integer")
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise DomainError("n_components must be a positive integer")

    @property
    def mesh(self) -> float:
        return self.horizon / self.n_steps


@dataclass
class IncrementGrid:
    """Driving-noise increments, shape ``(components, steps)``."""

    mesh: float
    increments: np.ndarray

    def __post_init__(self):
        self.increments = np.atleast_2d(np.asarray(self.increments, dtype=float))

    @property
    def n_components(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.mesh * self.n_steps

    def times(self) -> np.ndarray:
        return self.mesh * np.arange(self.n_steps + 1)

    def path(self) -> np.ndarray:
        """Path values at grid times, starting from zero; shape ``(d, n + 1)``."""
        d = self.n_components
        return np.concatenate([np.zeros((d, 1)), np.cumsum(self.increments, axis=1)], axis=1)


def durbin_levinson(gamma):
    """Iterate the Durbin-Levinson recursion for autocovariances ``gamma``.

    Yields ``(k, phi, v)`` where ``phi[j - 1]`` is the coefficient of the
    increment ``j`` steps back in the best linear predictor of increment
    ``k``, and ``v`` is the innovation variance.
    """
    gamma = np.asarray(gamma, dtype=float)
    v = gamma[0]
    phi = np.zeros(0)
    yield 0, phi, v
    for k in range(1, len(gamma)):
        a = (gamma[k] - phi @ gamma[k - 1 : 0 : -1]) / v
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        v = v * (1.0 - a * a)
        if v <= INNOVATION_FLOOR * gamma[0]:
            raise NumericalFailure(
                f"innovation variance {v:.3e} at step {k} is below the precision floor"
            )
        yield k, phi, v


def _unit_gamma(n, hurst):
    return increment_autocovariance(np.arange(n), 1.0, hurst)


def _hosking_stream(z, hurst):
    """Hosking recursion for unit mesh on one normal vector; O(n) memory."""
    n = len(z)
    x = np.empty(n)
    for k, phi, v in durbin_levinson(_unit_gamma(n, hurst)):
        x[k] = phi @ x[k - 1 :: -1] + np.sqrt(v) * z[k] if k else np.sqrt(v) * z[0]
    return x


def _component_normals(streams, n_components, n):
    """Normals with shape ``(paths, components, n)``; one child stream each."""
    out = np.empty((len(streams), n_components, n))
    for p, stream in enumerate(streams):
        for c in range(n_components):
            out[p, c] = stream.child(c).normals(n)
    return out


def hosking_sample(spec: FbmSpec, rng: RngStream) -> IncrementGrid:
    """One exact sample via the sequential Hosking recursion."""
    z = _component_normals([rng], spec.n_components, spec.n_steps)[0]
    scale = spec.mesh**spec.hurst
    x = np.stack([_hosking_stream(zc, spec.hurst) for zc in z]) * scale
    return IncrementGrid(spec.mesh, x)


class _HoskingFactor:
    """The Hosking recursion written as a unit lower-triangular system.

    Row ``k`` holds ``-phi`` (reversed) left of the diagonal, so that
    ``U x = sigma * z`` is exactly the recursion.  Rows are stored in
    blocks, which lets a batch of paths be advanced with matrix products.
    """

    def __init__(self, n, hurst, block=_BLOCK):
        self.n = n
        self.sigma = np.empty(n)
        self.blocks = []
        rows = None
        for k, phi, v in durbin_levinson(_unit_gamma(n, hurst)):
            self.sigma[k] = np.sqrt(v)
            r0 = (k // block) * block
            if k == r0:
                r1 = min(r0 + block, n)
                rows = np.zeros((r1 - r0, r1))
                self.blocks.append((r0, r1, rows))
            rows[k - r0, :k] = -phi[::-1]
            rows[k - r0, k] = 1.0

    def apply(self, z):
        """Solve for increments given normals ``z`` of shape ``(n, paths)``."""
        x = np.empty_like(z)
        for r0, r1, rows in self.blocks:
            rhs = self.sigma[r0:r1, None] * z[r0:r1]
            if r0:
                rhs -= rows[:, :r0] @ x[:r0]
            x[r0:r1] = solve_triangular(
                rows[:, r0:r1], rhs, lower=True, unit_diagonal=True, check_finite=False
            )
        return x


@lru_cache(maxsize=8)
def _hosking_factor(n, hurst):
    return _HoskingFactor(n, hurst)


def _hosking_columns(z, hurst):
    """Unit-mesh Hosking increments for the columns of ``z`` (shape ``(n, m)``)."""
    _check_hurst(hurst)
    n = z.shape[0]
    if n <= MAX_FACTOR_STEPS:
        return _hosking_factor(n, float(hurst)).apply(z)
    x = np.empty_like(z)
    for k, phi, v in durbin_levinson(_unit_gamma(n, hurst)):
        x[k] = np.sqrt(v) * z[k]
        if k:
            x[k] += phi @ x[k - 1 :: -1]
    return x


def hosking_transform(z, mesh, hurst):
    """Map standard normals (rows of length n) to fBM increments of ``mesh``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return _hosking_columns(z.T.copy(), hurst).T * mesh**hurst


def hosking_batch(spec: FbmSpec, streams) -> np.ndarray:
    """Hosking samples for many streams at once; shape ``(paths, d, n)``.

    Path ``p`` is identical (up to rounding of the blocked solve) to
    ``hosking_sample(spec, streams[p])``.
    """
    z = _component_normals(streams, spec.n_components, spec.n_steps)
    P, d, n = z.shape
    cols = z.reshape(P * d, n).T.copy()
    x = _hosking_columns(cols, spec.hurst) * spec.mesh**spec.hurst
    return x.T.reshape(P, d, n)


def cholesky_factor(n, mesh, hurst):
    """Lower-triangular L with L L^T equal to the increment covariance."""
    gamma = increment_covariance_matrix(n, mesh, hurst)
    try:
        return np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("increment covariance is not numerically positive definite") from exc


def cholesky_sample(spec: FbmSpec, rng: RngStream) -> IncrementGrid:
    """One exact sample as ``L z``; O(n^2) memory, used as an oracle."""
    L = cholesky_factor(spec.n_steps, spec.mesh, spec.hurst)
    z = _component_normals([rng], spec.n_components, spec.n_steps)[0]
    return IncrementGrid(spec.mesh, z @ L.T)


def cholesky_transform(z, mesh, hurst):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return z @ cholesky_factor(z.shape[1], mesh, hurst).T


def cholesky_batch(spec: FbmSpec, streams) -> np.ndarray:
    L = cholesky_factor(spec.n_steps, spec.mesh, spec.hurst)
    return _component_normals(streams, spec.n_components, spec.n_steps) @ L.T


def _prime_factors(m):
    out, p = [], 2
    while p * p <= m:
        while m % p == 0:
            out.append(p)
            m //= p
        p += 1
    if m > 1:
        out.append(m)
    return out


def coarsen_increments(x, factor):
    """Sum consecutive blocks of ``factor`` increments along the last axis.

    Blocks are reduced one prime factor at a time, left to right, so that
    coarsening by ``M`` twice is bit-identical to coarsening by ``M**2``
    whenever ``M`` is a prime power (in particular for ``M = 2``).
    """
    x = np.asarray(x, dtype=float)
    factor = int(factor)
    if factor < 1:
        raise DomainError("coarsening factor must be a positive integer")
    if x.shape[-1] % factor:
        raise DomainError(f"{x.shape[-1]} steps are not divisible by {factor}")
    for p in _prime_factors(factor):
        blocks = x.reshape(*x.shape[:-1], -1, p)
        s = blocks[..., 0].copy()
        for j in range(1, p):
            s += blocks[..., j]
        x = s
    return x


def coarsen(grid: IncrementGrid, factor: int) -> IncrementGrid:
    return IncrementGrid(grid.mesh * factor, coarsen_increments(grid.increments, factor))
