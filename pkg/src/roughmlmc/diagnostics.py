"""Path diagnostics: p-variation, Hoelder seminorms and greedy partition counts.

Everything is exact on the given grid: suprema range over dissections
whose points are grid times.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class DiscretePath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        self.values = v[:, None] if v.ndim == 1 else v
        if self.times.ndim != 1 or len(self.times) != len(self.values):
            raise DomainError("times and values must have the same length")
        if len(self.times) == 0:
            raise DomainError("a path needs at least one point")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def sub(self, i, j):
        """Restriction to grid indices ``i..j`` inclusive."""
        return DiscretePath(self.times[i : j + 1], self.values[i : j + 1])


def _distances(values):
    diff = values[:, None, :] - values[None, :, :]
    return np.linalg.norm(diff, axis=-1)


def _pvar_power(values, p):
    """``sup over dissections of sum |x_{t_k} - x_{t_{k-1}}|^p`` by dynamic programming."""
    n = len(values)
    if n < 2:
        return 0.0
    dp = _distances(values) ** p
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + dp[:j, j])
    return float(best[-1])


def p_variation(path: DiscretePath, p) -> float:
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    return _pvar_power(path.values, p) ** (1.0 / p)


def p_variation_bruteforce(path: DiscretePath, p) -> float:
    """Enumerate all ``2^(n-2)`` dissections; only for tiny paths."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    n = len(path)
    if n > 16:
        raise DomainError("brute-force enumeration is limited to 16 points")
    if n < 2:
        return 0.0
    d = _distances(path.values) ** p
    best = 0.0
    inner = range(1, n - 1)
    for r in range(n - 1):
        for pts in itertools.combinations(inner, r):
            idx = (0, *pts, n - 1)
            best = max(best, sum(d[a, b] for a, b in zip(idx, idx[1:])))
    return best ** (1.0 / p)


def holder_norm(path: DiscretePath, exponent) -> float:
    """``max over grid pairs u < v of |x_v - x_u| / (v - u)^exponent``."""
    if not 0 < exponent <= 1:
        raise DomainError(f"Hoelder exponent must lie in (0, 1], got {exponent}")
    n = len(path)
    if n < 2:
        return 0.0
    dt = np.abs(path.times[:, None] - path.times[None, :])
    iu = np.triu_indices(n, 1)
    return float(np.max(_distances(path.values)[iu] / dt[iu] ** exponent))


def greedy_times(path: DiscretePath, p, alpha):
    """Grid indices ``tau_0 < tau_1 < ...`` of the greedy partition.

    ``tau_{i+1}`` is the first grid point ``u`` after ``tau_i`` where the
    control ``omega(tau_i, u) = ||x||_{p-var}^p`` reaches ``alpha``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    n = len(path)
    d = _distances(path.values) ** p
    taus = [0]
    i = 0
    while i < n - 1:
        # best[j] accumulates the p-variation power of the path on [tau_i, t_j]
        best = np.zeros(n - i)
        stop = None
        for j in range(1, n - i):
            best[j] = np.max(best[:j] + d[i : i + j, i + j])
            if best[j] >= alpha:
                stop = i + j
                break
        if stop is None:
            break
        taus.append(stop)
        i = stop
    return taus


def greedy_count(path: DiscretePath, p, alpha) -> int:
    """Number of greedy stopping times after the start and strictly before the end."""
    taus = greedy_times(path, p, alpha)
    return sum(1 for k in taus[1:] if k < len(path) - 1)


def read_path_csv(fh) -> DiscretePath:
    """Columns ``t, x1, x2, ...``; lines starting with ``#`` and a header row are skipped."""
    rows = []
    for line in fh:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            if rows:
                raise DomainError(f"non-numeric row in path file: {line!r}") from None
    if not rows or len(rows[0]) < 2:
        raise DomainError("path file needs a time column and at least one value column")
    data = np.array(rows)
    return DiscretePath(data[:, 0], data[:, 1:])
