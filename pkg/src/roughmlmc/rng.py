"""Addressable random streams and Box-Muller normals.

Every stream is identified by a master seed and a tuple key such as
``(purpose, level, path, component)``.  Two streams with the same
address produce the same draws no matter which process or in which order
they are consumed, which is what makes chunked and parallel Monte Carlo
runs reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENGINES = ("philox", "mt19937")

_TWO_POW_53 = 1 << 53
_INV_TWO_POW_53 = 1.0 / _TWO_POW_53


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream.

    ``engine="philox"`` (counter based) is the default; ``"mt19937"`` gives
    a Mersenne-Twister stream for cross-checks.
    """

    seed: int
    key: tuple[int, ...] = ()
    engine: str = "philox"

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}, expected one of {ENGINES}")
        if self.seed < 0 or self.seed >= 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def child(self, *key: int) -> RngStream:
        return RngStream(self.seed, self.key + tuple(int(k) for k in key), self.engine)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        if self.engine == "philox":
            return np.random.Generator(np.random.Philox(ss))
        return np.random.Generator(np.random.MT19937(ss))

    def normals(self, n: int) -> np.ndarray:
        """First ``n`` standard normals of the stream (Box-Muller)."""
        return standard_normals(self.generator(), n)


def uniform_pairs(gen: np.random.Generator, n_pairs: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n_pairs`` of uniforms, ``u1`` in (0, 1] and ``u2`` in [0, 1).

    Both come from 53-bit integers so that ``u1`` never hits zero.
    """
    raw = gen.integers(0, _TWO_POW_53, size=2 * n_pairs, dtype=np.uint64)
    u1 = (raw[0::2] + 1.0) * _INV_TWO_POW_53
    u2 = raw[1::2] * _INV_TWO_POW_53
    return u1, u2


def box_muller(u1, u2):
    """Map uniforms ``u1`` in (0, 1], ``u2`` in [0, 1) to two independent normals."""
    r = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * np.asarray(u2)
    return r * np.cos(angle), r * np.sin(angle)


def gaussian_pair(gen: np.random.Generator) -> tuple[float, float]:
    u1, u2 = uniform_pairs(gen, 1)
    z1, z2 = box_muller(u1[0], u2[0])
    return float(z1), float(z2)


def standard_normals(gen: np.random.Generator, n: int) -> np.ndarray:
    """``n`` standard normals; each uniform pair yields a (cos, sin) pair."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    u1, u2 = uniform_pairs(gen, (n + 1) // 2)
    z1, z2 = box_muller(u1, u2)
    out = np.empty(2 * len(u1))
    out[0::2] = z1
    out[1::2] = z2
    return out[:n]
