"""Particle state and the counter-based Gaussian noise source.

Every random draw in the package is a pure function of
``(seed, stream, step, index, position)`` computed with the Philox-4x32-10
block cipher, so a trajectory never depends on how particles are split
across workers or in which order they are visited.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Stream",
    "NoiseSource",
    "ParticleEnsemble",
    "GaussianInit",
    "PointCloudInit",
    "NonFiniteError",
    "philox4x32",
    "init_ensemble",
    "gaussian_noise",
    "second_moment",
    "check_finite",
]


class Stream:
    """Stream tags; each consumer of randomness owns one."""

    NOISE = 1
    INIT = 2
    BATCH = 3
    PROBE = 4
    JITTER = 5
    DATA = 6


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up in particle state or a drift."""

    def __init__(self, what: str, step: int | None = None, particle: int | None = None):
        self.step = step
        self.particle = particle
        where = []
        if step is not None:
            where.append(f"step {step}")
        if particle is not None:
            where.append(f"particle {particle}")
        suffix = f" at {', '.join(where)}" if where else ""
        super().__init__(f"non-finite value in {what}{suffix}")


def check_finite(arr: np.ndarray, what: str, step: int | None = None) -> None:
    """Abort with the first offending particle index if ``arr`` has NaN/Inf."""
    arr = np.asarray(arr)
    if np.all(np.isfinite(arr)):
        return
    bad = np.argwhere(~np.isfinite(arr))[0]
    particle = int(bad[0]) if arr.ndim >= 1 else None
    raise NonFiniteError(what, step=step, particle=particle)


# Philox-4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Vectorised Philox-4x32 bijection.

    ``counter`` is a sequence of four broadcastable uint32 arrays, ``key`` a
    pair of Python ints. Returns four uint64 arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
    return c0, c1, c2, c3


_TWO_M53 = 2.0**-53


def _to_unit(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two 32-bit words -> float64 uniform on [0, 1) with 53 random bits."""
    hi = (a >> np.uint64(5)).astype(np.float64)
    lo = (b >> np.uint64(6)).astype(np.float64)
    return (hi * 67108864.0 + lo) * _TWO_M53


@dataclass(frozen=True)
class NoiseSource:
    """Pure map ``(seed, stream, step, index, position) -> random numbers``."""

    seed: int

    @property
    def key(self) -> tuple[int, int]:
        s = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        return s & 0xFFFFFFFF, s >> 32

    def normals(self, k: int, rows, d: int, stream: int = Stream.NOISE) -> np.ndarray:
        """Standard normals for each row index in ``rows`` (int N or index array).

        Coordinate ``j`` of row ``i`` uses counter ``(j // 2, i, k, stream)``;
        the two Box-Muller outputs of a counter fill coordinates ``2p`` and
        ``2p + 1``, so values do not depend on ``d`` or on the other rows.
        """
        rows = np.arange(rows) if np.isscalar(rows) else np.asarray(rows)
        pairs = (d + 1) // 2
        w = philox4x32(
            (np.arange(pairs, dtype=np.uint64)[None, :], rows.astype(np.uint64)[:, None], k, stream),
            self.key,
        )
        u1 = _to_unit(w[0], w[1])
        u2 = _to_unit(w[2], w[3])
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = 2.0 * np.pi * u2
        out = np.empty((rows.shape[0], 2 * pairs))
        out[:, 0::2] = radius * np.cos(angle)
        out[:, 1::2] = radius * np.sin(angle)
        return out[:, :d]

    def uniforms(self, k: int, count: int, sub: int = 0, stream: int = Stream.BATCH) -> np.ndarray:
        """``count`` uniforms on [0, 1) from counters ``(t, sub, k, stream)``."""
        w = philox4x32((np.arange(count, dtype=np.uint64), sub, k, stream), self.key)
        return _to_unit(w[0], w[1])


def gaussian_noise(source: NoiseSource, k: int, i: int, d: int, stream: int = Stream.NOISE) -> np.ndarray:
    """The noise vector of particle ``i`` at step ``k``."""
    if k < 0 or i < 0:
        raise ValueError("step and particle index must be nonnegative")
    return source.normals(k, np.array([i]), d, stream)[0]


@dataclass(frozen=True)
class GaussianInit:
    mean: float = 0.0
    std: float = 1.0


@dataclass(frozen=True)
class PointCloudInit:
    points: np.ndarray


InitSpec = Union[GaussianInit, PointCloudInit]


@dataclass
class ParticleEnsemble:
    """N particles in R^d, one per row, plus the step counter."""

    positions: np.ndarray
    step: int = 0
    _: None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] < 1:
            raise ValueError(f"positions must be a nonempty N x d matrix, got shape {pos.shape}")
        check_finite(pos, "particle positions", step=self.step)
        pos.setflags(write=False)
        self.positions = pos

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def replace(self, positions: np.ndarray, step: int) -> "ParticleEnsemble":
        return ParticleEnsemble(positions, step)


def init_ensemble(N: int, d: int, init: InitSpec, seed: int) -> ParticleEnsemble:
    if N < 1 or d < 1:
        raise ValueError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    if isinstance(init, PointCloudInit):
        pts = np.asarray(init.points, dtype=np.float64)
        if pts.shape != (N, d):
            raise ValueError(f"point cloud has shape {pts.shape}, expected {(N, d)}")
        return ParticleEnsemble(pts.copy(), 0)
    if init.std < 0:
        raise ValueError("gaussian init needs std >= 0")
    z = NoiseSource(seed).normals(0, N, d, Stream.INIT)
    return ParticleEnsemble(init.mean + init.std * z, 0)


def second_moment(e: ParticleEnsemble | np.ndarray) -> float:
    """(1/N) sum_i ||X^i||^2."""
    pos = e.positions if isinstance(e, ParticleEnsemble) else np.asarray(e)
    return float(np.mean(np.sum(pos * pos, axis=1)))
