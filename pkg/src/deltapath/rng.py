"""Deterministic, counter-based random streams over the unit hypercube.

Every sample drawn anywhere in the renderer is a pure function of
(seed, pixel, frame, sample_index, dimension).  Two independently
constructed streams with the same key replay the identical sequence,
which is what keeps the paired scene traversals correlated until their
paths diverge.

Mixing function (stable contract, golden tests rely on it):
    h = splitmix64(seed)
    h = splitmix64(h ^ px); h = splitmix64(h ^ py)
    h = splitmix64(h ^ frame); h = splitmix64(h ^ sample_index)
    u(dim) = (splitmix64(h ^ dim) >> 11) * 2^-53        in [0, 1)

Dimension layout used by the path integrators (6 dims per bounce):
    0, 1                pixel jitter (reserved even when jitter is off)
    2 + 6*b + 0         light selection at bounce b
    2 + 6*b + 1, +2     point on the selected light
    2 + 6*b + 3, +4     BSDF direction
    2 + 6*b + 5         russian roulette
The fixed per-bounce budget keeps the static and dynamic traversals
aligned even when one of them terminates earlier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

#: Dimensions reserved per path vertex; see module docstring for layout.
DIMS_PER_BOUNCE = 6
DIM_BOUNCE_BASE = 2

#: Hard cap on the dimension counter.  Hitting it indicates a runaway path.
DEFAULT_DIM_CAP = 1024


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a python int (64-bit wraparound)."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MUL1) & _MASK64
    x ^= x >> 27
    x = (x * _MUL2) & _MASK64
    x ^= x >> 31
    return x


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer on a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MUL1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MUL2)
    x ^= x >> np.uint64(31)
    return x


def stream_prefix(seed: int, px: int, py: int, frame: int, sample_index: int) -> int:
    """Hash the stream key down to a 64-bit prefix."""
    h = mix64(seed)
    h = mix64(h ^ (px & _MASK64))
    h = mix64(h ^ (py & _MASK64))
    h = mix64(h ^ (frame & _MASK64))
    h = mix64(h ^ (sample_index & _MASK64))
    return h


def stream_prefix_array(seed: int, px: np.ndarray, py: np.ndarray,
                        frame: int, sample_index: np.ndarray) -> np.ndarray:
    """Vectorized `stream_prefix` over lanes of (px, py, sample_index)."""
    h = mix64_array(np.asarray(px, dtype=np.uint64) ^ np.uint64(mix64(seed)))
    h = mix64_array(h ^ np.asarray(py, dtype=np.uint64))
    h = mix64_array(h ^ np.uint64(frame & _MASK64))
    h = mix64_array(h ^ np.asarray(sample_index, dtype=np.uint64))
    return h


def uniform_at(prefix: int, dim: int) -> float:
    """Unit float for one (prefix, dimension) pair; always in [0, 1)."""
    return (mix64(prefix ^ (dim & _MASK64)) >> 11) * 2.0 ** -53


def uniform_at_array(prefix: np.ndarray, dim: int) -> np.ndarray:
    """Vectorized `uniform_at` for a whole lane batch at one dimension."""
    h = mix64_array(prefix ^ np.uint64(dim))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass(frozen=True)
class StreamKey:
    """Identity of one random stream: pixel, frame and sample index."""

    px: int
    py: int
    frame: int = 0
    sample_index: int = 0
    seed: int = 0

    def prefix(self) -> int:
        return stream_prefix(self.seed, self.px, self.py, self.frame, self.sample_index)


@dataclass
class RandomStream:
    """Sequential view over one keyed stream.

    Value-like: forks are independent counters over the same underlying
    sequence, so two traversals can each replay u_0, u_1, ... in lockstep.
    """

    key: StreamKey
    dim: int = 0
    dim_cap: int = DEFAULT_DIM_CAP
    _prefix: int = field(init=False, repr=False)

    def __post_init__(self):
        self._prefix = self.key.prefix()

    @property
    def prefix(self) -> int:
        """64-bit key hash; all draws are pure functions of (prefix, dim)."""
        return self._prefix

    def next_1d(self) -> float:
        if self.dim >= self.dim_cap:
            raise RuntimeError(
                f"random stream for {self.key} exceeded its dimension cap "
                f"({self.dim_cap}); this indicates a runaway path")
        u = uniform_at(self._prefix, self.dim)
        self.dim += 1
        return u

    def next_2d(self) -> tuple[float, float]:
        return self.next_1d(), self.next_1d()

    def at(self, dim: int) -> float:
        """Random-access draw; does not advance the counter."""
        if dim >= self.dim_cap:
            raise RuntimeError(
                f"dimension {dim} beyond cap {self.dim_cap} for {self.key}")
        return uniform_at(self._prefix, dim)

    def fork(self) -> "RandomStream":
        """Independent counter over the same underlying sequence."""
        return RandomStream(self.key, dim=self.dim, dim_cap=self.dim_cap)


def fork_for_scene(stream: RandomStream, scene_variant: str = "static") -> RandomStream:
    """Fork a stream for one of the two correlated scene traversals.

    Both forks replay the identical sequence by design; the argument only
    documents intent at call sites.
    """
    if scene_variant not in ("static", "dynamic"):
        raise ValueError(f"unknown scene variant {scene_variant!r}")
    return stream.fork()


def bounce_dim(bounce: int, offset: int) -> int:
    """Absolute dimension of draw `offset` (0..5) at a path vertex."""
    return DIM_BOUNCE_BASE + DIMS_PER_BOUNCE * bounce + offset
