"""Variance- and intensity-driven per-pixel sample allocation.

Pipeline for the delta pass: per-pixel statistics from the previous
frame (or a pilot pass) feed a proportional allocation, which is then
blurred with a 5-tap Gaussian, renormalized to the target mean,
floored so every 2x2 block keeps at least one sample, dithered to
integers, and finally compensated at accumulation time by dividing
sample values by the pre-quantized allocation where it fell below one.
The floor keeps statistics alive everywhere (otherwise the previous
frame feedback starves quiet regions forever) and the compensation
keeps the estimator unbiased despite fractional allocations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from . import rng
from .vecmath import luminance

#: stream purpose tag for dither draws (see rng key layout)
_KEY_DITHER = 0xD1


@dataclass
class PixelStats:
    """Per-pixel raw moments of the signed delta samples.

    Raw sums merge by plain addition, which keeps tile-parallel
    accumulation trivially deterministic.
    """

    count: np.ndarray        # (H, W)
    sum_rgb: np.ndarray      # (H, W, 3) signed sum of delta
    sum_lum: np.ndarray      # (H, W)
    sum_lum_sq: np.ndarray   # (H, W)
    sum_abs_lum: np.ndarray  # (H, W)

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "PixelStats":
        h, w = shape
        return cls(np.zeros((h, w)), np.zeros((h, w, 3)),
                   np.zeros((h, w)), np.zeros((h, w)), np.zeros((h, w)))

    def mean(self) -> np.ndarray:
        return self.sum_rgb / np.maximum(self.count, 1.0)[..., None]

    def std_lum(self) -> np.ndarray:
        """Per-pixel standard deviation of delta luminance (0 where count < 2)."""
        n = np.maximum(self.count, 1.0)
        var = self.sum_lum_sq / n - (self.sum_lum / n) ** 2
        var *= n / np.maximum(n - 1.0, 1.0)
        return np.where(self.count >= 2, np.sqrt(np.maximum(var, 0.0)), 0.0)

    def mean_abs_lum(self) -> np.ndarray:
        return self.sum_abs_lum / np.maximum(self.count, 1.0)

    def accumulate(self, pixel_index: np.ndarray, values: np.ndarray) -> None:
        """Fold flat-indexed delta samples into the sums."""
        h, w = self.count.shape
        lum = luminance(values)
        self.count += np.bincount(pixel_index, minlength=h * w).reshape(h, w)
        for c in range(3):
            self.sum_rgb[..., c] += np.bincount(
                pixel_index, weights=values[:, c], minlength=h * w).reshape(h, w)
        self.sum_lum += np.bincount(pixel_index, weights=lum,
                                    minlength=h * w).reshape(h, w)
        self.sum_lum_sq += np.bincount(pixel_index, weights=lum * lum,
                                       minlength=h * w).reshape(h, w)
        self.sum_abs_lum += np.bincount(pixel_index, weights=np.abs(lum),
                                        minlength=h * w).reshape(h, w)

    def iadd(self, other: "PixelStats") -> None:
        self.count += other.count
        self.sum_rgb += other.sum_rgb
        self.sum_lum += other.sum_lum
        self.sum_lum_sq += other.sum_lum_sq
        self.sum_abs_lum += other.sum_abs_lum


@dataclass
class SampleMap:
    """Real-valued per-pixel allocation with its target mean."""

    s: np.ndarray            # (H, W) >= 0
    target: float
    floored: np.ndarray = field(default=None)  # (H, W) bool, floor winners

    @property
    def mean(self) -> float:
        return float(self.s.mean())


def _gaussian_blur5(img: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Separable 5-tap Gaussian with reflected borders."""
    x = np.arange(-2, 3, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    out = convolve1d(img, k, axis=0, mode="reflect")
    return convolve1d(out, k, axis=1, mode="reflect")


def estimate_map(stats: PixelStats, target_spp: float, *,
                 blur: bool = True, floor: bool = True,
                 sigma: float = 1.0) -> SampleMap:
    """Allocation proportional to sigma(delta) + |delta| per pixel.

    Degenerate all-zero statistics fall back to a uniform map.  After
    the proportional step the map is blurred, renormalized to the
    target mean, floored (the strongest pixel of every 2x2 block is
    raised to one full sample) and renormalized once more over the
    non-floored pixels so the mean stays exact.
    """
    h, w = stats.count.shape
    drive = stats.std_lum() + stats.mean_abs_lum()
    total = drive.sum()
    if total <= 0.0 or not np.isfinite(total):
        s = np.full((h, w), float(target_spp))
    else:
        s = target_spp * drive / (total / drive.size)
    if blur:
        s = _gaussian_blur5(s, sigma=sigma)
    if s.sum() > 0:
        s *= target_spp * s.size / s.sum()
    floored = np.zeros((h, w), dtype=bool)
    if floor:
        # block winner: maximal allocation, ties broken by pixel index
        hpad, wpad = (h + 1) // 2 * 2, (w + 1) // 2 * 2
        sp = np.full((hpad, wpad), -1.0)
        sp[:h, :w] = s
        blocks = sp.reshape(hpad // 2, 2, wpad // 2, 2).transpose(0, 2, 1, 3)
        flat = blocks.reshape(hpad // 2, wpad // 2, 4)
        win = flat.argmax(axis=2)
        by = (np.arange(hpad // 2)[:, None] * 2 + win // 2)
        bx = (np.arange(wpad // 2)[None, :] * 2 + win % 2)
        ok = (by < h) & (bx < w)
        floored[by[ok], bx[ok]] = True
        s = s.copy()
        s[floored] = np.maximum(s[floored], 1.0)
        rest = ~floored
        rest_sum = s[rest].sum()
        want_rest = target_spp * s.size - s[floored].sum()
        if rest_sum > 0 and want_rest > 0:
            s[rest] *= want_rest / rest_sum
        elif want_rest <= 0:
            # budget below the floor: keep the floor, mean exceeds target
            s[rest] = 0.0
    return SampleMap(s=s, target=float(target_spp), floored=floored)


@dataclass
class QuantizedSampleMap:
    counts: np.ndarray       # (H, W) int


def dither_quantize(sample_map: SampleMap, *, frame: int = 0, seed: int = 0
                    ) -> QuantizedSampleMap:
    """Unbiased integer allocation: round(s + U) with U uniform in [-1/2, 1/2).

    Implemented as floor(s + V) with V in [0, 1), which is the same
    distribution with round-half-up semantics: exact integers never
    round away and E[quantized] = s exactly.  Draws are keyed by
    (pixel, frame, seed), so a frame re-render reproduces its map.
    """
    h, w = sample_map.s.shape
    py, px = np.divmod(np.arange(h * w, dtype=np.int64), w)
    pref = rng.stream_prefix_array(seed, px, py, frame,
                                   np.full(h * w, _KEY_DITHER, dtype=np.int64))
    v = rng.uniform_at_array(pref, 0).reshape(h, w)
    counts = np.floor(sample_map.s + v).astype(np.int64)
    return QuantizedSampleMap(counts=np.maximum(counts, 0))


def boost_compensate(delta_value: np.ndarray, allocation) -> np.ndarray:
    """Divide delta samples by min(1, s): pixels rendered with a
    fractional allocation fire rarely but hit harder, keeping the
    expectation over the dither randomness unchanged."""
    s = np.asarray(allocation, dtype=np.float64)
    if np.any(s <= 0.0):
        raise ValueError("boost compensation requires positive allocations")
    scale = 1.0 / np.minimum(1.0, s)
    v = np.asarray(delta_value, dtype=np.float64)
    return v * (scale[..., None] if v.ndim == s.ndim + 1 else scale)
