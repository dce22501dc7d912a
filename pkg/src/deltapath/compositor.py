"""Masked hybrid compositing and image metrics.

The final frame combines three per-pixel quantities: the cached static
radiance, the mean subtractive delta and the mean additive delta.  A
binary first-hit mask gates the first two: where the primary ray lands
on a dynamic object the cache and the subtractive estimate both
describe a surface the viewer cannot see, so only the additive term
survives there.  With an exact cache the masked and unmasked composites
agree in expectation; with a learned cache the mask stops its error
from bleeding through dynamic silhouettes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import INCLUDE_DYNAMIC, Camera, Scene
from .vecmath import luminance


@dataclass
class GBuffer:
    position: np.ndarray     # (H, W, 3) first hit point
    normal: np.ndarray       # (H, W, 3)
    direction: np.ndarray    # (H, W, 3) camera ray direction
    material_id: np.ndarray  # (H, W)
    primitive_id: np.ndarray  # (H, W)
    is_dynamic: np.ndarray   # (H, W) bool
    hit: np.ndarray          # (H, W) bool


@dataclass
class FrameBuffers:
    """Accumulated per-pixel state for one rendered frame."""

    static_image: np.ndarray     # (H, W, 3) cached static radiance
    sum_additive: np.ndarray     # (H, W, 3) boosted additive sample sum
    sum_subtractive: np.ndarray  # (H, W, 3) boosted subtractive sample sum
    spp: np.ndarray              # (H, W) integer samples taken
    mask: np.ndarray             # (H, W) 1 where first hit is not dynamic
    gbuffer: GBuffer | None = None
    allocation: np.ndarray | None = None   # (H, W) pre-quantized map

    def mean_additive(self) -> np.ndarray:
        n = np.maximum(self.spp, 1)[..., None]
        return self.sum_additive / n

    def mean_subtractive(self) -> np.ndarray:
        n = np.maximum(self.spp, 1)[..., None]
        return self.sum_subtractive / n

    def delta_image(self) -> np.ndarray:
        return self.mean_additive() - self.mean_subtractive()


def build_mask(scene: Scene, camera: Camera | None = None,
               resolution: tuple[int, int] | None = None
               ) -> tuple[np.ndarray, GBuffer]:
    """Deterministic center-ray visibility: mask is 0 iff the nearest
    full-scene hit is dynamic; misses count as unmasked."""
    camera = camera or scene.camera
    w, h = resolution or camera.resolution
    if resolution and tuple(resolution) != tuple(camera.resolution):
        camera = Camera(camera.position, camera.look_at, camera.up,
                        camera.fov_deg, tuple(resolution))
    py, px = np.divmod(np.arange(h * w, dtype=np.int64), w)
    o, d = camera.rays(px, py)
    hb = scene.intersect_batch(o, d, INCLUDE_DYNAMIC)
    gb = GBuffer(
        position=hb.position.reshape(h, w, 3),
        normal=hb.normal.reshape(h, w, 3),
        direction=d.reshape(h, w, 3),
        material_id=hb.material_id.reshape(h, w),
        primitive_id=hb.primitive_id.reshape(h, w),
        is_dynamic=hb.is_dynamic.reshape(h, w),
        hit=hb.hit.reshape(h, w))
    mask = np.where(gb.hit & gb.is_dynamic, 0.0, 1.0)
    return mask, gb


def compose_hybrid(buffers: FrameBuffers, masked: bool = True) -> np.ndarray:
    """Final signed image; negative values survive until output clamp.

    masked:   mask * (static - mean_subtractive) + mean_additive
    unmasked: static - mean_subtractive + mean_additive
    """
    st = buffers.static_image
    lp = buffers.mean_additive()
    lm = buffers.mean_subtractive()
    shapes = {st.shape, lp.shape, lm.shape}
    if len(shapes) != 1:
        raise ValueError(f"buffer resolutions differ: {sorted(shapes)}")
    if masked:
        return buffers.mask[..., None] * (st - lm) + lp
    return st - lm + lp


def clamp_for_output(image: np.ndarray) -> np.ndarray:
    """Output-stage clamp; accumulators are never clamped."""
    return np.maximum(image, 0.0)


@dataclass
class MetricsReport:
    mse: float
    rel_mse: float
    mse_masked: float        # over pixels with mask == 1
    mse_unmasked: float      # over pixels with mask == 0
    n_masked: int
    n_unmasked: int
    variance_map: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        return {"mse": self.mse, "rel_mse": self.rel_mse,
                "mse_masked": self.mse_masked, "mse_unmasked": self.mse_unmasked,
                "n_masked": self.n_masked, "n_unmasked": self.n_unmasked}


def compute_metrics(image: np.ndarray, reference: np.ndarray,
                    mask: np.ndarray | None = None,
                    rel_eps: float = 0.01) -> MetricsReport:
    """MSE and relative MSE against a reference, with a mask breakdown.

    rel MSE divides squared error by (reference^2 + eps) per channel.
    """
    if image.shape != reference.shape:
        raise ValueError(f"resolution mismatch: {image.shape} vs {reference.shape}")
    err2 = (np.asarray(image, dtype=np.float64) - reference) ** 2
    mse = float(err2.mean())
    rel = float((err2 / (np.asarray(reference, dtype=np.float64) ** 2 + rel_eps)).mean())
    if mask is None:
        mask = np.ones(image.shape[:2])
    m = mask > 0.5
    per_pixel = err2.mean(axis=2)
    mse_masked = float(per_pixel[m].mean()) if m.any() else 0.0
    mse_unmasked = float(per_pixel[~m].mean()) if (~m).any() else 0.0
    return MetricsReport(mse=mse, rel_mse=rel, mse_masked=mse_masked,
                         mse_unmasked=mse_unmasked,
                         n_masked=int(m.sum()), n_unmasked=int((~m).sum()),
                         variance_map=per_pixel)


def rel_mse(image: np.ndarray, reference: np.ndarray, eps: float = 0.01) -> float:
    return compute_metrics(image, reference, rel_eps=eps).rel_mse


def luminance_image(image: np.ndarray) -> np.ndarray:
    return luminance(image)
