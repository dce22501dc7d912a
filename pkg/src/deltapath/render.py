"""Frame rendering: accumulation, tiling, adaptive delta passes.

Work is split into fixed row-band tiles rendered by a thread pool; tile
boundaries and sample chunking are independent of the thread count and
every lane's randomness is keyed by (pixel, frame, sample), so output
images are bit-identical for any `threads` value.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .adaptive import (PixelStats, QuantizedSampleMap, SampleMap,
                       dither_quantize, estimate_map)
from .compositor import FrameBuffers, build_mask, compose_hybrid
from .field import OracleStaticField, TraceSettings, load_field
from .integrators import trace_batch
from .scene import Camera, Scene

INTEGRATORS = ("reference-static", "reference-dynamic", "additive",
               "subtractive", "delta-pss", "hybrid")

_TILE_ROWS = 8
_LANES_PER_WAVE = 262144


@dataclass
class RenderConfig:
    """Everything a `render` invocation depends on."""

    scene: str | Scene
    integrator: str = "delta-pss"
    spp: int = 16
    seed: int = 0
    frame: int = 0
    resolution: tuple[int, int] | None = None
    threads: int = 1
    masked: bool = True
    adaptive: bool = False
    field_backend: str = "oracle"        # "oracle" | "learned"
    field_path: str | None = None
    oracle_spp: int = 512
    pilot_fraction: float = 0.25         # frame-0 pilot budget as share of spp
    settings: TraceSettings = field(default_factory=TraceSettings)

    def validate(self) -> None:
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}; "
                             f"choose from {INTEGRATORS}")
        if self.spp < 0 or (self.spp < 1 and self.integrator != "hybrid"):
            raise ValueError("spp must be >= 1 (hybrid allows 0)")


def resolve_scene(config: RenderConfig) -> tuple[Scene, Camera]:
    from .sceneio import load_scene
    from .scenes import BUNDLED
    sc = config.scene
    if isinstance(sc, str):
        sc = BUNDLED[sc]() if sc in BUNDLED else load_scene(sc)
    scene = sc.at_frame(config.frame)
    camera = scene.camera
    if camera is None:
        raise ValueError("scene has no camera; supply one in the scene file")
    if config.resolution and tuple(config.resolution) != tuple(camera.resolution):
        camera = Camera(camera.position, camera.look_at, camera.up,
                        camera.fov_deg, tuple(config.resolution))
    return scene, camera


def _tiles(height: int) -> list[tuple[int, int]]:
    return [(r, min(r + _TILE_ROWS, height)) for r in range(0, height, _TILE_ROWS)]


def _lane_grid(width: int, y0: int, y1: int):
    ys, xs = np.mgrid[y0:y1, 0:width]
    return xs.ravel().astype(np.int64), ys.ravel().astype(np.int64)


class Accumulator:
    """Per-pixel running sums for mean and standard-error estimates."""

    def __init__(self, height: int, width: int):
        self.sum = np.zeros((height, width, 3))
        self.sum_sq = np.zeros((height, width, 3))
        self.count = np.zeros((height, width), dtype=np.int64)

    def mean(self) -> np.ndarray:
        return self.sum / np.maximum(self.count, 1)[..., None]

    def std_error(self) -> np.ndarray:
        n = np.maximum(self.count, 1)[..., None]
        var = np.maximum(self.sum_sq / n - (self.sum / n) ** 2, 0.0)
        return np.sqrt(var / n)


def render_image(scene: Scene, camera: Camera, variant: str, spp: int,
                 seed: int = 0, frame: int = 0, collect: str = "total",
                 settings: TraceSettings | None = None, threads: int = 1
                 ) -> Accumulator:
    """Uniform-spp render of one integrator; returns the accumulator.

    `collect` chooses the plain estimate ("total") or the change-gated
    part ("gated", i.e. the additive or subtractive integrator for the
    dynamic or static variant respectively).
    """
    w, h = camera.resolution
    acc = Accumulator(h, w)
    chunk = max(1, min(spp, _LANES_PER_WAVE // max(1, w * _TILE_ROWS)))

    def work(tile):
        y0, y1 = tile
        px, py = _lane_grid(w, y0, y1)
        npix = px.size
        for s0 in range(0, spp, chunk):
            s1 = min(s0 + chunk, spp)
            reps = s1 - s0
            lpx = np.tile(px, reps)
            lpy = np.tile(py, reps)
            lsi = np.repeat(np.arange(s0, s1, dtype=np.int64), npix)
            pref = rng.stream_prefix_array(seed, lpx, lpy, frame, lsi)
            r = trace_batch(scene, camera, variant, lpx, lpy, pref, settings)
            vals = r.total if collect == "total" else r.gated
            vals = vals.reshape(reps, y1 - y0, w, 3)
            acc.sum[y0:y1] += vals.sum(axis=0)
            acc.sum_sq[y0:y1] += (vals * vals).sum(axis=0)
            acc.count[y0:y1] += reps

    tiles = _tiles(h)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, tiles))
    else:
        for t in tiles:
            work(t)
    return acc


@dataclass
class DeltaPassResult:
    sum_additive: np.ndarray     # (H, W, 3) boosted gains
    sum_subtractive: np.ndarray  # (H, W, 3) boosted losses
    spp: np.ndarray              # (H, W)
    stats: PixelStats            # unboosted delta moments (feeds the next map)
    sum_delta_sq: np.ndarray     # (H, W, 3) boosted delta second moments

    def delta_mean(self) -> np.ndarray:
        n = np.maximum(self.spp, 1)[..., None]
        return (self.sum_additive - self.sum_subtractive) / n

    def delta_std_error(self) -> np.ndarray:
        n = np.maximum(self.spp, 1)[..., None]
        var = np.maximum(self.sum_delta_sq / n - self.delta_mean() ** 2, 0.0)
        return np.sqrt(var / n)


def _delta_tile(scene, camera, counts, scale, seed, frame, settings, tile, w):
    """Delta pass over one row band; returns tile-local accumulators."""
    y0, y1 = tile
    th = y1 - y0
    local = DeltaPassResult(np.zeros((th, w, 3)), np.zeros((th, w, 3)),
                            counts[y0:y1].copy(), PixelStats.zeros((th, w)),
                            np.zeros((th, w, 3)))
    tc = counts[y0:y1]
    total = int(tc.sum())
    if total == 0:
        return local
    ys, xs = np.nonzero(tc)
    reps = tc[ys, xs]
    lpx = np.repeat(xs.astype(np.int64), reps)
    lpy_local = np.repeat(ys.astype(np.int64), reps)
    # the sample index counts up within each pixel
    lsi = np.concatenate([np.arange(r, dtype=np.int64) for r in reps])
    for lo in range(0, total, _LANES_PER_WAVE):
        sl = slice(lo, min(lo + _LANES_PER_WAVE, total))
        px_, pyl, si_ = lpx[sl], lpy_local[sl], lsi[sl]
        pref = rng.stream_prefix_array(seed, px_, pyl + y0, frame, si_)
        r_dyn = trace_batch(scene, camera, "dynamic", px_, pyl + y0, pref, settings)
        r_sta = trace_batch(scene, camera, "static", px_, pyl + y0, pref, settings)
        flat = pyl * w + px_
        local.stats.accumulate(flat, r_dyn.gated - r_sta.gated)
        bscale = scale[y0:y1].ravel()[flat][:, None]
        plus = r_dyn.gated * bscale
        minus = r_sta.gated * bscale
        d = plus - minus
        for buf, v in ((local.sum_additive, plus), (local.sum_subtractive, minus),
                       (local.sum_delta_sq, d * d)):
            for c in range(3):
                buf[..., c] += np.bincount(flat, weights=v[:, c],
                                           minlength=th * w).reshape(th, w)
    return local


def render_delta(scene: Scene, camera: Camera, allocation, seed: int = 0,
                 frame: int = 0, settings: TraceSettings | None = None,
                 threads: int = 1, boost: np.ndarray | None = None
                 ) -> DeltaPassResult:
    """Correlated delta pass with a per-pixel sample allocation.

    `allocation` is an integer, or an (H, W) integer map; `boost` is the
    pre-quantized real map used for fractional-allocation compensation.
    Both traversals of each sample share one stream key, which is what
    cancels them exactly outside the influenced region.  Tiles fill
    disjoint row bands, so results do not depend on the thread count.
    """
    w, h = camera.resolution
    if np.isscalar(allocation):
        counts = np.full((h, w), int(allocation), dtype=np.int64)
    else:
        counts = np.asarray(allocation, dtype=np.int64)
    scale = np.ones((h, w)) if boost is None \
        else 1.0 / np.minimum(1.0, np.maximum(np.asarray(boost, dtype=np.float64), 1e-12))

    out = DeltaPassResult(np.zeros((h, w, 3)), np.zeros((h, w, 3)),
                          counts.copy(), PixelStats.zeros((h, w)),
                          np.zeros((h, w, 3)))
    tiles = _tiles(h)

    def work(tile):
        return tile, _delta_tile(scene, camera, counts, scale, seed, frame,
                                 settings, tile, w)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            produced = list(ex.map(work, tiles))
    else:
        produced = [work(t) for t in tiles]
    for (y0, y1), local in produced:
        out.sum_additive[y0:y1] = local.sum_additive
        out.sum_subtractive[y0:y1] = local.sum_subtractive
        out.sum_delta_sq[y0:y1] = local.sum_delta_sq
        for name in ("count", "sum_rgb", "sum_lum", "sum_lum_sq", "sum_abs_lum"):
            getattr(out.stats, name)[y0:y1] = getattr(local.stats, name)
    return out


def make_static_backend(config: RenderConfig, scene: Scene):
    if config.field_backend == "oracle":
        return OracleStaticField(scene, spp=config.oracle_spp,
                                 settings=config.settings)
    if config.field_backend == "learned":
        if not config.field_path:
            raise FileNotFoundError("learned backend requires --field <file>")
        return load_field(config.field_path)
    raise ValueError(f"unknown field backend {config.field_backend!r}")


def static_image_from_field(backend, gbuffer, mask: np.ndarray,
                            scene: Scene | None = None,
                            camera: Camera | None = None) -> np.ndarray:
    """Query the cache at every pixel's first static hit.

    Where the mask is 1 the first full-scene hit is already static.
    Mask-0 pixels ignore the cache under masked compositing, so they are
    only re-traced (dynamic primitives skipped) when a scene and camera
    are supplied, which the unmasked composite requires.
    """
    from .scene import SKIP_DYNAMIC
    h, w = mask.shape
    img = np.zeros((h, w, 3))
    sel = (mask > 0.5) & gbuffer.hit
    if sel.any():
        img[sel] = backend.query_batch(gbuffer.position[sel],
                                       gbuffer.direction[sel],
                                       gbuffer.normal[sel])
    behind = mask <= 0.5
    if scene is not None and behind.any():
        py, px = np.nonzero(behind)
        o, d = camera.rays(px.astype(np.int64), py.astype(np.int64))
        hb = scene.intersect_batch(o, d, SKIP_DYNAMIC)
        if hb.hit.any():
            vals = backend.query_batch(hb.position[hb.hit], d[hb.hit],
                                       hb.normal[hb.hit])
            img[py[hb.hit], px[hb.hit]] = vals
    return img


@dataclass
class FrameResult:
    image: np.ndarray                    # integrator output (signed for deltas)
    buffers: FrameBuffers | None = None
    sample_map: SampleMap | None = None
    quantized: QuantizedSampleMap | None = None
    stats: PixelStats | None = None
    seconds: float = 0.0


def render_frame(config: RenderConfig, prev_stats: PixelStats | None = None
                 ) -> FrameResult:
    """Render one frame with the configured integrator.

    For the hybrid integrator with adaptive sampling, per-pixel
    statistics come from `prev_stats` when given (the video path) or
    from a pilot pass at a quarter of the budget otherwise.
    """
    config.validate()
    t0 = time.time()
    scene, camera = resolve_scene(config)
    s = config.settings
    w, h = camera.resolution

    if config.integrator in ("reference-static", "reference-dynamic"):
        variant = "static" if config.integrator == "reference-static" else "dynamic"
        acc = render_image(scene, camera, variant, config.spp, config.seed,
                           config.frame, "total", s, config.threads)
        return FrameResult(image=acc.mean(), seconds=time.time() - t0)
    if config.integrator in ("additive", "subtractive"):
        variant = "dynamic" if config.integrator == "additive" else "static"
        acc = render_image(scene, camera, variant, config.spp, config.seed,
                           config.frame, "gated", s, config.threads)
        return FrameResult(image=acc.mean(), seconds=time.time() - t0)
    if config.integrator == "delta-pss":
        dp = render_delta(scene, camera, config.spp, config.seed, config.frame,
                          s, config.threads)
        n = np.maximum(dp.spp, 1)[..., None]
        img = (dp.sum_additive - dp.sum_subtractive) / n
        return FrameResult(image=img, stats=dp.stats, seconds=time.time() - t0)

    # hybrid
    mask, gb = build_mask(scene, camera)
    backend = make_static_backend(config, scene)
    # unmasked composition needs the cache behind dynamic silhouettes too
    static_img = static_image_from_field(
        backend, gb, mask,
        scene=None if config.masked else scene,
        camera=None if config.masked else camera)

    sample_map = None
    quantized = None
    if config.adaptive:
        stats = prev_stats
        if stats is None:
            pilot_spp = max(1, int(round(config.spp * config.pilot_fraction)))
            pilot = render_delta(scene, camera, pilot_spp, config.seed + 0x9999,
                                 config.frame, s, config.threads)
            stats = pilot.stats
        sample_map = estimate_map(stats, config.spp)
        quantized = dither_quantize(sample_map, frame=config.frame, seed=config.seed)
        alloc = quantized.counts
        boost = sample_map.s
    else:
        alloc = config.spp
        boost = None

    dp = render_delta(scene, camera, alloc, config.seed, config.frame, s,
                      config.threads, boost=boost)
    buffers = FrameBuffers(static_image=static_img,
                           sum_additive=dp.sum_additive,
                           sum_subtractive=dp.sum_subtractive,
                           spp=dp.spp, mask=mask, gbuffer=gb,
                           allocation=None if boost is None else boost)
    image = compose_hybrid(buffers, masked=config.masked)
    return FrameResult(image=image, buffers=buffers, sample_map=sample_map,
                       quantized=quantized, stats=dp.stats,
                       seconds=time.time() - t0)


def render_sequence(config: RenderConfig, n_frames: int) -> list[FrameResult]:
    """Video mode: dynamic placements advance per frame and each frame's
    delta statistics seed the next frame's sampling map."""
    results = []
    stats = None
    for f in range(n_frames):
        cfg = replace(config, frame=f)
        res = render_frame(cfg, prev_stats=stats)
        stats = res.stats if res.stats is not None else stats
        results.append(res)
    return results
