"""Path integrators over the paired scene states.

Four estimators share one wavefront tracing core:

* reference: plain unidirectional path tracing of either scene variant
  (full geometry with the changed light state, or static-only geometry
  with the original light state), BSDF sampling plus next-event
  estimation with the balance heuristic.
* additive: traces the full scene and accumulates emission only once the
  path has interacted with changed content; always >= 0.
* subtractive: traces with dynamic primitives transparent and
  accumulates only after the path has crossed one (or reached a
  state-changed emitter); always >= 0.
* correlated difference: both variants traced with the identical unit
  randoms; the full estimates cancel exactly until a path meets changed
  content, so their difference equals additive - subtractive per sample.

Gating rules (the part the pseudo-code of the source algorithms leaves
implicit once next-event estimation is added): a light-sample
contribution counts toward the gated sum if the path prefix was already
"hot", or the sampled emitter itself differs between states, or - on the
transparent traversal - the shadow segment crossed a dynamic primitive.
Shadow crossings do not set the persistent flag of the main path.
Without the shadow-crossing term the transparent traversal would miss
the light that a dynamic blocker removes, and the telescoping identity
would break under multiple importance sampling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .scene import (DYNAMIC_STATE, INCLUDE_DYNAMIC, SKIP_DYNAMIC, STATIC_STATE,
                    Camera, Intersection, Scene)
from .vecmath import dot, normalize, orthonormal_basis, reflect

_INV_PI = 1.0 / math.pi


class PathClass(enum.Enum):
    """Class of one formal path contribution (disjoint by construction)."""

    NEUTRAL = "neutral"          # never meets changed content
    ADDITIVE = "additive"        # interacts with changed content, full scene
    SUBTRACTIVE = "subtractive"  # crosses changed content, transparent scene


@dataclass
class PathClassTally:
    """Per-sample counts of classified contributions.

    A single camera sample spawns several formal paths (one per shading
    event), so the diagnostic is a tally rather than a single tag.
    """

    neutral: int = 0
    additive: int = 0
    subtractive: int = 0

    @property
    def dominant(self) -> PathClass:
        if self.additive == 0 and self.subtractive == 0:
            return PathClass.NEUTRAL
        if self.additive >= self.subtractive:
            return PathClass.ADDITIVE
        return PathClass.SUBTRACTIVE


@dataclass
class TraceSettings:
    """Knobs shared by every integrator (exposed through RenderConfig)."""

    max_bounces: int = 32
    rr_start: int = 3       # first bounce index with russian roulette
    jitter_pixels: bool = False
    nee: bool = True


class TraceResult:
    """Per-lane estimates from one traversal of one scene variant."""

    __slots__ = ("total", "gated", "n_neutral", "n_gated", "n_rejected")

    def __init__(self, n: int):
        self.total = np.zeros((n, 3))
        self.gated = np.zeros((n, 3))
        self.n_neutral = np.zeros(n, dtype=np.int64)
        self.n_gated = np.zeros(n, dtype=np.int64)
        self.n_rejected = 0


def sample_bsdf(material, normal: np.ndarray, wo: np.ndarray, u: tuple[float, float]
                ) -> tuple[np.ndarray, np.ndarray, float]:
    """Sample one scattered direction at a surface.

    `wo` points away from the surface (toward the viewer).  Returns
    (incoming direction, bsdf value, solid-angle pdf).  Lambertian uses
    the cosine mapping phi = 2*pi*u1, cos_theta = sqrt(1 - u2), so the
    value is albedo/pi and the pdf cos_theta/pi.  Mirrors are delta
    distributions: pdf is +inf and the returned value is the albedo
    itself (the full throughput factor); light sampling must skip them.
    """
    n = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError("sample_bsdf requires a unit normal")
    albedo = np.asarray(material.albedo, dtype=np.float64)
    if material.kind == "mirror":
        d_in = -np.asarray(wo, dtype=np.float64)
        wi = d_in - 2.0 * float(np.dot(d_in, n)) * n
        return wi, albedo.copy(), math.inf
    phi = 2.0 * math.pi * u[0]
    cos_t = math.sqrt(max(0.0, 1.0 - u[1]))
    sin_t = math.sqrt(max(0.0, u[1]))
    t, b = orthonormal_basis(n[None, :])
    wi = (math.cos(phi) * sin_t) * t[0] + (math.sin(phi) * sin_t) * b[0] + cos_t * n
    return wi, albedo * _INV_PI, cos_t * _INV_PI


# ---------------------------------------------------------------------------
# wavefront core


def trace_batch(scene: Scene, camera: Camera | None, variant: str,
                px: np.ndarray, py: np.ndarray, prefixes: np.ndarray,
                settings: TraceSettings | None = None,
                rays: tuple[np.ndarray, np.ndarray] | None = None) -> TraceResult:
    """Trace one batch of camera samples through one scene variant.

    `prefixes` are the per-lane stream hashes; every unit random is a
    pure function of (prefix, dimension), which is what lets a second
    call with the same prefixes replay identical paths.  Pass `rays` to
    start from arbitrary (origin, direction) pairs instead of camera
    pixels, e.g. to estimate outgoing radiance at a surface point.
    """
    settings = settings or TraceSettings()
    if variant == "dynamic":
        mode, state = INCLUDE_DYNAMIC, DYNAMIC_STATE
    elif variant == "static":
        mode, state = SKIP_DYNAMIC, STATIC_STATE
    else:
        raise ValueError(f"unknown scene variant {variant!r}")

    prefixes = np.asarray(prefixes, dtype=np.uint64)
    if rays is not None:
        o, d = rays
        o = np.array(o, dtype=np.float64, copy=True)
        d = np.array(d, dtype=np.float64, copy=True)
    elif settings.jitter_pixels:
        jx = rng.uniform_at_array(prefixes, 0)
        jy = rng.uniform_at_array(prefixes, 1)
        o, d = camera.rays(px, py, jitter=(jx, jy))
    else:
        o, d = camera.rays(px, py)
    n0 = o.shape[0]
    out = TraceResult(n0)

    idx = np.arange(n0)
    T = np.ones((n0, 3))
    hot = np.zeros(n0, dtype=bool)           # has the path met changed content
    prev_pdf = np.zeros(n0)                  # solid-angle pdf of the last bounce
    prev_delta = np.ones(n0, dtype=bool)     # camera / mirror: no light-sample MIS
    env_changed = scene.env_changed

    for bounce in range(settings.max_bounces):
        if idx.size == 0:
            break
        base = rng.DIM_BOUNCE_BASE + rng.DIMS_PER_BOUNCE * bounce
        hb = scene.intersect_batch(o, d, mode)

        crossed = hb.crossed_dynamic if mode == SKIP_DYNAMIC else np.zeros(idx.size, dtype=bool)

        # escaped rays: environment under this variant's light state
        esc = ~hb.hit
        if esc.any():
            env = scene.env_radiance(d[esc], state)
            contrib = T[esc] * env
            rows = idx[esc]
            out.total[rows] += contrib
            g = hot[esc] | crossed[esc] | env_changed
            nz = np.any(env != 0.0, axis=1)
            out.gated[rows[g]] += contrib[g]
            np.add.at(out.n_gated, rows[nz & g], 1)
            np.add.at(out.n_neutral, rows[nz & ~g], 1)

        # keep only surviving surface hits
        alive = hb.hit
        if not alive.any():
            break
        idx = idx[alive]
        o, d, T = o[alive], d[alive], T[alive]
        hot, prev_pdf, prev_delta = hot[alive], prev_pdf[alive], prev_delta[alive]
        pos = hb.position[alive]
        nrm = hb.normal[alive]
        gnrm = hb.geom_normal[alive]
        # reflection is two-sided: flip the shading frame toward the ray;
        # emission stays one-sided (gated on the unflipped geometric normal)
        front = dot(gnrm, d) < 0.0
        nrm = np.where(front[:, None], nrm, -nrm)
        mat = hb.material_id[alive]
        prim = hb.primitive_id[alive]
        relevant = hb.delta_relevant[alive] | (crossed[alive] if mode == SKIP_DYNAMIC
                                               else False)
        hot = hot | relevant

        # emission picked up by the extension ray, weighted against NEE
        emit = scene.mat_emit[state][mat]
        has_emit = front & np.any(emit != 0.0, axis=1)
        if has_emit.any():
            w = np.ones(idx.size)
            if settings.nee:
                pa = scene.emitter_pdf_area(prim)
                cos_l = np.abs(dot(gnrm, d))
                pdf_nee = pa * hb.t[alive] ** 2 / np.maximum(cos_l, 1e-12)
                mis = prev_pdf / np.maximum(prev_pdf + pdf_nee, 1e-300)
                w = np.where(prev_delta, 1.0, mis)
            contrib = T * emit * w[:, None]
            rows = idx[has_emit]
            out.total[rows] += contrib[has_emit]
            g = hot[has_emit]
            out.gated[rows[g]] += contrib[has_emit][g]
            np.add.at(out.n_gated, rows[g], 1)
            np.add.at(out.n_neutral, rows[~g], 1)

        is_mirror = scene.mat_is_mirror[mat]

        # next-event estimation at diffuse vertices
        if settings.nee and scene.n_emitters > 0:
            u_sel = rng.uniform_at_array(prefixes[idx], base + 0)
            u_a = rng.uniform_at_array(prefixes[idx], base + 1)
            u_b = rng.uniform_at_array(prefixes[idx], base + 2)
            ly, ln, pdf_area, lmat, lprim = scene.sample_emitters(u_sel, u_a, u_b)
            to_l = ly - pos
            dist2 = np.einsum("ij,ij->i", to_l, to_l)
            dist = np.sqrt(dist2)
            wi = to_l / np.maximum(dist, 1e-12)[:, None]
            cos_x = dot(nrm, wi)
            cos_l = dot(ln, -wi)
            lemit = scene.mat_emit[state][lmat]
            cand = (~is_mirror & (cos_x > 0.0) & (cos_l > 1e-9) & (dist > 1e-9)
                    & np.any(lemit != 0.0, axis=1))
            if cand.any():
                blocked, sh_crossed = scene.occluded_batch(
                    pos[cand], wi[cand], dist[cand], mode)
                vis = ~blocked
                if vis.any():
                    rows_c = np.nonzero(cand)[0][vis]
                    pdf_sa = pdf_area[rows_c] * dist2[rows_c] / cos_l[rows_c]
                    pdf_b = cos_x[rows_c] * _INV_PI
                    f = scene.mat_albedo[mat[rows_c]] * _INV_PI
                    contrib = (T[rows_c] * f * lemit[rows_c]
                               * (cos_x[rows_c] / (pdf_sa + pdf_b))[:, None])
                    # the sampled emitter counts as changed content if its
                    # material differs between states or it is itself dynamic
                    mat_changed = (scene.mat_emit[STATIC_STATE][lmat[rows_c]]
                                   != scene.mat_emit[DYNAMIC_STATE][lmat[rows_c]]).any(axis=1)
                    em_dyn = _prim_is_dynamic(scene, lprim[rows_c])
                    g = hot[rows_c] | mat_changed | em_dyn | sh_crossed[vis]
                    rows_o = idx[rows_c]
                    out.total[rows_o] += contrib
                    out.gated[rows_o[g]] += contrib[g]
                    np.add.at(out.n_gated, rows_o[g], 1)
                    np.add.at(out.n_neutral, rows_o[~g], 1)

        if bounce == settings.max_bounces - 1:
            break

        # extension: sample the BSDF (mirror lanes reflect deterministically)
        u_d1 = rng.uniform_at_array(prefixes[idx], base + 3)
        u_d2 = rng.uniform_at_array(prefixes[idx], base + 4)
        phi = 2.0 * math.pi * u_d1
        cos_t = np.sqrt(np.maximum(0.0, 1.0 - u_d2))
        sin_t = np.sqrt(np.maximum(0.0, u_d2))
        tang, bit = orthonormal_basis(nrm)
        d_diff = (np.cos(phi) * sin_t)[:, None] * tang \
            + (np.sin(phi) * sin_t)[:, None] * bit + cos_t[:, None] * nrm
        d_mirr = reflect(d, nrm)
        d = np.where(is_mirror[:, None], d_mirr, d_diff)
        T = T * scene.mat_albedo[mat]
        prev_pdf = np.where(is_mirror, 0.0, cos_t * _INV_PI)
        prev_delta = is_mirror
        o = pos

        # russian roulette on the updated throughput, shared random value
        u_rr = rng.uniform_at_array(prefixes[idx], base + 5)
        survive = np.ones(idx.size, dtype=bool)
        if bounce >= settings.rr_start:
            p = np.minimum(1.0, T.max(axis=1))
            survive = u_rr < p
            T[survive] /= p[survive][:, None]
        survive &= T.max(axis=1) > 0.0
        if not survive.all():
            idx = idx[survive]
            o, d, T = o[survive], d[survive], T[survive]
            hot, prev_pdf, prev_delta = hot[survive], prev_pdf[survive], prev_delta[survive]

    # non-finite samples are rejected rather than propagated
    bad = ~np.isfinite(out.total).all(axis=1) | ~np.isfinite(out.gated).all(axis=1)
    if bad.any():
        out.n_rejected = int(bad.sum())
        out.total[bad] = 0.0
        out.gated[bad] = 0.0
    return out


def _prim_is_dynamic(scene: Scene, prim_id: np.ndarray) -> np.ndarray:
    dyn = np.zeros(prim_id.shape[0], dtype=bool)
    s = prim_id < scene.n_spheres
    if s.any():
        dyn[s] = scene.sph_dyn[prim_id[s]]
    if (~s).any():
        dyn[~s] = scene.tri_dyn[prim_id[~s] - scene.n_spheres]
    return dyn


# ---------------------------------------------------------------------------
# spec-level scalar entry points


def _keys_from_stream(stream: rng.RandomStream) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = stream.key
    px = np.array([k.px], dtype=np.int64)
    py = np.array([k.py], dtype=np.int64)
    pref = np.array([stream.prefix], dtype=np.uint64)
    return px, py, pref


def trace_reference(pixel: tuple[int, int], stream: rng.RandomStream, scene: Scene,
                    camera: Camera | None = None, variant: str = "dynamic",
                    settings: TraceSettings | None = None) -> np.ndarray:
    """One unbiased radiance sample of the chosen scene variant."""
    camera = camera or scene.camera
    px, py, pref = _keys_from_stream(stream)
    r = trace_batch(scene, camera, variant, px, py, pref, settings)
    return r.total[0]


def trace_additive(pixel: tuple[int, int], stream: rng.RandomStream, scene: Scene,
                   camera: Camera | None = None,
                   settings: TraceSettings | None = None) -> np.ndarray:
    """Radiance gained by the change: full-scene paths after first contact."""
    camera = camera or scene.camera
    px, py, pref = _keys_from_stream(stream)
    r = trace_batch(scene, camera, "dynamic", px, py, pref, settings)
    return r.gated[0]


def trace_subtractive(pixel: tuple[int, int], stream: rng.RandomStream, scene: Scene,
                      camera: Camera | None = None,
                      settings: TraceSettings | None = None) -> np.ndarray:
    """Radiance lost to the change: transparent-traversal paths after a crossing."""
    camera = camera or scene.camera
    px, py, pref = _keys_from_stream(stream)
    r = trace_batch(scene, camera, "static", px, py, pref, settings)
    return r.gated[0]


def trace_delta_pss(pixel: tuple[int, int], stream: rng.RandomStream, scene: Scene,
                    camera: Camera | None = None,
                    settings: TraceSettings | None = None
                    ) -> tuple[np.ndarray, PathClassTally]:
    """Correlated signed difference of the two variants on one stream.

    Both traversals replay the identical unit randoms; until a path
    meets changed content the two full estimates cancel exactly, so the
    returned value equals trace_additive - trace_subtractive.
    """
    camera = camera or scene.camera
    px, py, pref = _keys_from_stream(stream)
    fd = rng.fork_for_scene(stream, "dynamic")
    fs = rng.fork_for_scene(stream, "static")
    assert fd.prefix == fs.prefix  # forks replay the same sequence
    r_dyn = trace_batch(scene, camera, "dynamic", px, py, pref, settings)
    r_sta = trace_batch(scene, camera, "static", px, py, pref, settings)
    tally = PathClassTally(
        neutral=int(r_sta.n_neutral[0]),
        additive=int(r_dyn.n_gated[0]),
        subtractive=int(r_sta.n_gated[0]))
    return r_dyn.total[0] - r_sta.total[0], tally
