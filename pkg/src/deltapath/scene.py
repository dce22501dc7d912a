"""Immutable scene representation and ray queries.

A scene holds spheres and triangles, each tagged static or dynamic, with
Lambertian or perfect-mirror materials.  Emission is stored per light
state (the scene "before" and "after" the dynamic change), and an
optional environment map pair yields a signed per-texel delta that can
be importance sampled by absolute luminance.

Intersection supports two modes: the full scene, or static geometry only
with dynamic primitives treated as fully transparent.  The transparent
mode reports whether any dynamic primitive was crossed before the
returned hit; that flag drives the delta integrators.

All derived tables (emitter lists, CDFs) are precomputed at build time;
after that the scene is read-only and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vecmath import luminance, normalize

INCLUDE_DYNAMIC = "include_dynamic"
SKIP_DYNAMIC = "skip_dynamic"

STATIC_STATE = "static"
DYNAMIC_STATE = "dynamic"

#: t epsilon applied to secondary rays against shadow acne.
DEFAULT_T_MIN = 1e-4

_INF = np.inf


# ---------------------------------------------------------------------------
# build-time description types


@dataclass
class Material:
    """Surface description; emission may differ between light states."""

    albedo: tuple[float, float, float]
    kind: str = "lambertian"  # "lambertian" | "mirror"
    emission_static: tuple[float, float, float] = (0.0, 0.0, 0.0)
    emission_dynamic: tuple[float, float, float] = (0.0, 0.0, 0.0)
    name: str = ""

    def validate(self) -> None:
        if self.kind not in ("lambertian", "mirror"):
            raise ValueError(f"material {self.name!r}: unknown kind {self.kind!r}")
        a = np.asarray(self.albedo, dtype=np.float64)
        if a.shape != (3,) or np.any(a < 0.0) or np.any(a > 1.0):
            raise ValueError(f"material {self.name!r}: albedo must be in [0,1]^3")
        for e in (self.emission_static, self.emission_dynamic):
            ev = np.asarray(e, dtype=np.float64)
            if ev.shape != (3,) or not np.all(np.isfinite(ev)) or np.any(ev < 0.0):
                raise ValueError(f"material {self.name!r}: emission must be finite and >= 0")

    @property
    def state_changed(self) -> bool:
        return tuple(self.emission_static) != tuple(self.emission_dynamic)

    @property
    def is_emitter(self) -> bool:
        return any(self.emission_static) or any(self.emission_dynamic)

    def emission(self, state: str) -> np.ndarray:
        e = self.emission_static if state == STATIC_STATE else self.emission_dynamic
        return np.asarray(e, dtype=np.float64)


@dataclass
class Sphere:
    center: tuple[float, float, float]
    radius: float
    material: str
    dynamic: bool = False
    name: str = ""
    frame_motion: tuple[float, float, float] | None = None


@dataclass
class Triangle:
    vertices: tuple  # three 3-tuples
    material: str
    dynamic: bool = False
    shading_normals: tuple | None = None  # three 3-tuples or None (flat)
    name: str = ""
    frame_motion: tuple[float, float, float] | None = None


@dataclass
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov_deg: float = 45.0
    resolution: tuple[int, int] = (32, 32)  # (width, height)

    def validate(self) -> None:
        w, h = self.resolution
        if w < 8 or h < 8:
            raise ValueError(f"resolution must be at least 8x8, got {w}x{h}")
        if not (0.0 < self.fov_deg < 180.0):
            raise ValueError(f"vertical fov must be in (0, 180) degrees, got {self.fov_deg}")

    def rays(self, px: np.ndarray, py: np.ndarray,
             jitter: tuple[np.ndarray, np.ndarray] | None = None
             ) -> tuple[np.ndarray, np.ndarray]:
        """Primary rays through pixel centers (or jittered positions).

        px, py are integer pixel coordinates with row 0 at the top.
        Returns (origins, unit directions) of shape (N, 3).
        """
        w, h = self.resolution
        pos = np.asarray(self.position, dtype=np.float64)
        forward = np.asarray(self.look_at, dtype=np.float64) - pos
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        tan_half = math.tan(math.radians(self.fov_deg) * 0.5)
        aspect = w / h

        jx, jy = jitter if jitter is not None else (0.5, 0.5)
        sx = ((np.asarray(px, dtype=np.float64) + jx) / w * 2.0 - 1.0) * tan_half * aspect
        sy = (1.0 - (np.asarray(py, dtype=np.float64) + jy) / h * 2.0) * tan_half
        d = forward[None, :] + sx[:, None] * right[None, :] + sy[:, None] * up[None, :]
        d = normalize(d)
        o = np.broadcast_to(pos, d.shape).copy()
        return o, d


# ---------------------------------------------------------------------------
# environment maps


class EnvironmentMap:
    """Lat-long radiance grid; longitude periodic, latitude clamped.

    Row 0 spans polar angle [0, pi/H) measured from +Y.
    """

    def __init__(self, texels: np.ndarray):
        texels = np.asarray(texels, dtype=np.float64)
        if texels.ndim != 3 or texels.shape[2] != 3:
            raise ValueError(f"environment map must be (H, W, 3), got {texels.shape}")
        if not np.all(np.isfinite(texels)):
            raise ValueError("environment map texels must be finite")
        self.texels = texels
        self.height, self.width = texels.shape[:2]

    @classmethod
    def constant(cls, rgb, width: int = 1, height: int = 1) -> "EnvironmentMap":
        t = np.broadcast_to(np.asarray(rgb, dtype=np.float64), (height, width, 3))
        return cls(t.copy())

    def texel_index(self, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map unit directions to (row, col) texel indices."""
        d = np.atleast_2d(directions)
        theta = np.arccos(np.clip(d[:, 1], -1.0, 1.0))
        phi = np.arctan2(d[:, 2], d[:, 0])  # (-pi, pi]
        row = np.clip((theta / math.pi * self.height).astype(np.int64), 0, self.height - 1)
        col = ((phi + math.pi) / (2.0 * math.pi) * self.width).astype(np.int64) % self.width
        return row, col

    def eval(self, directions: np.ndarray) -> np.ndarray:
        row, col = self.texel_index(directions)
        out = self.texels[row, col]
        return out[0] if np.asarray(directions).ndim == 1 else out

    def solid_angles(self) -> np.ndarray:
        """Per-texel solid angle, shape (H, W); sums to 4*pi."""
        j = np.arange(self.height, dtype=np.float64)
        band = np.cos(j * math.pi / self.height) - np.cos((j + 1) * math.pi / self.height)
        return np.broadcast_to((band * 2.0 * math.pi / self.width)[:, None],
                               (self.height, self.width)).copy()


class SignedEnvDelta:
    """Texelwise difference of two environment maps with a sampling table.

    Texels are selected proportionally to the solid-angle weighted
    luminance of the absolute difference, so unchanged texels have zero
    selection probability.  Values returned by `sample` keep their sign.
    """

    def __init__(self, delta: np.ndarray):
        delta = np.asarray(delta, dtype=np.float64)
        if delta.ndim != 3 or delta.shape[2] != 3:
            raise ValueError(f"delta grid must be (H, W, 3), got {delta.shape}")
        self.delta = delta
        self.height, self.width = delta.shape[:2]
        self._omega = EnvironmentMap(np.zeros_like(delta)).solid_angles()
        weights = (luminance(np.abs(delta)) * self._omega).ravel()
        total = weights.sum()
        self.empty = bool(total <= 0.0)
        if self.empty:
            self.probs = np.zeros_like(weights)
            self.cdf = np.zeros_like(weights)
        else:
            self.probs = weights / total
            self.cdf = np.cumsum(self.probs)
            self.cdf[-1] = 1.0

    def integral(self) -> np.ndarray:
        """Exact signed texelwise integral over the sphere, shape (3,)."""
        return np.einsum("hw,hwc->c", self._omega, self.delta)

    def sample(self, u1, u2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Draw directions with pdf proportional to |delta| luminance.

        Accepts scalars or equal-length arrays; returns (directions,
        signed values, pdfs).  The first coordinate selects the texel and
        is reused (rescaled within its CDF bin) for longitude; the second
        picks latitude uniformly in solid angle inside the texel.
        """
        if self.empty:
            raise ValueError("cannot sample an empty environment delta")
        scalar = np.isscalar(u1) and np.isscalar(u2)
        u1 = np.atleast_1d(np.asarray(u1, dtype=np.float64))
        u2 = np.atleast_1d(np.asarray(u2, dtype=np.float64))
        k = np.searchsorted(self.cdf, u1, side="right")
        k = np.minimum(k, self.cdf.size - 1)
        lo = np.where(k > 0, self.cdf[k - 1], 0.0)
        width_bin = np.maximum(self.cdf[k] - lo, 1e-300)
        u_phi = np.clip((u1 - lo) / width_bin, 0.0, np.nextafter(1.0, 0.0))

        row, col = np.divmod(k, self.width)
        phi = -math.pi + (col + u_phi) * (2.0 * math.pi / self.width)
        cos_hi = np.cos(row * math.pi / self.height)
        cos_lo = np.cos((row + 1) * math.pi / self.height)
        cos_t = cos_hi + (cos_lo - cos_hi) * u2
        sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
        dirs = np.stack([sin_t * np.cos(phi), cos_t, sin_t * np.sin(phi)], axis=1)
        values = self.delta[row, col]
        pdf = self.probs[k] / self._omega.ravel()[k]
        if scalar:
            return dirs[0], values[0], pdf[0]
        return dirs, values, pdf


def build_env_delta(env_old: EnvironmentMap, env_new: EnvironmentMap) -> SignedEnvDelta:
    """Texelwise `new - old`; raises on resolution mismatch."""
    if (env_old.height, env_old.width) != (env_new.height, env_new.width):
        raise ValueError(
            f"environment map resolutions differ: "
            f"{env_old.width}x{env_old.height} vs {env_new.width}x{env_new.height}")
    return SignedEnvDelta(env_new.texels - env_old.texels)


# ---------------------------------------------------------------------------
# intersection records


@dataclass
class Intersection:
    """Single-ray hit record (scalar convenience API)."""

    t: float
    position: np.ndarray
    normal: np.ndarray
    material_id: int
    primitive_id: int
    is_dynamic: bool


class HitBatch:
    """Structure-of-arrays hit record for a lane batch."""

    __slots__ = ("hit", "t", "position", "normal", "geom_normal", "material_id",
                 "primitive_id", "is_dynamic", "delta_relevant", "crossed_dynamic")

    def __init__(self, n: int):
        self.hit = np.zeros(n, dtype=bool)
        self.t = np.full(n, _INF)
        self.position = np.zeros((n, 3))
        self.normal = np.zeros((n, 3))
        self.geom_normal = np.zeros((n, 3))
        self.material_id = np.full(n, -1, dtype=np.int64)
        self.primitive_id = np.full(n, -1, dtype=np.int64)
        self.is_dynamic = np.zeros(n, dtype=bool)
        self.delta_relevant = np.zeros(n, dtype=bool)
        self.crossed_dynamic = np.zeros(n, dtype=bool)


# ---------------------------------------------------------------------------
# the scene


class Scene:
    """Validated, array-packed scene ready for tracing."""

    def __init__(self, materials: list[Material], primitives: list, *,
                 env_static: EnvironmentMap | None = None,
                 env_dynamic: EnvironmentMap | None = None,
                 camera: Camera | None = None,
                 name: str = "scene",
                 t_min: float = DEFAULT_T_MIN):
        self.name = name
        self.materials = list(materials)
        self.primitives = list(primitives)
        self.camera = camera
        self.t_min = float(t_min)
        self._mat_index = {}
        for i, m in enumerate(self.materials):
            m.validate()
            if m.name:
                if m.name in self._mat_index:
                    raise ValueError(f"duplicate material name {m.name!r}")
                self._mat_index[m.name] = i

        self.env_static = env_static
        self.env_dynamic = env_dynamic if env_dynamic is not None else env_static
        if (self.env_static is None) != (self.env_dynamic is None):
            raise ValueError("environment must be present in both states or neither")
        self.env_delta: SignedEnvDelta | None = None
        self.env_changed = False
        if self.env_static is not None:
            self.env_delta = build_env_delta(self.env_static, self.env_dynamic)
            self.env_changed = not self.env_delta.empty

        self._pack()

    # -- construction ------------------------------------------------------

    def material_id(self, ref) -> int:
        if isinstance(ref, int):
            if not 0 <= ref < len(self.materials):
                raise ValueError(f"material index {ref} out of range")
            return ref
        if ref not in self._mat_index:
            raise ValueError(f"unknown material {ref!r}")
        return self._mat_index[ref]

    def _pack(self) -> None:
        sph, tri = [], []
        for p in self.primitives:
            if isinstance(p, Sphere):
                if not (p.radius > 0.0 and math.isfinite(p.radius)):
                    raise ValueError(f"sphere {p.name!r}: radius must be positive")
                sph.append(p)
            elif isinstance(p, Triangle):
                tri.append(p)
            else:
                raise TypeError(f"unsupported primitive {type(p).__name__}")

        def mat_of(p):
            return self.material_id(p.material)

        def changed(p):
            return p.dynamic or self.materials[mat_of(p)].state_changed

        self.sph_center = np.array([p.center for p in sph], dtype=np.float64).reshape(-1, 3)
        self.sph_radius = np.array([p.radius for p in sph], dtype=np.float64)
        self.sph_mat = np.array([mat_of(p) for p in sph], dtype=np.int64)
        self.sph_dyn = np.array([p.dynamic for p in sph], dtype=bool)
        self.sph_rel = np.array([changed(p) for p in sph], dtype=bool)

        v = np.array([p.vertices for p in tri], dtype=np.float64).reshape(-1, 3, 3)
        self.tri_v0 = v[:, 0]
        self.tri_e1 = v[:, 1] - v[:, 0]
        self.tri_e2 = v[:, 2] - v[:, 0]
        gn = np.cross(self.tri_e1, self.tri_e2)
        gn_len = np.linalg.norm(gn, axis=1)
        if np.any(gn_len < 1e-12):
            bad = [tri[i].name or i for i in np.nonzero(gn_len < 1e-12)[0]]
            raise ValueError(f"triangles with collinear vertices: {bad}")
        self.tri_n = gn / gn_len[:, None]
        self.tri_area = 0.5 * gn_len
        self.tri_mat = np.array([mat_of(p) for p in tri], dtype=np.int64)
        self.tri_dyn = np.array([p.dynamic for p in tri], dtype=bool)
        self.tri_rel = np.array([changed(p) for p in tri], dtype=bool)
        sn = []
        for p in tri:
            if p.shading_normals is not None:
                ns = np.asarray(p.shading_normals, dtype=np.float64)
                sn.append(ns / np.linalg.norm(ns, axis=1, keepdims=True))
            else:
                sn.append(None)
        self._tri_sn = sn
        self.tri_has_sn = np.array([s is not None for s in sn], dtype=bool)
        self.tri_sn = np.stack(
            [s if s is not None else np.broadcast_to(self.tri_n[i], (3, 3))
             for i, s in enumerate(sn)], axis=0) if tri else np.zeros((0, 3, 3))

        self.n_spheres = len(sph)
        self.n_triangles = len(tri)
        self._sph_objs = sph
        self._tri_objs = tri

        # per-material emission tables (rows indexed by material id)
        self.mat_albedo = np.array([m.albedo for m in self.materials],
                                   dtype=np.float64).reshape(-1, 3)
        self.mat_is_mirror = np.array([m.kind == "mirror" for m in self.materials], dtype=bool)
        self.mat_emit = {
            STATIC_STATE: np.array([m.emission_static for m in self.materials],
                                   dtype=np.float64).reshape(-1, 3),
            DYNAMIC_STATE: np.array([m.emission_dynamic for m in self.materials],
                                    dtype=np.float64).reshape(-1, 3),
        }

        # a dynamic (added) primitive cannot emit in the static scene
        for prims, mats, dyns in ((sph, self.sph_mat, self.sph_dyn),
                                  (tri, self.tri_mat, self.tri_dyn)):
            for p, mid, dyn in zip(prims, mats, dyns):
                if dyn and any(self.materials[mid].emission_static):
                    raise ValueError(
                        f"primitive {p.name!r} is dynamic but its material emits in the "
                        f"static state; added objects do not exist before the change")

        # contiguous float32 per-component rows for the hot intersection
        # kernels; the same rounding applies to both scene variants, so
        # the pre-divergence bitwise equality of the paired traversals
        # is unaffected
        self._sph_c = tuple(np.ascontiguousarray(self.sph_center[:, k], dtype=np.float32)
                            for k in range(3))
        self._sph_r2 = np.ascontiguousarray(self.sph_radius ** 2, dtype=np.float32)
        self._tri_c = tuple(np.ascontiguousarray(a[:, k], dtype=np.float32)
                            for a in (self.tri_e1, self.tri_e2, self.tri_v0)
                            for k in range(3))

        self._build_emitter_table()
        self._build_bounds()

    def _build_emitter_table(self) -> None:
        """Union list of emitting primitives over both light states.

        Both delta traversals select from this one list with shared
        random numbers so light selection stays correlated; a side where
        the chosen primitive does not emit simply contributes zero.
        """
        kinds, idxs, areas = [], [], []
        for i in range(self.n_spheres):
            if self.materials[self.sph_mat[i]].is_emitter:
                kinds.append(0)
                idxs.append(i)
                areas.append(4.0 * math.pi * self.sph_radius[i] ** 2)
        for i in range(self.n_triangles):
            if self.materials[self.tri_mat[i]].is_emitter:
                kinds.append(1)
                idxs.append(i)
                areas.append(self.tri_area[i])
        self.em_kind = np.array(kinds, dtype=np.int64)
        self.em_idx = np.array(idxs, dtype=np.int64)
        self.em_area = np.array(areas, dtype=np.float64)
        self.n_emitters = len(kinds)
        self.em_mat = np.zeros(self.n_emitters, dtype=np.int64)
        self.em_dyn = np.zeros(self.n_emitters, dtype=bool)
        # global primitive ids: spheres first, then triangles
        self.em_prim = np.zeros(self.n_emitters, dtype=np.int64)
        sphm = self.em_kind == 0
        self.em_mat[sphm] = self.sph_mat[self.em_idx[sphm]]
        self.em_dyn[sphm] = self.sph_dyn[self.em_idx[sphm]]
        self.em_prim[sphm] = self.em_idx[sphm]
        self.em_mat[~sphm] = self.tri_mat[self.em_idx[~sphm]]
        self.em_dyn[~sphm] = self.tri_dyn[self.em_idx[~sphm]]
        self.em_prim[~sphm] = self.em_idx[~sphm] + self.n_spheres

    def _build_bounds(self) -> None:
        pts = [self.tri_v0, self.tri_v0 + self.tri_e1, self.tri_v0 + self.tri_e2]
        if self.n_spheres:
            pts.append(self.sph_center - self.sph_radius[:, None])
            pts.append(self.sph_center + self.sph_radius[:, None])
        allp = np.concatenate([p for p in pts if len(p)], axis=0) if any(len(p) for p in pts) \
            else np.zeros((1, 3))
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        pad = 0.05 * max(float(np.max(hi - lo)), 1e-6)
        self.bounds_min = lo - pad
        self.bounds_max = hi + pad

    @property
    def has_dynamic(self) -> bool:
        return bool(self.sph_dyn.any() or self.tri_dyn.any())

    @property
    def has_delta_source(self) -> bool:
        """True if anything differs between the two scene states."""
        return (self.has_dynamic or self.env_changed
                or bool(self.sph_rel.any() or self.tri_rel.any()))

    def at_frame(self, frame: int) -> "Scene":
        """Scene with dynamic primitives displaced by their per-frame motion."""
        if frame == 0:
            return self
        prims = []
        for p in self.primitives:
            if p.frame_motion is None or not p.dynamic:
                prims.append(p)
                continue
            off = np.asarray(p.frame_motion, dtype=np.float64) * frame
            if isinstance(p, Sphere):
                q = Sphere(tuple(np.asarray(p.center) + off), p.radius, p.material,
                           p.dynamic, p.name, p.frame_motion)
            else:
                vs = tuple(tuple(np.asarray(v) + off) for v in p.vertices)
                q = Triangle(vs, p.material, p.dynamic, p.shading_normals,
                             p.name, p.frame_motion)
            prims.append(q)
        return Scene(self.materials, prims, env_static=self.env_static,
                     env_dynamic=self.env_dynamic, camera=self.camera,
                     name=self.name, t_min=self.t_min)

    # -- intersection ------------------------------------------------------

    def _sphere_ts(self, o: np.ndarray, d: np.ndarray, tmin, tmax) -> np.ndarray:
        """(N, S) float32 hit distances, inf where missed."""
        if self.n_spheres == 0:
            return np.full((o.shape[0], 0), _INF, dtype=np.float32)
        cx, cy, cz = self._sph_c
        ocx = o[:, 0:1] - cx
        ocy = o[:, 1:2] - cy
        ocz = o[:, 2:3] - cz
        b = ocx * d[:, 0:1]
        b += ocy * d[:, 1:2]
        b += ocz * d[:, 2:3]
        c = ocx * ocx
        c += ocy * ocy
        c += ocz * ocz
        c -= self._sph_r2
        disc = b * b
        disc -= c
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, np.float32(0.0)))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > tmin, t0, t1)
        return np.where(ok & (t > tmin) & (t < tmax), t, np.float32(_INF))

    def _triangle_ts(self, o: np.ndarray, d: np.ndarray, tmin, tmax) -> np.ndarray:
        """(N, T) float32 hit distances, inf where missed.

        Moeller-Trumbore written out per component so the temporaries
        stay at (N, T) instead of (N, T, 3); barycentrics are recomputed
        later only for the winning hits.
        """
        if self.n_triangles == 0:
            return np.full((o.shape[0], 0), _INF, dtype=np.float32)
        e1x, e1y, e1z, e2x, e2y, e2z, v0x, v0y, v0z = self._tri_c
        dx, dy, dz = d[:, 0:1], d[:, 1:2], d[:, 2:3]
        # p = d x e2
        px = dy * e2z - dz * e2y
        py = dz * e2x - dx * e2z
        pz = dx * e2y - dy * e2x
        det = px * e1x
        det += py * e1y
        det += pz * e1z
        ok = np.abs(det) > np.float32(1e-12)
        inv = np.float32(1.0) / np.where(ok, det, np.float32(1.0))
        sx = o[:, 0:1] - v0x
        sy = o[:, 1:2] - v0y
        sz = o[:, 2:3] - v0z
        u = sx * px
        u += sy * py
        u += sz * pz
        u *= inv
        ok &= (u >= 0.0) & (u <= 1.0)
        # q = s x e1
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = qx * dx
        v += qy * dy
        v += qz * dz
        v *= inv
        ok &= (v >= 0.0) & (u + v <= 1.0)
        t = qx * e2x
        t += qy * e2y
        t += qz * e2z
        t *= inv
        ok &= (t > tmin) & (t < tmax)
        return np.where(ok, t, np.float32(_INF))

    def _tri_barycentric(self, o: np.ndarray, d: np.ndarray, i: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) of rays (o, d) against their matched triangles `i`."""
        e1 = self.tri_e1[i]
        e2 = self.tri_e2[i]
        s = o - self.tri_v0[i]
        p = np.cross(d, e2)
        det = np.einsum("ij,ij->i", p, e1)
        inv = 1.0 / np.where(np.abs(det) > 1e-300, det, 1.0)
        u = np.einsum("ij,ij->i", s, p) * inv
        q = np.cross(s, e1)
        v = np.einsum("ij,ij->i", q, d) * inv
        return u, v

    _LANE_CHUNK = 8192  # keeps the (chunk, prims) grids cache-resident

    def intersect_batch(self, o: np.ndarray, d: np.ndarray, mode: str,
                        tmin=None, tmax=_INF) -> HitBatch:
        """Nearest hit per lane.

        `skip_dynamic` restricts hits to static primitives and reports,
        per lane, whether dynamic geometry lay strictly in front of the
        returned hit (`crossed_dynamic`).  This filtered traversal is
        equivalent to repeatedly re-casting from each skipped surface:
        the nearest non-dynamic hit and the set of crossed dynamic
        primitives are identical either way.
        """
        if mode not in (INCLUDE_DYNAMIC, SKIP_DYNAMIC):
            raise ValueError(f"unknown intersect mode {mode!r}")
        o = np.atleast_2d(np.asarray(o, dtype=np.float64))
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        n = o.shape[0]
        if tmin is None:
            tmin = self.t_min
        tmin = np.float32(tmin)
        tmax = np.float32(tmax) if np.isscalar(tmax) else tmax
        o32 = o.astype(np.float32)
        d32 = d.astype(np.float32)

        hb = HitBatch(n)
        skip = mode == SKIP_DYNAMIC
        for lo in range(0, n, self._LANE_CHUNK):
            sl = slice(lo, min(lo + self._LANE_CHUNK, n))
            ts = self._sphere_ts(o32[sl], d32[sl], tmin, tmax)
            tt = self._triangle_ts(o32[sl], d32[sl], tmin, tmax)
            if skip:
                ts_sel = np.where(self.sph_dyn[None, :], np.float32(_INF), ts) \
                    if self.n_spheres else ts
                tt_sel = np.where(self.tri_dyn[None, :], np.float32(_INF), tt) \
                    if self.n_triangles else tt
            else:
                ts_sel, tt_sel = ts, tt
            m = ts_sel.shape[0]
            best_s = ts_sel.min(axis=1) if ts_sel.shape[1] else np.full(m, _INF, np.float32)
            best_t = tt_sel.min(axis=1) if tt_sel.shape[1] else np.full(m, _INF, np.float32)
            use_tri = best_t < best_s
            t_hit = np.where(use_tri, best_t, best_s)
            hb.t[sl] = t_hit
            hit = np.isfinite(t_hit)
            hb.hit[sl] = hit
            if skip:
                nearest_dyn = np.full(m, _INF, np.float32)
                if self.n_spheres and self.sph_dyn.any():
                    nearest_dyn = np.minimum(
                        nearest_dyn,
                        np.where(self.sph_dyn[None, :], ts, np.float32(_INF)).min(axis=1))
                if self.n_triangles and self.tri_dyn.any():
                    nearest_dyn = np.minimum(
                        nearest_dyn,
                        np.where(self.tri_dyn[None, :], tt, np.float32(_INF)).min(axis=1))
                hb.crossed_dynamic[sl] = nearest_dyn < t_hit
            if not hit.any():
                continue
            base = lo + np.arange(m)
            sm = hit & ~use_tri
            if sm.any():
                i = np.argmin(ts_sel[sm], axis=1)
                rows = base[sm]
                hb.primitive_id[rows] = i
                hb.material_id[rows] = self.sph_mat[i]
                hb.is_dynamic[rows] = self.sph_dyn[i]
                hb.delta_relevant[rows] = self.sph_rel[i]
                pos = o[rows] + d[rows] * hb.t[rows][:, None]
                nrm = (pos - self.sph_center[i]) / self.sph_radius[i][:, None]
                hb.position[rows] = pos
                hb.normal[rows] = nrm
                hb.geom_normal[rows] = nrm
            tm = hit & use_tri
            if tm.any():
                i = np.argmin(tt_sel[tm], axis=1)
                rows = base[tm]
                hb.primitive_id[rows] = self.n_spheres + i
                hb.material_id[rows] = self.tri_mat[i]
                hb.is_dynamic[rows] = self.tri_dyn[i]
                hb.delta_relevant[rows] = self.tri_rel[i]
                hb.position[rows] = o[rows] + d[rows] * hb.t[rows][:, None]
                hb.geom_normal[rows] = self.tri_n[i]
                smooth = self.tri_has_sn[i]
                if smooth.any():
                    rs = rows[smooth]
                    isn = i[smooth]
                    u, v = self._tri_barycentric(o[rs], d[rs], isn)
                    sn = self.tri_sn[isn]
                    hb.normal[rs] = normalize(
                        sn[:, 0] * (1.0 - u - v)[:, None] + sn[:, 1] * u[:, None]
                        + sn[:, 2] * v[:, None])
                flat = rows[~smooth]
                hb.normal[flat] = self.tri_n[i[~smooth]]
        return hb

    def intersect(self, origin, direction, mode: str = INCLUDE_DYNAMIC,
                  tmin=None, tmax=_INF) -> Intersection | None:
        """Scalar convenience wrapper around `intersect_batch`."""
        hb = self.intersect_batch(np.asarray(origin, dtype=np.float64)[None, :],
                                  np.asarray(direction, dtype=np.float64)[None, :],
                                  mode, tmin=tmin, tmax=tmax)
        if not hb.hit[0]:
            return None
        return Intersection(t=float(hb.t[0]), position=hb.position[0],
                            normal=hb.normal[0], material_id=int(hb.material_id[0]),
                            primitive_id=int(hb.primitive_id[0]),
                            is_dynamic=bool(hb.is_dynamic[0]))

    def occluded_batch(self, o: np.ndarray, d: np.ndarray, tmax: np.ndarray,
                       mode: str) -> tuple[np.ndarray, np.ndarray]:
        """Any-hit test along segments; returns (blocked, crossed_dynamic).

        `crossed_dynamic` is only meaningful in skip mode, where dynamic
        primitives never block but their crossings are reported.  The
        segment is shortened by a relative margin large enough to keep
        the float32 kernels from reporting the endpoint surface itself.
        """
        o = np.atleast_2d(o)
        d = np.atleast_2d(d)
        n = o.shape[0]
        lim = (np.asarray(tmax, dtype=np.float64) * (1.0 - 1e-5)).astype(np.float32)
        o32 = o.astype(np.float32)
        d32 = d.astype(np.float32)
        tmin = np.float32(self.t_min)
        blocked = np.zeros(n, dtype=bool)
        crossed = np.zeros(n, dtype=bool)
        skip = mode == SKIP_DYNAMIC
        for lo in range(0, n, self._LANE_CHUNK):
            sl = slice(lo, min(lo + self._LANE_CHUNK, n))
            ts = self._sphere_ts(o32[sl], d32[sl], tmin, lim[sl][:, None])
            tt = self._triangle_ts(o32[sl], d32[sl], tmin, lim[sl][:, None])
            fin_s = np.isfinite(ts)
            fin_t = np.isfinite(tt)
            if skip:
                blocked[sl] = ((fin_s & ~self.sph_dyn[None, :]).any(axis=1)
                               | (fin_t & ~self.tri_dyn[None, :]).any(axis=1))
                crossed[sl] = ((fin_s & self.sph_dyn[None, :]).any(axis=1)
                               | (fin_t & self.tri_dyn[None, :]).any(axis=1))
            else:
                blocked[sl] = fin_s.any(axis=1) | fin_t.any(axis=1)
        return blocked, crossed

    # -- emission ----------------------------------------------------------

    def eval_emission(self, hit, state: str):
        """Emission seen by a ray, under the requested light state.

        `hit` is an Intersection (surface emission via its material), a
        unit direction (environment lookup for a miss), or None (black
        when the scene has no environment).
        """
        if state not in (STATIC_STATE, DYNAMIC_STATE):
            raise ValueError(f"unknown light state {state!r}")
        if isinstance(hit, Intersection):
            if state == STATIC_STATE and hit.is_dynamic:
                return np.zeros(3)
            return self.materials[hit.material_id].emission(state)
        if hit is None:
            return np.zeros(3)
        env = self.env_static if state == STATIC_STATE else self.env_dynamic
        if env is None:
            return np.zeros(3)
        return env.eval(np.asarray(hit, dtype=np.float64))

    def env_radiance(self, directions: np.ndarray, state: str) -> np.ndarray:
        env = self.env_static if state == STATIC_STATE else self.env_dynamic
        if env is None:
            return np.zeros((np.atleast_2d(directions).shape[0], 3))
        return np.atleast_2d(env.eval(directions))

    # -- emitter sampling (NEE) ---------------------------------------------

    def sample_emitters(self, u_sel: np.ndarray, u_a: np.ndarray, u_b: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Pick an emitter uniformly, then a point uniformly on its area.

        Returns (point, light normal, area pdf, material id, primitive id);
        lanes keep their selection correlated across the paired traversals
        because the same unit randoms drive both.
        """
        n = u_sel.shape[0]
        if self.n_emitters == 0:
            z3 = np.zeros((n, 3))
            return z3, z3, np.zeros(n), np.full(n, -1, np.int64), np.full(n, -1, np.int64)
        k = np.minimum((u_sel * self.n_emitters).astype(np.int64), self.n_emitters - 1)
        pdf_area = 1.0 / (self.n_emitters * self.em_area[k])
        point = np.zeros((n, 3))
        nrm = np.zeros((n, 3))

        sph = self.em_kind[k] == 0
        if sph.any():
            i = self.em_idx[k[sph]]
            z = 1.0 - 2.0 * u_a[sph]
            r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
            phi = 2.0 * math.pi * u_b[sph]
            dirn = np.stack([r * np.cos(phi), z, r * np.sin(phi)], axis=1)
            point[sph] = self.sph_center[i] + dirn * self.sph_radius[i][:, None]
            nrm[sph] = dirn
        tri = ~sph
        if tri.any():
            i = self.em_idx[k[tri]]
            a = u_a[tri]
            b = u_b[tri]
            flip = a + b > 1.0
            a = np.where(flip, 1.0 - a, a)
            b = np.where(flip, 1.0 - b, b)
            point[tri] = self.tri_v0[i] + a[:, None] * self.tri_e1[i] + b[:, None] * self.tri_e2[i]
            nrm[tri] = self.tri_n[i]
        return point, nrm, pdf_area, self.em_mat[k], self.em_prim[k]

    def emitter_pdf_area(self, prim_id: np.ndarray) -> np.ndarray:
        """Area-measure NEE pdf of hitting primitive `prim_id`, 0 if not an emitter."""
        pdf = np.zeros(prim_id.shape[0])
        if self.n_emitters == 0:
            return pdf
        lut = np.zeros(self.n_spheres + self.n_triangles)
        lut[self.em_prim] = 1.0 / (self.n_emitters * self.em_area)
        valid = prim_id >= 0
        pdf[valid] = lut[prim_id[valid]]
        return pdf
