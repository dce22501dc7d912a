"""Precomputed static-scene radiance: oracle and learned backends.

Both backends answer the same 5D query - outgoing radiance at a surface
point seen from a direction (plus the surface normal as an auxiliary
input).  The oracle path-traces the static scene on demand and is
unbiased; the learned backend evaluates a multiresolution hash grid
feeding a small MLP and is deterministic and fast but biased.  The
hybrid compositor can swap one for the other, which is how the
unbiasedness of the full pipeline is tested.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .integrators import TraceSettings, trace_batch
from .nn import (Adam, HashGrid, HashGridConfig, Mlp, MlpConfig, softplus,
                 softplus_grad)
from .scene import Scene
from .vecmath import normalize, orthonormal_basis

log = logging.getLogger(__name__)

_FIELD_MAGIC = b"DPSF"
_FIELD_VERSION = 1

# purpose tags folded into stream keys so dataset draws, dataset targets
# and oracle queries never collide with pixel sampling
_KEY_DATASET = 0xD5
_KEY_TARGET = 0xE7
_KEY_ORACLE = 0x0A


@dataclass
class FieldQuery:
    """One cache lookup: first-hit position, view ray direction, normal."""

    position: np.ndarray
    direction: np.ndarray   # unit vector, camera toward surface
    normal: np.ndarray


@dataclass
class TrainingSet:
    """Column arrays of cache training samples."""

    positions: np.ndarray   # (N, 3)
    directions: np.ndarray  # (N, 3) camera-toward-surface
    normals: np.ndarray     # (N, 3)
    targets: np.ndarray     # (N, 3) one-sample radiance estimates
    weights: np.ndarray     # (N,)

    def __len__(self) -> int:
        return self.positions.shape[0]


class OracleStaticField:
    """Unbiased on-demand estimates from the reference static integrator."""

    def __init__(self, scene: Scene, spp: int = 256, seed: int = 0x5EED,
                 backoff: float = 1e-3, settings: TraceSettings | None = None):
        self.scene = scene
        self.spp = int(spp)
        self.seed = seed
        self.backoff = backoff
        self.settings = settings or TraceSettings()

    def query_batch(self, positions: np.ndarray, directions: np.ndarray,
                    normals: np.ndarray | None = None, with_se: bool = False):
        """Mean of `spp` path-traced estimates per query.

        Each estimate launches a short ray that lands on the queried
        point and shades it exactly like a camera ray would, so one
        sample of this oracle is definitionally one integrator sample.
        With `with_se` the per-query standard error is returned too.
        """
        positions = np.atleast_2d(positions)
        directions = np.atleast_2d(directions)
        n = positions.shape[0]
        qi = np.repeat(np.arange(n, dtype=np.int64), self.spp)
        si = np.tile(np.arange(self.spp, dtype=np.int64), n)
        pref = rng.stream_prefix_array(self.seed, qi, np.full_like(qi, _KEY_ORACLE), 0, si)
        o = positions[qi] - directions[qi] * self.backoff
        d = directions[qi]
        r = trace_batch(self.scene, None, "static", qi, qi, pref,
                        self.settings, rays=(o, d))
        samples = r.total.reshape(n, self.spp, 3)
        mean = samples.mean(axis=1)
        if not with_se:
            return mean
        se = samples.std(axis=1, ddof=1) / np.sqrt(self.spp) if self.spp > 1 \
            else np.zeros_like(mean)
        return mean, se

    def query(self, q: FieldQuery) -> np.ndarray:
        return self.query_batch(q.position[None, :], q.direction[None, :])[0]


class LearnedStaticField:
    """Hash grid + MLP radiance cache with hand-rolled training."""

    def __init__(self, bounds_min, bounds_max,
                 grid_config: HashGridConfig | None = None,
                 mlp_config: MlpConfig | None = None,
                 seed: int = 1, dtype=np.float32):
        self.grid_config = grid_config or HashGridConfig()
        self.mlp_config = mlp_config or MlpConfig()
        self.dtype = np.dtype(dtype)
        self.grid = HashGrid(self.grid_config, bounds_min, bounds_max,
                             seed=seed, dtype=dtype)
        self.in_dim = self.grid.out_dim + 6
        self.mlp = Mlp(self.in_dim, self.mlp_config, seed=seed + 1, dtype=dtype)

    @classmethod
    def for_scene(cls, scene: Scene, **kw) -> "LearnedStaticField":
        return cls(scene.bounds_min, scene.bounds_max, **kw)

    def parameters(self) -> list[np.ndarray]:
        return [self.grid.table] + self.mlp.weights + self.mlp.biases

    def _forward(self, positions, directions, normals):
        feats, gcache = self.grid.forward(positions)
        aux = np.concatenate([directions, normals], axis=1).astype(self.dtype)
        h = np.concatenate([feats, aux], axis=1)
        y, acts = self.mlp.forward(h)
        return softplus(y), (gcache, acts, y)

    def query_batch(self, positions: np.ndarray, directions: np.ndarray,
                    normals: np.ndarray | None = None) -> np.ndarray:
        positions = np.atleast_2d(positions)
        directions = np.atleast_2d(directions)
        if normals is None:
            normals = np.zeros_like(directions)
        else:
            normals = np.atleast_2d(normals)
        oob = ((positions < self.grid.bounds_min) | (positions > self.grid.bounds_max))
        if oob.any():
            log.warning("clamping %d out-of-bounds field queries into the grid box",
                        int(oob.any(axis=1).sum()))
        out, _ = self._forward(positions, directions, normals)
        return out.astype(np.float64)

    def query(self, q: FieldQuery) -> np.ndarray:
        return self.query_batch(q.position[None, :], q.direction[None, :],
                                q.normal[None, :])[0]

    # -- training ----------------------------------------------------------

    def loss_and_grads(self, batch: TrainingSet, eps: float = 0.01,
                       loss_norm: str = "pred"):
        """Relative squared error and parameter gradients for one batch.

        `loss_norm` picks the denominator: the detached prediction
        ("pred", robust to heavy-tailed one-sample targets) or the
        target itself ("target").
        """
        pred, (gcache, acts, y) = self._forward(
            batch.positions, batch.directions, batch.normals)
        t = batch.targets.astype(pred.dtype)
        w = batch.weights.astype(pred.dtype)[:, None]
        diff = pred - t
        if loss_norm == "pred":
            den = pred * pred + eps
        elif loss_norm == "target":
            den = t * t + eps
        else:
            raise ValueError(f"unknown loss_norm {loss_norm!r}")
        den = den.astype(pred.dtype)
        n = pred.shape[0]
        loss = float(np.mean(w * diff * diff / den))
        dpred = (2.0 * w * diff / den / (n * 3)).astype(pred.dtype)
        dy = dpred * softplus_grad(y).astype(pred.dtype)
        dh, gw, gb = self.mlp.backward(acts, dy)
        dfeats = dh[:, :self.grid.out_dim]
        ggrid = self.grid.backward(gcache, dfeats)
        return loss, [ggrid] + gw + gb


def train(field: LearnedStaticField, dataset: TrainingSet, *,
          epochs: int = 10, lr: float = 1e-2, batch_size: int = 8192,
          seed: int = 7, lr_schedule: str = "cosine", loss_norm: str = "pred",
          loss_eps: float = 0.01, verbose: bool = False) -> list[float]:
    """Minibatch Adam over the dataset; returns the per-epoch mean loss.

    Deterministic for a fixed seed.  Aborts if the loss exceeds ten
    times its initial value for three consecutive epochs.
    """
    if len(dataset) == 0:
        raise ValueError("training requires a non-empty dataset")
    opt = Adam(field.parameters(), lr=lr)
    steps_per_epoch = max(1, (len(dataset) + batch_size - 1) // batch_size)
    total_steps = epochs * steps_per_epoch
    losses = []
    initial = None
    bad_epochs = 0
    step = 0
    for epoch in range(epochs):
        gen = np.random.Generator(np.random.PCG64(seed * 1000 + epoch))
        order = gen.permutation(len(dataset))
        epoch_loss = 0.0
        for s in range(steps_per_epoch):
            sel = order[s * batch_size:(s + 1) * batch_size]
            batch = TrainingSet(dataset.positions[sel], dataset.directions[sel],
                                dataset.normals[sel], dataset.targets[sel],
                                dataset.weights[sel])
            loss, grads = field.loss_and_grads(batch, eps=loss_eps,
                                               loss_norm=loss_norm)
            if lr_schedule == "cosine":
                cur = lr * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * step / max(1, total_steps))))
            elif lr_schedule == "constant":
                cur = lr
            else:
                raise ValueError(f"unknown lr schedule {lr_schedule!r}")
            opt.step(grads, lr=cur)
            epoch_loss += loss
            step += 1
        epoch_loss /= steps_per_epoch
        losses.append(epoch_loss)
        if verbose:
            log.info("epoch %d/%d loss %.3e", epoch + 1, epochs, epoch_loss)
        if not np.isfinite(epoch_loss):
            raise RuntimeError(
                f"training diverged: non-finite loss in epoch {epoch + 1}")
        if initial is None:
            initial = epoch_loss
        bad_epochs = bad_epochs + 1 if epoch_loss > 10.0 * initial else 0
        if bad_epochs >= 3:
            raise RuntimeError(
                f"training diverged: loss {epoch_loss:.3e} stayed above 10x the "
                f"initial {initial:.3e} for 3 consecutive epochs")
    return losses


# ---------------------------------------------------------------------------
# dataset generation


def _static_area_table(scene: Scene):
    kinds, idxs, areas = [], [], []
    for i in range(scene.n_spheres):
        if not scene.sph_dyn[i]:
            kinds.append(0)
            idxs.append(i)
            areas.append(4.0 * np.pi * scene.sph_radius[i] ** 2)
    for i in range(scene.n_triangles):
        if not scene.tri_dyn[i]:
            kinds.append(1)
            idxs.append(i)
            areas.append(scene.tri_area[i])
    areas = np.asarray(areas, dtype=np.float64)
    if areas.size == 0 or areas.sum() <= 0:
        raise ValueError("scene has no static surface to sample")
    cdf = np.cumsum(areas / areas.sum())
    cdf[-1] = 1.0
    return np.asarray(kinds), np.asarray(idxs), cdf


def _draw_surface_queries(scene, kinds, idxs, cdf, row_ids, seed, round_id):
    """One round of (point, outgoing direction) draws for the given rows."""
    tag = np.full_like(row_ids, _KEY_DATASET)
    pref = rng.stream_prefix_array(seed, row_ids, tag, round_id,
                                   np.zeros_like(row_ids))
    u_sel = rng.uniform_at_array(pref, 0)
    u_a = rng.uniform_at_array(pref, 1)
    u_b = rng.uniform_at_array(pref, 2)
    u_d1 = rng.uniform_at_array(pref, 3)
    u_d2 = rng.uniform_at_array(pref, 4)

    n = row_ids.shape[0]
    k = np.minimum(np.searchsorted(cdf, u_sel, side="right"), cdf.size - 1)
    pos = np.zeros((n, 3))
    nrm = np.zeros((n, 3))
    prim = np.zeros(n, dtype=np.int64)
    sph = kinds[k] == 0
    if sph.any():
        si = idxs[k[sph]]
        z = 1.0 - 2.0 * u_a[sph]
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = 2.0 * np.pi * u_b[sph]
        nv = np.stack([r * np.cos(phi), z, r * np.sin(phi)], axis=1)
        pos[sph] = scene.sph_center[si] + nv * scene.sph_radius[si][:, None]
        nrm[sph] = nv
        prim[sph] = si
    tri = ~sph
    if tri.any():
        ti = idxs[k[tri]]
        a, b = u_a[tri], u_b[tri]
        flip = a + b > 1.0
        a = np.where(flip, 1.0 - a, a)
        b = np.where(flip, 1.0 - b, b)
        pos[tri] = scene.tri_v0[ti] + a[:, None] * scene.tri_e1[ti] \
            + b[:, None] * scene.tri_e2[ti]
        nrm[tri] = scene.tri_n[ti]
        prim[tri] = ti + scene.n_spheres

    phi = 2.0 * np.pi * u_d1
    cos_t = np.sqrt(np.maximum(0.0, 1.0 - u_d2))
    sin_t = np.sqrt(np.maximum(0.0, u_d2))
    t, bt = orthonormal_basis(nrm)
    wo = (np.cos(phi) * sin_t)[:, None] * t + (np.sin(phi) * sin_t)[:, None] * bt \
        + cos_t[:, None] * nrm
    return pos, nrm, normalize(wo), prim


def generate_dataset(scene: Scene, count: int, seed: int = 11,
                     settings: TraceSettings | None = None,
                     backoff: float = 1e-3) -> TrainingSet:
    """Surface-point queries with one-sample path-traced targets.

    Points are drawn area-uniformly over static primitives, directions
    cosine-weighted about the surface normal; the target of each sample
    is a single estimate from the reference static integrator launched
    back along the query direction.  Draws whose probe ray fails to land
    on its own primitive (grazing an edge seam from the backed-off
    origin) are redrawn deterministically, so regenerating with the same
    seed reproduces the identical stream.
    """
    from .scene import SKIP_DYNAMIC
    settings = settings or TraceSettings()
    kinds, idxs, cdf = _static_area_table(scene)
    ids = np.arange(count, dtype=np.int64)
    pos = np.zeros((count, 3))
    nrm = np.zeros((count, 3))
    wo = np.zeros((count, 3))
    pending = ids
    for round_id in range(8):
        if pending.size == 0:
            break
        p, n, w, prim = _draw_surface_queries(scene, kinds, idxs, cdf,
                                              pending, seed, round_id)
        hb = scene.intersect_batch(p + w * backoff, -w, SKIP_DYNAMIC,
                                   tmin=0.1 * backoff)
        good = hb.hit & (hb.primitive_id == prim) \
            & (np.abs(hb.t - backoff) < 0.5 * backoff)
        keep = pending[good]
        pos[keep] = p[good]
        nrm[keep] = n[good]
        wo[keep] = w[good]
        pending = pending[~good]
    if pending.size:
        # pathological geometry: keep the last draw rather than loop forever
        pos[pending], nrm[pending], wo[pending], _ = _draw_surface_queries(
            scene, kinds, idxs, cdf, pending, seed, 8)

    view_dir = -wo
    tpref = rng.stream_prefix_array(seed, ids, np.full_like(ids, _KEY_TARGET),
                                    0, np.zeros_like(ids))
    r = trace_batch(scene, None, "static", ids, ids, tpref, settings,
                    rays=(pos + wo * backoff, view_dir))
    return TrainingSet(positions=pos, directions=view_dir, normals=nrm,
                       targets=r.total, weights=np.ones(count))


# ---------------------------------------------------------------------------
# serialization: magic, version, json config header, float32 blobs


def save_field(field: LearnedStaticField, path: str | Path) -> None:
    header = {
        "grid": vars(field.grid_config),
        "mlp": vars(field.mlp_config),
        "bounds_min": field.grid.bounds_min.tolist(),
        "bounds_max": field.grid.bounds_max.tolist(),
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_FIELD_MAGIC)
        f.write(struct.pack("<II", _FIELD_VERSION, len(blob)))
        f.write(blob)
        for p in field.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_field(path: str | Path) -> LearnedStaticField:
    with open(path, "rb") as f:
        if f.read(4) != _FIELD_MAGIC:
            raise ValueError(f"{path}: not a static field file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != _FIELD_VERSION:
            raise ValueError(f"{path}: unsupported field version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        field = LearnedStaticField(
            header["bounds_min"], header["bounds_max"],
            grid_config=HashGridConfig(**header["grid"]),
            mlp_config=MlpConfig(**header["mlp"]))
        for p in field.parameters():
            raw = f.read(p.size * 4)
            if len(raw) != p.size * 4:
                raise ValueError(f"{path}: truncated parameter blob")
            p[...] = np.frombuffer(raw, dtype="<f4").reshape(p.shape)
    return field


def query(field, q: FieldQuery) -> np.ndarray:
    """Backend-agnostic scalar query (oracle or learned)."""
    return field.query(q)
