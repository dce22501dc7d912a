"""Multiresolution hash-grid encoder, small MLP and Adam, self-contained.

The cache network is tiny (a few tens of thousands of parameters), so
training runs on plain numpy: forward/backward are hand-written, which
keeps the artifact dependency-free and bit-reproducible for a fixed
seed.  Everything is dtype-parametric; float32 for real training,
float64 for finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_HASH_PRIMES = (1, 2654435761, 805459861)


@dataclass
class HashGridConfig:
    levels: int = 8
    table_size_log2: int = 14
    features: int = 2
    base_resolution: int = 4
    finest_resolution: int = 128

    def resolutions(self) -> np.ndarray:
        if self.levels == 1:
            return np.array([self.base_resolution], dtype=np.int64)
        growth = (self.finest_resolution / self.base_resolution) ** (1.0 / (self.levels - 1))
        res = np.floor(self.base_resolution * growth ** np.arange(self.levels)).astype(np.int64)
        return np.maximum(res, 1)


class HashGrid:
    """Trilinearly interpolated feature tables over a bounding box.

    Levels whose dense corner count fits in the table are indexed
    directly (no collisions); finer levels use the usual prime-XOR hash
    into a power-of-two table.
    """

    def __init__(self, config: HashGridConfig, bounds_min, bounds_max,
                 seed: int = 0, dtype=np.float32):
        self.config = config
        self.bounds_min = np.asarray(bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(bounds_max, dtype=np.float64)
        self.extent = np.maximum(self.bounds_max - self.bounds_min, 1e-12)
        self.table_size = 1 << config.table_size_log2
        self.resolutions = config.resolutions()
        self.dense = [(int(r) + 1) ** 3 <= self.table_size for r in self.resolutions]
        gen = np.random.Generator(np.random.PCG64(seed))
        self.table = gen.uniform(-1e-4, 1e-4, size=(config.levels, self.table_size,
                                                    config.features)).astype(dtype)

    @property
    def out_dim(self) -> int:
        return self.config.levels * self.config.features

    def _corner_index(self, level: int, ix, iy, iz):
        r = int(self.resolutions[level])
        if self.dense[level]:
            return (ix + (r + 1) * (iy + (r + 1) * iz)).astype(np.int64)
        h = (ix.astype(np.uint64) * np.uint64(_HASH_PRIMES[0])
             ^ iy.astype(np.uint64) * np.uint64(_HASH_PRIMES[1])
             ^ iz.astype(np.uint64) * np.uint64(_HASH_PRIMES[2]))
        return (h & np.uint64(self.table_size - 1)).astype(np.int64)

    def interpolation(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Corner indices (N, L, 8) and weights (N, L, 8) for points x.

        The weights at any point sum to one per level (partition of
        unity), which the tests assert directly.
        """
        n = x.shape[0]
        u = (np.asarray(x, dtype=np.float64) - self.bounds_min) / self.extent
        u = np.clip(u, 0.0, 1.0)
        L = self.config.levels
        idx = np.empty((n, L, 8), dtype=np.int64)
        w = np.empty((n, L, 8), dtype=np.float64)
        for l in range(L):
            r = int(self.resolutions[l])
            p = u * r
            i0 = np.minimum(p.astype(np.int64), r - 1)
            f = p - i0
            for c in range(8):
                ox, oy, oz = c & 1, (c >> 1) & 1, (c >> 2) & 1
                idx[:, l, c] = self._corner_index(
                    l, i0[:, 0] + ox, i0[:, 1] + oy, i0[:, 2] + oz)
                wx = f[:, 0] if ox else 1.0 - f[:, 0]
                wy = f[:, 1] if oy else 1.0 - f[:, 1]
                wz = f[:, 2] if oz else 1.0 - f[:, 2]
                w[:, l, c] = wx * wy * wz
        return idx, w

    def forward(self, x: np.ndarray):
        """Features (N, L*F) plus the cache needed for the backward pass."""
        idx, w = self.interpolation(x)
        n, L, _ = idx.shape
        F = self.config.features
        wc = w.astype(self.table.dtype)
        feats = np.empty((n, L, F), dtype=self.table.dtype)
        for l in range(L):
            gathered = self.table[l][idx[:, l, :]]           # (N, 8, F)
            feats[:, l, :] = np.einsum("nc,ncf->nf", wc[:, l, :], gathered)
        return feats.reshape(n, L * F), (idx, wc)

    def backward(self, cache, dfeats: np.ndarray) -> np.ndarray:
        """Gradient of the loss w.r.t. the feature tables.

        Scatter-add is done with bincount over flattened indices, which
        is deterministic and much faster than np.add.at.
        """
        idx, wc = cache
        n, L, _ = idx.shape
        F = self.config.features
        dfeats = dfeats.reshape(n, L, F)
        grad = np.zeros_like(self.table)
        for l in range(L):
            contrib = wc[:, l, :, None] * dfeats[:, l, None, :]   # (N, 8, F)
            flat = idx[:, l, :].ravel()
            for f in range(F):
                grad[l, :, f] = np.bincount(flat, weights=contrib[:, :, f].ravel(),
                                            minlength=self.table_size)
        return grad


@dataclass
class MlpConfig:
    hidden_layers: int = 7
    width: int = 64
    out_dim: int = 3


class Mlp:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, in_dim: int, config: MlpConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        gen = np.random.Generator(np.random.PCG64(seed))
        dims = [in_dim] + [config.width] * config.hidden_layers + [config.out_dim]
        self.weights = []
        self.biases = []
        for a, b in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / a)
            self.weights.append((gen.standard_normal((a, b)) * scale).astype(dtype))
            self.biases.append(np.zeros(b, dtype=dtype))

    def forward(self, x: np.ndarray):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, dy: np.ndarray):
        """Returns (dx, weight grads, bias grads)."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        last = len(self.weights) - 1
        grad = dy
        for i in range(last, -1, -1):
            if i < last:
                grad = grad * (acts[i + 1] > 0.0)
            gw[i] = acts[i].T @ grad
            gb[i] = grad.sum(axis=0)
            grad = grad @ self.weights[i].T
        return grad, gw, gb


class Adam:
    """Standard Adam over a flat list of parameter arrays (in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-9):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= (lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)).astype(p.dtype)


def softplus(x: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """Numerically stable softplus; keeps cache outputs nonnegative."""
    z = beta * x
    return np.where(z > 20.0, x, np.log1p(np.exp(np.minimum(z, 20.0))) / beta)


def softplus_grad(x: np.ndarray, beta: float = 1.0) -> np.ndarray:
    z = beta * x
    return np.where(z > 20.0, 1.0, 1.0 / (1.0 + np.exp(-np.minimum(z, 20.0))))
