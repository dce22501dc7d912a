"""Small batched 3-vector helpers shared by the tracer modules.

All functions take and return float64 arrays of shape (N, 3) unless noted.
"""

from __future__ import annotations

import numpy as np


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise dot product, shape (N,)."""
    return np.einsum("ij,ij->i", a, b)


def norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(a, a))


def normalize(a: np.ndarray, eps: float = 0.0) -> np.ndarray:
    n = norm(a)
    if eps:
        n = np.maximum(n, eps)
    return a / n[:, None]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.cross(a, b)


def orthonormal_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tangent and bitangent rows completing unit normals `n` to a frame.

    Branchless construction (Duff et al. style) so it vectorizes.
    """
    sign = np.where(n[:, 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t = np.stack([1.0 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]], axis=1)
    bt = np.stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]], axis=1)
    return t, bt


def reflect(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror reflection of incoming directions `d` about normals `n`."""
    return d - 2.0 * dot(d, n)[:, None] * n


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luminance; works on (..., 3) arrays."""
    return rgb[..., 0] * 0.2126 + rgb[..., 1] * 0.7152 + rgb[..., 2] * 0.0722
