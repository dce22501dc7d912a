"""Portable FloatMap reader/writer.

Images are float32, little-endian on disk (negative scale field), with
scanlines stored bottom-to-top per the PFM convention.  In memory we use
row 0 = top, so both functions flip vertically.  Color images are
(H, W, 3) `PF`; single-channel images are (H, W) `Pf`.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def write_pfm(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 3 and image.shape[2] == 3:
        header = b"PF"
    elif image.ndim == 2:
        header = b"Pf"
    else:
        raise ValueError(f"expected (H,W,3) or (H,W) image, got shape {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(b"%d %d\n" % (w, h))
        f.write(b"-1.0\n")  # negative scale: little-endian
        np.flipud(image).astype("<f4").tofile(f)


def read_pfm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().decode("ascii")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed PFM dimensions line {dims!r}")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().rstrip())
        endian = "<" if scale < 0 else ">"
        data = np.fromfile(f, dtype=endian + "f4", count=w * h * channels)
    if data.size != w * h * channels:
        raise ValueError(f"{path}: truncated PFM payload")
    shape = (h, w, 3) if channels == 3 else (h, w)
    img = np.flipud(data.reshape(shape))
    if abs(scale) != 1.0:
        img = img * abs(scale)
    return np.ascontiguousarray(img, dtype=np.float32)
