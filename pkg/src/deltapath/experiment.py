"""Equal-cost comparison experiments.

One correlated delta sample traces both scene variants, so it is
charged as two plain path-tracing samples; arms are normalized under
that rule before their errors are compared.  Adaptive arms follow the
two-frame protocol: frame 0 renders with a uniform map purely to seed
the statistics (the steady-state video path gets these for free from
the previous frame) and frame 1 is scored.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .compositor import compute_metrics
from .integrators import TraceSettings
from .render import RenderConfig, render_frame, render_image, render_sequence, resolve_scene

CSV_COLUMNS = ["scene", "arm", "integrator", "adaptive", "frame", "seed",
               "spp", "cost_pt_spp", "mse", "rel_mse", "mse_masked",
               "mse_unmasked", "seconds", "error"]

REFERENCE_SEED = 0x5EF


@dataclass
class ExperimentArm:
    name: str
    integrator: str = "hybrid"     # "hybrid" | "path-traced"
    spp: int = 1                   # delta spp (hybrid) or plain spp
    adaptive: bool = False
    masked: bool = True

    @property
    def cost_pt_spp(self) -> int:
        return 2 * self.spp if self.integrator == "hybrid" else self.spp


@dataclass
class ExperimentSpec:
    scene: str
    arms: list[ExperimentArm]
    reference_spp: int = 16384
    seeds: list[int] = field(default_factory=lambda: [1])
    frame: int = 1
    resolution: tuple[int, int] | None = None
    oracle_spp: int = 2048
    settings: TraceSettings = field(default_factory=TraceSettings)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as f:
            data = json.load(f)
        arms = [ExperimentArm(**a) for a in data.pop("arms")]
        if "resolution" in data and data["resolution"] is not None:
            data["resolution"] = tuple(data["resolution"])
        return cls(arms=arms, **data)


def _arm_image(spec: ExperimentSpec, arm: ExperimentArm, seed: int):
    if arm.integrator == "path-traced":
        scene, camera = resolve_scene(RenderConfig(
            scene=spec.scene, frame=spec.frame, resolution=spec.resolution,
            settings=spec.settings))
        acc = render_image(scene, camera, "dynamic", arm.spp, seed,
                           spec.frame, "total", spec.settings)
        return acc.mean(), None
    if arm.integrator != "hybrid":
        raise ValueError(f"unknown arm integrator {arm.integrator!r}")
    cfg = RenderConfig(scene=spec.scene, integrator="hybrid", spp=arm.spp,
                       seed=seed, resolution=spec.resolution,
                       masked=arm.masked, adaptive=arm.adaptive,
                       field_backend="oracle", oracle_spp=spec.oracle_spp,
                       settings=spec.settings)
    if arm.adaptive and spec.frame >= 1:
        results = render_sequence(cfg, spec.frame + 1)
        res = results[spec.frame]
    else:
        cfg.frame = spec.frame
        res = render_frame(cfg)
    return res.image, res


def run_experiment(spec: ExperimentSpec, out_csv=None) -> list[dict]:
    """One row per (arm, seed); failures are recorded, the run continues."""
    ref_cfg = RenderConfig(scene=spec.scene, integrator="reference-dynamic",
                           spp=spec.reference_spp, seed=REFERENCE_SEED,
                           frame=spec.frame, resolution=spec.resolution,
                           settings=spec.settings)
    reference = render_frame(ref_cfg).image

    from .compositor import build_mask
    scene, camera = resolve_scene(ref_cfg)
    mask, _ = build_mask(scene, camera)

    rows = []
    for arm in spec.arms:
        for seed in spec.seeds:
            row = {"scene": spec.scene if isinstance(spec.scene, str) else scene.name,
                   "arm": arm.name, "integrator": arm.integrator,
                   "adaptive": int(arm.adaptive), "frame": spec.frame,
                   "seed": seed, "spp": arm.spp, "cost_pt_spp": arm.cost_pt_spp,
                   "mse": "", "rel_mse": "", "mse_masked": "",
                   "mse_unmasked": "", "seconds": "", "error": ""}
            t0 = time.time()
            try:
                image, _ = _arm_image(spec, arm, seed)
                m = compute_metrics(image, reference, mask=mask)
                row.update(mse=m.mse, rel_mse=m.rel_mse, mse_masked=m.mse_masked,
                           mse_unmasked=m.mse_unmasked,
                           seconds=round(time.time() - t0, 3))
            except Exception as e:  # arm failure must not kill the run
                row["error"] = f"{type(e).__name__}: {e}"
            rows.append(row)
    if out_csv:
        write_rows(rows, out_csv)
    return rows


def write_rows(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)
