"""Command-line driver.

Subcommands: render, train-field, eval-field, experiment, goldens.
Scenes are JSON files (resolved against $DELTAPATH_SCENE_DIR when
relative) or bundled scene names.  Images are written as little-endian
float PFM; tabular stats as CSV with a header row.

Exit codes: 0 all requested outputs written; 2 bad configuration,
scene or arguments; 3 missing static-field file; 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np


def _parse_resolution(text):
    if text is None:
        return None
    w, _, h = text.partition("x")
    return (int(w), int(h or w))


def _add_render_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", required=True, help="scene JSON path or bundled name")
    p.add_argument("--integrator", default="delta-pss",
                   choices=["reference-static", "reference-dynamic", "additive",
                            "subtractive", "delta-pss", "hybrid"])
    p.add_argument("--spp", type=int, default=16)
    p.add_argument("--seed", type=int, default=0, help="global RNG seed (u64)")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--frames", type=int, default=1,
                   help="render a frame sequence, feeding stats forward")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--resolution", type=_parse_resolution, default=None,
                   metavar="WxH")
    p.add_argument("--unmasked", action="store_true",
                   help="hybrid: compose without the first-hit mask")
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--jitter", action="store_true", help="jitter pixel samples")
    p.add_argument("--field-backend", default="oracle", choices=["oracle", "learned"])
    p.add_argument("--field", default=None, help="trained field file (learned backend)")
    p.add_argument("--oracle-spp", type=int, default=512)
    p.add_argument("--out", default="out", help="output path stem")
    p.add_argument("--dump-buffers", action="store_true")
    p.add_argument("--dump-sample-map", action="store_true")


def cmd_render(args) -> int:
    from .integrators import TraceSettings
    from .pfm import write_pfm
    from .render import RenderConfig, render_frame, render_sequence
    from .vecmath import luminance

    cfg = RenderConfig(
        scene=args.scene, integrator=args.integrator, spp=args.spp,
        seed=args.seed, frame=args.frame, resolution=args.resolution,
        threads=args.threads, masked=not args.unmasked, adaptive=args.adaptive,
        field_backend=args.field_backend, field_path=args.field,
        oracle_spp=args.oracle_spp,
        settings=TraceSettings(jitter_pixels=args.jitter))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.frames > 1:
        results = render_sequence(cfg, args.frames)
    else:
        results = [render_frame(cfg)]

    stats_rows = []
    written = []
    for f, res in enumerate(results):
        stem = out if len(results) == 1 else Path(f"{out}_f{f:03d}")
        img = np.maximum(res.image, 0.0) if args.integrator == "hybrid" else res.image
        write_pfm(f"{stem}.pfm", img.astype(np.float32))
        written.append(f"{stem}.pfm")
        if args.dump_buffers and res.buffers is not None:
            write_pfm(f"{stem}_static.pfm", res.buffers.static_image.astype(np.float32))
            write_pfm(f"{stem}_delta.pfm", res.buffers.delta_image().astype(np.float32))
            write_pfm(f"{stem}_mask.pfm", res.buffers.mask.astype(np.float32))
        if args.dump_sample_map and res.sample_map is not None:
            write_pfm(f"{stem}_samplemap.pfm", res.sample_map.s.astype(np.float32))
        # no timings or thread counts here: these files must be
        # bit-identical across repeat runs at any thread count
        stats_rows.append({
            "frame": args.frame + f, "integrator": args.integrator,
            "spp": args.spp, "seed": args.seed,
            "n_pixels": res.image.shape[0] * res.image.shape[1],
            "mean_luminance": repr(float(luminance(np.maximum(res.image, 0.0)).mean())),
        })
    import csv
    with open(f"{out}_stats.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(stats_rows[0].keys()))
        w.writeheader()
        w.writerows(stats_rows)
    for path in written:
        print(path)
    return 0


def cmd_train_field(args) -> int:
    from .field import LearnedStaticField, generate_dataset, save_field, train
    from .nn import HashGridConfig, MlpConfig
    from .render import RenderConfig, resolve_scene

    scene, _ = resolve_scene(RenderConfig(scene=args.scene))
    if scene.has_dynamic:
        print("note: training ignores dynamic primitives (static scene only)",
              file=sys.stderr)
    dataset = generate_dataset(scene, args.samples, seed=args.seed)
    field = LearnedStaticField.for_scene(
        scene, seed=args.seed,
        grid_config=HashGridConfig(levels=args.levels,
                                   table_size_log2=args.table_log2,
                                   features=args.features,
                                   base_resolution=args.base_res,
                                   finest_resolution=args.finest_res),
        mlp_config=MlpConfig(hidden_layers=args.hidden_layers, width=args.width))
    losses = train(field, dataset, epochs=args.epochs, lr=args.lr,
                   batch_size=args.batch, seed=args.seed,
                   loss_norm=args.loss_norm, verbose=True)
    save_field(field, args.out)
    print(f"{args.out} final-loss {losses[-1]:.4e}")
    return 0


def cmd_eval_field(args) -> int:
    from .compositor import build_mask
    from .field import OracleStaticField, load_field
    from .pfm import write_pfm
    from .render import RenderConfig, resolve_scene, static_image_from_field

    scene, camera = resolve_scene(RenderConfig(scene=args.scene,
                                               resolution=args.resolution))
    if args.backend == "learned":
        backend = load_field(args.field)
    else:
        backend = OracleStaticField(scene, spp=args.oracle_spp)
    mask, gb = build_mask(scene, camera)
    img = static_image_from_field(backend, gb, np.ones_like(mask))
    write_pfm(args.out, img.astype(np.float32))
    print(args.out)
    return 0


def cmd_experiment(args) -> int:
    from .experiment import ExperimentArm, ExperimentSpec, run_experiment

    if args.spec:
        spec = ExperimentSpec.from_json(args.spec)
    else:
        spec = ExperimentSpec(
            scene=args.scene,
            arms=[ExperimentArm("path-traced-2spp", "path-traced", 2),
                  ExperimentArm("hybrid-1spp", "hybrid", 1),
                  ExperimentArm("hybrid-1spp-adaptive", "hybrid", 1, adaptive=True)],
            reference_spp=args.reference_spp,
            seeds=list(range(1, args.runs + 1)),
            resolution=args.resolution)
    rows = run_experiment(spec, out_csv=args.out)
    failed = [r for r in rows if r["error"]]
    print(f"{args.out}: {len(rows)} rows, {len(failed)} failed")
    return 0


_GOLDEN_JOBS = [
    dict(name="cornell_ref", scene="cornell_dynamic_sphere", integrator="reference-dynamic",
         spp=8, resolution=(16, 16)),
    dict(name="cornell_delta", scene="cornell_dynamic_sphere", integrator="delta-pss",
         spp=8, resolution=(16, 16)),
    dict(name="cornell_hybrid", scene="cornell_dynamic_sphere", integrator="hybrid",
         spp=4, resolution=(16, 16), oracle_spp=32),
    dict(name="furnace_ref", scene="furnace", integrator="reference-dynamic",
         spp=8, resolution=(16, 16)),
]


def cmd_goldens(args) -> int:
    from .pfm import read_pfm, write_pfm
    from .render import RenderConfig, render_frame

    directory = Path(args.dir)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "manifest.json"
    manifest = {}
    failures = []
    for job in _GOLDEN_JOBS:
        cfg = RenderConfig(scene=job["scene"], integrator=job["integrator"],
                           spp=job["spp"], seed=41,
                           resolution=job["resolution"],
                           oracle_spp=job.get("oracle_spp", 64))
        res = render_frame(cfg)
        img = res.image.astype(np.float32)
        path = directory / f"{job['name']}.pfm"
        if args.write:
            write_pfm(path, img)
            manifest[job["name"]] = hashlib.sha256(path.read_bytes()).hexdigest()
        else:
            if not path.exists():
                failures.append(f"{job['name']}: golden image missing")
                continue
            want = read_pfm(path)
            if want.shape != img.shape:
                failures.append(f"{job['name']}: shape {img.shape} != {want.shape}")
            elif args.tol > 0:
                diff = float(np.abs(want - img).max())
                if diff > args.tol:
                    failures.append(f"{job['name']}: max diff {diff:.3e} > {args.tol}")
            elif not np.array_equal(want, img):
                failures.append(f"{job['name']}: images differ bitwise")
    if args.write:
        manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
        print(f"wrote {len(_GOLDEN_JOBS)} goldens to {directory}")
        return 0
    for f in failures:
        print(f"FAIL {f}")
    print(f"goldens: {len(_GOLDEN_JOBS) - len(failures)}/{len(_GOLDEN_JOBS)} ok")
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deltapath", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one frame or a sequence")
    _add_render_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train-field", help="train the static radiance cache")
    p.add_argument("--scene", required=True)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=8192)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--loss-norm", default="pred", choices=["pred", "target"])
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--table-log2", type=int, default=13)
    p.add_argument("--features", type=int, default=2)
    p.add_argument("--base-res", type=int, default=4)
    p.add_argument("--finest-res", type=int, default=128)
    p.add_argument("--hidden-layers", type=int, default=7)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_field)

    p = sub.add_parser("eval-field", help="render the cached static image")
    p.add_argument("--scene", required=True)
    p.add_argument("--backend", default="learned", choices=["learned", "oracle"])
    p.add_argument("--field", default=None)
    p.add_argument("--oracle-spp", type=int, default=256)
    p.add_argument("--resolution", type=_parse_resolution, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_field)

    p = sub.add_parser("experiment", help="equal-cost comparison runs")
    p.add_argument("--spec", default=None, help="experiment spec JSON")
    p.add_argument("--scene", default="cornell_dynamic_sphere")
    p.add_argument("--reference-spp", type=int, default=8192)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--resolution", type=_parse_resolution, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("goldens", help="write or verify regression renders")
    p.add_argument("--dir", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--write", action="store_true")
    g.add_argument("--check", action="store_true")
    p.add_argument("--tol", type=float, default=0.0,
                   help="max abs tolerance for --check (0 = bitwise)")
    p.set_defaults(func=cmd_goldens)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        msg = str(e)
        print(f"error: {msg}", file=sys.stderr)
        return 3 if "field" in msg else 2
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
