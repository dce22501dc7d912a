"""Scene description files (JSON) and their environment map references.

Schema (all vectors are 3-element lists unless noted):

    {
      "name": "...",
      "t_min": 1e-4,
      "camera": {"position": [..], "look_at": [..], "up": [..],
                 "fov_deg": 45.0, "resolution": [W, H]},
      "materials": [
        {"name": "white", "kind": "lambertian" | "mirror",
         "albedo": [..],
         "emission": [..]                           # same in both states
         "emission": {"static": [..], "dynamic": [..]}}  # per-state
      ],
      "primitives": [
        {"shape": "sphere", "center": [..], "radius": r,
         "material": "white", "dynamic": false, "name": "...",
         "frame_motion": [..]},                     # per-frame offset
        {"shape": "triangle", "vertices": [[..],[..],[..]],
         "shading_normals": [[..],[..],[..]], ...},
        {"shape": "quad", "origin": [..], "edge_u": [..], "edge_v": [..], ...}
      ],
      "environment": {"static": SPEC, "dynamic": SPEC}
    }

where SPEC is {"constant": [..], "width": W, "height": H},
{"texels": [[[r,g,b], ..], ..]} or {"pfm": "relative/path.pfm"}.
Quads expand to two triangles with normal along cross(edge_u, edge_v).

An emitter primitive may carry "dynamic_transform": {"translate": [..]}.
The loader expands it into the pair the delta formulation can represent:
the original keeps its emission only in the static state, and a
translated copy tagged dynamic emits only in the dynamic state.  The
original's geometry remains in the changed scene as a dark shell; the
path-domain split only supports *adding* objects, not removing them.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .pfm import read_pfm, write_pfm
from .scene import Camera, EnvironmentMap, Material, Scene, Sphere, Triangle

SCENE_DIR_ENV = "DELTAPATH_SCENE_DIR"


def resolve_scene_path(path: str | Path) -> Path:
    """Absolute paths pass through; relative ones try cwd then $DELTAPATH_SCENE_DIR."""
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    root = os.environ.get(SCENE_DIR_ENV)
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _env_from_spec(spec: dict, base: Path) -> EnvironmentMap:
    if "constant" in spec:
        return EnvironmentMap.constant(spec["constant"],
                                       width=spec.get("width", 1),
                                       height=spec.get("height", 1))
    if "texels" in spec:
        return EnvironmentMap(np.asarray(spec["texels"], dtype=np.float64))
    if "pfm" in spec:
        return EnvironmentMap(read_pfm(base / spec["pfm"]).astype(np.float64))
    raise ValueError(f"environment spec needs 'constant', 'texels' or 'pfm': {spec}")


def _material_from_dict(d: dict) -> Material:
    em = d.get("emission", (0.0, 0.0, 0.0))
    if isinstance(em, dict):
        es, ed = tuple(em["static"]), tuple(em["dynamic"])
    else:
        es = ed = tuple(em)
    return Material(albedo=tuple(d["albedo"]), kind=d.get("kind", "lambertian"),
                    emission_static=es, emission_dynamic=ed, name=d.get("name", ""))


def _expand_primitive(d: dict, materials: list[Material], mat_index: dict) -> list:
    common = dict(material=d["material"], dynamic=bool(d.get("dynamic", False)),
                  name=d.get("name", ""))
    fm = d.get("frame_motion")
    if fm is not None:
        common["frame_motion"] = tuple(fm)
    shape = d["shape"]
    if shape == "sphere":
        prims = [Sphere(center=tuple(d["center"]), radius=float(d["radius"]), **common)]
    elif shape == "triangle":
        sn = d.get("shading_normals")
        prims = [Triangle(vertices=tuple(tuple(v) for v in d["vertices"]),
                          shading_normals=tuple(tuple(v) for v in sn) if sn else None,
                          **common)]
    elif shape == "quad":
        o = np.asarray(d["origin"], dtype=np.float64)
        eu = np.asarray(d["edge_u"], dtype=np.float64)
        ev = np.asarray(d["edge_v"], dtype=np.float64)
        c0, c1, c2, c3 = o, o + eu, o + eu + ev, o + ev
        name = common.pop("name", "")
        prims = [
            Triangle(vertices=(tuple(c0), tuple(c1), tuple(c2)),
                     name=f"{name}-0" if name else "", **common),
            Triangle(vertices=(tuple(c0), tuple(c2), tuple(c3)),
                     name=f"{name}-1" if name else "", **common),
        ]
    else:
        raise ValueError(f"unknown primitive shape {shape!r}")

    dt = d.get("dynamic_transform")
    if dt is None:
        return prims
    # moved-emitter expansion: before-state stays put and goes dark after
    # the change; after-state is an added dynamic copy
    translate = np.asarray(dt.get("translate", (0.0, 0.0, 0.0)), dtype=np.float64)
    base_mat = materials[mat_index[d["material"]]]
    zero = (0.0, 0.0, 0.0)
    before = Material(albedo=base_mat.albedo, kind=base_mat.kind,
                      emission_static=base_mat.emission_static, emission_dynamic=zero,
                      name=f"{base_mat.name}@before")
    after = Material(albedo=base_mat.albedo, kind=base_mat.kind,
                     emission_static=zero, emission_dynamic=base_mat.emission_dynamic,
                     name=f"{base_mat.name}@after")
    for m in (before, after):
        if m.name not in mat_index:
            mat_index[m.name] = len(materials)
            materials.append(m)
    out = []
    for p in prims:
        if isinstance(p, Sphere):
            out.append(Sphere(p.center, p.radius, before.name, False, p.name))
            out.append(Sphere(tuple(np.asarray(p.center) + translate), p.radius,
                              after.name, True, f"{p.name}@after" if p.name else ""))
        else:
            out.append(Triangle(p.vertices, before.name, False, p.shading_normals, p.name))
            moved = tuple(tuple(np.asarray(v) + translate) for v in p.vertices)
            out.append(Triangle(moved, after.name, True, p.shading_normals,
                                f"{p.name}@after" if p.name else ""))
    return out


def scene_from_dict(data: dict, base: Path | None = None) -> Scene:
    base = base or Path(".")
    materials = [_material_from_dict(m) for m in data.get("materials", [])]
    mat_index = {m.name: i for i, m in enumerate(materials) if m.name}
    prims = []
    for d in data.get("primitives", []):
        prims.extend(_expand_primitive(d, materials, mat_index))
    env_s = env_d = None
    env = data.get("environment")
    if env:
        env_s = _env_from_spec(env["static"], base) if "static" in env else None
        env_d = _env_from_spec(env["dynamic"], base) if "dynamic" in env else env_s
    cam = None
    if "camera" in data:
        c = data["camera"]
        cam = Camera(position=tuple(c["position"]), look_at=tuple(c["look_at"]),
                     up=tuple(c.get("up", (0.0, 1.0, 0.0))),
                     fov_deg=float(c.get("fov_deg", 45.0)),
                     resolution=tuple(c.get("resolution", (32, 32))))
        cam.validate()
    return Scene(materials, prims, env_static=env_s, env_dynamic=env_d,
                 camera=cam, name=data.get("name", "scene"),
                 t_min=float(data.get("t_min", 1e-4)))


def load_scene(path: str | Path) -> Scene:
    path = resolve_scene_path(path)
    if not path.exists():
        raise FileNotFoundError(f"scene file not found: {path}")
    with open(path) as f:
        data = json.load(f)
    return scene_from_dict(data, base=path.parent)


def scene_to_dict(scene: Scene) -> dict:
    mats = []
    for m in scene.materials:
        d = {"name": m.name, "kind": m.kind, "albedo": list(m.albedo)}
        if m.state_changed:
            d["emission"] = {"static": list(m.emission_static),
                             "dynamic": list(m.emission_dynamic)}
        elif any(m.emission_static):
            d["emission"] = list(m.emission_static)
        mats.append(d)
    prims = []
    for p in scene.primitives:
        if isinstance(p, Sphere):
            d = {"shape": "sphere", "center": list(p.center), "radius": p.radius}
        else:
            d = {"shape": "triangle", "vertices": [list(v) for v in p.vertices]}
            if p.shading_normals is not None:
                d["shading_normals"] = [list(v) for v in p.shading_normals]
        d["material"] = p.material if isinstance(p.material, str) else int(p.material)
        if p.dynamic:
            d["dynamic"] = True
        if p.name:
            d["name"] = p.name
        if p.frame_motion is not None:
            d["frame_motion"] = list(p.frame_motion)
        prims.append(d)
    data = {"name": scene.name, "t_min": scene.t_min,
            "materials": mats, "primitives": prims}
    if scene.camera is not None:
        c = scene.camera
        data["camera"] = {"position": list(c.position), "look_at": list(c.look_at),
                          "up": list(c.up), "fov_deg": c.fov_deg,
                          "resolution": list(c.resolution)}
    if scene.env_static is not None:
        env = {"static": {"texels": scene.env_static.texels.tolist()}}
        if scene.env_dynamic is not scene.env_static:
            env["dynamic"] = {"texels": scene.env_dynamic.texels.tolist()}
        data["environment"] = env
    return data


def save_scene(scene: Scene, path: str | Path, env_as_pfm: bool = False) -> None:
    """Write the scene as JSON; optionally externalize env maps as PFM files."""
    path = Path(path)
    data = scene_to_dict(scene)
    if env_as_pfm and scene.env_static is not None:
        stem = path.stem
        for key, env in (("static", scene.env_static), ("dynamic", scene.env_dynamic)):
            if key == "dynamic" and env is scene.env_static:
                continue
            fname = f"{stem}_env_{key}.pfm"
            write_pfm(path.parent / fname, env.texels.astype(np.float32))
            data["environment"][key] = {"pfm": fname}
    with open(path, "w") as f:
        json.dump(data, f, indent=1)
        f.write("\n")
