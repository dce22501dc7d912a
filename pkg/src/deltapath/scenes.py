"""Bundled procedural test scenes.

The published scenes this renderer family is usually demonstrated on are
not redistributable, so the test suite ships small procedural stand-ins:
a Cornell-style box with optional dynamic content, a two-room layout
whose doorway a dynamic plate can block (occlusion-heavy subtractive
transport), an equilibrium furnace, and texel-scale environment-delta
micro-scenes.
"""

from __future__ import annotations

import numpy as np

from .scene import Camera, EnvironmentMap, Material, Scene, Sphere, Triangle


def _quad(origin, eu, ev, material, dynamic=False, name="", frame_motion=None):
    """Two triangles spanning origin + s*eu + t*ev, normal = cross(eu, ev)."""
    o = np.asarray(origin, dtype=np.float64)
    u = np.asarray(eu, dtype=np.float64)
    v = np.asarray(ev, dtype=np.float64)
    c = [tuple(o), tuple(o + u), tuple(o + u + v), tuple(o + v)]
    return [
        Triangle((c[0], c[1], c[2]), material, dynamic, None,
                 f"{name}-0" if name else "", frame_motion),
        Triangle((c[0], c[2], c[3]), material, dynamic, None,
                 f"{name}-1" if name else "", frame_motion),
    ]


def _cornell_shell(lamp_static=(12.0, 12.0, 12.0), lamp_dynamic=None):
    lamp_dynamic = lamp_dynamic if lamp_dynamic is not None else lamp_static
    materials = [
        Material((0.73, 0.73, 0.73), name="white"),
        Material((0.62, 0.06, 0.06), name="red"),
        Material((0.10, 0.45, 0.09), name="green"),
        Material((0.9, 0.9, 0.9), kind="mirror", name="mirror"),
        Material((0.0, 0.0, 0.0), emission_static=lamp_static,
                 emission_dynamic=lamp_dynamic, name="lamp"),
    ]
    prims = []
    # box interior spans x,z in [-1,1], y in [0,2]; open front at z=+1
    prims += _quad((-1, 0, 1), (2, 0, 0), (0, 0, -2), "white", name="floor")
    prims += _quad((-1, 2, -1), (2, 0, 0), (0, 0, 2), "white", name="ceiling")
    prims += _quad((-1, 0, -1), (2, 0, 0), (0, 2, 0), "white", name="back")
    prims += _quad((-1, 0, 1), (0, 0, -2), (0, 2, 0), "red", name="left")
    prims += _quad((1, 0, -1), (0, 0, 2), (0, 2, 0), "green", name="right")
    # lamp slightly below the ceiling, facing down
    prims += _quad((-0.35, 1.995, -0.35), (0.7, 0, 0), (0, 0, 0.7), "lamp", name="lamp")
    # static content: one diffuse sphere, one mirror sphere
    prims.append(Sphere((-0.45, 0.45, -0.35), 0.45, "white", name="ball"))
    prims.append(Sphere((0.5, 0.3, 0.25), 0.3, "mirror", name="chrome"))
    camera = Camera(position=(0.0, 1.0, 3.0), look_at=(0.0, 1.0, 0.0),
                    fov_deg=36.0, resolution=(32, 32))
    return materials, prims, camera


def cornell_static(resolution=(32, 32)) -> Scene:
    """Cornell-style box without any dynamic content."""
    materials, prims, camera = _cornell_shell()
    camera.resolution = tuple(resolution)
    return Scene(materials, prims, camera=camera, name="cornell_static")


def cornell_dynamic_sphere(resolution=(32, 32)) -> Scene:
    """Cornell box plus a small added diffuse sphere near the right wall.

    The sphere's direct footprint covers well under 10% of the pixels,
    which is the sparse-delta regime the correlated estimator targets.
    """
    materials, prims, camera = _cornell_shell()
    materials.append(Material((0.25, 0.35, 0.75), name="blue"))
    prims.append(Sphere((0.55, 1.35, 0.45), 0.22, "blue", dynamic=True, name="mover",
                        frame_motion=(-0.12, 0.0, 0.0)))
    camera.resolution = tuple(resolution)
    return Scene(materials, prims, camera=camera, name="cornell_dynamic_sphere")


def cornell_dynamic_emitter(resolution=(32, 32)) -> Scene:
    """Cornell box whose lamp doubles in brightness after the change."""
    materials, prims, camera = _cornell_shell(lamp_static=(12.0, 12.0, 12.0),
                                              lamp_dynamic=(24.0, 24.0, 24.0))
    camera.resolution = tuple(resolution)
    return Scene(materials, prims, camera=camera, name="cornell_dynamic_emitter")


def cornell_blocker_plate(resolution=(32, 32)) -> Scene:
    """Cornell box with a dynamic plate hung between the lamp and the floor."""
    materials, prims, camera = _cornell_shell()
    prims += _quad((-0.3, 1.35, 0.3), (0.6, 0, 0), (0, 0, -0.6), "white",
                   dynamic=True, name="plate")
    camera.resolution = tuple(resolution)
    return Scene(materials, prims, camera=camera, name="cornell_blocker_plate")


def two_room(resolution=(32, 32), plate: bool = True) -> Scene:
    """Two rooms joined by a doorway; a dynamic plate can seal it.

    The lamp sits in the far room, the camera in the near one, so almost
    all light reaching the camera crosses the doorway and the plate
    removes it: the delta is dominated by subtractive transport.
    """
    materials = [
        Material((0.75, 0.75, 0.75), name="white"),
        Material((0.7, 0.6, 0.3), name="tan"),
        Material((0.0, 0.0, 0.0), emission_static=(40.0, 40.0, 40.0),
                 emission_dynamic=(40.0, 40.0, 40.0), name="lamp"),
    ]
    prims = []
    # shared shell: x in [-1,1], y in [0,2], z in [-2,2]; camera room z>0
    prims += _quad((-1, 0, 2), (2, 0, 0), (0, 0, -4), "white", name="floor")
    prims += _quad((-1, 2, -2), (2, 0, 0), (0, 0, 4), "white", name="ceiling")
    prims += _quad((-1, 0, -2), (2, 0, 0), (0, 2, 0), "white", name="far")
    prims += _quad((-1, 0, 2), (0, 0, -4), (0, 2, 0), "tan", name="left")
    prims += _quad((1, 0, -2), (0, 0, 4), (0, 2, 0), "tan", name="right")
    # dividing wall at z=0 with a doorway x in [-0.35, 0.35], y in [0, 1.2]
    prims += _quad((-1, 0, 0), (0.65, 0, 0), (0, 2, 0), "white", name="div-left")
    prims += _quad((0.35, 0, 0), (0.65, 0, 0), (0, 2, 0), "white", name="div-right")
    prims += _quad((-0.35, 1.2, 0), (0.7, 0, 0), (0, 0.8, 0), "white", name="div-top")
    # lamp on the far room's ceiling
    prims += _quad((-0.3, 1.99, -1.4), (0.6, 0, 0), (0, 0, 0.6), "lamp", name="lamp")
    if plate:
        prims += _quad((-0.36, 0, 0.02), (0.72, 0, 0), (0, 1.25, 0), "white",
                       dynamic=True, name="plate")
    camera = Camera(position=(0.0, 1.0, 1.9), look_at=(0.0, 0.9, -1.0),
                    fov_deg=55.0, resolution=tuple(resolution))
    return Scene(materials, prims, camera=camera, name="two_room")


def furnace(albedo: float = 0.5, resolution=(16, 16)) -> Scene:
    """Equilibrium furnace: emission 1-albedo inside a unit environment.

    Every pixel converges to exactly 1: the sphere emits (1 - rho) and
    reflects rho of the unit environment, so outgoing radiance is 1
    regardless of geometry.
    """
    e = 1.0 - albedo
    materials = [Material((albedo,) * 3, emission_static=(e,) * 3,
                          emission_dynamic=(e,) * 3, name="shell")]
    prims = [Sphere((0.0, 0.0, 0.0), 1.0, "shell", name="ball")]
    camera = Camera(position=(0.0, 0.0, -3.5), look_at=(0.0, 0.0, 0.0),
                    fov_deg=40.0, resolution=tuple(resolution))
    return Scene(materials, prims, env_static=EnvironmentMap.constant((1.0, 1.0, 1.0)),
                 camera=camera, name="furnace")


def const_enclosure(resolution=(16, 16)) -> Scene:
    """Closed box emitting 1 everywhere with zero albedo.

    Outgoing radiance is exactly (1,1,1) at every surface point and
    direction, which makes it the analytic target for cache training.
    """
    materials = [Material((0.0, 0.0, 0.0), emission_static=(1.0, 1.0, 1.0),
                          emission_dynamic=(1.0, 1.0, 1.0), name="glow")]
    prims = []
    prims += _quad((-1, 0, 1), (2, 0, 0), (0, 0, -2), "glow", name="floor")
    prims += _quad((-1, 2, -1), (2, 0, 0), (0, 0, 2), "glow", name="ceiling")
    prims += _quad((-1, 0, -1), (2, 0, 0), (0, 2, 0), "glow", name="back")
    prims += _quad((-1, 0, 1), (0, 0, -2), (0, 2, 0), "glow", name="left")
    prims += _quad((1, 0, -1), (0, 0, 2), (0, 2, 0), "glow", name="right")
    prims += _quad((-1, 0, 1), (0, 2, 0), (2, 0, 0), "glow", name="front")
    camera = Camera(position=(0.0, 1.0, 0.6), look_at=(0.0, 1.0, -1.0),
                    fov_deg=60.0, resolution=tuple(resolution))
    return Scene(materials, prims, camera=camera, name="const_enclosure")


def envdelta_1x2(resolution=(8, 8)) -> Scene:
    """Geometry-free scene whose 1x2 environment brightens in one texel."""
    old = EnvironmentMap(np.array([[[1.0] * 3, [1.0] * 3]]))
    new = EnvironmentMap(np.array([[[1.0] * 3, [3.0] * 3]]))
    camera = Camera(position=(0, 0, 0), look_at=(0, 0, -1), fov_deg=90.0,
                    resolution=tuple(resolution))
    return Scene([], [], env_static=old, env_dynamic=new, camera=camera,
                 name="envdelta_1x2")


def envdelta_four_texel(resolution=(8, 8)) -> Scene:
    """4x1 environment whose |delta| luminances are 1,2,3,4.

    All four texels subtend equal solid angles, so the selection
    probabilities are exactly 0.1, 0.2, 0.3, 0.4.
    """
    old = EnvironmentMap(np.zeros((1, 4, 3)))
    tex = np.zeros((1, 4, 3))
    tex[0, :, :] = np.array([1.0, 2.0, 3.0, 4.0])[:, None]
    new = EnvironmentMap(tex)
    camera = Camera(position=(0, 0, 0), look_at=(0, 0, -1), fov_deg=90.0,
                    resolution=tuple(resolution))
    return Scene([], [], env_static=old, env_dynamic=new, camera=camera,
                 name="envdelta_four_texel")


def env_floor(resolution=(16, 16)) -> Scene:
    """Diffuse floor lit by a changing environment (indirect env delta)."""
    old = EnvironmentMap.constant((0.8, 0.8, 0.8), width=4, height=2)
    tex = np.full((2, 4, 3), 0.8)
    tex[0, 1] = (2.5, 2.0, 1.0)  # a bright warm patch appears overhead
    new = EnvironmentMap(tex)
    materials = [Material((0.6, 0.6, 0.6), name="ground")]
    prims = _quad((-3, 0, 3), (6, 0, 0), (0, 0, -6), "ground", name="ground")
    camera = Camera(position=(0.0, 1.2, 2.8), look_at=(0.0, 0.3, 0.0),
                    fov_deg=50.0, resolution=tuple(resolution))
    return Scene(materials, prims, env_static=old, env_dynamic=new,
                 camera=camera, name="env_floor")


BUNDLED = {
    "cornell_static": cornell_static,
    "cornell_dynamic_sphere": cornell_dynamic_sphere,
    "cornell_dynamic_emitter": cornell_dynamic_emitter,
    "cornell_blocker_plate": cornell_blocker_plate,
    "two_room": two_room,
    "furnace": furnace,
    "const_enclosure": const_enclosure,
    "envdelta_1x2": envdelta_1x2,
    "envdelta_four_texel": envdelta_four_texel,
    "env_floor": env_floor,
}


def bundled_scene(name: str, resolution=None) -> Scene:
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled scene {name!r}; have {sorted(BUNDLED)}")
    return BUNDLED[name](resolution=resolution) if resolution else BUNDLED[name]()


def write_bundled_scenes(directory) -> list:
    """Materialize every bundled scene as a JSON file; returns the paths."""
    from .sceneio import save_scene
    from pathlib import Path
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, make in BUNDLED.items():
        scene = make()
        p = directory / f"{name}.json"
        save_scene(scene, p)
        paths.append(p)
    return paths
