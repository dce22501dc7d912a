import json

import numpy as np
import pytest

from deltapath import scenes
from deltapath.render import render_image
from deltapath.scene import DYNAMIC_STATE, STATIC_STATE, EnvironmentMap
from deltapath.sceneio import (load_scene, resolve_scene_path, save_scene,
                               scene_from_dict, scene_to_dict)


@pytest.mark.parametrize("name", sorted(scenes.BUNDLED))
def test_bundled_scene_round_trip(name, tmp_path):
    sc = scenes.BUNDLED[name]()
    p = tmp_path / f"{name}.json"
    save_scene(sc, p)
    back = load_scene(p)
    assert back.name == sc.name
    assert back.n_spheres == sc.n_spheres
    assert back.n_triangles == sc.n_triangles
    assert np.array_equal(back.sph_center, sc.sph_center)
    assert np.array_equal(back.tri_v0, sc.tri_v0)
    assert np.array_equal(back.sph_dyn, sc.sph_dyn)
    assert np.array_equal(back.tri_dyn, sc.tri_dyn)
    if sc.env_static is not None:
        assert np.array_equal(back.env_static.texels, sc.env_static.texels)
        assert np.array_equal(back.env_dynamic.texels, sc.env_dynamic.texels)


def test_round_trip_renders_identically(tmp_path):
    sc = scenes.cornell_dynamic_sphere((8, 8))
    p = tmp_path / "c.json"
    save_scene(sc, p)
    back = load_scene(p)
    a = render_image(sc, sc.camera, "dynamic", 4, seed=1).mean()
    b = render_image(back, back.camera, "dynamic", 4, seed=1).mean()
    assert np.array_equal(a, b)


def test_env_as_pfm_references(tmp_path):
    sc = scenes.env_floor((8, 8))
    p = tmp_path / "env.json"
    save_scene(sc, p, env_as_pfm=True)
    data = json.loads(p.read_text())
    assert data["environment"]["static"]["pfm"].endswith(".pfm")
    assert (tmp_path / data["environment"]["static"]["pfm"]).exists()
    back = load_scene(p)
    assert np.allclose(back.env_static.texels, sc.env_static.texels, atol=1e-6)
    assert np.allclose(back.env_dynamic.texels, sc.env_dynamic.texels, atol=1e-6)


def test_quad_expansion():
    data = {
        "materials": [{"name": "w", "albedo": [0.5, 0.5, 0.5]}],
        "primitives": [{"shape": "quad", "origin": [0, 0, 0], "edge_u": [1, 0, 0],
                        "edge_v": [0, 1, 0], "material": "w", "name": "q"}],
    }
    sc = scene_from_dict(data)
    assert sc.n_triangles == 2
    assert sc.tri_area.sum() == pytest.approx(1.0)


def test_per_state_emission_parsing():
    data = {
        "materials": [{"name": "l", "albedo": [0, 0, 0],
                       "emission": {"static": [1, 1, 1], "dynamic": [2, 2, 2]}}],
        "primitives": [{"shape": "sphere", "center": [0, 0, 0], "radius": 1,
                        "material": "l"}],
    }
    sc = scene_from_dict(data)
    assert sc.materials[0].state_changed
    assert np.array_equal(sc.mat_emit[STATIC_STATE][0], [1, 1, 1])
    assert np.array_equal(sc.mat_emit[DYNAMIC_STATE][0], [2, 2, 2])


def test_moved_emitter_expansion():
    # an emitter with a dynamic transform becomes two primitives: the
    # original emits only before the change, a translated dynamic copy
    # emits only after
    data = {
        "materials": [{"name": "l", "albedo": [0, 0, 0], "emission": [5, 5, 5]}],
        "primitives": [{"shape": "sphere", "center": [0, 0, 0], "radius": 0.5,
                        "material": "l", "name": "lamp",
                        "dynamic_transform": {"translate": [2, 0, 0]}}],
    }
    sc = scene_from_dict(data)
    assert sc.n_spheres == 2
    assert not sc.sph_dyn[0] and sc.sph_dyn[1]
    assert np.array_equal(sc.sph_center[1], [2, 0, 0])
    m_before = sc.materials[sc.sph_mat[0]]
    m_after = sc.materials[sc.sph_mat[1]]
    assert m_before.emission_static == (5, 5, 5)
    assert m_before.emission_dynamic == (0.0, 0.0, 0.0)
    assert m_after.emission_static == (0.0, 0.0, 0.0)
    assert m_after.emission_dynamic == (5, 5, 5)


def test_frame_motion_round_trip(tmp_path):
    sc = scenes.cornell_dynamic_sphere((8, 8))
    p = tmp_path / "m.json"
    save_scene(sc, p)
    back = load_scene(p)
    moved = back.at_frame(3)
    i = int(np.nonzero(moved.sph_dyn)[0][0])
    base = sc.sph_center[np.nonzero(sc.sph_dyn)[0][0]]
    assert moved.sph_center[i] == pytest.approx(base + 3 * np.array([-0.12, 0, 0]))


def test_scene_dir_env_var(tmp_path, monkeypatch):
    sc = scenes.furnace()
    save_scene(sc, tmp_path / "f.json")
    monkeypatch.setenv("DELTAPATH_SCENE_DIR", str(tmp_path))
    assert resolve_scene_path("f.json") == tmp_path / "f.json"
    loaded = load_scene("f.json")
    assert loaded.name == "furnace"


def test_missing_scene_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scene(tmp_path / "nope.json")


def test_unknown_shape_rejected():
    data = {"materials": [{"name": "w", "albedo": [0.5, 0.5, 0.5]}],
            "primitives": [{"shape": "torus", "material": "w"}]}
    with pytest.raises(ValueError, match="unknown primitive shape"):
        scene_from_dict(data)


def test_checked_in_scene_files_load():
    # the repository ships generated copies under scenes/
    from pathlib import Path
    root = Path(__file__).parent.parent / "scenes"
    files = sorted(root.glob("*.json"))
    assert len(files) == len(scenes.BUNDLED)
    for f in files:
        sc = load_scene(f)
        assert sc.camera is not None
