import numpy as np
import pytest

from conftest import combined_se_z, render_mean
from deltapath import rng, scenes
from deltapath.integrators import (PathClass, TraceSettings, trace_additive,
                                   trace_batch, trace_delta_pss,
                                   trace_reference, trace_subtractive)
from deltapath.scene import EnvironmentMap, Material, Scene, Sphere
from oracles import BruteForce, oracle_pixel, pixel_ray


def stream(px, py, sample=0, seed=0, frame=0):
    return rng.RandomStream(rng.StreamKey(px, py, frame, sample, seed))


def grid_prefixes(scene, spp, seed=0, frame=0):
    w, h = scene.camera.resolution
    px, py = np.meshgrid(np.arange(w), np.arange(h))
    px = np.tile(px.ravel(), spp)
    py = np.tile(py.ravel(), spp)
    si = np.repeat(np.arange(spp), w * h)
    return px, py, rng.stream_prefix_array(seed, px, py, frame, si)


# -- reference integrator ----------------------------------------------------


def test_furnace_every_pixel_exactly_one(furnace8):
    img, _ = render_mean(furnace8, "dynamic", 64)
    assert img == pytest.approx(np.ones_like(img), rel=1e-9)


def test_empty_scene_black():
    sc = Scene([], [], env_static=EnvironmentMap.constant((0, 0, 0)),
               camera=scenes.furnace().camera)
    img, _ = render_mean(sc, "dynamic", 4)
    assert np.all(img == 0.0)


def test_reference_matches_brute_force_oracle(cornell16):
    # classic enclosed-scene convergence check against the independent
    # uniform-hemisphere integrator
    img_acc, se_acc = render_mean(cornell16, "dynamic", 3072, seed=10)
    for (px, py) in [(8, 8), (3, 12), (12, 11)]:
        mean, se, _, _ = oracle_pixel(cornell16, px, py, 120_000, seed=77)
        z = combined_se_z(img_acc[py, px], se_acc[py, px], mean, se)
        assert np.all(z <= 3.0), f"pixel ({px},{py}): z={z}"


def test_reference_static_ignores_dynamic_and_uses_static_light():
    sc = scenes.cornell_dynamic_emitter((8, 8))
    base = scenes.cornell_static((8, 8))
    a, _ = render_mean(sc, "static", 32, seed=3)
    b, _ = render_mean(base, "static", 32, seed=3)
    assert np.array_equal(a, b)  # same geometry, same static lamp, same streams


# -- additive ----------------------------------------------------------------


def test_additive_zero_without_dynamic_content(cornell_static16):
    img, _ = render_mean(cornell_static16, "dynamic", 16, collect="gated")
    assert np.all(img == 0.0)  # not just zero-mean: every sample is zero


def test_additive_first_hit_dynamic_emitter():
    mats = [Material((0.0,) * 3, emission_static=(0, 0, 0), emission_dynamic=(1, 1, 1),
                     name="dl"),
            Material((0.5,) * 3, name="w")]
    cam = scenes.furnace().camera
    sc = Scene(mats, [Sphere((0, 0, 0), 1.0, "dl", dynamic=True)], camera=cam)
    v = trace_additive((4, 4), stream(4, 4), sc)
    assert v == pytest.approx([1.0, 1.0, 1.0])


def test_additive_matches_classified_brute_force(cornell16):
    # I(paths touching the added sphere) by exhaustive classification
    img_acc, se_acc = render_mean(cornell16, "dynamic", 4096, seed=31, collect="gated")
    px, py = 11, 6  # near the dynamic sphere
    bf = BruteForce(cornell16)
    o, d = pixel_ray(cornell16, px, py)
    tot, touched = bf.run(o, d, 150_000, seed=55, variant="dynamic")
    mean = touched.mean(axis=0)
    se = touched.std(axis=0, ddof=1) / np.sqrt(touched.shape[0])
    z = combined_se_z(img_acc[py, px], se_acc[py, px], mean, se)
    assert np.all(z <= 3.0), f"z={z}"


def test_additive_nonnegative_per_sample(cornell16):
    px, py, pref = grid_prefixes(cornell16, 8, seed=5)
    r = trace_batch(cornell16, cornell16.camera, "dynamic", px, py, pref)
    assert np.all(r.gated >= 0.0)


# -- subtractive -------------------------------------------------------------


def test_subtractive_zero_without_dynamic_content(cornell_static16):
    img, _ = render_mean(cornell_static16, "static", 16, collect="gated")
    assert np.all(img == 0.0)


def test_subtractive_nonnegative_per_sample(two_room16):
    px, py, pref = grid_prefixes(two_room16, 8, seed=6)
    r = trace_batch(two_room16, two_room16.camera, "static", px, py, pref)
    assert np.all(r.gated >= 0.0)


def test_subtractive_equals_blocked_light_direct_only():
    # dynamic plate between the lamp and the floor: in the plate's
    # shadow footprint nothing is gained (no added paths reach those
    # pixels under direct-only transport), so the subtractive estimate
    # alone must equal the static direct light the plate removes,
    # L_s - L_H from two full reference renders
    sc = scenes.cornell_blocker_plate((16, 16))
    s = TraceSettings(max_bounces=2)
    lm, lm_se = render_mean(sc, "static", 4096, seed=41, collect="gated", settings=s)
    lp, lp_se = render_mean(sc, "dynamic", 4096, seed=44, collect="gated", settings=s)
    ls, ls_se = render_mean(sc, "static", 4096, seed=42, settings=s)
    lh, lh_se = render_mean(sc, "dynamic", 4096, seed=43, settings=s)
    blocked = ls - lh
    blocked_se = np.sqrt(ls_se ** 2 + lh_se ** 2)

    # floor pixels only: their secondary rays reach the plate from below
    # (dark underside), so nothing is gained there and L_plus is exactly 0
    from deltapath.compositor import build_mask
    _, gb = build_mask(sc, sc.camera)
    shadow = (gb.hit & (np.abs(gb.position[..., 0]) < 0.35)
              & (gb.position[..., 2] < 0.0) & (gb.position[..., 1] < 0.01))
    assert shadow.sum() >= 3  # the footprint is visible at this framing
    assert np.all(lp[shadow] == 0.0)  # premise: no additive transport here
    z = combined_se_z(lm[shadow], lm_se[shadow], blocked[shadow], blocked_se[shadow])
    assert np.all(z <= 3.0), f"max z in shadow footprint: {z.max():.2f}"
    assert lm[shadow].mean() > 0.05  # the plate blocks a substantial amount

    # everywhere else the full identity L_minus - L_plus = L_s - L_H holds
    z_all = combined_se_z(lm - lp, np.sqrt(lm_se ** 2 + lp_se ** 2),
                          blocked, blocked_se)
    assert (z_all > 3.0).mean() <= 0.01


# -- correlated difference ----------------------------------------------------


def test_delta_zero_bitwise_without_dynamic_content(cornell_static16):
    px, py, pref = grid_prefixes(cornell_static16, 4, seed=7)
    cam = cornell_static16.camera
    a = trace_batch(cornell_static16, cam, "dynamic", px, py, pref)
    b = trace_batch(cornell_static16, cam, "static", px, py, pref)
    assert np.array_equal(a.total, b.total)  # exact cancellation per sample


def test_delta_pss_equals_additive_minus_subtractive(cornell16):
    gen = np.random.Generator(np.random.PCG64(12)); n_checked = 0
    for _ in range(200):
        px = int(gen.integers(0, 16))
        py = int(gen.integers(0, 16))
        seed = int(gen.integers(0, 2 ** 31))
        s_delta = stream(px, py, seed=seed)
        s_add = stream(px, py, seed=seed)
        s_sub = stream(px, py, seed=seed)
        d, tally = trace_delta_pss((px, py), s_delta, cornell16)
        a = trace_additive((px, py), s_add, cornell16)
        b = trace_subtractive((px, py), s_sub, cornell16)
        scale = max(np.abs(d).max(), np.abs(a - b).max(), 1e-8)
        assert np.abs(d - (a - b)).max() <= 1e-5 * scale
        n_checked += 1
    assert n_checked == 200


def test_delta_pss_class_tally(cornell_static16, cornell16):
    _, tally = trace_delta_pss((8, 8), stream(8, 8, seed=1), cornell_static16)
    assert tally.additive == 0 and tally.subtractive == 0
    assert tally.dominant is PathClass.NEUTRAL
    hits = 0
    for s in range(64):
        _, t = trace_delta_pss((11, 6), stream(11, 6, sample=s, seed=1), cornell16)
        hits += t.additive + t.subtractive
    assert hits > 0  # near the added sphere the delta classes do appear


def test_dynamic_light_delta_nonnegative_in_expectation():
    sc = scenes.cornell_dynamic_emitter((8, 8))
    # brighter lamp, no dynamic geometry: delta >= 0 at every pixel
    dyn, dyn_se = render_mean(sc, "dynamic", 1024, seed=50)
    sta, sta_se = render_mean(sc, "static", 1024, seed=51)
    ref_delta = dyn - sta
    px, py, pref = grid_prefixes(sc, 1024, seed=52)
    cam = sc.camera
    a = trace_batch(sc, cam, "dynamic", px, py, pref)
    b = trace_batch(sc, cam, "static", px, py, pref)
    d = (a.total - b.total).reshape(1024, 8, 8, 3)
    dm = d.mean(axis=0)
    dse = d.std(axis=0, ddof=1) / np.sqrt(1024)
    assert np.all(dm >= -3.0 * dse)  # nonnegative within noise
    z = combined_se_z(dm, dse, ref_delta, np.sqrt(dyn_se ** 2 + sta_se ** 2))
    assert (z > 3.0).mean() <= 0.01


def test_env_delta_scene_delta_matches_two_references():
    sc = scenes.env_floor((8, 8))
    dyn, dyn_se = render_mean(sc, "dynamic", 768, seed=60)
    sta, sta_se = render_mean(sc, "static", 768, seed=61)
    px, py, pref = grid_prefixes(sc, 768, seed=62)
    a = trace_batch(sc, sc.camera, "dynamic", px, py, pref)
    b = trace_batch(sc, sc.camera, "static", px, py, pref)
    d = (a.total - b.total).reshape(768, 8, 8, 3)
    z = combined_se_z(d.mean(axis=0), d.std(axis=0, ddof=1) / np.sqrt(768),
                      dyn - sta, np.sqrt(dyn_se ** 2 + sta_se ** 2))
    assert (z > 3.0).mean() <= 0.02


def test_scalar_entry_points_consistent(cornell16):
    s = stream(5, 9, sample=2, seed=77)
    full = trace_reference((5, 9), s, cornell16, variant="dynamic")
    add = trace_additive((5, 9), stream(5, 9, sample=2, seed=77), cornell16)
    assert np.all(add <= full + 1e-12)
    assert np.all(add >= 0.0)


def test_decorrelated_streams_differ(cornell16):
    a = trace_reference((5, 9), stream(5, 9, sample=0), cornell16, variant="dynamic")
    b = trace_reference((5, 9), stream(5, 9, sample=1), cornell16, variant="dynamic")
    assert not np.array_equal(a, b)
