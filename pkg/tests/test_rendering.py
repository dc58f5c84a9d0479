import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artirig import autodiff as ad
from artirig.autodiff import value
from artirig.fields import AnalyticField, FieldConfig, NetworkField, Sphere
from artirig.geometry import Camera, RigidTransform, quat_from_axis_angle
from artirig.params import ParameterStore
from artirig.rendering import (
    DegenerateFlowError,
    PixelBoundsError,
    Ray,
    composite,
    generate_ray,
    pixel_grid,
    render_flow_pixels,
    render_image,
    render_pixel,
    render_pixels,
    sample_ray,
    transmittance,
)
from artirig.skinning import SkinningModel
from artirig.warping import MotionSequence

from helpers import check_store_grads

INTR = (80.0, 80.0, 32.0, 32.0, 64, 64)


def make_camera(pose=None):
    return Camera(pose or RigidTransform.identity(), 80.0, 80.0, 32.0, 32.0, 64, 64)


def static_rig(n_bones=1, cam_z=2.5, n_frames=1, centers=None):
    """Identity bone motion; canonical origin placed cam_z in front of the camera."""
    store = ParameterStore()
    skin = SkinningModel(store, n_bones,
                         init_centers=centers if centers is not None else np.zeros((n_bones, 3)))
    seq = MotionSequence(store, n_frames, n_bones, INTR,
                         init_cam_trans=np.tile([0.0, 0.0, cam_z], (n_frames, 1)))
    return store, skin, seq


# -- rays and sampling ---------------------------------------------------------


def test_ray_through_principal_point():
    r = generate_ray(make_camera(), (32.0, 32.0))
    np.testing.assert_allclose(r.direction, [0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(r.origin, [0, 0, 0], atol=1e-12)


def test_ray_one_focal_length_off_axis():
    cam = Camera(RigidTransform.identity(), 80.0, 80.0, 128.0, 128.0, 256, 256)
    r = generate_ray(cam, (128.0 + 80.0, 128.0))
    np.testing.assert_allclose(r.direction, np.array([1, 0, 1]) / np.sqrt(2), atol=1e-12)


def test_ray_rotated_camera_points_backward():
    pose = RigidTransform.from_axis_angle((0, 1, 0), np.pi)
    r = generate_ray(make_camera(pose), (32.0, 32.0))
    np.testing.assert_allclose(r.direction, [0, 0, -1], atol=1e-12)


def test_ray_out_of_bounds():
    cam = make_camera()
    for uv in ((-1.0, 5.0), (65.0, 5.0), (5.0, 64.5)):
        with pytest.raises(PixelBoundsError):
            generate_ray(cam, uv)


def test_ray_validation():
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.array([0, 0, 2.0]), 0.5, 5.5)
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.array([0, 0, 1.0]), 2.0, 1.0)


def test_sample_single_stratum():
    ray = Ray(np.zeros(3), np.array([0.0, 0, 1]), 1.0, 3.0)
    s = sample_ray(ray, 1, seed=5)
    assert s.deltas.shape == (1,)
    assert s.deltas[0] == pytest.approx(2.0)
    assert 1.0 <= s.depths[0] < 3.0


def test_sample_midpoints_without_jitter():
    ray = Ray(np.zeros(3), np.array([0.0, 0, 1]), 1.0, 3.0)
    s = sample_ray(ray, 4, jitter=False)
    np.testing.assert_allclose(s.depths, [1.25, 1.75, 2.25, 2.75])
    np.testing.assert_allclose(s.positions[:, 2], s.depths)
    np.testing.assert_allclose(s.deltas, 0.5)


def test_sample_deterministic_and_stratified():
    ray = Ray(np.zeros(3), np.array([0.0, 0, 1]), 0.5, 5.5)
    a = sample_ray(ray, 16, seed=7)
    b = sample_ray(ray, 16, seed=7)
    assert np.array_equal(a.depths, b.depths)
    c = sample_ray(ray, 16, seed=8)
    assert not np.array_equal(a.depths, c.depths)
    edges = 0.5 + np.arange(17) * (5.0 / 16)
    assert np.all(a.depths >= edges[:-1]) and np.all(a.depths < edges[1:])
    assert np.all(np.diff(a.depths) > 0)


# -- compositing ---------------------------------------------------------------


def test_composite_empty_space():
    s = sample_ray(Ray(np.zeros(3), np.array([0.0, 0, 1]), 0.5, 5.5), 8, jitter=False)
    out = composite(s, np.zeros(8), color=np.ones((8, 3)))
    assert value(out.opacity) == pytest.approx(0.0)
    np.testing.assert_allclose(value(out.color), 0.0)
    np.testing.assert_allclose(value(s.tau), 0.0)


def test_composite_ln2_half():
    s = sample_ray(Ray(np.zeros(3), np.array([0.0, 0, 1]), 1.0, 2.0), 1, jitter=False)
    sigma = np.array([np.log(2.0)])  # delta = 1
    out = composite(s, sigma, color=np.ones((1, 3)))
    assert value(out.opacity) == pytest.approx(0.5)
    assert value(s.tau)[0] == pytest.approx(0.5)


def test_constant_sigma_closed_form_any_partition():
    rng = np.random.default_rng(0)
    sigma0, total = 0.7, 4.0
    expect = 1.0 - np.exp(-sigma0 * total)
    for _ in range(10):
        n = int(rng.integers(2, 40))
        cuts = np.sort(rng.uniform(0, total, n - 1))
        deltas = np.diff(np.concatenate([[0.0], cuts, [total]]))
        tau, opacity = transmittance(np.full(n, sigma0), deltas)
        assert abs(value(opacity) - expect) < 1e-12
        assert abs(value(tau).sum() - expect) < 1e-12


def test_partition_refinement_invariance():
    sigma0 = 1.3
    deltas1 = np.array([2.0, 1.0])
    deltas2 = np.array([0.5, 0.5, 0.5, 0.5, 1.0])  # refinement of the same span
    _, o1 = transmittance(np.full(2, sigma0), deltas1)
    _, o2 = transmittance(np.full(5, sigma0), deltas2)
    assert abs(value(o1) - value(o2)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=32), st.integers(min_value=0, max_value=10_000))
def test_tau_bounds_random_sigma(n, seed):
    rng = np.random.default_rng(seed)
    sigma = rng.exponential(scale=3.0, size=n)
    deltas = rng.uniform(0.01, 1.0, size=n)
    tau, opacity = transmittance(sigma, deltas)
    tau, opacity = value(tau), value(opacity)
    assert np.all(tau >= 0)
    assert tau.sum() <= 1 + 1e-9
    assert -1e-12 <= opacity <= 1


# -- full pixel renders --------------------------------------------------------


def ray_sphere_hit(d, center, radius):
    """Does the ray s*d (s>0) intersect the sphere? Returns impact parameter."""
    d = d / np.linalg.norm(d)
    t0 = d @ center
    b2 = center @ center - t0 * t0
    return np.sqrt(b2)


def test_sphere_silhouette_matches_ray_test():
    store, skin, seq = static_rig()
    field = AnalyticField(Sphere(radius=0.5), beta=0.01)
    cam = seq.camera(0)
    center_world = np.array([0.0, 0.0, 0.0])  # canonical sphere center
    cam_center = np.array([0.0, 0.0, -2.5])  # camera at -2.5 looking +z
    grid = pixel_grid(64, 64)[::7]  # subsample for speed
    out = render_pixels(field, seq, skin, 0, grid, n_samples=64, jitter=False)
    op = value(out.opacity)
    checked = 0
    for uv, o in zip(grid, op):
        d = cam.pixel_direction(uv)
        b = ray_sphere_hit(d, center_world - cam_center, 0.5)
        if abs(b - 0.5) < 0.07:
            continue  # grazing band excluded
        expect = 1.0 if b < 0.5 else 0.0
        assert abs(o - expect) < 0.05, (uv, b, o)
        checked += 1
    assert checked > 400


def test_camera_looking_away_is_empty():
    store, skin, seq = static_rig(cam_z=-2.5)  # object now behind the camera
    field = AnalyticField(Sphere(radius=0.5), beta=0.02)
    out = render_pixels(field, seq, skin, 0, pixel_grid(64, 64)[::13], jitter=False)
    assert np.all(value(out.opacity) < 1e-3)


def test_render_deterministic_bit_identical():
    store, skin, seq = static_rig()
    field = AnalyticField(Sphere(radius=0.5), beta=0.05)
    px = np.array([[32.5, 30.5], [20.5, 40.5]])
    a = render_pixels(field, seq, skin, 0, px, n_samples=16, seed=3, step=11)
    b = render_pixels(field, seq, skin, 0, px, n_samples=16, seed=3, step=11)
    assert value(a.color).tobytes() == value(b.color).tobytes()
    assert value(a.opacity).tobytes() == value(b.opacity).tobytes()
    assert value(a.feature).tobytes() == value(b.feature).tobytes()
    c = render_pixels(field, seq, skin, 0, px, n_samples=16, seed=4, step=11)
    assert value(a.color).tobytes() != value(c.color).tobytes()


def test_render_pixel_independent_of_batch():
    store, skin, seq = static_rig()
    field = AnalyticField(Sphere(radius=0.5), beta=0.05)
    solo = render_pixel(field, seq, skin, 0, [32.5, 32.5], n_samples=8, seed=1)
    batch = render_pixels(field, seq, skin, 0,
                          np.array([[10.5, 10.5], [32.5, 32.5]]), n_samples=8, seed=1)
    np.testing.assert_array_equal(value(solo.opacity), value(batch.opacity)[1])
    np.testing.assert_array_equal(value(solo.color), value(batch.color)[1])


def test_render_image_shapes():
    store, skin, seq = static_rig()
    field = AnalyticField(Sphere(radius=0.5), beta=0.02, feature_dim=4)
    color, opacity, feature = render_image(field, seq, skin, 0, n_samples=4,
                                           with_feature=True, jitter=False)
    assert color.shape == (64, 64, 3)
    assert opacity.shape == (64, 64)
    assert feature.shape == (64, 64, 4)
    assert opacity.max() > 0.9  # sphere visible
    assert opacity.min() < 1e-6


def test_render_out_of_bounds_pixel():
    store, skin, seq = static_rig()
    field = AnalyticField(Sphere(radius=0.5))
    with pytest.raises(PixelBoundsError):
        render_pixels(field, seq, skin, 0, np.array([[99.0, 5.0]]))


# -- flow ----------------------------------------------------------------------


def test_flow_zero_when_same_frame():
    store, skin, seq = static_rig(n_frames=2)
    field = AnalyticField(Sphere(radius=0.5), beta=0.02)
    px = np.array([[32.5, 32.5], [28.5, 36.5], [36.5, 28.5]])
    flow, op = render_flow_pixels(field, seq, skin, 0, 0, px, n_samples=32, jitter=False)
    assert np.all(value(op) > 0.9)
    assert np.all(np.abs(value(flow)) < 1e-6)


def test_flow_camera_translation_oracle():
    b = 0.15
    store, skin, seq = static_rig(n_frames=2)
    seq.cam_trans.data[1] = np.array([-b, 0.0, 2.5])  # camera moved right by b
    field = AnalyticField(Sphere(radius=0.5), beta=0.02)
    px = np.array([[32.0, 32.0]])
    flow, _ = render_flow_pixels(field, seq, skin, 0, 1, px, n_samples=64, jitter=False)
    flow = value(flow)[0]

    # manual oracle: project this pixel's samples into the second camera
    cam = seq.camera(0)
    d = cam.pixel_direction(px[0])
    depths = 0.5 + (np.arange(64) + 0.5) * (5.0 / 64)
    pts = depths[:, None] * d  # frame-0 camera coords == world + 2.5 z
    sigma = value(AnalyticField(Sphere(radius=0.5), beta=0.02).density(pts - [0, 0, 2.5]))
    tau, _ = transmittance(sigma, np.full(64, 5.0 / 64))
    tau = value(tau)
    shifted = pts - [b, 0, 0]  # same world points in cam-1 coordinates
    uv = shifted[:, :2] / shifted[:, 2:3] * 80.0 + 32.0
    expect = (tau @ uv) / tau.sum() - px[0]
    np.testing.assert_allclose(flow, expect, atol=1e-9)

    # coarse closed form: surface near z ~ 2.0 -> flow ~ (-fx b / z, 0)
    zbar = (tau @ depths) / tau.sum()
    assert flow[1] == pytest.approx(0.0, abs=1e-9)
    assert flow[0] == pytest.approx(-80.0 * b / zbar, abs=0.5)
    assert flow[0] == pytest.approx(-80.0 * b / 2.0, abs=0.7)


def test_flow_object_translation_oracle():
    dx = 0.12
    store, skin, seq = static_rig(n_frames=2)
    # frame 1: the single bone translated by dx in world/canonical x
    seq.bone_trans.data[1, 0] += np.array([dx, 0.0, 0.0])
    field = AnalyticField(Sphere(radius=0.5), beta=0.02)
    px = np.array([[32.0, 32.0]])
    flow, _ = render_flow_pixels(field, seq, skin, 0, 1, px, n_samples=64, jitter=False)
    flow = value(flow)[0]
    assert flow[1] == pytest.approx(0.0, abs=1e-9)
    assert flow[0] == pytest.approx(80.0 * dx / 2.0, abs=0.7)


def test_flow_degenerate_error():
    store, skin, seq = static_rig(n_frames=2)
    seq.cam_trans.data[1] = np.array([0.0, 0.0, -50.0])  # everything behind cam 1
    field = AnalyticField(Sphere(radius=0.5), beta=0.02)
    with pytest.raises(DegenerateFlowError):
        render_flow_pixels(field, seq, skin, 0, 1, np.array([[32.0, 32.0]]),
                           n_samples=8, jitter=False)


# -- gradients -----------------------------------------------------------------


def test_render_gradients_match_fd():
    store = ParameterStore()
    cfg = FieldConfig(width=6, depth=2, L_sdf=1, L_color=1, L_feature=0, feature_dim=2)
    field = NetworkField(store, cfg, seed=3)
    skin = SkinningModel(store, 2, init_centers=[(-0.3, 0, 0), (0.3, 0, 0)])
    seq = MotionSequence(store, 2, 2, INTR,
                         init_cam_trans=np.tile([0.0, 0.0, 2.5], (2, 1)))
    rng = np.random.default_rng(0)
    seq.bone_quats.data[...] = quat_from_axis_angle(
        np.tile([0, 0, 1.0], (2, 2, 1)), rng.uniform(-0.3, 0.3, (2, 2)))
    px = np.array([[30.5, 33.5], [34.5, 30.5]])
    coef = rng.normal(size=(2, 3))

    def loss():
        out = render_pixels(field, seq, skin, 1, px, n_samples=8, seed=2,
                            step=5, with_feature=False)
        return ad.add(ad.sum_(ad.mul(out.color, coef)), ad.sum_(out.opacity))

    worst = check_store_grads(store, loss, h=1e-5, rtol=1e-3, atol=1e-7)
    assert worst < 1e-3


def test_flow_gradients_match_fd():
    store = ParameterStore()
    cfg = FieldConfig(width=6, depth=2, L_sdf=1, L_color=0, L_feature=0, feature_dim=1)
    field = NetworkField(store, cfg, seed=9)
    skin = SkinningModel(store, 2, init_centers=[(-0.3, 0, 0), (0.3, 0, 0)])
    seq = MotionSequence(store, 2, 2, INTR,
                         init_cam_trans=np.tile([0.0, 0.0, 2.5], (2, 1)))
    seq.bone_trans.data[1] += np.array([0.05, -0.02, 0.01])
    px = np.array([[31.5, 32.5]])
    coef = np.array([[0.7, -1.2]])

    def loss():
        flow, _ = render_flow_pixels(field, seq, skin, 0, 1, px, n_samples=6,
                                     seed=4, step=2)
        return ad.sum_(ad.mul(flow, coef))

    names = [n for n in store.names()
             if not (n.startswith("field.color") or n.startswith("field.feature"))]
    worst = check_store_grads(store, loss, h=1e-5, rtol=1e-3, atol=1e-7, names=names)
    assert worst < 1e-3
