import math

import numpy as np
import pytest

from ubimap import geom
from ubimap.geom import Point3, RigidTransform


def random_transform(rng):
    axis = rng.normal(size=3)
    axis = axis / np.linalg.norm(axis)
    angle = rng.uniform(-math.pi, math.pi)
    rot = geom.rotation_from_axis_angle(axis * angle)
    return RigidTransform(rot, rng.uniform(-5, 5, size=3))


def test_construction_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        RigidTransform([[1, 0.1, 0], [0, 1, 0], [0, 0, 1]], [0, 0, 0])


def test_construction_rejects_reflection():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), [0, 0, 0])


def test_compose_with_identity():
    t = geom.compose(geom.rot_z(0.3), geom.translation(1, 2, 3))
    out = geom.compose(t, geom.identity())
    assert out.is_close(t, 1e-12, 1e-12)


def test_compose_planar_angles_add():
    out = geom.compose(geom.rot_z(math.radians(30)), geom.rot_z(math.radians(60)))
    assert out.is_close(geom.rot_z(math.radians(90)), 1e-12, 1e-12)


def test_compose_pure_translations_add():
    out = geom.compose(geom.translation(1, 0, 0), geom.translation(0, 1, 0))
    assert np.allclose(out.translation, [1, 1, 0], atol=1e-15)
    assert np.allclose(out.rotation, np.eye(3))


def test_invert_identity():
    assert geom.invert(geom.identity()).is_close(geom.identity(), 1e-15, 1e-15)


def test_invert_translation():
    out = geom.invert(geom.translation(1, 2, 3))
    assert np.allclose(out.translation, [-1, -2, -3], atol=1e-15)


def test_invert_rotation():
    out = geom.invert(geom.rot_z(math.radians(90)))
    assert out.is_close(geom.rot_z(math.radians(-90)), 1e-12, 1e-12)


def test_apply_identity():
    p = Point3(1, 2, 3)
    assert geom.apply(geom.identity(), p) == p


def test_apply_axis_rotation():
    out = geom.apply(geom.rot_z(math.radians(90)), Point3(1, 0, 0))
    assert abs(out.x) < 1e-12 and abs(out.y - 1) < 1e-12 and abs(out.z) < 1e-12


def test_apply_composed_translation_after_rotation():
    t = geom.compose(geom.translation(1, 0, 0), geom.rot_z(math.radians(90)))
    out = geom.apply(t, Point3(1, 0, 0))
    assert abs(out.x - 1) < 1e-12 and abs(out.y - 1) < 1e-12 and abs(out.z) < 1e-12


def test_rotation_distance_zero_for_equal():
    t = geom.compose(geom.rot_x(0.4), geom.translation(5, 0, 0))
    assert geom.rotation_distance(t, t) == pytest.approx(0.0, abs=1e-12)


def test_rotation_distance_quarter_turn():
    assert geom.rotation_distance(geom.identity(), geom.rot_z(math.pi / 2)) == pytest.approx(
        math.pi / 2, abs=1e-12
    )


def test_rotation_distance_wraps_around():
    # The relative rotation between 10 deg and 350 deg about z is 20 deg.
    expected = math.radians(20.0)
    got = geom.rotation_distance(geom.rot_z(math.radians(10)), geom.rot_z(math.radians(350)))
    assert got == pytest.approx(expected, abs=1e-12)


def test_point3_rejects_non_finite():
    with pytest.raises(ValueError):
        Point3(math.nan, 0, 0)
    with pytest.raises(ValueError):
        Point3(0, math.inf, 0)


def test_inverse_composes_to_identity_randomized():
    rng = np.random.default_rng(11)
    for _ in range(200):
        t = random_transform(rng)
        out = geom.compose(geom.invert(t), t)
        assert np.linalg.norm(out.rotation - np.eye(3)) < 1e-10
        assert np.linalg.norm(out.translation) < 1e-10


def test_apply_preserves_pairwise_distances():
    rng = np.random.default_rng(12)
    for _ in range(100):
        t = random_transform(rng)
        p = Point3.from_array(rng.uniform(-10, 10, size=3))
        q = Point3.from_array(rng.uniform(-10, 10, size=3))
        before = np.linalg.norm(p.as_array() - q.as_array())
        after = np.linalg.norm(geom.apply(t, p).as_array() - geom.apply(t, q).as_array())
        assert abs(after - before) < 1e-9


def test_compose_associative():
    rng = np.random.default_rng(13)
    for _ in range(100):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = geom.compose(geom.compose(a, b), c)
        right = geom.compose(a, geom.compose(b, c))
        assert np.linalg.norm(left.rotation - right.rotation) < 1e-10
        assert np.linalg.norm(left.translation - right.translation) < 1e-10


def test_transform_points_matches_apply():
    rng = np.random.default_rng(14)
    t = random_transform(rng)
    pts = rng.uniform(-3, 3, size=(17, 3))
    batch = t.transform_points(pts)
    for i in range(len(pts)):
        single = geom.apply(t, Point3.from_array(pts[i])).as_array()
        assert np.allclose(batch[i], single, atol=1e-12)


def test_nearest_rotation_restores_validity():
    rng = np.random.default_rng(15)
    t = random_transform(rng)
    noisy = t.rotation + rng.normal(scale=1e-6, size=(3, 3))
    fixed = geom.nearest_rotation(noisy)
    assert np.linalg.norm(fixed.T @ fixed - np.eye(3)) < 1e-12
    assert np.linalg.det(fixed) > 0
