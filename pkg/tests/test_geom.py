import numpy as np
import pytest

from pcr.errors import DegenerateGeometryError
from pcr.geom import (Bounds3, RigidTransform, SimilarityTransform, bounds,
                      euler_zyx, rotation_zyx, umeyama_align)

from conftest import random_rotation, rodrigues, rotation_angle_between


def rand_similarity(rng):
    rot = random_rotation(rng)
    return SimilarityTransform(
        float(rng.uniform(0.2, 5.0)),
        RigidTransform(rot, rng.normal(size=3)))


class TestCompose:
    def test_identity_compose_identity(self):
        ident = SimilarityTransform.identity()
        out = ident.compose(ident)
        assert out.scale == 1.0
        assert np.array_equal(out.rotation, np.eye(3))
        assert np.array_equal(out.translation, np.zeros(3))

    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(20):
            x = rand_similarity(rng)
            out = x.compose(x.inverse())
            assert abs(out.scale - 1.0) < 1e-9
            assert np.abs(out.rotation - np.eye(3)).max() < 1e-9
            assert np.abs(out.translation).max() < 1e-9

    def test_hand_expanded_scale_composition(self):
        a = SimilarityTransform(2.0, RigidTransform(np.eye(3), np.zeros(3)))
        b = SimilarityTransform(3.0, RigidTransform(np.eye(3), [1.0, 0.0, 0.0]))
        out = a.compose(b)
        # s_a * R_a @ (s_b * R_b @ p + t_b) + t_a with these values:
        # scale 6, translation 2 * I @ (1,0,0) = (2,0,0)
        assert out.scale == pytest.approx(6.0, abs=0.0)
        assert np.allclose(out.rotation, np.eye(3))
        assert np.allclose(out.translation, [2.0, 0.0, 0.0], atol=1e-15)

    def test_associativity(self, rng):
        for _ in range(30):
            a, b, c = (rand_similarity(rng) for _ in range(3))
            left = a.compose(b).compose(c)
            right = a.compose(b.compose(c))
            assert abs(left.scale - right.scale) < 1e-12 * left.scale
            assert np.abs(left.rotation - right.rotation).max() < 1e-12
            scale = max(1.0, np.abs(left.translation).max())
            assert np.abs(left.translation - right.translation).max() < 1e-12 * scale

    def test_rotation_stays_orthonormal_over_long_chains(self, rng):
        x = rand_similarity(rng)
        acc = SimilarityTransform.identity()
        step = SimilarityTransform(1.0, RigidTransform(rodrigues([1, 2, 3], 1e-3), np.zeros(3)))
        for _ in range(10_000):
            acc = acc.compose(step)
        rot = acc.rotation
        assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(rot) - 1.0) < 1e-9
        del x


class TestApply:
    def test_identity(self):
        p = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(SimilarityTransform.identity().apply(p), p)

    def test_pure_scale(self):
        t = SimilarityTransform(2.0, RigidTransform(np.eye(3), np.zeros(3)))
        assert np.allclose(t.apply([1.0, 1.0, 1.0]), [2.0, 2.0, 2.0])

    def test_rot_z_quarter_turn_plus_lift(self):
        # rot_z(90 deg) @ (1,0,0) = (0,1,0); plus (0,0,1) lift
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        t = SimilarityTransform(1.0, RigidTransform(rot, [0.0, 0.0, 1.0]))
        assert np.allclose(t.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0], atol=1e-15)

    def test_round_trip_through_inverse(self, rng):
        for _ in range(50):
            x = rand_similarity(rng)
            p = rng.normal(size=3) * 10
            back = x.inverse().apply(x.apply(p))
            assert np.abs(back - p).max() < 1e-9

    def test_batch_matches_single(self, rng):
        x = rand_similarity(rng)
        pts = rng.normal(size=(17, 3))
        batch = x.apply(pts)
        for i in range(17):
            assert np.allclose(batch[i], x.apply(pts[i]), atol=1e-12)


class TestUmeyama:
    def test_identity_when_target_equals_source(self, rng):
        pts = rng.normal(size=(40, 3))
        out = umeyama_align(pts, pts)
        assert abs(out.scale - 1.0) < 1e-12
        assert np.abs(out.rotation - np.eye(3)).max() < 1e-9
        assert np.abs(out.translation).max() < 1e-9

    def test_recovers_generating_transform(self, rng):
        for _ in range(20):
            x = rand_similarity(rng)
            src = rng.normal(size=(25, 3))
            tgt = x.apply(src)
            out = umeyama_align(src, tgt)
            assert abs(out.scale - x.scale) < 1e-9 * x.scale
            assert rotation_angle_between(out.rotation, x.rotation) < 1e-9
            assert np.abs(out.translation - x.translation).max() < 1e-8

    def test_rigid_mode_fixes_scale_to_one(self, rng):
        rot = random_rotation(rng)
        src = rng.normal(size=(30, 3))
        tgt = 2.0 * (src @ rot.T)
        out = umeyama_align(src, tgt, with_scale=False)
        assert out.scale == 1.0

    def test_collinear_points_raise(self):
        src = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateGeometryError):
            umeyama_align(src, src)

    def test_planar_points_are_fine(self, rng):
        src = rng.normal(size=(30, 3))
        src[:, 2] = 0.0
        rot = random_rotation(rng)
        out = umeyama_align(src, src @ rot.T)
        assert rotation_angle_between(out.rotation, rot) < 1e-9


class TestBounds:
    def test_two_points(self):
        box = bounds([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
        assert np.array_equal(box.minimum, [0.0, 0.0, 0.0])
        assert np.array_equal(box.maximum, [1.0, 2.0, 3.0])

    def test_single_point(self):
        box = bounds([[4.0, 5.0, 6.0]])
        assert np.array_equal(box.minimum, box.maximum)

    def test_matches_exhaustive_scan(self, rng):
        pts = rng.normal(size=(100, 3)) * 7
        box = bounds(pts)
        lo = np.array([min(p[k] for p in pts) for k in range(3)])
        hi = np.array([max(p[k] for p in pts) for k in range(3)])
        assert np.array_equal(box.minimum, lo)
        assert np.array_equal(box.maximum, hi)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            bounds(np.empty((0, 3)))

    def test_inverted_corners_rejected(self):
        with pytest.raises(ValueError):
            Bounds3([1.0, 0.0, 0.0], [0.0, 1.0, 1.0])


class TestValidation:
    def test_non_orthonormal_rotation_rejected(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 1.01, np.zeros(3))

    def test_reflection_rejected(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError):
            SimilarityTransform(0.0, RigidTransform.identity())

    def test_arrays_frozen(self):
        t = RigidTransform.identity()
        with pytest.raises(ValueError):
            t.rotation[0, 0] = 2.0


class TestEuler:
    def test_round_trip(self, rng):
        for _ in range(50):
            angles = rng.uniform([-np.pi, -np.pi / 2 + 0.05, -np.pi],
                                 [np.pi, np.pi / 2 - 0.05, np.pi])
            rot = rotation_zyx(*angles)
            back = np.array(euler_zyx(rot))
            assert np.abs(back - angles).max() < 1e-9

    def test_quaternion_is_unit_and_consistent(self, rng):
        for _ in range(20):
            rot = random_rotation(rng)
            q = RigidTransform(rot, np.zeros(3)).as_quaternion()
            assert abs(np.linalg.norm(q) - 1.0) < 1e-12
            w, x, y, z = q
            rebuilt = np.array([
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (w * y + x * z)],
                [2 * (w * z + x * y), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (w * x + y * z), 1 - 2 * (x * x + y * y)],
            ])
            assert np.abs(rebuilt - rot).max() < 1e-9
