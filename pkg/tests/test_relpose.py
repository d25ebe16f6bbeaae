import numpy as np
import pytest

from pcr.cloudio import CameraIntrinsics, MatchRecord
from pcr.errors import (AmbiguousDecompositionError, DegenerateGeometryError,
                        InsufficientMatchesError)
from pcr.relpose import (RansacConfig, angular_threshold, bearing_rays,
                         decompose_and_disambiguate, epipolar_residuals,
                         essential_from_rays, ransac_relative_pose)
from pcr.scale import project_pinhole

from conftest import rodrigues, rotation_angle_between

K = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0)


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def two_view_scene(rng, n=200, rot_deg=12.0, pixel_noise=0.0, outliers=0.0,
                   baseline=1.0):
    """Synthetic calibrated two-view geometry with known relative pose."""
    pts = rng.uniform([-2.5, -2.0, 3.0], [2.5, 2.0, 7.0], size=(n, 3))
    axis = rng.normal(size=3)
    rot = rodrigues(axis, np.deg2rad(rot_deg))
    tvec = rng.normal(size=3)
    tvec = baseline * tvec / np.linalg.norm(tvec)
    qts = pts @ rot.T + tvec
    assert (qts[:, 2] > 0.1).all()

    matches = []
    n_out = int(np.floor(outliers * n + 0.5))
    out_rows = set(rng.choice(n, size=n_out, replace=False).tolist()) if n_out else set()
    for i, (p, q) in enumerate(zip(pts, qts)):
        us, vs = project_pinhole(p, K)
        ut, vt = project_pinhole(q, K)
        if pixel_noise:
            us += rng.normal(scale=pixel_noise)
            vs += rng.normal(scale=pixel_noise)
            ut += rng.normal(scale=pixel_noise)
            vt += rng.normal(scale=pixel_noise)
        if i in out_rows:
            ut = rng.uniform(0.0, 640.0)
            vt = rng.uniform(0.0, 480.0)
        matches.append(MatchRecord(us=us, vs=vs, ut=ut, vt=vt))
    return matches, rot, tvec / np.linalg.norm(tvec), sorted(out_rows)


def rays_of(matches):
    us = np.array([m.us for m in matches])
    vs = np.array([m.vs for m in matches])
    ut = np.array([m.ut for m in matches])
    vt = np.array([m.vt for m in matches])
    return bearing_rays(us, vs, K), bearing_rays(ut, vt, K)


class TestAngularThreshold:
    def test_hand_value_one_pixel(self):
        # 1 - cos(arctan(1/500)) evaluated numerically
        assert angular_threshold(1.0, 500.0) == pytest.approx(2.0e-6, rel=1e-3)

    def test_forty_five_degrees(self):
        assert angular_threshold(7.0, 7.0) == pytest.approx(1.0 - np.cos(np.pi / 4))

    def test_monotone_in_psi_and_focal(self):
        psis = np.linspace(0.1, 50.0, 40)
        values = [angular_threshold(p, 400.0) for p in psis]
        assert (np.diff(values) > 0).all()
        focals = np.linspace(100.0, 2000.0, 40)
        values = [angular_threshold(2.0, f) for f in focals]
        assert (np.diff(values) < 0).all()

    def test_positive_inputs_required(self):
        with pytest.raises(ValueError):
            angular_threshold(0.0, 100.0)
        with pytest.raises(ValueError):
            angular_threshold(1.0, 0.0)


class TestEssential:
    def test_noiseless_epipolar_residuals_vanish(self, rng):
        matches, rot, tdir, _ = two_view_scene(rng, n=60)
        rays_s, rays_t = rays_of(matches)
        e = essential_from_rays(rays_s, rays_t)
        alg = np.abs(np.einsum("ij,jk,ik->i", rays_t, e, rays_s))
        assert alg.max() < 1e-10

    def test_identical_source_rays_degenerate(self, rng):
        ray = np.array([0.1, 0.2, 1.0])
        ray = ray / np.linalg.norm(ray)
        rays_s = np.tile(ray, (10, 1))
        rays_t = rng.normal(size=(10, 3))
        rays_t /= np.linalg.norm(rays_t, axis=1, keepdims=True)
        rays_t[:, 2] = np.abs(rays_t[:, 2]) + 0.5
        rays_t /= np.linalg.norm(rays_t, axis=1, keepdims=True)
        with pytest.raises(DegenerateGeometryError):
            essential_from_rays(rays_s, rays_t)

    def test_projected_singular_values(self, rng):
        matches, *_ = two_view_scene(rng, n=40, pixel_noise=0.5)
        rays_s, rays_t = rays_of(matches)
        e = essential_from_rays(rays_s, rays_t)
        sv = np.linalg.svd(e, compute_uv=False)
        assert sv[0] == pytest.approx(sv[1], rel=1e-12)
        assert sv[2] == pytest.approx(0.0, abs=1e-15 * sv[0])

    def test_too_few_pairs(self, rng):
        rays = rng.normal(size=(7, 3))
        with pytest.raises(InsufficientMatchesError):
            essential_from_rays(rays, rays)


class TestDecompose:
    def test_recovers_synthetic_pose(self, rng):
        for _ in range(10):
            matches, rot, tdir, _ = two_view_scene(rng, n=50)
            rays_s, rays_t = rays_of(matches)
            e = essential_from_rays(rays_s, rays_t)
            pose = decompose_and_disambiguate(e, rays_s, rays_t)
            assert rotation_angle_between(pose.rotation, rot) < 1e-6
            assert np.abs(pose.translation - tdir).max() < 1e-6

    def test_pure_rotation_is_ambiguous(self, rng):
        # rays from a zero-baseline pair tie every candidate's cheirality
        pts = rng.uniform([-2, -2, 3], [2, 2, 7], size=(30, 3))
        rot = rodrigues([0.3, 1.0, -0.2], 0.3)
        rays_s = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        qts = pts @ rot.T
        rays_t = qts / np.linalg.norm(qts, axis=1, keepdims=True)
        e = skew(np.array([0.6, -0.2, 0.75])) @ rot
        with pytest.raises(AmbiguousDecompositionError):
            decompose_and_disambiguate(e, rays_s, rays_t)

    def test_negative_depth_pairs_not_counted(self, rng):
        # under the sign-flipped translation candidate the same pairs
        # triangulate behind the cameras and must not vote for it
        from pcr.relpose import _triangulate_depths
        matches, rot, tdir, _ = two_view_scene(rng, n=30)
        rays_s, rays_t = rays_of(matches)
        both_pos_good = 0
        both_pos_flipped = 0
        for i in range(30):
            ds, dt = _triangulate_depths(rays_s[i], rays_t[i], rot, tdir)
            both_pos_good += (ds > 0 and dt > 0)
            ds, dt = _triangulate_depths(rays_s[i], rays_t[i], rot, -tdir)
            both_pos_flipped += (ds > 0 and dt > 0)
        assert both_pos_good == 30
        assert both_pos_flipped < 30
        e = skew(tdir) @ rot
        pose = decompose_and_disambiguate(e, rays_s, rays_t)
        assert np.abs(pose.translation - tdir).max() < 1e-9


class TestRansac:
    def test_clean_scene_all_inliers(self, rng):
        matches, rot, tdir, _ = two_view_scene(rng, n=200)
        pose = ransac_relative_pose(matches, K, K)
        assert len(pose.inliers) == 200
        assert np.degrees(rotation_angle_between(pose.rotation, rot)) < 0.1

    def test_monte_carlo_robustness(self):
        # 200 matches, 30% outliers, psi = 1 px: rotation < 1 deg and
        # direction < 2 deg in at least 95% of 50 seeds
        hits = 0
        for seed in range(50):
            rng = np.random.default_rng(seed + 1000)
            matches, rot, tdir, _ = two_view_scene(
                rng, n=200, pixel_noise=0.25, outliers=0.3)
            cfg = RansacConfig(pixel_threshold=1.0, seed=seed)
            try:
                pose = ransac_relative_pose(matches, K, K, cfg)
            except Exception:
                continue
            rot_err = np.degrees(rotation_angle_between(pose.rotation, rot))
            dir_err = np.degrees(np.arccos(np.clip(abs(pose.translation @ tdir), -1, 1)))
            if rot_err < 1.0 and dir_err < 2.0:
                hits += 1
        assert hits >= 48

    def test_seven_matches_rejected(self, rng):
        matches, *_ = two_view_scene(rng, n=60)
        with pytest.raises(InsufficientMatchesError):
            ransac_relative_pose(matches[:7], K, K)

    def test_deterministic_given_seed(self, rng):
        matches, *_ = two_view_scene(rng, n=100, pixel_noise=0.3, outliers=0.2)
        cfg = RansacConfig(seed=11)
        a = ransac_relative_pose(matches, K, K, cfg)
        b = ransac_relative_pose(matches, K, K, cfg)
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)
        assert np.array_equal(a.inliers, b.inliers)

    def test_reported_inliers_satisfy_threshold(self, rng):
        matches, *_ = two_view_scene(rng, n=150, pixel_noise=0.3, outliers=0.25)
        cfg = RansacConfig(pixel_threshold=1.0, seed=3)
        pose = ransac_relative_pose(matches, K, K, cfg)
        rays_s, rays_t = rays_of(matches)
        e = skew(pose.translation) @ pose.rotation
        res = epipolar_residuals(e, rays_s, rays_t)
        threshold = angular_threshold(1.0, K.fx)
        assert (res[pose.inliers] <= threshold).all()

    def test_relabeling_views_inverts_pose(self, rng):
        matches, rot, tdir, _ = two_view_scene(rng, n=120)
        swapped = [MatchRecord(us=m.ut, vs=m.vt, ut=m.us, vt=m.vs)
                   for m in matches]
        fwd = ransac_relative_pose(matches, K, K, RansacConfig(seed=5))
        rev = ransac_relative_pose(swapped, K, K, RansacConfig(seed=5))
        assert rotation_angle_between(rev.rotation, fwd.rotation.T) < 1e-6
        expected_dir = -(fwd.rotation.T @ fwd.translation)
        assert np.abs(rev.translation - expected_dir).max() < 1e-6
