import numpy as np
import pytest
from scipy import stats

from sketchforge.camera import (
    CameraPose,
    CANONICAL_DISTANCE,
    camera_position,
    canonical_pose,
    pose_to_view_matrix,
    sample_poses,
    wrap_azimuth_delta,
)


class TestPose:
    def test_canonical_position(self):
        pos = camera_position(CameraPose(0, 0, 2.0))
        assert np.allclose(pos, [0, 0, 2.0], atol=1e-12)

    def test_quarter_turn(self):
        pos = camera_position(CameraPose(90, 0, 2.0))
        assert np.allclose(pos, [2.0, 0, 0], atol=1e-12)

    def test_azimuth_normalized_mod_360(self):
        assert CameraPose(370, 0).azimuth_deg == pytest.approx(10.0)
        assert CameraPose(-10, 0).azimuth_deg == pytest.approx(350.0)

    def test_elevation_range_enforced(self):
        with pytest.raises(ValueError):
            CameraPose(0, 91)

    def test_distance_positive(self):
        with pytest.raises(ValueError):
            CameraPose(0, 0, 0.0)


class TestViewMatrix:
    @pytest.mark.parametrize("az,el", [(0, 0), (90, 0), (123, 37), (300, -45)])
    def test_camera_maps_to_origin_looking_down_minus_z(self, az, el):
        pose = CameraPose(az, el, 3.0)
        view = pose_to_view_matrix(pose)
        eye_cam = view @ np.append(camera_position(pose), 1.0)
        assert np.allclose(eye_cam[:3], 0.0, atol=1e-12)
        origin_cam = view @ np.array([0, 0, 0, 1.0])
        assert np.allclose(origin_cam[:3], [0, 0, -3.0], atol=1e-12)

    def test_rotation_orthonormal(self):
        view = pose_to_view_matrix(CameraPose(211, 17))
        rot = view[:3, :3]
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)

    @pytest.mark.parametrize("el", [90.0, -90.0])
    def test_pole_poses_well_defined(self, el):
        view = pose_to_view_matrix(CameraPose(0, el, 2.0))
        assert np.isfinite(view).all()
        eye_cam = view @ np.append(camera_position(CameraPose(0, el, 2.0)), 1.0)
        assert np.allclose(eye_cam[:3], 0.0, atol=1e-12)


class TestSamplePoses:
    def test_deterministic_given_seed(self):
        a = sample_poses(5, 42)
        b = sample_poses(5, 42)
        assert [(p.azimuth_deg, p.elevation_deg) for p in a] == [
            (p.azimuth_deg, p.elevation_deg) for p in b
        ]

    def test_three_views_at_canonical_distance(self):
        poses = sample_poses(3, 0)
        assert len(poses) == 3
        assert all(p.distance == CANONICAL_DISTANCE for p in poses)

    def test_ranges(self):
        for p in sample_poses(200, 7):
            assert 0 <= p.azimuth_deg < 360
            assert -20 <= p.elevation_deg <= 40

    def test_azimuth_uniformity_chi_squared(self):
        # DERIVED: statistical oracle on 10^4 samples
        poses = sample_poses(10_000, 123)
        az = np.array([p.azimuth_deg for p in poses])
        counts, _ = np.histogram(az, bins=20, range=(0, 360))
        _, p_value = stats.chisquare(counts)
        assert p_value > 0.01

    def test_needs_at_least_one(self):
        with pytest.raises(ValueError):
            sample_poses(0, 0)


class TestWrap:
    def test_wrap_examples(self):
        assert wrap_azimuth_delta(340.0) == pytest.approx(-20.0)
        assert wrap_azimuth_delta(-340.0) == pytest.approx(20.0)
        assert wrap_azimuth_delta(180.0) == pytest.approx(180.0)
        assert wrap_azimuth_delta(-180.0) == pytest.approx(180.0)

    def test_wrap_range(self):
        deltas = wrap_azimuth_delta(np.linspace(-720, 720, 1441))
        assert (deltas > -180.0 - 1e-9).all()
        assert (deltas <= 180.0 + 1e-9).all()
