import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aimspose.camera import (
    CameraConfig,
    CameraParams,
    DepthError,
    look_at,
    project,
    project_points,
    projection_jacobian,
    sample_camera,
)
from aimspose.errors import ConfigError, DataError
from aimspose.skeleton import forward_kinematics, forward_kinematics_jacobian


def test_optical_axis_maps_to_principal_point():
    cam = CameraParams(np.eye(3), np.eye(3), np.array([0.0, 0.0, 2.0]))
    np.testing.assert_allclose(project_points(np.zeros((1, 3)), cam), [[0.0, 0.0]])


def test_hand_pinhole_arithmetic():
    cam = CameraParams.from_focal(500.0, (320.0, 240.0))
    uv = project_points(np.array([[0.1, -0.2, 2.0]]), cam)
    np.testing.assert_allclose(uv, [[345.0, 190.0]], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 20.0), st.integers(0, 10_000))
def test_joint_scaling_of_points_and_translation(s, seed):
    rng = np.random.default_rng(seed)
    T = np.array([0.0, 0.0, 3.0]) + rng.normal(0, 0.2, 3)
    cam = CameraParams.from_focal(500.0, (320.0, 240.0), T=T)
    X = rng.normal(0, 0.3, (24, 3))
    scaled = CameraParams.from_focal(500.0, (320.0, 240.0), T=s * T)
    np.testing.assert_allclose(project_points(s * X, scaled), project_points(X, cam), atol=1e-8)


def test_doubling_focal_doubles_offsets(rng):
    X = rng.normal(0, 0.3, (24, 3))
    T = np.array([0.0, 0.0, 2.5])
    c = np.array([320.0, 240.0])
    a = project_points(X, CameraParams.from_focal(400.0, c, T=T)) - c
    b = project_points(X, CameraParams.from_focal(800.0, c, T=T)) - c
    np.testing.assert_allclose(b, 2 * a, atol=1e-10)


def test_depth_failure_names_joint():
    cam = CameraParams.from_focal(500.0, (320.0, 240.0), T=np.array([0.0, 0.0, 1.0]))
    X = np.zeros((24, 3))
    X[7, 2] = -1.0
    with pytest.raises(DepthError, match="joint 7") as info:
        project(X, cam)
    assert info.value.joint == 7


def test_all_keypoints_visible(rng):
    cam = CameraParams.from_focal(500.0, (320.0, 240.0), T=np.array([0.0, 0.0, 3.0]))
    kp = project(rng.normal(0, 0.2, (24, 3)), cam)
    assert kp.visibility.all() and kp.x_2d.shape == (24, 2)


@pytest.mark.parametrize(
    "K, R",
    [
        (np.eye(3), np.diag([1.0, 1.0, -1.0])),  # reflection
        (np.eye(3), 1.01 * np.eye(3)),  # not orthonormal
        (np.array([[1.0, 0, 0], [0.5, 1, 0], [0, 0, 1]]), np.eye(3)),  # lower entry
        (np.diag([-1.0, 1.0, 1.0]), np.eye(3)),  # negative focal
    ],
)
def test_invalid_camera_rejected(K, R):
    with pytest.raises(DataError):
        CameraParams(K, R, np.zeros(3))


def test_serialization_round_trip(rng):
    cam = sample_camera(rng, CameraConfig())
    doc = cam.to_dict()
    assert set(doc) == {"K", "R", "T"}
    back = CameraParams.from_dict(doc)
    np.testing.assert_array_equal(back.K, cam.K)
    np.testing.assert_array_equal(back.R, cam.R)
    np.testing.assert_array_equal(back.T, cam.T)


def test_sampling_deterministic():
    a = sample_camera(np.random.default_rng(5), CameraConfig())
    b = sample_camera(np.random.default_rng(5), CameraConfig())
    np.testing.assert_array_equal(a.R, b.R)
    np.testing.assert_array_equal(a.T, b.T)


def _yaw_pitch_dist(cam):
    c = cam.center
    d = np.linalg.norm(c)
    return np.arctan2(c[0], c[2]), np.arcsin(c[1] / d), d


def test_point_ranges_give_exact_values():
    config = CameraConfig(yaw=(0.7, 0.7), pitch=(0.4, 0.4), roll=(0.0, 0.0), distance=(2.0, 2.0))
    yaw, pitch, dist = _yaw_pitch_dist(sample_camera(np.random.default_rng(0), config))
    assert yaw == pytest.approx(0.7, abs=1e-12)
    assert pitch == pytest.approx(0.4, abs=1e-12)
    assert dist == pytest.approx(2.0, abs=1e-12)


def test_camera_looks_at_target(rng):
    for _ in range(20):
        cam = sample_camera(rng, CameraConfig())
        uv = project_points(np.zeros((1, 3)), cam)
        # roll only spins the image about the principal point
        np.testing.assert_allclose(uv, [[320.0, 240.0]], atol=1e-9)


def test_yaw_mean_near_zero():
    rng = np.random.default_rng(0)
    yaws = [_yaw_pitch_dist(sample_camera(rng, CameraConfig()))[0] for _ in range(1000)]
    assert abs(np.mean(yaws)) < 0.1


def test_empty_range_rejected():
    with pytest.raises(ConfigError):
        CameraConfig(yaw=(1.0, 0.0))
    with pytest.raises(ConfigError):
        CameraConfig(distance=(0.0, 1.0))


def test_look_at_is_proper_rotation(rng):
    for _ in range(10):
        R, T = look_at(rng.normal(0, 3, 3), rng.normal(0, 0.1, 3), rng.uniform(-1, 1))
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_projection_jacobian_matches_finite_differences(rng, template):
    """project o FK Jacobian against central differences at 100 configurations."""
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        theta = rng.normal(0, 0.4, 72)
        beta = rng.normal(0, 1, 10)
        cam = sample_camera(rng, CameraConfig())
        joints, J_fk = forward_kinematics_jacobian(template, theta, beta)
        _, J_proj = projection_jacobian(joints, cam)
        J = np.einsum("nab,nbk->nak", J_proj, J_fk).reshape(48, -1)[:, :82]
        k = rng.integers(82)
        x = np.concatenate([theta, beta])
        e = np.zeros(82)
        e[k] = h

        def f(v):
            return project_points(forward_kinematics(template, v[:72], v[72:]), cam).ravel()

        fd = (f(x + e) - f(x - e)) / (2 * h)
        err = np.linalg.norm(J[:, k] - fd) / max(np.linalg.norm(fd), 1e-8)
        worst = max(worst, err if np.linalg.norm(fd) > 1e-6 else np.linalg.norm(J[:, k] - fd))
    assert worst < 1e-4
