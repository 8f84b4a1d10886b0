"""Pinhole camera: projection with perspective divide, and camera sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


class DepthError(DataError):
    def __init__(self, joint, depth):
        super().__init__(f"joint {joint} has non-positive camera depth {depth:.3g} m")
        self.joint = joint
        self.depth = depth


@dataclass(frozen=True, eq=False)
class CameraParams:
    """Intrinsics ``K`` and world-to-camera extrinsics ``[R|T]``."""

    K: np.ndarray
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        for name, shape in (("K", (3, 3)), ("R", (3, 3)), ("T", (3,))):
            value = np.array(getattr(self, name), dtype=float)
            if value.shape != shape:
                raise DataError(f"camera {name} must have shape {shape}, got {value.shape}")
            if not np.all(np.isfinite(value)):
                raise DataError(f"camera {name} must be finite")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        R = self.R
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise DataError("camera R must be a proper rotation")
        K = self.K
        if np.abs(np.tril(K, -1)).max() > 0 or K[0, 0] <= 0 or K[1, 1] <= 0:
            raise DataError("camera K must be upper-triangular with positive focal lengths")

    @classmethod
    def from_focal(cls, focal, principal, R=None, T=None, focal_y=None):
        fx = float(focal)
        fy = fx if focal_y is None else float(focal_y)
        K = np.array([[fx, 0.0, principal[0]], [0.0, fy, principal[1]], [0.0, 0.0, 1.0]])
        return cls(K, np.eye(3) if R is None else R, np.zeros(3) if T is None else T)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.T

    def to_dict(self) -> dict:
        return {"K": self.K.tolist(), "R": self.R.tolist(), "T": self.T.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "CameraParams":
        try:
            return cls(doc["K"], doc["R"], doc["T"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed camera document: {exc}") from exc


@dataclass(frozen=True, eq=False)
class KeypointSet2D:
    x_2d: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        x = np.array(self.x_2d, dtype=float)
        vis = np.array(self.visibility, dtype=bool)
        if x.ndim != 2 or x.shape[1] != 2 or vis.shape != (x.shape[0],):
            raise DataError(f"keypoints must be (n, 2) with n flags, got {x.shape}, {vis.shape}")
        if not np.all(np.isfinite(x[vis])):
            raise DataError("visible keypoints must be finite")
        x.setflags(write=False)
        vis.setflags(write=False)
        object.__setattr__(self, "x_2d", x)
        object.__setattr__(self, "visibility", vis)

    @classmethod
    def all_visible(cls, x_2d):
        x_2d = np.asarray(x_2d, dtype=float)
        return cls(x_2d, np.ones(len(x_2d), dtype=bool))

    def __len__(self):
        return len(self.x_2d)


def to_camera_frame(joints, cam: CameraParams) -> np.ndarray:
    return np.asarray(joints, dtype=float) @ cam.R.T + cam.T


def project_points(joints, cam: CameraParams, min_depth=1e-6) -> np.ndarray:
    """Pixel coordinates (n, 2) of world points; raises DepthError behind the camera."""
    X = to_camera_frame(joints, cam)
    z = X[:, 2]
    bad = np.nonzero(~(z > min_depth))[0]
    if bad.size:
        raise DepthError(int(bad[0]), float(z[bad[0]]))
    p = X @ cam.K.T
    return p[:, :2] / p[:, 2:3]


def project(joints, cam: CameraParams) -> KeypointSet2D:
    return KeypointSet2D.all_visible(project_points(joints, cam))


def projection_jacobian(joints, cam: CameraParams, min_depth=1e-6):
    """Pixel coordinates and d(pixel)/d(world point), shapes (n, 2) and (n, 2, 3)."""
    X = to_camera_frame(joints, cam)
    z = X[:, 2]
    bad = np.nonzero(~(z > min_depth))[0]
    if bad.size:
        raise DepthError(int(bad[0]), float(z[bad[0]]))
    KR = cam.K @ cam.R
    p = X @ cam.K.T
    uv = p[:, :2] / p[:, 2:3]
    # d(p_xy / p_z) = (dp_xy - uv dp_z) / p_z, with dp = K R dX
    J = (KR[None, :2, :] - uv[:, :, None] * KR[None, 2:3, :]) / p[:, 2, None, None]
    return uv, J


# ---------------------------------------------------------------------------
# sampling


def _range(value, name):
    lo, hi = (float(v) for v in value)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigError(f"{name} range must be finite")
    if lo > hi:
        raise ConfigError(f"{name} range is empty: [{lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class CameraConfig:
    """Uniform ranges for camera placement around the look-at target.

    ``pitch`` is the elevation of the camera above the horizontal plane
    through the target; world y is up.
    """

    yaw: tuple = (-np.pi, np.pi)
    pitch: tuple = (0.2, 1.2)
    roll: tuple = (-0.1, 0.1)
    distance: tuple = (1.6, 2.4)
    focal: float = 500.0
    principal: tuple = (320.0, 240.0)

    def __post_init__(self):
        for name in ("yaw", "pitch", "roll", "distance"):
            object.__setattr__(self, name, _range(getattr(self, name), name))
        if self.distance[0] <= 0:
            raise ConfigError("camera distance must be positive")
        if self.focal <= 0:
            raise ConfigError("focal length must be positive")
        object.__setattr__(self, "principal", tuple(float(v) for v in self.principal))

    @classmethod
    def from_dict(cls, doc) -> "CameraConfig":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad camera config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "yaw": list(self.yaw),
            "pitch": list(self.pitch),
            "roll": list(self.roll),
            "distance": list(self.distance),
            "focal": self.focal,
            "principal": list(self.principal),
        }


def look_at(eye, target, roll=0.0, up=(0.0, 1.0, 0.0)):
    """World-to-camera rotation and translation; camera x right, y down, z forward."""
    eye = np.asarray(eye, dtype=float)
    forward = np.asarray(target, dtype=float) - eye
    dist = np.linalg.norm(forward)
    if dist <= 0:
        raise DataError("camera eye coincides with target")
    forward /= dist
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, (0.0, 0.0, 1.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    c, s = np.cos(roll), np.sin(roll)
    R = np.stack([c * right + s * down, -s * right + c * down, forward])
    return R, -R @ eye


def sample_camera(rng: np.random.Generator, config: CameraConfig, target=(0.0, 0.0, 0.0)):
    yaw = rng.uniform(*config.yaw)
    pitch = rng.uniform(*config.pitch)
    roll = rng.uniform(*config.roll)
    dist = rng.uniform(*config.distance)
    target = np.asarray(target, dtype=float)
    direction = np.array([np.cos(pitch) * np.sin(yaw), np.sin(pitch), np.cos(pitch) * np.cos(yaw)])
    R, T = look_at(target + dist * direction, target, roll)
    return CameraParams.from_focal(config.focal, config.principal, R, T)
