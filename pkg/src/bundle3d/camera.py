"""Fixed multi-view camera rig and pinhole projection math.

World frame: right-handed, Y up, azimuth 0 on +Z, azimuth increasing toward +X.
Camera frame: x right, y up, z toward the viewer (scene depth = -z).
Pixels: continuous coordinates, image spans [0, size] on both axes, y down,
pixel (i, j) center at (i + 0.5, j + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NEAR_EPS = 1e-6


class CameraError(Exception):
    pass


@dataclass(frozen=True)
class CameraRigSpec:
    """Orbit rig: cameras on a sphere around the origin, all looking at it."""

    distance: float = 4.5
    fov_vertical_deg: float = 30.0
    elevation_deg: float = 5.0
    azimuths_deg: tuple[float, ...] = (0.0, 90.0, 180.0, 270.0)
    image_size: int = 512

    def __post_init__(self):
        object.__setattr__(self, "azimuths_deg", tuple(float(a) for a in self.azimuths_deg))
        if self.distance <= 0:
            raise CameraError("distance must be positive")
        if not 0 < self.fov_vertical_deg < 180:
            raise CameraError("fov must be in (0, 180) degrees")
        if self.image_size <= 0:
            raise CameraError("image_size must be positive")
        if not self.azimuths_deg:
            raise CameraError("azimuth list must be non-empty")
        if any(not 0 <= a < 360 for a in self.azimuths_deg):
            raise CameraError("azimuths must lie in [0, 360)")

    @property
    def n_views(self) -> int:
        return len(self.azimuths_deg)

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "fov_vertical_deg": self.fov_vertical_deg,
            "elevation_deg": self.elevation_deg,
            "azimuths_deg": list(self.azimuths_deg),
            "image_size": self.image_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraRigSpec":
        return cls(
            distance=float(d.get("distance", 4.5)),
            fov_vertical_deg=float(d.get("fov_vertical_deg", 30.0)),
            elevation_deg=float(d.get("elevation_deg", 5.0)),
            azimuths_deg=tuple(d.get("azimuths_deg", (0.0, 90.0, 180.0, 270.0))),
            image_size=int(d.get("image_size", 512)),
        )


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: world position, world-to-camera rotation, intrinsics."""

    position: np.ndarray
    rotation: np.ndarray  # 3x3 orthonormal, rows = camera axes in world coords
    focal_px: float
    principal: tuple[float, float]
    image_size: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        if np.abs(self.rotation @ self.rotation.T - np.eye(3)).max() > 1e-9:
            raise CameraError("rotation must be orthonormal")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points.reshape(-1, 3) - self.position) @ self.rotation.T

    def project_points(self, points: np.ndarray):
        """Vectorized projection.

        Returns:
            (xy, depth, valid): continuous pixel coords (N, 2), camera-space
            depth toward the scene (N,), and a mask of points in front of the
            camera plane.
        """
        cam = self.world_to_camera(points)
        depth = -cam[:, 2]
        valid = depth > NEAR_EPS
        cx, cy = self.principal
        with np.errstate(divide="ignore", invalid="ignore"):
            x = cx + self.focal_px * (cam[:, 0] / depth)
            y = cy - self.focal_px * (cam[:, 1] / depth)
        xy = np.stack([x, y], axis=1)
        xy[~valid] = np.nan
        return xy, depth, valid

    @property
    def view_axis(self) -> np.ndarray:
        """Unit vector the camera looks along (world frame)."""
        return -self.rotation[2]


def build_rig(spec: CameraRigSpec) -> list[Camera]:
    """One camera per azimuth, positioned on the orbit sphere, looking at the origin."""
    cameras = []
    el = math.radians(spec.elevation_deg)
    half_fov = math.radians(spec.fov_vertical_deg) / 2.0
    focal = (spec.image_size / 2.0) / math.tan(half_fov)
    center = spec.image_size / 2.0
    for az_deg in spec.azimuths_deg:
        az = math.radians(az_deg)
        position = spec.distance * np.array(
            [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
        )
        cameras.append(_look_at(position, focal, (center, center), spec.image_size))
    return cameras


def _look_at(position: np.ndarray, focal: float, principal, image_size: int,
             target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)) -> Camera:
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    toward_viewer = position - target
    norm = np.linalg.norm(toward_viewer)
    if norm < 1e-12:
        raise CameraError("camera position coincides with the look-at target")
    zc = toward_viewer / norm
    xc = np.cross(up, zc)
    xn = np.linalg.norm(xc)
    if xn < 1e-12:
        raise CameraError("view direction parallel to the up vector")
    xc /= xn
    yc = np.cross(zc, xc)
    rotation = np.stack([xc, yc, zc])
    return Camera(position=position, rotation=rotation, focal_px=focal,
                  principal=tuple(principal), image_size=image_size)


def project(camera: Camera, point) -> tuple[float, float] | None:
    """Project one world point; None when at or behind the camera plane."""
    xy, _, valid = camera.project_points(np.asarray(point, dtype=np.float64).reshape(1, 3))
    if not valid[0]:
        return None
    return float(xy[0, 0]), float(xy[0, 1])


def to_camera_normal(camera: Camera, world_normal) -> np.ndarray:
    """Rotate a world-space unit normal into the camera frame."""
    n = np.asarray(world_normal, dtype=np.float64).reshape(3)
    length = np.linalg.norm(n)
    if length < 1e-12:
        raise CameraError("zero-length normal")
    return camera.rotation @ (n / length)
