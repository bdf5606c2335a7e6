"""Cameras, 3D boxes, stereo viewpoints and disparity/depth conversion.

Conventions used throughout the package:

* World frame is right-handed with +y up; object heading rotates about y.
* Camera frames follow the computer-vision convention: +x right, +y down,
  +z forward along the optical axis.  Pixel (0,0) is the top-left corner
  and pixel centers sit at integer + 0.5.
* Both rig eyes share intrinsics and a single, rectified orientation, so a
  point at camera depth Z has disparity fx * baseline / Z in pixels.

All functions are pure and all types are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WORLD_UP = np.array([0.0, 1.0, 0.0])
_ALT_UP = np.array([0.0, 0.0, 1.0])

TWO_PI = 2.0 * math.pi


def as_vec3(value, name="vector"):
    """Validate and copy a 3-component world point/direction."""
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name} must have exactly 3 components")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v.copy()


@dataclass(frozen=True, eq=False)
class BBox3D:
    """Detected object pose: center (m), dims (length, width, height, m),
    heading about +y (rad, normalized to [0, 2pi)) and a category label."""

    center: np.ndarray
    dims: tuple
    heading: float = 0.0
    category: str = "object"

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center, "bbox center"))
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3:
            raise ValueError("bbox dims must be (length, width, height)")
        if any(not math.isfinite(d) or d <= 0 for d in dims):
            raise ValueError("bbox dims must be strictly positive")
        object.__setattr__(self, "dims", dims)
        h = float(self.heading) % TWO_PI
        object.__setattr__(self, "heading", h)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width):
            raise ValueError("cx must lie within [0, width)")
        if not (0 <= self.cy < self.height):
            raise ValueError("cy must lie within [0, height)")


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Rectified horizontal-baseline rig; both eyes share intrinsics.

    The right eye sits ``baseline`` meters along the rig's lateral axis,
    which is derived from the left eye's look-at direction toward the
    target object.
    """

    intrinsics: CameraIntrinsics
    baseline: float
    left_position: np.ndarray

    def __post_init__(self):
        if not (self.baseline > 0):
            raise ValueError("baseline must be positive")
        object.__setattr__(self, "left_position",
                           as_vec3(self.left_position, "left camera position"))


@dataclass(frozen=True)
class ViewpointSpherical:
    """Spherical camera parameterization relative to the object center."""

    dist: float
    elev: float
    azim: float

    def __post_init__(self):
        if not (self.dist >= 0):
            raise ValueError("dist must be non-negative")
        if not (-math.pi / 2 < self.elev <= math.pi / 2 + 1e-12):
            raise ValueError("elev must lie in (-pi/2, pi/2]")
        if not (-math.pi - 1e-12 < self.azim <= math.pi + 1e-12):
            raise ValueError("azim must lie in (-pi, pi]")


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World position plus rotation with rows (right, down, forward)."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position",
                           as_vec3(self.position, "camera position"))
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        object.__setattr__(self, "rotation", r.copy())


def wrap_angle(angle):
    """Wrap an angle to the (-pi, pi] branch."""
    a = (float(angle) + math.pi) % TWO_PI - math.pi
    return math.pi if a == -math.pi else a


def look_at_pose(position, target, up=WORLD_UP):
    """Pose of a camera at ``position`` aimed at ``target``."""
    position = as_vec3(position, "camera position")
    target = as_vec3(target, "look-at target")
    fwd = target - position
    dist = np.linalg.norm(fwd)
    if dist < 1e-12:
        raise ValueError("degenerate viewpoint: camera coincides with target")
    fwd = fwd / dist
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        # Looking straight along the up axis; fall back to +z as reference.
        right = np.cross(fwd, _ALT_UP)
        nr = np.linalg.norm(right)
    right = right / nr
    down = np.cross(fwd, right)
    return CameraPose(position, np.stack([right, down, fwd]))


def rig_poses(rig, target):
    """Left/right camera poses for a rig aimed at ``target``.

    Both eyes share the left eye's orientation (rectified convention); the
    right eye is offset by the baseline along the camera's +x axis.
    """
    left = look_at_pose(rig.left_position, target)
    right_pos = left.position + rig.baseline * left.rotation[0]
    return left, CameraPose(right_pos, left.rotation)


def viewpoint_from_camera(camera, bbox):
    """Spherical viewpoint of ``camera`` relative to a bbox center.

    Uses the quadrant-aware two-argument arctangent, so azimuth covers the
    full (-pi, pi] circle; azim(0, 0) is defined as 0.
    """
    camera = as_vec3(camera, "camera position")
    d = camera - bbox.center
    dist = float(np.linalg.norm(d))
    if dist < 1e-12:
        raise ValueError("degenerate viewpoint: camera coincides with center")
    horiz = math.hypot(d[0], d[2])
    elev = math.atan2(d[1], horiz)
    azim = math.atan2(d[0], d[2]) if (d[0] != 0 or d[2] != 0) else 0.0
    return ViewpointSpherical(dist, elev, azim)


def camera_from_viewpoint(vp, center):
    """World camera position realizing a spherical viewpoint."""
    center = as_vec3(center, "bbox center")
    ce = math.cos(vp.elev)
    offset = np.array([
        math.sin(vp.azim) * ce,
        math.sin(vp.elev),
        math.cos(vp.azim) * ce,
    ])
    return center + vp.dist * offset


def stereo_viewpoints(rig, bbox):
    """Per-eye spherical viewpoints; the two differ whenever baseline > 0."""
    left, right = rig_poses(rig, bbox.center)
    return (viewpoint_from_camera(left.position, bbox),
            viewpoint_from_camera(right.position, bbox))


def project(point, intrinsics, pose):
    """Pinhole projection of a world point to pixel coordinates."""
    point = as_vec3(point, "point")
    pc = pose.rotation @ (point - pose.position)
    if pc[2] <= 1e-12:
        raise ValueError("point at or behind the camera plane")
    u = intrinsics.fx * pc[0] / pc[2] + intrinsics.cx
    v = intrinsics.fy * pc[1] / pc[2] + intrinsics.cy
    return u, v


def unproject(u, v, depth, intrinsics, pose):
    """World point seen at pixel (u, v) with camera depth ``depth``."""
    if depth <= 0:
        raise ValueError("depth must be positive")
    xc = (u - intrinsics.cx) * depth / intrinsics.fx
    yc = (v - intrinsics.cy) * depth / intrinsics.fy
    r = pose.rotation
    return pose.position + xc * r[0] + yc * r[1] + depth * r[2]


def disparity_to_depth(disp, intrinsics, baseline):
    """Metric depth fx * baseline / disparity; rejects disp <= 0."""
    d = np.asarray(disp, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("non-positive disparity")
    out = intrinsics.fx * baseline / d
    return float(out) if np.isscalar(disp) or d.ndim == 0 else out


def depth_to_disparity(depth, intrinsics, baseline):
    """Inverse of disparity_to_depth, for ground-truth synthesis."""
    z = np.asarray(depth, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("non-positive depth")
    out = intrinsics.fx * baseline / z
    return float(out) if np.isscalar(depth) or z.ndim == 0 else out
