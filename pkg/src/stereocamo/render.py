"""Differentiable-by-construction rasterizer.

Rendering is plain z-buffered perspective rasterization with one sample per
pixel center and hard in/out coverage.  Each covered pixel stores the four
bilinear texel weights and the scalar shading factor of its sample, so the
map texture -> pre-clamp pixel values is linear and an exact sparse
backward pass is available without any autodiff framework.  Gradients flow
only into the texture; geometry, camera and lighting are constants per
render.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import as_vec3

NEAR_PLANE = 0.01


@dataclass(frozen=True, eq=False)
class Lighting:
    """Ambient term in [0,1] plus one distance-independent point light."""

    ambient: float
    point_light_position: np.ndarray
    point_light_intensity: float

    def __post_init__(self):
        if not (0.0 <= self.ambient <= 1.0):
            raise ValueError("ambient must lie in [0, 1]")
        if self.point_light_intensity < 0:
            raise ValueError("light intensity must be non-negative")
        object.__setattr__(
            self, "point_light_position",
            as_vec3(self.point_light_position, "light position"))


@dataclass(eq=False)
class RenderOutput:
    """Rasterization result plus the sparse texel->pixel jacobian.

    jac_idx/jac_w hold up to four (flat texel index, bilinear weight) pairs
    per covered pixel; weights sum to one.  ``shade`` is the scalar shading
    multiplier and ``sat`` flags channels clamped at 0 or 1, which carry no
    gradient.  ``depth`` is camera-space Z (inf where uncovered).
    """

    image: np.ndarray
    mask: np.ndarray
    depth: np.ndarray
    jac_idx: np.ndarray
    jac_w: np.ndarray
    shade: np.ndarray
    sat: np.ndarray
    tex_shape: tuple


def _clip_triangle(pts, uvs, znear):
    """Sutherland-Hodgman clip of one camera-space triangle against Z=znear.

    Returns a polygon of 0, 3 or 4 vertices with uvs interpolated linearly
    in 3D (exact: uv is affine over the triangle plane).
    """
    out_p, out_uv = [], []
    for k in range(3):
        a, b = pts[k], pts[(k + 1) % 3]
        ua, ub = uvs[k], uvs[(k + 1) % 3]
        ina = a[2] >= znear
        inb = b[2] >= znear
        if ina:
            out_p.append(a)
            out_uv.append(ua)
        if ina != inb:
            t = (znear - a[2]) / (b[2] - a[2])
            out_p.append(a + t * (b - a))
            out_uv.append(ua + t * (ub - ua))
    return out_p, out_uv


def _prepare_triangles(mesh, pose, intrinsics):
    """Camera-space clip + projection; returns packed screen triangles."""
    rot = pose.rotation
    cam_v = (mesh.vertices - pose.position) @ rot.T
    spts, invz, uvz, normals = [], [], [], []
    for fi, face in enumerate(mesh.faces):
        pts = [cam_v[face[k]] for k in range(3)]
        uvs = [mesh.uv[fi, k] for k in range(3)]
        poly_p, poly_uv = _clip_triangle(pts, uvs, NEAR_PLANE)
        if len(poly_p) < 3:
            continue
        for k in range(1, len(poly_p) - 1):
            tri = (poly_p[0], poly_p[k], poly_p[k + 1])
            tuv = (poly_uv[0], poly_uv[k], poly_uv[k + 1])
            sp = np.empty((3, 2))
            iz = np.empty(3)
            uz = np.empty((3, 2))
            for m in range(3):
                z = tri[m][2]
                sp[m, 0] = intrinsics.fx * tri[m][0] / z + intrinsics.cx
                sp[m, 1] = intrinsics.fy * tri[m][1] / z + intrinsics.cy
                iz[m] = 1.0 / z
                uz[m] = tuv[m] * iz[m]
            spts.append(sp)
            invz.append(iz)
            uvz.append(uz)
            normals.append(mesh.normals[fi])
    if not spts:
        return (np.zeros((0, 3, 2)), np.zeros((0, 3)),
                np.zeros((0, 3, 2)), np.zeros((0, 3)))
    return (np.stack(spts), np.stack(invz), np.stack(uvz), np.stack(normals))


def validate_texture(texture):
    t = np.asarray(texture, dtype=np.float64)
    if t.ndim != 3 or t.shape[2] != 3 or t.shape[0] < 1 or t.shape[1] < 1:
        raise ValueError("texture must be (H, W, 3)")
    return t


def rasterize(mesh, texture, pose, intrinsics, lighting):
    """Render a world-space mesh into one camera.

    Covered pixel color is clamp(shading * bilinear(texture, uv), 0, 1)
    with flat Lambertian shading clamp(ambient + I * max(0, n.l), 0, 1).
    Returns an empty RenderOutput if the mesh is fully off-screen.
    """
    texture = validate_texture(texture)
    spts, invz, uvz, normals = _prepare_triangles(mesh, pose, intrinsics)
    img, mask, depth, jac_idx, jac_w, shade, sat = _kernels.rasterize_tris(
        spts, invz, uvz, normals,
        pose.rotation, pose.position,
        float(intrinsics.fx), float(intrinsics.fy),
        float(intrinsics.cx), float(intrinsics.cy),
        int(intrinsics.height), int(intrinsics.width),
        texture,
        float(lighting.ambient),
        lighting.point_light_position,
        float(lighting.point_light_intensity))
    return RenderOutput(img, mask, depth, jac_idx, jac_w, shade, sat,
                        (texture.shape[0], texture.shape[1]))


def composite(render, background):
    """Rendered object where covered, background elsewhere."""
    bg = np.asarray(background, dtype=np.float64)
    if bg.shape != render.image.shape:
        raise ValueError(
            f"background shape {bg.shape} does not match render "
            f"{render.image.shape}")
    m = render.mask.astype(bool)
    out = bg.copy()
    out[m] = render.image[m]
    return out


def backward_texture(render, pixel_grad):
    """Accumulate a per-pixel RGB gradient into the texture.

    Covered, unsaturated channels receive weight * shading * grad at each
    referenced texel; saturated channels contribute zero.
    """
    g = np.asarray(pixel_grad, dtype=np.float64)
    if g.shape != render.image.shape:
        raise ValueError("pixel_grad must match the rendered image shape")
    th, tw = render.tex_shape
    return _kernels.scatter_texture_grad(
        render.jac_idx, render.jac_w, render.shade, render.sat,
        render.mask, g, th, tw)


def reconstruct_masked(render, texture):
    """Pre-clamp pixel values implied by the stored jacobian (tests)."""
    texture = validate_texture(texture)
    flat = texture.reshape(-1, 3)
    m = render.mask.astype(bool)
    idx = render.jac_idx[m]
    w = render.jac_w[m]
    sample = (flat[idx] * w[:, :, None]).sum(axis=1)
    return sample * render.shade[m][:, None]


def ground_truth_disparity(render, intrinsics, baseline):
    """Per-pixel fx*baseline/Z over the covered mask, zero elsewhere."""
    m = render.mask.astype(bool)
    out = np.zeros(render.depth.shape)
    out[m] = intrinsics.fx * baseline / render.depth[m]
    return out
