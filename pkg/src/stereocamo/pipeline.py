"""Scene-level plumbing: manifests -> renders -> disparities -> metrics.

Functions here are shared by the CLI commands, the viewpoint sweep and the
test suite, so every command-line behavior also has a library surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import attack, metrics, render, stereo
from .geometry import (StereoRig, rig_poses, stereo_viewpoints,
                       viewpoint_from_camera)
from .mesh import place_mesh


def scene_rig(man, left_position=None):
    return StereoRig(man.intrinsics, man.baseline_m,
                     man.left_position if left_position is None
                     else left_position)


def build_bundle(man, mesh, left_position=None, lighting=None):
    """Place the mesh and package one scene for rendering/optimization."""
    rig = scene_rig(man, left_position)
    pose_l, pose_r = rig_poses(rig, man.bbox.center)
    bg_l, bg_r = man.load_backgrounds()
    return attack.SceneBundle(
        scene_id=man.scene_id,
        background_left=bg_l, background_right=bg_r,
        pose_left=pose_l, pose_right=pose_r,
        intrinsics=man.intrinsics,
        placed_mesh=place_mesh(mesh, man.bbox),
        lighting=lighting if lighting is not None else man.lighting,
        baseline=man.baseline_m,
        center=man.bbox.center,
        base_viewpoint=viewpoint_from_camera(rig.left_position, man.bbox))


def render_pair(bundle, texture, lighting=None, stereo_aligned=True):
    """Composite both eyes; returns (render_l, render_r, left, right)."""
    light = lighting if lighting is not None else bundle.lighting
    pose_r = bundle.pose_right if stereo_aligned else bundle.pose_left
    r_l = render.rasterize(bundle.placed_mesh, texture, bundle.pose_left,
                           bundle.intrinsics, light)
    r_r = render.rasterize(bundle.placed_mesh, texture, pose_r,
                           bundle.intrinsics, light)
    return (r_l, r_r,
            render.composite(r_l, bundle.background_left),
            render.composite(r_r, bundle.background_right))


def add_noise(image, sigma, rng):
    """EoT weather noise: additive Gaussian, clamped to [0, 1]."""
    if sigma <= 0.0:
        return image
    return np.clip(image + rng.normal(0.0, sigma, image.shape), 0.0, 1.0)


def render_object(bundle, texture, lighting=None):
    """Left-eye render only (mask/geometry, no matching)."""
    light = lighting if lighting is not None else bundle.lighting
    return render.rasterize(bundle.placed_mesh, texture, bundle.pose_left,
                            bundle.intrinsics, light)


def predict_scene(bundle, texture, matcher_cfg, lighting=None, sigma=0.0,
                  rng=None):
    """Disparity of the composited scene plus the left-eye render."""
    r_l, _, x_l, x_r = render_pair(bundle, texture, lighting)
    if sigma > 0.0:
        if rng is None:
            raise ValueError("noise requires an rng")
        x_l = add_noise(x_l, sigma, rng)
        x_r = add_noise(x_r, sigma, rng)
    return stereo.predict_disparity(x_l, x_r, matcher_cfg), r_l


def background_disparity(man, matcher_cfg):
    """The scene's own disparity map: ground truth if present, otherwise
    the matcher's prediction on the background pair."""
    gt = man.load_gt_disparity()
    if gt is not None:
        return gt
    bg_l, bg_r = man.load_backgrounds()
    return stereo.predict_disparity(bg_l, bg_r, matcher_cfg)


def attach_merge_context(bundle, man, init_texture, matcher_cfg,
                         kernel_size=None):
    """Boundary ring, ring disparities and the region split for one scene.

    The ring targets and the split anchors come from the scene's own depth
    map: the manifest's ground truth when present (clean of the matcher's
    occlusion artifacts around the silhouette), otherwise the matcher's
    view of the scene with the initial (benign) texture in place.
    """
    if kernel_size is None:
        kernel_size = attack.dilation_kernel_size(bundle.intrinsics.width)
    gt = man.load_gt_disparity()
    if gt is not None:
        scene_map = gt
        r_l = render_object(bundle, init_texture)
    else:
        scene_map, r_l = predict_scene(bundle, init_texture, matcher_cfg)
    mask = r_l.mask.astype(bool)
    ctx = attack.boundary_depth(mask, scene_map, kernel_size)
    seg = attack.segment_regions(mask, scene_map, ctx)
    bundle.mask = mask
    bundle.ctx = ctx
    bundle.seg = seg
    bundle.scene_map = scene_map
    bundle.kernel_size = kernel_size
    return bundle


def scene_distance_heading(man):
    """Distance (m) and relative heading (deg) of the left eye viewpoint."""
    vp = viewpoint_from_camera(man.left_position, man.bbox)
    rel = (math.degrees(vp.azim) - math.degrees(man.bbox.heading)) % 360.0
    return vp.dist, rel


def evaluate_textures(man, mesh, texture_adv, texture_benign, matcher_cfg,
                      metric_cfg, kernel_size=None, left_position=None,
                      lighting=None, sigma=0.0, rng=None, weather="nominal",
                      distance_m=None, heading_deg=None):
    """Render both textures, predict disparities and compute all metrics."""
    bundle = build_bundle(man, mesh, left_position=left_position,
                          lighting=lighting)
    if kernel_size is None:
        kernel_size = attack.dilation_kernel_size(man.intrinsics.width)
    noise = None
    if sigma > 0.0:
        if rng is None:
            raise ValueError("noise requires an rng")
        shape = bundle.background_left.shape
        # One noise realization shared by both textures, so the metrics
        # isolate the texture's effect.
        noise = (rng.normal(0.0, sigma, shape), rng.normal(0.0, sigma, shape))

    def _predict(texture):
        r_l, _, x_l, x_r = render_pair(bundle, texture)
        if noise is not None:
            x_l = np.clip(x_l + noise[0], 0.0, 1.0)
            x_r = np.clip(x_r + noise[1], 0.0, 1.0)
        return stereo.predict_disparity(x_l, x_r, matcher_cfg), r_l

    disp_adv, r_l = _predict(texture_adv)
    disp_ben, _ = _predict(texture_benign)
    mask = r_l.mask.astype(bool)
    ctx = attack.boundary_depth(mask, disp_adv, kernel_size)
    if distance_m is None or heading_deg is None:
        dist, head = scene_distance_heading(man)
        distance_m = dist if distance_m is None else distance_m
        heading_deg = head if heading_deg is None else heading_deg
    return metrics.EvalRecord(
        scene_id=man.scene_id,
        distance_m=float(distance_m),
        heading_deg=float(heading_deg),
        weather=weather,
        e_blend=metrics.hiding_error(disp_adv, mask, ctx.boundary_mask,
                                     metric_cfg),
        e_cover=metrics.coverage_ratio(disp_adv, disp_ben, mask, metric_cfg),
        e_shift=metrics.depth_shift(disp_adv, disp_ben, mask))


def alignment_shift(man, mesh, texture, matcher_cfg):
    """Mean predicted-vs-geometric disparity gap of the rendered mesh."""
    bundle = build_bundle(man, mesh)
    disp, r_l = predict_scene(bundle, texture, matcher_cfg)
    gt = render.ground_truth_disparity(r_l, man.intrinsics, man.baseline_m)
    m = r_l.mask.astype(bool)
    return float((disp[m] - gt[m]).mean())


def rig_viewpoints(man):
    rig = scene_rig(man)
    return stereo_viewpoints(rig, man.bbox)
