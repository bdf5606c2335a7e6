"""Texture attack machinery: boundary context, losses and the optimizer.

The merging attack matches the object's perceived disparity to the
disparity of a thin background ring around its silhouette, split into an
upper and a lower region; the appearing attack instead pushes the whole
object toward the matcher's maximum disparity.  Total-variation and
printability regularizers keep the texture physical.  Optimization is
plain Adam with a cosine learning-rate schedule and expectation over
sampled lighting/noise transformations.

All losses operate in disparity space (larger = closer).
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass

import numpy as np

from . import render as render_mod
from . import stereo as stereo_mod
from .geometry import (StereoRig, ViewpointSpherical, camera_from_viewpoint,
                       rig_poses, wrap_angle)
from .render import Lighting

MODES = ("merge", "appear", "hide")


# ---------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class LossWeights:
    """alpha scales printability (NPS), beta total variation."""

    alpha: float = 5.0
    beta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class EoTConfig:
    """Per-sample environment perturbations applied during optimization.

    azim_jitter/dist_jitter additionally perturb the rig viewpoint per
    draw (radians / fraction of distance).  They default to off; enabling
    them stands in for the pose diversity a large training set provides.
    """

    light_offset_range: float = 3.0
    ambient_range: tuple = (0.3, 0.9)
    noise_sigma_range: tuple = (0.0, 0.02)
    samples_per_step: int = 1
    azim_jitter: float = 0.0
    dist_jitter: float = 0.0

    def __post_init__(self):
        lo, hi = self.ambient_range
        if not (0 <= lo <= hi <= 1):
            raise ValueError("ambient_range must be ordered within [0, 1]")
        nlo, nhi = self.noise_sigma_range
        if not (0 <= nlo <= nhi):
            raise ValueError("noise_sigma_range must be ordered and >= 0")
        if self.light_offset_range < 0:
            raise ValueError("light_offset_range must be non-negative")
        if int(self.samples_per_step) < 1:
            raise ValueError("samples_per_step must be at least 1")
        if self.azim_jitter < 0 or not (0 <= self.dist_jitter < 1):
            raise ValueError("viewpoint jitter ranges must be non-negative "
                             "(dist_jitter below 1)")


@dataclass(frozen=True)
class OptimConfig:
    epochs: int = 100
    initial_lr: float = 0.01
    min_lr: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ValueError("epochs must be at least 1")
        if not (0 <= self.min_lr <= self.initial_lr):
            raise ValueError("min_lr must lie in [0, initial_lr]")


# ---------------------------------------------------------------------------
# boundary context and region segmentation


@dataclass(eq=False)
class BackgroundDepthContext:
    """Dilation ring around the object mask and its disparity statistics."""

    boundary_mask: np.ndarray
    boundary_disparities: np.ndarray
    mean_disparity: float
    kernel_size: int


@dataclass(eq=False)
class RegionSegmentation:
    """Upper/lower object partition along the line through two anchors."""

    upper_mask: np.ndarray
    lower_mask: np.ndarray
    anchors: tuple
    bg_upper_mask: np.ndarray
    bg_lower_mask: np.ndarray


def dilation_kernel_size(image_width, reference=40.0, reference_width=1242.0):
    """Ring kernel scaled from the full-image default, forced odd, >= 3."""
    k = int(round(reference * image_width / reference_width))
    if k % 2 == 0:
        k += 1
    return max(3, k)


def sliding_max(values, kernel_size):
    """Max-pool with stride 1 and same padding (window clipped at edges)."""
    r = kernel_size // 2
    out = values.astype(np.float64).copy()
    h, w = out.shape
    tmp = out.copy()
    for s in range(1, r + 1):
        np.maximum(tmp[s:], out[:-s], out=tmp[s:])
        np.maximum(tmp[:-s], out[s:], out=tmp[:-s])
    out2 = tmp.copy()
    for s in range(1, r + 1):
        np.maximum(out2[:, s:], tmp[:, :-s], out=out2[:, s:])
        np.maximum(out2[:, :-s], tmp[:, s:], out=out2[:, :-s])
    return out2


def boundary_depth(mask, disparity, kernel_size):
    """Ring mask = maxpool(mask) - mask, plus disparities sampled on it."""
    m = np.asarray(mask).astype(np.float64)
    d = np.asarray(disparity, dtype=np.float64)
    if m.shape != d.shape:
        raise ValueError("mask and disparity must share a resolution")
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise ValueError("kernel size must be odd and at least 3")
    if not m.any():
        raise ValueError("object mask is empty")
    ring = sliding_max(m, kernel_size) - m
    ring_b = ring > 0.5
    n = int(ring_b.sum())
    if n == 0:
        raise ValueError("no background ring: object fills the frame")
    d_bg = d * ring_b
    return BackgroundDepthContext(ring_b, d_bg, float(d_bg.sum() / n),
                                  int(kernel_size))


def _boundary_adjacent(mask_b, ring_b):
    """Object pixels with an 8-neighbor inside the ring."""
    h, w = mask_b.shape
    pad = np.zeros((h + 2, w + 2), dtype=bool)
    pad[1:-1, 1:-1] = ring_b
    near = np.zeros_like(mask_b)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            near |= pad[1 + di:h + 1 + di, 1 + dj:w + 1 + dj]
    return mask_b & near


def segment_regions(mask, disparity, ctx):
    """Split the object mask by the line through two boundary anchors.

    On the leftmost and rightmost object columns, the anchor is the
    boundary-adjacent pixel whose disparity is closest to the ring mean
    (ties break toward the smaller row).  Pixels strictly above the line
    go to the upper region; ring pixels are attributed by the same line.
    """
    m = np.asarray(mask).astype(bool)
    d = np.asarray(disparity, dtype=np.float64)
    cols = np.nonzero(m.any(axis=0))[0]
    if len(cols) < 2:
        raise ValueError("object mask must span at least 2 columns")
    adjacent = _boundary_adjacent(m, ctx.boundary_mask)
    anchors = []
    for col in (cols[0], cols[-1]):
        rows = np.nonzero(adjacent[:, col])[0]
        if len(rows) == 0:
            raise ValueError(
                "anchors undefined: no boundary-adjacent object pixels on "
                f"column {col}")
        gaps = np.abs(d[rows, col] - ctx.mean_disparity)
        anchors.append((int(rows[np.argmin(gaps)]), int(col)))
    (r0, c0), (r1, c1) = anchors
    jj = np.arange(m.shape[1], dtype=np.float64)
    line = r0 + (r1 - r0) * (jj - c0) / (c1 - c0)
    ii = np.arange(m.shape[0], dtype=np.float64)[:, None]
    above = ii < line[None, :]
    return RegionSegmentation(
        upper_mask=m & above,
        lower_mask=m & ~above,
        anchors=((r0, c0), (r1, c1)),
        bg_upper_mask=ctx.boundary_mask & above,
        bg_lower_mask=ctx.boundary_mask & ~above,
    )


# ---------------------------------------------------------------------------
# losses (each returns value + analytic gradient)


def merging_loss(disp_pred, seg, ctx):
    """Squared gap between regional object means and ring means.

    Returns (value, gradient, omitted) where ``omitted`` names regions
    skipped because either side of the split was empty.
    """
    d = np.asarray(disp_pred, dtype=np.float64)
    grad = np.zeros_like(d)
    value = 0.0
    omitted = []
    for name, obj_m, bg_m in (("upper", seg.upper_mask, seg.bg_upper_mask),
                              ("lower", seg.lower_mask, seg.bg_lower_mask)):
        n_obj = int(obj_m.sum())
        n_bg = int(bg_m.sum())
        if n_obj == 0 or n_bg == 0:
            omitted.append(name)
            continue
        obj_mean = d[obj_m].mean()
        bg_mean = ctx.boundary_disparities[bg_m].mean()
        diff = obj_mean - bg_mean
        value += diff * diff
        grad[obj_m] += 2.0 * diff / n_obj
    return value, grad, tuple(omitted)


def merging_loss_per_pixel(disp_pred, seg, ctx):
    """Per-pixel variant of the merging objective, used by the optimizer.

    Each region's pixels are pulled toward that region's ring mean:
    mean((d - t)^2) decomposes into the squared mean gap plus the regional
    variance, so this both matches the regional averages and suppresses
    the per-pixel spread that a pixelwise matcher otherwise leaves free.
    """
    d = np.asarray(disp_pred, dtype=np.float64)
    grad = np.zeros_like(d)
    value = 0.0
    omitted = []
    for name, obj_m, bg_m in (("upper", seg.upper_mask, seg.bg_upper_mask),
                              ("lower", seg.lower_mask, seg.bg_lower_mask)):
        n_obj = int(obj_m.sum())
        n_bg = int(bg_m.sum())
        if n_obj == 0 or n_bg == 0:
            omitted.append(name)
            continue
        target = ctx.boundary_disparities[bg_m].mean()
        diff = d[obj_m] - target
        value += float((diff * diff).mean())
        grad[obj_m] += 2.0 * diff / n_obj
    return value, grad, tuple(omitted)


def appearing_loss(disp_pred, mask, d_max):
    """Mean squared gap to the maximum disparity over the object mask."""
    d = np.asarray(disp_pred, dtype=np.float64)
    m = np.asarray(mask).astype(bool)
    n = int(m.sum())
    if n == 0:
        raise ValueError("object mask is empty")
    diff = d[m] - float(d_max)
    value = float((diff * diff).mean())
    grad = np.zeros_like(d)
    grad[m] = 2.0 * diff / n
    return value, grad


def hiding_loss(disp_pred, mask):
    """Plain push-to-zero-disparity baseline (ablation only)."""
    d = np.asarray(disp_pred, dtype=np.float64)
    m = np.asarray(mask).astype(bool)
    n = int(m.sum())
    if n == 0:
        raise ValueError("object mask is empty")
    value = float((d[m] * d[m]).mean())
    grad = np.zeros_like(d)
    grad[m] = 2.0 * d[m] / n
    return value, grad


def tv_loss(texture):
    """Anisotropic total variation, normalized by texel count."""
    t = np.asarray(texture, dtype=np.float64)
    if t.shape[0] < 2 or t.shape[1] < 2:
        raise ValueError("texture must be at least 2x2")
    n = t.shape[0] * t.shape[1]
    dx = t[:, 1:] - t[:, :-1]
    dy = t[1:, :] - t[:-1, :]
    value = float(((dx * dx).sum() + (dy * dy).sum()) / n)
    grad = np.zeros_like(t)
    grad[:, 1:] += 2.0 * dx / n
    grad[:, :-1] -= 2.0 * dx / n
    grad[1:, :] += 2.0 * dy / n
    grad[:-1, :] -= 2.0 * dy / n
    return value, grad


def default_palette():
    """30 printable colors: a 27-point RGB lattice plus 3 grays."""
    ref = importlib.resources.files("stereocamo.data") / "palette30.csv"
    rows = [line.split(",") for line in
            ref.read_text(encoding="utf-8").strip().splitlines()]
    return np.array([[float(x) for x in row] for row in rows])


def load_palette(path):
    pal = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    if pal.size == 0 or pal.shape[1] != 3:
        raise ValueError("palette must be rows of r,g,b values")
    return pal


def nps_loss(texture, palette):
    """Mean squared distance of each texel to its nearest palette color.

    Gradient flows through the nearest color per texel; ties resolve to
    the first palette entry.
    """
    t = np.asarray(texture, dtype=np.float64)
    pal = np.asarray(palette, dtype=np.float64)
    if pal.ndim != 2 or pal.shape[0] == 0 or pal.shape[1] != 3:
        raise ValueError("palette must be a non-empty (K, 3) array")
    flat = t.reshape(-1, 3)
    d2 = ((flat[:, None, :] - pal[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    n = flat.shape[0]
    diff = flat - pal[nearest]
    value = float((diff * diff).sum() / n)
    grad = (2.0 * diff / n).reshape(t.shape)
    return value, grad


def total_loss(mode, main_value, nps_value, tv_value, weights):
    """Scalar combination L_main + alpha * L_nps + beta * L_tv."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    return (main_value + weights.alpha * nps_value
            + weights.beta * tv_value)


# ---------------------------------------------------------------------------
# expectation over transformation


def sample_eot(rng, cfg, nominal):
    """One environment draw: perturbed lighting plus a noise sigma."""
    off = rng.uniform(-cfg.light_offset_range, cfg.light_offset_range, 3)
    ambient = rng.uniform(cfg.ambient_range[0], cfg.ambient_range[1])
    sigma = rng.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1])
    lighting = Lighting(float(ambient),
                        nominal.point_light_position + off,
                        nominal.point_light_intensity)
    return lighting, float(sigma)


def sample_viewpoint(rng, cfg, bundle):
    """Jittered rig poses for one draw, or None when jitter is off."""
    if cfg.azim_jitter <= 0 and cfg.dist_jitter <= 0:
        return None
    if bundle.base_viewpoint is None or bundle.center is None \
            or bundle.baseline is None:
        raise ValueError("viewpoint jitter needs the bundle's "
                         "base_viewpoint, center and baseline")
    vp = bundle.base_viewpoint
    azim = wrap_angle(vp.azim + rng.uniform(-cfg.azim_jitter,
                                            cfg.azim_jitter))
    dist = vp.dist * (1.0 + rng.uniform(-cfg.dist_jitter, cfg.dist_jitter))
    cam = camera_from_viewpoint(ViewpointSpherical(dist, vp.elev, azim),
                                bundle.center)
    rig = StereoRig(bundle.intrinsics, bundle.baseline, cam)
    return rig_poses(rig, bundle.center)


# ---------------------------------------------------------------------------
# full-chain objective and optimizer


@dataclass(eq=False)
class SceneBundle:
    """Everything needed to render and score one training scene.

    ``scene_map`` is the scene's own full-frame disparity map (ground
    truth or a benign prediction); with it and ``kernel_size`` set, the
    boundary context can be rebuilt for a jittered viewpoint.
    """

    scene_id: str
    background_left: np.ndarray
    background_right: np.ndarray
    pose_left: object
    pose_right: object
    intrinsics: object
    placed_mesh: object
    lighting: Lighting
    baseline: float = None
    center: np.ndarray = None
    base_viewpoint: ViewpointSpherical = None
    mask: np.ndarray = None
    ctx: BackgroundDepthContext = None
    seg: RegionSegmentation = None
    scene_map: np.ndarray = None
    kernel_size: int = None


def _noisy(image, noise):
    """Additive noise + clamp; returns the image and its pass-through mask."""
    if noise is None:
        return image, None
    pre = image + noise
    unsat = (pre > 0.0) & (pre < 1.0)
    return np.clip(pre, 0.0, 1.0), unsat


def derive_context(mask, scene_map, kernel_size):
    """Boundary ring and region split for an object mask against the
    scene's own disparity map (used when the viewpoint is jittered)."""
    ctx = boundary_depth(mask, scene_map, kernel_size)
    seg = segment_regions(mask, scene_map, ctx)
    return ctx, seg


def texture_objective(bundle, texture, matcher_cfg, weights, mode,
                      palette, lighting=None, noise_left=None,
                      noise_right=None, stereo_aligned=True, poses=None):
    """Loss and exact texture gradient for one scene and one EoT draw.

    The image-dependent term backpropagates through the matcher into both
    composited eyes and then through each render's texel jacobian; the
    regularizers contribute direct texture gradients.  ``poses`` overrides
    the bundle's rig poses (viewpoint jitter); the merge context is then
    rebuilt from the bundle's scene map at the new silhouette.
    """
    light = lighting if lighting is not None else bundle.lighting
    if poses is None:
        pose_l, pose_r = bundle.pose_left, bundle.pose_right
    else:
        pose_l, pose_r = poses
    if not stereo_aligned:
        pose_r = pose_l
    r_l = render_mod.rasterize(bundle.placed_mesh, texture, pose_l,
                               bundle.intrinsics, light)
    r_r = render_mod.rasterize(bundle.placed_mesh, texture, pose_r,
                               bundle.intrinsics, light)
    x_l = render_mod.composite(r_l, bundle.background_left)
    x_r = render_mod.composite(r_r, bundle.background_right)
    x_l, unsat_l = _noisy(x_l, noise_left)
    x_r, unsat_r = _noisy(x_r, noise_right)

    disp = stereo_mod.predict_disparity(x_l, x_r, matcher_cfg)
    if mode == "merge":
        if poses is None and bundle.ctx is not None:
            ctx, seg = bundle.ctx, bundle.seg
        else:
            if bundle.scene_map is None or bundle.kernel_size is None:
                raise ValueError("merge mode with jittered poses needs the "
                                 "bundle's scene_map and kernel_size")
            ctx, seg = derive_context(r_l.mask.astype(bool),
                                      bundle.scene_map, bundle.kernel_size)
        main, disp_grad, _ = merging_loss_per_pixel(disp, seg, ctx)
    elif mode == "appear":
        main, disp_grad = appearing_loss(disp, r_l.mask, matcher_cfg.d_max)
    elif mode == "hide":
        main, disp_grad = hiding_loss(disp, r_l.mask)
    else:
        raise ValueError(f"mode must be one of {MODES}")

    g_l, g_r = stereo_mod.backward_disparity(x_l, x_r, matcher_cfg, disp_grad)
    if unsat_l is not None:
        g_l = g_l * unsat_l
    if unsat_r is not None:
        g_r = g_r * unsat_r
    grad = render_mod.backward_texture(r_l, g_l)
    grad += render_mod.backward_texture(r_r, g_r)

    nps_v, nps_g = nps_loss(texture, palette)
    tv_v, tv_g = tv_loss(texture)
    grad += weights.alpha * nps_g + weights.beta * tv_g
    value = total_loss(mode, main, nps_v, tv_v, weights)
    parts = {"main": main, "nps": nps_v, "tv": tv_v}
    return value, grad, parts


def cosine_lr(epoch, epochs, initial_lr, min_lr):
    """Cosine decay hitting initial_lr at epoch 0 and min_lr at the last."""
    if epochs <= 1:
        return initial_lr
    t = epoch / (epochs - 1)
    return min_lr + 0.5 * (initial_lr - min_lr) * (1.0 + math.cos(math.pi * t))


class Adam:
    """Standard adaptive-moment estimation on a dense parameter array."""

    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, params, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return params - lr * mhat / (np.sqrt(vhat) + self.eps)


def optimize_texture(bundles, init_texture, matcher_cfg, eot_cfg, optim_cfg,
                     mode, weights=None, palette=None, stereo_aligned=True,
                     eot_rng=None, epoch_callback=None):
    """Adam/cosine texture optimization over a list of scene bundles.

    Per step one scene and one EoT draw are sampled, both eyes rendered,
    the disparity predicted and the total loss backpropagated into the
    texture, which stays clamped to [0, 1].  Returns the final texture and
    the per-epoch history rows (epoch, mean_loss, lr).
    """
    if not bundles:
        raise ValueError("at least one scene is required")
    if weights is None:
        weights = LossWeights()
    if palette is None:
        palette = default_palette()
    texture = render_mod.validate_texture(init_texture).copy()
    rng = eot_rng if eot_rng is not None else np.random.default_rng(
        optim_cfg.rng_seed)
    opt = Adam(texture.shape)
    history = []
    step = 0
    for epoch in range(optim_cfg.epochs):
        lr = cosine_lr(epoch, optim_cfg.epochs, optim_cfg.initial_lr,
                       optim_cfg.min_lr)
        order = rng.permutation(len(bundles))
        losses = []
        for idx in order:
            bundle = bundles[idx]
            grad = np.zeros_like(texture)
            val = 0.0
            for _ in range(eot_cfg.samples_per_step):
                poses = sample_viewpoint(rng, eot_cfg, bundle)
                light, sigma = sample_eot(rng, eot_cfg, bundle.lighting)
                if sigma > 0.0:
                    shape = bundle.background_left.shape
                    noise_l = rng.normal(0.0, sigma, shape)
                    noise_r = rng.normal(0.0, sigma, shape)
                else:
                    noise_l = noise_r = None
                v, g, _ = texture_objective(
                    bundle, texture, matcher_cfg, weights, mode, palette,
                    lighting=light, noise_left=noise_l, noise_right=noise_r,
                    stereo_aligned=stereo_aligned, poses=poses)
                val += v
                grad += g
            val /= eot_cfg.samples_per_step
            grad /= eot_cfg.samples_per_step
            if not math.isfinite(val):
                raise RuntimeError(f"non-finite loss at step {step}")
            texture = np.clip(opt.step(texture, grad, lr), 0.0, 1.0)
            losses.append(val)
            step += 1
        history.append((epoch, float(np.mean(losses)), lr))
        if epoch_callback is not None:
            epoch_callback(epoch, texture, history[-1])
    return texture, history
