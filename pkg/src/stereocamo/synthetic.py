"""Procedural scenes: the desk-scale benchmark and gradcheck fixtures.

The benchmark is five stereo scenes of a textured ground plane and a
distinct backdrop wall, with a two-box vehicle stand-in placed 8-16 m from
the rig.  Everything is generated from a seed, rendered with the package's
own rasterizer and written out as ordinary scene manifests, so the CLI and
the test suite consume it like any real scene.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import attack, render, scene_io, stereo
from .geometry import BBox3D, CameraIntrinsics, StereoRig, rig_poses
from .mesh import boxcar, quad_mesh, save_obj
from .render import Lighting

# Benchmark constants.  Image and focal scale are chosen so the object
# (8-16 m) and the backdrop behind it stay several disparity pixels apart,
# which keeps benign/attacked metric contrasts meaningful at desk scale.
BENCH_WIDTH = 128
BENCH_HEIGHT = 80
BENCH_FX = 240.0
BENCH_BASELINE = 0.54
BENCH_CAMERA_HEIGHT = 0.9
BENCH_OBJECT_DIMS = (2.6, 1.8, 1.7)
# The backdrop distance is chosen per scene so the object<->backdrop
# disparity gap is the same at every object distance.  A constant gap
# keeps one deviation threshold workable across the whole distance range:
# the threshold must sit below the benign gap but above the residual the
# ground-transition rows force on any two-level texture.
BENCH_GAP_PX = 6.0
BENCH_DISTANCES = (8.0, 9.5, 11.0, 12.5, 13.5)
BENCH_AZIMUTHS_DEG = (0.0, 72.0, 144.0, 216.0, 288.0)
BENCH_TEXTURE_SIZE = 96
# Metric scale for the benchmark: the matcher works in single disparity
# pixels here, so the full-scale deviation threshold and the "altered"
# epsilon shrink accordingly.  The ring must reach past both the matcher's
# patch radius and the object's stereo occlusion band (several px wide at
# these disparities), otherwise ring rows are dominated by pixels the
# matcher cannot ground in the background.
BENCH_TAU = 4.2
BENCH_COVER_EPSILON = 4.5
BENCH_RING_KERNEL = 41
BENCH_D_MAX = 32
# Training budget for the benchmark attacks.  The aliasing the texture
# needs in order to beat the object's true stereo match converges slowly,
# so the headline merge run gets a deeper schedule than the ablations.
BENCH_EPOCHS = 900
BENCH_ABLATION_EPOCHS = 300
BENCH_LR = 0.03
BENCH_NOISE_SIGMA = 0.003
BENCH_SWEEP_DISTANCE = 10.0


def bench_eot_config():
    return attack.EoTConfig(noise_sigma_range=(0.0, BENCH_NOISE_SIGMA))


def bench_metric_config():
    from .metrics import MetricConfig

    return MetricConfig(tau=BENCH_TAU, cover_epsilon=BENCH_COVER_EPSILON)


def _upsample_bilinear(grid, out_shape):
    """Bilinear resize of a 2D grid (used for value-noise octaves)."""
    h, w = grid.shape
    oh, ow = out_shape
    yi = np.linspace(0, h - 1, oh)
    xi = np.linspace(0, w - 1, ow)
    y0 = np.minimum(yi.astype(int), h - 2) if h > 1 else np.zeros(oh, int)
    x0 = np.minimum(xi.astype(int), w - 2) if w > 1 else np.zeros(ow, int)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    g00 = grid[y0][:, x0]
    g01 = grid[y0][:, np.minimum(x0 + 1, w - 1)]
    g10 = grid[np.minimum(y0 + 1, h - 1)][:, x0]
    g11 = grid[np.minimum(y0 + 1, h - 1)][:, np.minimum(x0 + 1, w - 1)]
    return (g00 * (1 - fy) * (1 - fx) + g01 * (1 - fy) * fx
            + g10 * fy * (1 - fx) + g11 * fy * fx)


def value_noise(rng, shape, octaves=((8, 0.5), (32, 0.3), (128, 0.2))):
    """Sum of bilinearly upsampled uniform grids, normalized to [0, 1]."""
    out = np.zeros(shape)
    for cells, weight in octaves:
        coarse = rng.uniform(0.0, 1.0, (min(cells, shape[0]),
                                        min(cells, shape[1])))
        out += weight * _upsample_bilinear(coarse, shape)
    lo, hi = out.min(), out.max()
    return (out - lo) / max(hi - lo, 1e-12)


def block_noise(rng, shape, cells):
    """Piecewise-constant noise blocks (crisp edges, strong patch costs)."""
    g = rng.uniform(0.0, 1.0, (cells, cells))
    reps = (int(np.ceil(shape[0] / cells)), int(np.ceil(shape[1] / cells)))
    return np.kron(g, np.ones(reps))[:shape[0], :shape[1]]


def _tinted(noise, lo_rgb, hi_rgb):
    lo = np.asarray(lo_rgb)
    hi = np.asarray(hi_rgb)
    return lo[None, None, :] + noise[:, :, None] * (hi - lo)[None, None, :]


# Background surfaces carry high-contrast block noise at two physical
# scales so the matcher sees decisive patch costs over the whole 5-35 m
# range; smooth low-frequency octaves alone leave the cost valleys too
# shallow against the soft-argmin's entropy.


def ground_texture(rng, size=768):
    n = (0.45 * block_noise(rng, (size, size), 384)
         + 0.35 * block_noise(rng, (size, size), size)
         + 0.2 * value_noise(rng, (size, size), octaves=((12, 1.0),)))
    return np.clip(_tinted(n, (0.06, 0.10, 0.05), (0.74, 0.70, 0.52)), 0, 1)


def backdrop_texture(rng, shape=(128, 256)):
    n = (0.65 * block_noise(rng, shape, 128)
         + 0.35 * value_noise(rng, shape, octaves=((8, 1.0),)))
    return np.clip(_tinted(n, (0.12, 0.20, 0.38), (0.90, 0.92, 0.98)), 0, 1)


def benign_texture(rng, size=BENCH_TEXTURE_SIZE, cell=6):
    """Checker pattern with per-texel jitter; well-textured for matching."""
    idx = np.add.outer(np.arange(size) // cell, np.arange(size) // cell) % 2
    base = np.where(idx[:, :, None] == 0, (0.30, 0.34, 0.38), (0.62, 0.58, 0.52))
    jitter = rng.uniform(-0.08, 0.08, (size, size, 3))
    return np.clip(base + jitter, 0.05, 0.95)


def _ground_mesh():
    return quad_mesh([(-60.0, 0.0, 60.0), (60.0, 0.0, 60.0),
                      (60.0, 0.0, -60.0), (-60.0, 0.0, -60.0)])


def _backdrop_mesh(center_xz, toward_camera, width=140.0, height=45.0):
    lat = np.array([toward_camera[2], 0.0, -toward_camera[0]])
    c = np.array([center_xz[0], 0.0, center_xz[1]])
    up = np.array([0.0, 1.0, 0.0])
    return quad_mesh([c - (width / 2) * lat, c + (width / 2) * lat,
                      c + (width / 2) * lat + height * up,
                      c - (width / 2) * lat + height * up])


def render_layers(layers, pose, intrinsics, lighting):
    """Rasterize (mesh, texture) layers into one image with a shared z-test."""
    h, w = intrinsics.height, intrinsics.width
    img = np.zeros((h, w, 3))
    depth = np.full((h, w), np.inf)
    for mesh_obj, tex in layers:
        r = render.rasterize(mesh_obj, tex, pose, intrinsics, lighting)
        closer = r.mask.astype(bool) & (r.depth < depth)
        img[closer] = r.image[closer]
        depth[closer] = r.depth[closer]
    return img, depth


def build_scene(out_dir, scene_id, rng, distance, azim_deg,
                heading_rad=0.0):
    """Generate one benchmark scene and return its manifest path."""
    out_dir = Path(out_dir)
    intr = CameraIntrinsics(BENCH_FX, BENCH_FX, BENCH_WIDTH / 2.0,
                            BENCH_HEIGHT / 2.0, BENCH_WIDTH, BENCH_HEIGHT)
    dims = BENCH_OBJECT_DIMS
    center = np.array([0.0, dims[2] / 2.0, 0.0])
    az = math.radians(azim_deg)
    cam = np.array([center[0] + distance * math.sin(az),
                    BENCH_CAMERA_HEIGHT,
                    center[2] + distance * math.cos(az)])
    bbox = BBox3D(center, dims, heading=heading_rad)
    lighting = Lighting(0.6, cam + np.array([2.0, 6.0, 2.0]), 0.5)

    # Backdrop stands behind the object, facing the camera, at the depth
    # that realizes the constant disparity gap.
    toward = np.array([math.sin(az), 0.0, math.cos(az)])
    z_bd = 1.0 / (1.0 / distance - BENCH_GAP_PX / (BENCH_FX * BENCH_BASELINE))
    bd_center = (center[[0, 2]] - toward[[0, 2]] * (z_bd - distance))
    layers = [
        (_backdrop_mesh(bd_center, toward), backdrop_texture(rng)),
        (_ground_mesh(), ground_texture(rng)),
    ]
    rig = StereoRig(intr, BENCH_BASELINE, cam)
    pose_l, pose_r = rig_poses(rig, center)
    img_l = depth_l = None
    for name, pose in (("left", pose_l), ("right", pose_r)):
        img, depth = render_layers(layers, pose, intr, lighting)
        scene_io.png_write(out_dir / f"{scene_id}_{name}.png", img)
        if name == "left":
            img_l, depth_l = img, depth
    gt = intr.fx * BENCH_BASELINE / depth_l
    scene_io.pfm_write(out_dir / f"{scene_id}.pfm", gt)

    man = scene_io.SceneManifest(
        scene_id=scene_id, root=out_dir,
        left_image=out_dir / f"{scene_id}_left.png",
        right_image=out_dir / f"{scene_id}_right.png",
        intrinsics=intr, baseline_m=BENCH_BASELINE, left_position=cam,
        bbox=bbox, lighting=lighting,
        gt_disparity=out_dir / f"{scene_id}.pfm")
    path = out_dir / f"{scene_id}.scene"
    scene_io.save_scene(path, man)
    return path


def build_benchmark(out_dir, seed=0, n_scenes=5):
    """Write the benchmark: scenes, object mesh and the benign texture.

    Returns (scene paths, mesh path, benign texture path).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_scenes):
        d = BENCH_DISTANCES[i % len(BENCH_DISTANCES)]
        az = BENCH_AZIMUTHS_DEG[i % len(BENCH_AZIMUTHS_DEG)]
        paths.append(build_scene(out_dir, f"bench{i:02d}", rng, d, az))
    mesh_path = out_dir / "object.obj"
    save_obj(mesh_path, boxcar())
    tex_path = out_dir / "benign.png"
    scene_io.png_write(tex_path, benign_texture(rng))
    return paths, mesh_path, tex_path


def bench_matcher_config():
    # patch_radius 3: the textures cannot carry sub-pixel detail, so the
    # patch grows one step over the library default to keep the cost
    # contrast decisive at this image scale.
    return stereo.MatcherConfig(d_max=BENCH_D_MAX, patch_radius=3,
                                temperature=0.5, cost="sad")


# ---------------------------------------------------------------------------
# gradcheck fixture
#
# Finite differences of the SAD cost are only well-posed away from the
# absolute-value kinks.  The fixture therefore uses grayscale inputs drawn
# from a discrete level set: object texels are 256 distinct levels
# (k+0.5)/257, backgrounds use the same post-shading levels offset by half
# a step, and shading is a flat ambient 0.75.  Any two pixels that can meet
# inside a matching window are then either exactly equal (their difference
# is insensitive to the perturbed texel, so sign(0)=0 agrees with the
# symmetric difference quotient) or at least 0.75*0.5/257 apart, well
# beyond the reach of a 1e-3 step through the render chain.


def gradcheck_scene(seed=0, img_h=48, img_w=64, tex_size=16, d_max=16):
    """Quantized, pixel-aligned scene for full-chain finite differences."""
    rng = np.random.default_rng(seed)
    fx = fy = 64.0
    cx, cy = img_w / 2.0, img_h / 2.0
    z = 16.0
    baseline = 1.0  # true quad disparity: fx * baseline / z = 4 px
    intr = CameraIntrinsics(fx, fy, cx, cy, img_w, img_h)
    rig = StereoRig(intr, baseline, np.array([0.0, 0.0, z]))
    pose_l, pose_r = rig_poses(rig, np.array([0.0, 0.0, 0.0]))

    j0 = int(cx) - tex_size // 2 - 2
    i0 = int(cy) - tex_size // 2
    u0, u1 = j0 + 0.5, j0 + 0.5 + (tex_size - 1)
    v0, v1 = i0 + 0.5, i0 + 0.5 + (tex_size - 1)
    x0, x1 = (u0 - cx) * z / fx, (u1 - cx) * z / fx
    y_top, y_bot = (cy - v0) * z / fy, (cy - v1) * z / fy
    quad = quad_mesh([(x0, y_bot, 0.0), (x1, y_bot, 0.0),
                      (x1, y_top, 0.0), (x0, y_top, 0.0)])

    n = tex_size * tex_size
    levels = (rng.permutation(n) + 0.5) / (n + 1)
    texture = np.repeat(levels.reshape(tex_size, tex_size, 1), 3, axis=2)

    ambient = 0.75
    bg_idx = rng.integers(1, n + 1, (img_h, img_w))
    bg_gray = ambient * bg_idx / (n + 1)
    bg_l = np.repeat(bg_gray[:, :, None], 3, axis=2)
    bg_r = np.empty_like(bg_l)
    bg_r[:, :-2] = bg_l[:, 2:]          # background disparity: 2 px
    bg_r[:, -2:] = bg_l[:, -1:]
    lighting = Lighting(ambient, np.array([0.0, 5.0, 20.0]), 0.0)

    bundle = attack.SceneBundle(
        scene_id="gradcheck", background_left=bg_l, background_right=bg_r,
        pose_left=pose_l, pose_right=pose_r, intrinsics=intr,
        placed_mesh=quad, lighting=lighting)
    cfg = stereo.MatcherConfig(d_max=d_max, patch_radius=2,
                               temperature=0.5, cost="sad")

    scene_disp = stereo.predict_disparity(bg_l, bg_r, cfg)
    r_l = render.rasterize(quad, texture, pose_l, intr, lighting)
    x_l = render.composite(r_l, bg_l)
    r_r = render.rasterize(quad, texture, pose_r, intr, lighting)
    x_r = render.composite(r_r, bg_r)
    pred = stereo.predict_disparity(x_l, x_r, cfg)
    mask = r_l.mask.astype(bool)
    ctx = attack.boundary_depth(mask, scene_disp, 3)
    seg = attack.segment_regions(mask, pred, ctx)
    bundle.mask = mask
    bundle.ctx = ctx
    bundle.seg = seg

    palette = np.array([[0.5, 0.5, 0.5]])  # single color: no nearest-color
    return bundle, texture, cfg, palette   # decision boundaries in the chain
