"""Central finite-difference verification of every analytic gradient.

Segments are checked in isolation (renderer, matcher, each loss) at a
tight tolerance and the full texture-to-loss chain at a looser one.
Comparisons are relative, evaluated only where the gradient magnitude
exceeds a floor; fd points for the printability loss are sampled away
from its nearest-color decision boundaries, where the true derivative is
undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attack, render, stereo, synthetic
from .geometry import BBox3D, CameraIntrinsics, look_at_pose
from .mesh import boxcar, place_mesh
from .render import Lighting

FD_STEP = 1e-3
SEGMENT_TOL = 1e-4
CHAIN_TOL = 1e-3
MAG_FLOOR = 1e-6


@dataclass(frozen=True)
class SegmentReport:
    name: str
    max_rel_err: float
    tolerance: float
    passed: bool
    checked: int


def max_rel_error(analytic, numeric, floor=MAG_FLOOR):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    f = np.asarray(numeric, dtype=np.float64).ravel()
    mag = np.maximum(np.abs(a), np.abs(f))
    keep = mag > floor
    if not keep.any():
        return 0.0, 0
    err = np.abs(a - f)[keep] / mag[keep]
    return float(err.max()), int(keep.sum())


def central_diff(loss_fn, params, coords, step=FD_STEP):
    """Central difference quotients of a scalar loss at selected coords."""
    flat = params.reshape(-1)
    out = np.empty(len(coords))
    for n, c in enumerate(coords):
        orig = flat[c]
        flat[c] = orig + step
        up = loss_fn(params)
        flat[c] = orig - step
        down = loss_fn(params)
        flat[c] = orig
        out[n] = (up - down) / (2.0 * step)
    return out


def _subset(total, count, seed=0):
    if count >= total:
        return np.arange(total)
    return np.sort(np.random.default_rng(seed).permutation(total)[:count])


def _report(name, analytic_sel, numeric, tol):
    err, checked = max_rel_error(analytic_sel, numeric)
    return SegmentReport(name, err, tol, err < tol, checked)


# ---------------------------------------------------------------------------
# renderer segment


def _renderer_fixture(seed):
    rng = np.random.default_rng(seed)
    intr = CameraIntrinsics(64.0, 64.0, 32.0, 24.0, 64, 48)
    bbox = BBox3D((0.0, 0.5, 0.0), (1.8, 1.2, 1.2), heading=0.4)
    mesh = place_mesh(boxcar(), bbox)
    texture = rng.uniform(0.05, 0.95, (16, 16, 3))
    g = rng.standard_normal((48, 64, 3))
    return rng, intr, bbox, mesh, texture, g


def check_renderer(seed=0, coords=96):
    """Texture jacobian vs fd, over lighting draws from the EoT ranges."""
    rng, intr, _, mesh, texture, g = _renderer_fixture(seed)
    eot = attack.EoTConfig()
    nominal = Lighting(0.5, (2.0, 5.0, 4.0), 0.6)
    worst = SegmentReport("renderer", 0.0, SEGMENT_TOL, True, 0)
    eyes = (look_at_pose((0.3, 1.2, 7.0), (0.0, 0.5, 0.0)),
            look_at_pose((0.84, 1.2, 7.0), (0.0, 0.5, 0.0)))
    for draw in range(3):
        light, _ = attack.sample_eot(rng, eot, nominal)
        for pose in eyes:
            out = render.rasterize(mesh, texture, pose, intr, light)

            def loss_fn(tex, pose=pose, light=light):
                r = render.rasterize(mesh, tex, pose, intr, light)
                return float((r.image * g).sum())

            analytic = render.backward_texture(out, g)
            sel = _subset(texture.size, coords, seed + draw)
            numeric = central_diff(loss_fn, texture, sel)
            rep = _report("renderer", analytic.reshape(-1)[sel], numeric,
                          SEGMENT_TOL)
            if rep.max_rel_err >= worst.max_rel_err:
                worst = rep
    return worst


# ---------------------------------------------------------------------------
# matcher segment


def _distinct_gray_pair(rng, shape):
    """Gray image pair whose values are globally distinct quantized levels.

    Distinctness keeps every SAD term a safe distance from its kink under
    a 1e-3 perturbation, so central differences see a smooth function.
    """
    n = 2 * shape[0] * shape[1]
    levels = (rng.permutation(n) + 0.5) / n
    half = levels[:n // 2].reshape(shape), levels[n // 2:].reshape(shape)
    return tuple(np.repeat(g[:, :, None], 3, axis=2) for g in half)


def check_matcher(seed=0, cost="sad", h=8, w=8, d_max=3):
    """Image gradients of the soft disparity vs fd on small gray pairs."""
    rng = np.random.default_rng(seed)
    left, right = _distinct_gray_pair(rng, (h, w))
    if cost == "zncc":
        # smooth cost: continuous images are fine
        left = rng.uniform(0.1, 0.9, (h, w, 3))
        right = rng.uniform(0.1, 0.9, (h, w, 3))
    cfg = stereo.MatcherConfig(d_max=d_max, patch_radius=2,
                               temperature=0.5, cost=cost)
    g = rng.standard_normal((h, w))
    gl, gr = stereo.backward_disparity(left, right, cfg, g)

    def loss_left(img):
        return float((stereo.predict_disparity(img, right, cfg) * g).sum())

    def loss_right(img):
        return float((stereo.predict_disparity(left, img, cfg) * g).sum())

    num_l = central_diff(loss_left, left, np.arange(left.size))
    num_r = central_diff(loss_right, right, np.arange(right.size))
    analytic = np.concatenate([gl.ravel(), gr.ravel()])
    numeric = np.concatenate([num_l, num_r])
    return _report(f"matcher_{cost}", analytic, numeric, SEGMENT_TOL)


# ---------------------------------------------------------------------------
# loss segments


def _synthetic_context(rng, h=12, w=14):
    mask = np.zeros((h, w), dtype=bool)
    mask[3:9, 4:11] = True
    disp = rng.uniform(2.0, 9.0, (h, w))
    ctx = attack.boundary_depth(mask, disp, 3)
    seg = attack.segment_regions(mask, disp, ctx)
    return mask, disp, ctx, seg


def check_loss_merging(seed=0):
    rng = np.random.default_rng(seed)
    mask, disp, ctx, seg = _synthetic_context(rng)

    def loss_fn(d):
        return attack.merging_loss(d, seg, ctx)[0]

    analytic = attack.merging_loss(disp, seg, ctx)[1]
    numeric = central_diff(loss_fn, disp, np.arange(disp.size))
    return _report("loss_merging", analytic.ravel(), numeric, SEGMENT_TOL)


def check_loss_appearing(seed=0):
    rng = np.random.default_rng(seed)
    mask = np.zeros((10, 12), dtype=bool)
    mask[2:8, 3:10] = True
    disp = rng.uniform(0.0, 16.0, (10, 12))

    def loss_fn(d):
        return attack.appearing_loss(d, mask, 16)[0]

    analytic = attack.appearing_loss(disp, mask, 16)[1]
    numeric = central_diff(loss_fn, disp, np.arange(disp.size))
    return _report("loss_appearing", analytic.ravel(), numeric, SEGMENT_TOL)


def check_loss_tv(seed=0):
    rng = np.random.default_rng(seed)
    tex = rng.uniform(0.1, 0.9, (9, 11, 3))

    def loss_fn(t):
        return attack.tv_loss(t)[0]

    analytic = attack.tv_loss(tex)[1]
    numeric = central_diff(loss_fn, tex, np.arange(tex.size))
    return _report("loss_tv", analytic.ravel(), numeric, SEGMENT_TOL)


def check_loss_nps(seed=0):
    rng = np.random.default_rng(seed)
    palette = attack.default_palette()
    # Sample near palette colors so no fd point straddles a decision
    # boundary of the min().
    base = palette[rng.integers(0, len(palette), 8 * 8)]
    tex = np.clip(base + rng.uniform(-0.04, 0.04, base.shape), 0.0, 1.0)
    tex = tex.reshape(8, 8, 3)

    def loss_fn(t):
        return attack.nps_loss(t, palette)[0]

    analytic = attack.nps_loss(tex, palette)[1]
    numeric = central_diff(loss_fn, tex, np.arange(tex.size))
    return _report("loss_nps", analytic.ravel(), numeric, SEGMENT_TOL)


# ---------------------------------------------------------------------------
# full chain


def check_full_chain(seed=0, mode="merge", coords=64, img_h=48, img_w=64,
                     tex_size=16, d_max=16):
    bundle, texture, cfg, palette = synthetic.gradcheck_scene(
        seed, img_h, img_w, tex_size, d_max)
    weights = attack.LossWeights(alpha=5.0, beta=0.1)

    def loss_fn(tex):
        return attack.texture_objective(bundle, tex, cfg, weights, mode,
                                        palette)[0]

    _, analytic, _ = attack.texture_objective(bundle, texture, cfg, weights,
                                              mode, palette)
    sel = _subset(texture.size, coords, seed)
    numeric = central_diff(loss_fn, texture, sel)
    return _report(f"full_chain_{mode}", analytic.reshape(-1)[sel], numeric,
                   CHAIN_TOL)


def run_all(seed=0, img_h=48, img_w=64, tex_size=16, d_max=16,
            chain_coords=64):
    """Every segment plus both full chains; returns the report list."""
    return [
        check_renderer(seed),
        check_matcher(seed, "sad"),
        check_matcher(seed, "zncc"),
        check_loss_merging(seed),
        check_loss_appearing(seed),
        check_loss_tv(seed),
        check_loss_nps(seed),
        check_full_chain(seed, "merge", chain_coords, img_h, img_w,
                         tex_size, d_max),
        check_full_chain(seed, "appear", chain_coords, img_h, img_w,
                         tex_size, d_max),
    ]


def format_reports(reports):
    lines = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<18} max_rel_err={r.max_rel_err:.3e} "
                     f"tol={r.tolerance:.0e} checked={r.checked:<4d} {status}")
    return "\n".join(lines)
