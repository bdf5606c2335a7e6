"""Reference stereo matcher: patch cost volume + differentiable soft-argmin.

The matcher is the attack target.  ``predict_disparity`` is fully
differentiable with respect to both input images via the analytic chain in
``backward_disparity``; ``wta_baseline`` is the non-differentiable
winner-take-all variant used as a black-box transfer target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

# Fixed luma conversion so gradients are reproducible.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

ZNCC_EPS = 1e-8


@dataclass(frozen=True)
class MatcherConfig:
    d_max: int = 32
    patch_radius: int = 2
    temperature: float = 0.5
    cost: str = "sad"

    def __post_init__(self):
        if int(self.d_max) < 1:
            raise ValueError("d_max must be at least 1")
        if int(self.patch_radius) < 0:
            raise ValueError("patch_radius must be non-negative")
        if not (self.temperature > 0):
            raise ValueError("temperature must be positive")
        if self.cost not in ("sad", "zncc"):
            raise ValueError("cost must be 'sad' or 'zncc'")


def luma(image):
    """Grayscale view of an RGB or already-gray image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA_WEIGHTS
    raise ValueError("image must be (H, W) or (H, W, 3)")


def _check_pair(left, right, cfg):
    gl = luma(left)
    gr = luma(right)
    if gl.shape != gr.shape:
        raise ValueError("left/right images must share a resolution")
    if cfg.d_max >= gl.shape[1]:
        raise ValueError("d_max must be smaller than the image width")
    return gl, gr


def cost_volume(left, right, cfg):
    """(H, W, d_max+1) patch dissimilarities; right columns shift by -d."""
    gl, gr = _check_pair(left, right, cfg)
    if cfg.cost == "sad":
        return _kernels.sad_volume(gl, gr, int(cfg.d_max),
                                   int(cfg.patch_radius))
    return _kernels.zncc_volume(gl, gr, int(cfg.d_max),
                                int(cfg.patch_radius), ZNCC_EPS)


def soft_argmin(cv, temperature):
    """Differentiable disparity: sum_d d * softmax_d(-cost/temperature).

    The softmax subtracts the per-pixel minimum cost for stability, which
    leaves the result unchanged.
    """
    cv = np.asarray(cv, dtype=np.float64)
    w = np.exp(-(cv - cv.min(axis=2, keepdims=True)) / temperature)
    w /= w.sum(axis=2, keepdims=True)
    cands = np.arange(cv.shape[2], dtype=np.float64)
    return w @ cands


def soft_argmin_backward(cv, temperature, disp_grad, disp=None):
    """Gradient of soft_argmin into the cost volume."""
    cv = np.asarray(cv, dtype=np.float64)
    w = np.exp(-(cv - cv.min(axis=2, keepdims=True)) / temperature)
    w /= w.sum(axis=2, keepdims=True)
    cands = np.arange(cv.shape[2], dtype=np.float64)
    if disp is None:
        disp = w @ cands
    # d disp / d cost_k = w_k (disp - k) / temperature
    return (np.asarray(disp_grad)[:, :, None] * w
            * (disp[:, :, None] - cands[None, None, :]) / temperature)


def predict_disparity(left, right, cfg):
    """Soft disparity map in [0, d_max]."""
    return soft_argmin(cost_volume(left, right, cfg), cfg.temperature)


def wta_baseline(left, right, cfg):
    """argmin_d cost; ties break toward the smaller candidate."""
    cv = cost_volume(left, right, cfg)
    return np.argmin(cv, axis=2).astype(np.float64)


def _luma_backward(image, grad_gray):
    if np.asarray(image).ndim == 2:
        return grad_gray
    return grad_gray[:, :, None] * LUMA_WEIGHTS[None, None, :]


def backward_disparity(left, right, cfg, disp_grad):
    """Exact chain rule from a disparity gradient into both images.

    Returns gradients with the same shapes as the inputs (RGB gradients
    include the luma weights).
    """
    gl, gr = _check_pair(left, right, cfg)
    g = np.asarray(disp_grad, dtype=np.float64)
    if g.shape != gl.shape:
        raise ValueError("disp_grad must match the image resolution")
    if cfg.cost == "sad":
        cv = _kernels.sad_volume(gl, gr, int(cfg.d_max),
                                 int(cfg.patch_radius))
        g_cv = soft_argmin_backward(cv, cfg.temperature, g)
        dl, dr = _kernels.sad_volume_backward(
            gl, gr, int(cfg.d_max), int(cfg.patch_radius), g_cv)
    else:
        cv = _kernels.zncc_volume(gl, gr, int(cfg.d_max),
                                  int(cfg.patch_radius), ZNCC_EPS)
        g_cv = soft_argmin_backward(cv, cfg.temperature, g)
        dl, dr = _kernels.zncc_volume_backward(
            gl, gr, int(cfg.d_max), int(cfg.patch_radius), ZNCC_EPS, g_cv)
    return _luma_backward(left, dl), _luma_backward(right, dr)
