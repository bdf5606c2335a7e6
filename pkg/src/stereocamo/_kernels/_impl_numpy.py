"""Pure-numpy implementations of the hot kernels.

Reference backend: every function here has a loop-level twin in
``_impl_numba``.  Index clamping, tie breaking and accumulation order are
kept identical between the two so results agree to float rounding.
"""

from __future__ import annotations

import numpy as np


def rasterize_tris(spts, invz, uvz, normals, rot, cam, fx, fy, cx, cy,
                   img_h, img_w, tex, ambient, light_pos, light_int):
    """Z-buffered rasterization of screen-space triangles.

    spts: (T,3,2) vertex pixel coordinates (u,v), already projected.
    invz: (T,3) per-vertex 1/Z, uvz: (T,3,2) per-vertex uv/Z.
    Returns image, mask, depth, texel jacobian (4 indices + weights per
    pixel), scalar shading per pixel and per-channel saturation flags.
    """
    th, tw = tex.shape[0], tex.shape[1]
    img = np.zeros((img_h, img_w, 3))
    mask = np.zeros((img_h, img_w), np.uint8)
    depth = np.full((img_h, img_w), np.inf)
    jac_idx = np.full((img_h, img_w, 4), -1, np.int32)
    jac_w = np.zeros((img_h, img_w, 4))
    shade = np.zeros((img_h, img_w))
    sat = np.zeros((img_h, img_w, 3), np.uint8)
    right, down, fwd = rot[0], rot[1], rot[2]

    for t in range(spts.shape[0]):
        u0, v0 = spts[t, 0, 0], spts[t, 0, 1]
        u1, v1 = spts[t, 1, 0], spts[t, 1, 1]
        u2, v2 = spts[t, 2, 0], spts[t, 2, 1]
        area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if abs(area) < 1e-14:
            continue
        clo = max(0, int(np.floor(min(u0, u1, u2) - 0.5)))
        chi = min(img_w - 1, int(np.ceil(max(u0, u1, u2) - 0.5)))
        rlo = max(0, int(np.floor(min(v0, v1, v2) - 0.5)))
        rhi = min(img_h - 1, int(np.ceil(max(v0, v1, v2) - 0.5)))
        if clo > chi or rlo > rhi:
            continue
        pu = np.arange(clo, chi + 1) + 0.5
        pv = np.arange(rlo, rhi + 1) + 0.5
        pu, pv = np.meshgrid(pu, pv)
        w0 = (u2 - u1) * (pv - v1) - (v2 - v1) * (pu - u1)
        w1 = (u0 - u2) * (pv - v2) - (v0 - v2) * (pu - u2)
        w2 = (u1 - u0) * (pv - v0) - (v1 - v0) * (pu - u0)
        if area > 0:
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        else:
            inside = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
        if not inside.any():
            continue
        l0 = w0 / area
        l1 = w1 / area
        l2 = w2 / area
        iz = l0 * invz[t, 0] + l1 * invz[t, 1] + l2 * invz[t, 2]
        z = 1.0 / iz
        sub = depth[rlo:rhi + 1, clo:chi + 1]
        win = inside & (z < sub)
        if not win.any():
            continue
        zw = z[win]
        uw = (l0[win] * uvz[t, 0, 0] + l1[win] * uvz[t, 1, 0]
              + l2[win] * uvz[t, 2, 0]) * zw
        vw = (l0[win] * uvz[t, 0, 1] + l1[win] * uvz[t, 1, 1]
              + l2[win] * uvz[t, 2, 1]) * zw
        # Bilinear sample at texel centers; uv (0,0) is the bottom-left.
        x = np.clip(uw * (tw - 1), 0.0, tw - 1.0)
        y = np.clip((1.0 - vw) * (th - 1), 0.0, th - 1.0)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x0 = np.minimum(x0, tw - 1)
        y0 = np.minimum(y0, th - 1)
        x1 = np.minimum(x0 + 1, tw - 1)
        y1 = np.minimum(y0 + 1, th - 1)
        wx = x - x0
        wy = y - y0
        w00 = (1.0 - wy) * (1.0 - wx)
        w01 = (1.0 - wy) * wx
        w10 = wy * (1.0 - wx)
        w11 = wy * wx
        i00 = y0 * tw + x0
        i01 = y0 * tw + x1
        i10 = y1 * tw + x0
        i11 = y1 * tw + x1
        texf = tex.reshape(-1, 3)
        sample = (w00[:, None] * texf[i00] + w01[:, None] * texf[i01]
                  + w10[:, None] * texf[i10] + w11[:, None] * texf[i11])
        # Flat Lambertian shading with a distance-independent point light.
        if light_int > 0.0:
            xc = (pu[win] - cx) * zw / fx
            yc = (pv[win] - cy) * zw / fy
            pw = (cam[None, :] + xc[:, None] * right[None, :]
                  + yc[:, None] * down[None, :] + zw[:, None] * fwd[None, :])
            ldir = light_pos[None, :] - pw
            ln = np.sqrt((ldir * ldir).sum(1))
            ln = np.maximum(ln, 1e-12)
            lam = (ldir * normals[t][None, :]).sum(1) / ln
            lam = np.maximum(lam, 0.0)
            sh = ambient + light_int * lam
        else:
            sh = np.full(zw.shape, ambient)
        sh = np.clip(sh, 0.0, 1.0)
        pre = sh[:, None] * sample
        col = np.clip(pre, 0.0, 1.0)
        satw = ((pre < 0.0) | (pre > 1.0)).astype(np.uint8)

        rows = np.nonzero(win)
        rr = rows[0] + rlo
        cc = rows[1] + clo
        img[rr, cc] = col
        mask[rr, cc] = 1
        depth[rr, cc] = zw
        jac_idx[rr, cc, 0] = i00
        jac_idx[rr, cc, 1] = i01
        jac_idx[rr, cc, 2] = i10
        jac_idx[rr, cc, 3] = i11
        jac_w[rr, cc, 0] = w00
        jac_w[rr, cc, 1] = w01
        jac_w[rr, cc, 2] = w10
        jac_w[rr, cc, 3] = w11
        shade[rr, cc] = sh
        sat[rr, cc] = satw
    return img, mask, depth, jac_idx, jac_w, shade, sat


def scatter_texture_grad(jac_idx, jac_w, shade, sat, mask, pixel_grad, th, tw):
    """Accumulate per-pixel gradients into the referenced texels.

    Saturated channels contribute nothing (the clamp is flat there).
    """
    gtex = np.zeros((th * tw, 3))
    act = mask != 0
    sh = shade[act]
    for k in range(4):
        idx = jac_idx[act, k]
        w = jac_w[act, k] * sh
        for c in range(3):
            g = pixel_grad[act, c] * w * (sat[act, c] == 0)
            np.add.at(gtex[:, c], idx, g)
    return gtex.reshape(th, tw, 3)


def _extended(a, r, d=0):
    """a indexed at rows [-r, H+r) and cols [-r-d_off...] with edge clamping."""
    h, w = a.shape
    rows = np.clip(np.arange(-r, h + r), 0, h - 1)
    cols = np.clip(np.arange(-r, w + r) - d, 0, w - 1)
    return a[rows][:, cols]


def sad_volume(left, right, d_max, r):
    """Sum-of-absolute-differences cost over (2r+1)^2 patches.

    cost(i,j,d) compares the left patch at (i,j) with the right patch at
    (i, j-d); out-of-range indices clamp to the nearest edge pixel.
    """
    h, w = left.shape
    n_d = d_max + 1
    cv = np.zeros((h, w, n_d))
    lx = _extended(left, r)
    for d in range(n_d):
        rx = _extended(right, r, d)
        diff = np.abs(lx - rx)
        acc = np.zeros((h, w))
        for di in range(2 * r + 1):
            for dj in range(2 * r + 1):
                acc = acc + diff[di:di + h, dj:dj + w]
        cv[:, :, d] = acc
    return cv


def _fold_cols(gext, r, w):
    """Collapse an edge-extended column axis back onto [0, w)."""
    g = gext[:, r:r + w].copy()
    if r > 0:
        g[:, 0] += gext[:, :r].sum(axis=1)
        g[:, w - 1] += gext[:, r + w:].sum(axis=1)
    return g


def _fold_rows(gext, r, h):
    g = gext[r:r + h].copy()
    if r > 0:
        g[0] += gext[:r].sum(axis=0)
        g[h - 1] += gext[r + h:].sum(axis=0)
    return g


def sad_volume_backward(left, right, d_max, r, g_cv):
    """Chain rule of sad_volume into both input images.

    sign(0) = 0, matching the subgradient convention of the forward pass.
    """
    h, w = left.shape
    lx = _extended(left, r)
    ext_w = w + 2 * r
    gl_ext = np.zeros((h + 2 * r, ext_w))
    cols = np.arange(-r, w + r)
    for d in range(d_max + 1):
        rx = _extended(right, r, d)
        s = np.sign(lx - rx)
        gr_ext_d = np.zeros((h + 2 * r, ext_w))
        for di in range(2 * r + 1):
            for dj in range(2 * r + 1):
                g = g_cv[:, :, d] * s[di:di + h, dj:dj + w]
                gl_ext[di:di + h, dj:dj + w] += g
                gr_ext_d[di:di + h, dj:dj + w] -= g
        # right-image columns are offset by d before clamping
        gr_cols = _fold_rows(gr_ext_d, r, h)
        grd = np.zeros((h, w))
        tgt = np.clip(cols - d, 0, w - 1)
        np.add.at(grd.T, tgt, gr_cols.T)
        if d == 0:
            g_right = grd
        else:
            g_right += grd
    g_left = _fold_cols(_fold_rows(gl_ext, r, h), r, w)
    return g_left, g_right


def _patch_stats(ext, h, w, r):
    n = float((2 * r + 1) ** 2)
    s = np.zeros((h, w))
    s2 = np.zeros((h, w))
    for di in range(2 * r + 1):
        for dj in range(2 * r + 1):
            v = ext[di:di + h, dj:dj + w]
            s = s + v
            s2 = s2 + v * v
    mu = s / n
    var = s2 / n - mu * mu
    return mu, np.maximum(var, 0.0)


def zncc_volume(left, right, d_max, r, eps):
    """Zero-normalized cross-correlation cost, mapped to 1 - corr."""
    h, w = left.shape
    n = float((2 * r + 1) ** 2)
    cv = np.zeros((h, w, d_max + 1))
    lx = _extended(left, r)
    mul, varl = _patch_stats(lx, h, w, r)
    sl = np.sqrt(varl + eps)
    for d in range(d_max + 1):
        rx = _extended(right, r, d)
        mur, varr = _patch_stats(rx, h, w, r)
        sr = np.sqrt(varr + eps)
        cov = np.zeros((h, w))
        for di in range(2 * r + 1):
            for dj in range(2 * r + 1):
                cov = cov + (lx[di:di + h, dj:dj + w]
                             * rx[di:di + h, dj:dj + w])
        cov = cov / n - mul * mur
        cv[:, :, d] = 1.0 - cov / (sl * sr)
    return cv


def zncc_volume_backward(left, right, d_max, r, eps, g_cv):
    h, w = left.shape
    n = float((2 * r + 1) ** 2)
    lx = _extended(left, r)
    mul, varl = _patch_stats(lx, h, w, r)
    sl = np.sqrt(varl + eps)
    ext_w = w + 2 * r
    gl_ext = np.zeros((h + 2 * r, ext_w))
    g_right = np.zeros((h, w))
    cols = np.arange(-r, w + r)
    for d in range(d_max + 1):
        rx = _extended(right, r, d)
        mur, varr = _patch_stats(rx, h, w, r)
        sr = np.sqrt(varr + eps)
        cov = np.zeros((h, w))
        for di in range(2 * r + 1):
            for dj in range(2 * r + 1):
                cov = cov + (lx[di:di + h, dj:dj + w]
                             * rx[di:di + h, dj:dj + w])
        cov = cov / n - mul * mur
        corr = cov / (sl * sr)
        # d(1-corr)/dL_p = -[(R_p-mur)/(n sl sr) - corr (L_p-mul)/(n sl^2)]
        g = g_cv[:, :, d]
        a_l = -g / (n * sl * sr)
        b_l = g * corr / (n * sl * sl)
        a_r = -g / (n * sl * sr)
        b_r = g * corr / (n * sr * sr)
        gr_ext_d = np.zeros((h + 2 * r, ext_w))
        for di in range(2 * r + 1):
            for dj in range(2 * r + 1):
                lv = lx[di:di + h, dj:dj + w]
                rv = rx[di:di + h, dj:dj + w]
                gl_ext[di:di + h, dj:dj + w] += a_l * (rv - mur) + b_l * (lv - mul)
                gr_ext_d[di:di + h, dj:dj + w] += a_r * (lv - mul) + b_r * (rv - mur)
        gr_cols = _fold_rows(gr_ext_d, r, h)
        grd = np.zeros((h, w))
        tgt = np.clip(cols - d, 0, w - 1)
        np.add.at(grd.T, tgt, gr_cols.T)
        g_right += grd
    g_left = _fold_cols(_fold_rows(gl_ext, r, h), r, w)
    return g_left, g_right
