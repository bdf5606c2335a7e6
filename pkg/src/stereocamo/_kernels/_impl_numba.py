"""Numba-jitted implementations of the hot kernels.

Loop-level twins of ``_impl_numpy``; same clamping, tie breaking and
per-element accumulation order.  All kernels are single-threaded so runs
are reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def rasterize_tris(spts, invz, uvz, normals, rot, cam, fx, fy, cx, cy,
                   img_h, img_w, tex, ambient, light_pos, light_int):
    th, tw = tex.shape[0], tex.shape[1]
    img = np.zeros((img_h, img_w, 3))
    mask = np.zeros((img_h, img_w), np.uint8)
    depth = np.full((img_h, img_w), np.inf)
    jac_idx = np.full((img_h, img_w, 4), -1, np.int32)
    jac_w = np.zeros((img_h, img_w, 4))
    shade = np.zeros((img_h, img_w))
    sat = np.zeros((img_h, img_w, 3), np.uint8)
    texf = tex.reshape(-1, 3)

    for t in range(spts.shape[0]):
        u0 = spts[t, 0, 0]
        v0 = spts[t, 0, 1]
        u1 = spts[t, 1, 0]
        v1 = spts[t, 1, 1]
        u2 = spts[t, 2, 0]
        v2 = spts[t, 2, 1]
        area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if abs(area) < 1e-14:
            continue
        umin = min(u0, min(u1, u2))
        umax = max(u0, max(u1, u2))
        vmin = min(v0, min(v1, v2))
        vmax = max(v0, max(v1, v2))
        clo = max(0, int(np.floor(umin - 0.5)))
        chi = min(img_w - 1, int(np.ceil(umax - 0.5)))
        rlo = max(0, int(np.floor(vmin - 0.5)))
        rhi = min(img_h - 1, int(np.ceil(vmax - 0.5)))
        for i in range(rlo, rhi + 1):
            pv = i + 0.5
            for j in range(clo, chi + 1):
                pu = j + 0.5
                w0 = (u2 - u1) * (pv - v1) - (v2 - v1) * (pu - u1)
                w1 = (u0 - u2) * (pv - v2) - (v0 - v2) * (pu - u2)
                w2 = (u1 - u0) * (pv - v0) - (v1 - v0) * (pu - u0)
                if area > 0:
                    if w0 < 0 or w1 < 0 or w2 < 0:
                        continue
                else:
                    if w0 > 0 or w1 > 0 or w2 > 0:
                        continue
                l0 = w0 / area
                l1 = w1 / area
                l2 = w2 / area
                iz = l0 * invz[t, 0] + l1 * invz[t, 1] + l2 * invz[t, 2]
                z = 1.0 / iz
                if z >= depth[i, j]:
                    continue
                uu = (l0 * uvz[t, 0, 0] + l1 * uvz[t, 1, 0]
                      + l2 * uvz[t, 2, 0]) * z
                vv = (l0 * uvz[t, 0, 1] + l1 * uvz[t, 1, 1]
                      + l2 * uvz[t, 2, 1]) * z
                x = uu * (tw - 1)
                if x < 0.0:
                    x = 0.0
                if x > tw - 1.0:
                    x = tw - 1.0
                y = (1.0 - vv) * (th - 1)
                if y < 0.0:
                    y = 0.0
                if y > th - 1.0:
                    y = th - 1.0
                x0 = min(int(np.floor(x)), tw - 1)
                y0 = min(int(np.floor(y)), th - 1)
                x1 = min(x0 + 1, tw - 1)
                y1 = min(y0 + 1, th - 1)
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
                if light_int > 0.0:
                    xc = (pu - cx) * z / fx
                    yc = (pv - cy) * z / fy
                    lam = 0.0
                    ln = 0.0
                    ld0 = 0.0
                    ld1 = 0.0
                    ld2 = 0.0
                    for a in range(3):
                        p = (cam[a] + xc * rot[0, a] + yc * rot[1, a]
                             + z * rot[2, a])
                        ld = light_pos[a] - p
                        if a == 0:
                            ld0 = ld
                        elif a == 1:
                            ld1 = ld
                        else:
                            ld2 = ld
                    ln = np.sqrt(ld0 * ld0 + ld1 * ld1 + ld2 * ld2)
                    if ln < 1e-12:
                        ln = 1e-12
                    lam = (ld0 * normals[t, 0] + ld1 * normals[t, 1]
                           + ld2 * normals[t, 2]) / ln
                    if lam < 0.0:
                        lam = 0.0
                    sh = ambient + light_int * lam
                else:
                    sh = ambient
                if sh < 0.0:
                    sh = 0.0
                if sh > 1.0:
                    sh = 1.0
                for c in range(3):
                    s = (w00 * texf[i00, c] + w01 * texf[i01, c]
                         + w10 * texf[i10, c] + w11 * texf[i11, c])
                    pre = sh * s
                    if pre < 0.0:
                        img[i, j, c] = 0.0
                        sat[i, j, c] = 1
                    elif pre > 1.0:
                        img[i, j, c] = 1.0
                        sat[i, j, c] = 1
                    else:
                        img[i, j, c] = pre
                        sat[i, j, c] = 0
                mask[i, j] = 1
                depth[i, j] = z
                jac_idx[i, j, 0] = i00
                jac_idx[i, j, 1] = i01
                jac_idx[i, j, 2] = i10
                jac_idx[i, j, 3] = i11
                jac_w[i, j, 0] = w00
                jac_w[i, j, 1] = w01
                jac_w[i, j, 2] = w10
                jac_w[i, j, 3] = w11
                shade[i, j] = sh
    return img, mask, depth, jac_idx, jac_w, shade, sat


@njit(cache=True)
def scatter_texture_grad(jac_idx, jac_w, shade, sat, mask, pixel_grad, th, tw):
    gtex = np.zeros((th * tw, 3))
    h, w = mask.shape
    for k in range(4):
        for i in range(h):
            for j in range(w):
                if mask[i, j] == 0:
                    continue
                idx = jac_idx[i, j, k]
                wk = jac_w[i, j, k] * shade[i, j]
                for c in range(3):
                    if sat[i, j, c] == 0:
                        gtex[idx, c] += pixel_grad[i, j, c] * wk
    return gtex.reshape(th, tw, 3)


@njit(cache=True, inline="always")
def _cl(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@njit(cache=True)
def sad_volume(left, right, d_max, r):
    h, w = left.shape
    cv = np.zeros((h, w, d_max + 1))
    for d in range(d_max + 1):
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                for i in range(h):
                    ii = _cl(i + di, 0, h - 1)
                    for j in range(w):
                        jl = _cl(j + dj, 0, w - 1)
                        jr = _cl(j + dj - d, 0, w - 1)
                        cv[i, j, d] += abs(left[ii, jl] - right[ii, jr])
    return cv


@njit(cache=True)
def sad_volume_backward(left, right, d_max, r, g_cv):
    h, w = left.shape
    g_left = np.zeros((h, w))
    g_right = np.zeros((h, w))
    for d in range(d_max + 1):
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                for i in range(h):
                    ii = _cl(i + di, 0, h - 1)
                    for j in range(w):
                        g = g_cv[i, j, d]
                        if g == 0.0:
                            continue
                        jl = _cl(j + dj, 0, w - 1)
                        jr = _cl(j + dj - d, 0, w - 1)
                        a = left[ii, jl] - right[ii, jr]
                        if a > 0.0:
                            g_left[ii, jl] += g
                            g_right[ii, jr] -= g
                        elif a < 0.0:
                            g_left[ii, jl] -= g
                            g_right[ii, jr] += g
    return g_left, g_right


@njit(cache=True)
def zncc_volume(left, right, d_max, r, eps):
    h, w = left.shape
    n = float((2 * r + 1) ** 2)
    cv = np.zeros((h, w, d_max + 1))
    for d in range(d_max + 1):
        for i in range(h):
            for j in range(w):
                sl = 0.0
                sr = 0.0
                sll = 0.0
                srr = 0.0
                slr = 0.0
                for di in range(-r, r + 1):
                    ii = _cl(i + di, 0, h - 1)
                    for dj in range(-r, r + 1):
                        jl = _cl(j + dj, 0, w - 1)
                        jr = _cl(j + dj - d, 0, w - 1)
                        lv = left[ii, jl]
                        rv = right[ii, jr]
                        sl += lv
                        sr += rv
                        sll += lv * lv
                        srr += rv * rv
                        slr += lv * rv
                mul = sl / n
                mur = sr / n
                varl = sll / n - mul * mul
                varr = srr / n - mur * mur
                if varl < 0.0:
                    varl = 0.0
                if varr < 0.0:
                    varr = 0.0
                sdl = np.sqrt(varl + eps)
                sdr = np.sqrt(varr + eps)
                cov = slr / n - mul * mur
                cv[i, j, d] = 1.0 - cov / (sdl * sdr)
    return cv


@njit(cache=True)
def zncc_volume_backward(left, right, d_max, r, eps, g_cv):
    h, w = left.shape
    n = float((2 * r + 1) ** 2)
    g_left = np.zeros((h, w))
    g_right = np.zeros((h, w))
    for d in range(d_max + 1):
        for i in range(h):
            for j in range(w):
                g = g_cv[i, j, d]
                if g == 0.0:
                    continue
                sl = 0.0
                sr = 0.0
                sll = 0.0
                srr = 0.0
                slr = 0.0
                for di in range(-r, r + 1):
                    ii = _cl(i + di, 0, h - 1)
                    for dj in range(-r, r + 1):
                        jl = _cl(j + dj, 0, w - 1)
                        jr = _cl(j + dj - d, 0, w - 1)
                        lv = left[ii, jl]
                        rv = right[ii, jr]
                        sl += lv
                        sr += rv
                        sll += lv * lv
                        srr += rv * rv
                        slr += lv * rv
                mul = sl / n
                mur = sr / n
                varl = sll / n - mul * mul
                varr = srr / n - mur * mur
                if varl < 0.0:
                    varl = 0.0
                if varr < 0.0:
                    varr = 0.0
                sdl = np.sqrt(varl + eps)
                sdr = np.sqrt(varr + eps)
                cov = slr / n - mul * mur
                corr = cov / (sdl * sdr)
                a_l = -g / (n * sdl * sdr)
                b_l = g * corr / (n * sdl * sdl)
                b_r = g * corr / (n * sdr * sdr)
                for di in range(-r, r + 1):
                    ii = _cl(i + di, 0, h - 1)
                    for dj in range(-r, r + 1):
                        jl = _cl(j + dj, 0, w - 1)
                        jr = _cl(j + dj - d, 0, w - 1)
                        lv = left[ii, jl] - mul
                        rv = right[ii, jr] - mur
                        g_left[ii, jl] += a_l * rv + b_l * lv
                        g_right[ii, jr] += a_l * lv + b_r * rv
    return g_left, g_right
