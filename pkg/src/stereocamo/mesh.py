"""Triangle meshes with per-face UVs and flat normals, plus OBJ I/O.

Meshes are kept in a canonical object frame with unit extents per axis so
that ``place_mesh`` can scale them anisotropically to a detected bounding
box (length along x, height along y, width along z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox3D


@dataclass(eq=False)
class Mesh:
    """vertices (N,3), faces (F,3) vertex indices, uv (F,3,2) per corner,
    normals (F,3) unit face normals."""

    vertices: np.ndarray
    faces: np.ndarray
    uv: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.uv = np.asarray(self.uv, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (N, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")
        if self.uv.shape != (len(self.faces), 3, 2):
            raise ValueError("uv must be (F, 3, 2)")
        if self.normals.shape != (len(self.faces), 3):
            raise ValueError("normals must be (F, 3)")
        if len(self.faces) and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        if np.any(self.uv < -1e-9) or np.any(self.uv > 1 + 1e-9):
            raise ValueError("uv coordinates must lie in [0, 1]")
        if len(self.faces):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")

    def extents(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return hi - lo


def flat_normals(vertices, faces):
    """Unit per-face normals from the vertex winding."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    n = np.cross(e1, e2)
    ln = np.linalg.norm(n, axis=1, keepdims=True)
    ln = np.maximum(ln, 1e-300)
    return n / ln


def build_mesh(vertices, faces, uv):
    return Mesh(vertices, faces, uv, flat_normals(vertices, faces))


_QUAD_UV = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def quad_mesh(corners, uv=None):
    """Two-triangle quad; corners ordered so uv (0,0) maps to corners[0]."""
    corners = np.asarray(corners, dtype=np.float64)
    if corners.shape != (4, 3):
        raise ValueError("quad needs 4 corners")
    if uv is None:
        uv = _QUAD_UV
    uv = np.asarray(uv, dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    face_uv = np.stack([uv[faces[0]], uv[faces[1]]])
    return build_mesh(corners, faces, face_uv)


def _box_faces(lo, hi, verts, faces, uvs, tiles=None):
    """Append the 6 quads of an axis-aligned box with outward normals.

    ``tiles`` optionally maps each quad into its own rectangle of the
    texture atlas instead of the full [0,1]^2.
    """
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    base = len(verts)
    verts.extend([
        (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
    ])
    quads = [
        (4, 5, 6, 7),  # +z
        (1, 0, 3, 2),  # -z
        (5, 1, 2, 6),  # +x
        (0, 4, 7, 3),  # -x
        (7, 6, 2, 3),  # +y
        (0, 1, 5, 4),  # -y
    ]
    for qi, q in enumerate(quads):
        a, b, c, d = (base + k for k in q)
        uv = _QUAD_UV
        if tiles is not None:
            (u0, v0), (u1, v1) = tiles[qi]
            uv = np.array([(u0, v0), (u1, v0), (u1, v1), (u0, v1)])
        faces.append((a, b, c))
        uvs.append((uv[0], uv[1], uv[2]))
        faces.append((a, c, d))
        uvs.append((uv[0], uv[2], uv[3]))


def _atlas_tiles(start, count, cols=4, rows=3):
    """Tile rectangles of a cols x rows texture atlas."""
    out = []
    for k in range(start, start + count):
        cx, cy = k % cols, k // cols
        out.append(((cx / cols, cy / rows), ((cx + 1) / cols,
                                             (cy + 1) / rows)))
    return out


def unit_cube():
    """Axis-aligned cube spanning [-0.5, 0.5]^3, every face fully textured."""
    verts, faces, uvs = [], [], []
    _box_faces((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), verts, faces, uvs)
    return build_mesh(np.array(verts), np.array(faces), np.array(uvs))


def boxcar():
    """Two stacked boxes with the cabin offset toward the rear (-x).

    Canonical extents are exactly 1 per axis; the asymmetry makes heading
    changes visible in silhouettes.  The 12 faces map to separate tiles of
    a 4x3 texture atlas so each panel can carry its own pattern.
    """
    verts, faces, uvs = [], [], []
    _box_faces((-0.5, -0.5, -0.5), (0.5, 0.1, 0.5), verts, faces, uvs,
               tiles=_atlas_tiles(0, 6))
    _box_faces((-0.4, 0.1, -0.38), (0.15, 0.5, 0.38), verts, faces, uvs,
               tiles=_atlas_tiles(6, 6))
    return build_mesh(np.array(verts), np.array(faces), np.array(uvs))


def canonicalize(mesh):
    """Center the mesh and scale each axis to unit extent."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    ext = hi - lo
    if np.any(ext <= 0):
        raise ValueError("mesh has a degenerate extent")
    v = (mesh.vertices - (lo + hi) / 2.0) / ext
    return build_mesh(v, mesh.faces, mesh.uv)


def place_mesh(mesh, bbox):
    """Scale a canonical mesh to bbox dims, rotate by heading, translate.

    Length maps to x, height to y and width to z before the y rotation.
    """
    ext = mesh.extents()
    if np.any(ext <= 0):
        raise ValueError("mesh canonical extents must be positive")
    length, width, height = bbox.dims
    scale = np.array([length, height, width])
    c, s = math.cos(bbox.heading), math.sin(bbox.heading)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    v = (mesh.vertices * scale) @ rot.T + bbox.center
    # Normals transform by the inverse transpose of the linear map.
    n = (mesh.normals / scale) @ rot.T
    ln = np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    return Mesh(v, mesh.faces.copy(), mesh.uv.copy(), n / ln)


def load_obj(path, canonical=True):
    """Load a triangulated OBJ with v/vt (or v/vt/vn) face entries."""
    verts = []
    texcoords = []
    faces = []
    face_uv_idx = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: malformed vertex")
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                if len(parts) < 3:
                    raise ValueError(f"{path}:{lineno}: malformed texcoord")
                texcoords.append([float(parts[1]), float(parts[2])])
            elif tag == "f":
                if len(parts) != 4:
                    raise ValueError(
                        f"{path}:{lineno}: faces must be triangulated")
                vi, ti = [], []
                for tok in parts[1:]:
                    comps = tok.split("/")
                    if len(comps) < 2 or not comps[1]:
                        raise ValueError(
                            f"{path}:{lineno}: face entries need v/vt indices")
                    vi.append(int(comps[0]) - 1)
                    ti.append(int(comps[1]) - 1)
                faces.append(vi)
                face_uv_idx.append(ti)
            # other tags (vn, usemtl, o, s, ...) are ignored
    if not faces:
        raise ValueError(f"{path}: no triangle faces found")
    verts = np.asarray(verts, dtype=np.float64)
    texcoords = np.asarray(texcoords, dtype=np.float64)
    uv = texcoords[np.asarray(face_uv_idx, dtype=np.int64)]
    mesh = build_mesh(verts, np.asarray(faces, dtype=np.int64), uv)
    return canonicalize(mesh) if canonical else mesh


def save_obj(path, mesh):
    """Write the v/vt subset; texcoords are emitted per face corner."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for fuv in mesh.uv:
        for t in fuv:
            lines.append(f"vt {t[0]:.17g} {t[1]:.17g}")
    for fi, f in enumerate(mesh.faces):
        t0 = 3 * fi + 1
        lines.append(
            f"f {f[0] + 1}/{t0} {f[1] + 1}/{t0 + 1} {f[2] + 1}/{t0 + 2}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
