"""Scene manifests and asset I/O (PNG, PFM, CSV).

A scene manifest is a flat key-value text file with INI section headers —
diffable and hand-editable.  Relative asset paths resolve against the
manifest's directory.  Every writer in this module is atomic
(write-temp-then-rename) so interrupted runs never leave truncated files.

Manifest grammar::

    [images]
    left = left.png            # stereo background pair, 8-bit PNG
    right = right.png

    [calibration]
    fx = 240.0                 # pixels
    fy = 240.0
    cx = 64.0
    cy = 40.0
    width = 128                # image size
    height = 80
    baseline_m = 0.54
    left_position = x y z      # left camera, world meters

    [object]
    center = x y z             # bbox center, world meters
    dims = length width height # meters
    heading = 0.0              # radians about +y
    category = car

    [lighting]
    ambient = 0.6
    light_position = x y z
    light_intensity = 0.5

    [ground_truth]             # optional section
    disparity = scene.pfm      # background disparity, left reference
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import BBox3D, CameraIntrinsics
from .render import Lighting


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# PNG (8-bit, values mapped linearly to [0, 1], no gamma transform)


def png_write(path, array):
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 2:
        mode = "L"
    elif a.ndim == 3 and a.shape[2] == 3:
        mode = "RGB"
    else:
        raise ValueError("image must be (H, W) or (H, W, 3)")
    data = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode=mode).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def png_read(path):
    with Image.open(path) as im:
        im = im.convert("RGB") if im.mode not in ("L", "RGB") else im
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


# ---------------------------------------------------------------------------
# PFM (single channel, bottom-up rows; negative scale = little-endian)


def pfm_write(path, array, scale=-1.0):
    a = np.asarray(array, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError("PFM writer expects a single-channel grid")
    if scale >= 0:
        raise ValueError("only little-endian (negative scale) is written")
    h, w = a.shape
    header = f"Pf\n{w} {h}\n{scale:.6g}\n".encode("ascii")
    payload = np.flipud(a).astype("<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def _read_token(fh):
    tok = b""
    while True:
        c = fh.read(1)
        if not c:
            raise ValueError("truncated PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def pfm_read(path):
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic == b"PF":
            raise ValueError("3-channel PFM is not supported")
        if magic != b"Pf":
            raise ValueError(f"not a PFM file (magic {magic!r})")
        try:
            w = int(_read_token(fh))
            h = int(_read_token(fh))
            scale = float(_read_token(fh))
        except ValueError as exc:
            raise ValueError(f"malformed PFM header: {exc}") from exc
        if w <= 0 or h <= 0:
            raise ValueError("malformed PFM header: non-positive size")
        count = w * h
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise ValueError("truncated PFM payload")
        extra = fh.read(1)
        if extra:
            raise ValueError("PFM payload larger than header size")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float32)


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# disparity visualization

_STOPS = np.array([
    (0.05, 0.03, 0.35),
    (0.05, 0.45, 0.85),
    (0.10, 0.80, 0.40),
    (0.95, 0.85, 0.10),
    (0.90, 0.15, 0.10),
])


def colormap_disparity(disp, d_max):
    """Map [0, d_max] through a 5-stop gradient for quick inspection."""
    t = np.clip(np.asarray(disp, dtype=np.float64) / max(d_max, 1e-9), 0, 1)
    x = t * (len(_STOPS) - 1)
    i0 = np.minimum(x.astype(int), len(_STOPS) - 2)
    f = (x - i0)[..., None]
    return _STOPS[i0] * (1 - f) + _STOPS[i0 + 1] * f


# ---------------------------------------------------------------------------
# scene manifests


@dataclass(eq=False)
class SceneManifest:
    scene_id: str
    root: Path
    left_image: Path
    right_image: Path
    intrinsics: CameraIntrinsics
    baseline_m: float
    left_position: np.ndarray
    bbox: BBox3D
    lighting: Lighting
    gt_disparity: Path = None

    def load_backgrounds(self):
        left = png_read(self.left_image)
        right = png_read(self.right_image)
        shape = (self.intrinsics.height, self.intrinsics.width, 3)
        for name, img in (("left", left), ("right", right)):
            if img.shape != shape:
                raise ValueError(
                    f"scene {self.scene_id}: {name} image shape {img.shape} "
                    f"does not match calibration {shape}")
        return left, right

    def load_gt_disparity(self):
        if self.gt_disparity is None:
            return None
        return pfm_read(self.gt_disparity).astype(np.float64)


class ManifestError(ValueError):
    pass


def _vec(text, where):
    parts = text.split()
    if len(parts) != 3:
        raise ManifestError(f"{where}: expected 3 numbers, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from exc


def _get(cp, section, key, where, cast=None):
    if not cp.has_option(section, key):
        raise ManifestError(f"{where}: missing [{section}] {key}")
    raw = cp.get(section, key)
    if cast is None:
        return raw
    try:
        return cast(raw)
    except ValueError as exc:
        raise ManifestError(
            f"{where}: [{section}] {key}: invalid value {raw!r}") from exc


def load_scene(path):
    """Parse and fully validate a scene manifest.

    Raises ManifestError with the offending section/key on any problem.
    """
    path = Path(path)
    where = str(path)
    if not path.is_file():
        raise ManifestError(f"{where}: manifest file not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ManifestError(f"{where}: {exc}") from exc
    for section in ("images", "calibration", "object", "lighting"):
        if not cp.has_section(section):
            raise ManifestError(f"{where}: missing section [{section}]")
    root = path.parent
    left = root / _get(cp, "images", "left", where)
    right = root / _get(cp, "images", "right", where)
    for name, p in (("left", left), ("right", right)):
        if not p.is_file():
            raise ManifestError(
                f"{where}: [images] {name}: file not found: {p}")
    try:
        intr = CameraIntrinsics(
            fx=_get(cp, "calibration", "fx", where, float),
            fy=_get(cp, "calibration", "fy", where, float),
            cx=_get(cp, "calibration", "cx", where, float),
            cy=_get(cp, "calibration", "cy", where, float),
            width=_get(cp, "calibration", "width", where, int),
            height=_get(cp, "calibration", "height", where, int))
    except ValueError as exc:
        raise ManifestError(f"{where}: [calibration]: {exc}") from exc
    baseline = _get(cp, "calibration", "baseline_m", where, float)
    if baseline <= 0:
        raise ManifestError(
            f"{where}: [calibration] baseline_m: baseline must be positive")
    left_pos = _vec(_get(cp, "calibration", "left_position", where),
                    f"{where}: [calibration] left_position")
    try:
        bbox = BBox3D(
            center=_vec(_get(cp, "object", "center", where),
                        f"{where}: [object] center"),
            dims=tuple(_vec(_get(cp, "object", "dims", where),
                            f"{where}: [object] dims")),
            heading=_get(cp, "object", "heading", where, float),
            category=cp.get("object", "category", fallback="object"))
    except ValueError as exc:
        raise ManifestError(f"{where}: [object]: {exc}") from exc
    try:
        lighting = Lighting(
            ambient=_get(cp, "lighting", "ambient", where, float),
            point_light_position=_vec(
                _get(cp, "lighting", "light_position", where),
                f"{where}: [lighting] light_position"),
            point_light_intensity=_get(cp, "lighting", "light_intensity",
                                       where, float))
    except ValueError as exc:
        raise ManifestError(f"{where}: [lighting]: {exc}") from exc
    gt = None
    if cp.has_section("ground_truth") and cp.has_option("ground_truth",
                                                        "disparity"):
        gt = root / cp.get("ground_truth", "disparity")
        if not gt.is_file():
            raise ManifestError(
                f"{where}: [ground_truth] disparity: file not found: {gt}")
    return SceneManifest(
        scene_id=path.stem, root=root, left_image=left, right_image=right,
        intrinsics=intr, baseline_m=baseline, left_position=left_pos,
        bbox=bbox, lighting=lighting, gt_disparity=gt)


def save_scene(path, man):
    """Write a manifest; asset paths are stored relative to it."""
    path = Path(path)
    root = path.parent

    def rel(p):
        p = Path(p)
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return str(p)

    lines = [
        "[images]",
        f"left = {rel(man.left_image)}",
        f"right = {rel(man.right_image)}",
        "",
        "[calibration]",
        f"fx = {man.intrinsics.fx:.17g}",
        f"fy = {man.intrinsics.fy:.17g}",
        f"cx = {man.intrinsics.cx:.17g}",
        f"cy = {man.intrinsics.cy:.17g}",
        f"width = {man.intrinsics.width}",
        f"height = {man.intrinsics.height}",
        f"baseline_m = {man.baseline_m:.17g}",
        ("left_position = "
         + " ".join(f"{x:.17g}" for x in man.left_position)),
        "",
        "[object]",
        "center = " + " ".join(f"{x:.17g}" for x in man.bbox.center),
        "dims = " + " ".join(f"{x:.17g}" for x in man.bbox.dims),
        f"heading = {man.bbox.heading:.17g}",
        f"category = {man.bbox.category}",
        "",
        "[lighting]",
        f"ambient = {man.lighting.ambient:.17g}",
        ("light_position = "
         + " ".join(f"{x:.17g}"
                    for x in man.lighting.point_light_position)),
        f"light_intensity = {man.lighting.point_light_intensity:.17g}",
    ]
    if man.gt_disparity is not None:
        lines += ["", "[ground_truth]", f"disparity = {rel(man.gt_disparity)}"]
    atomic_write_text(path, "\n".join(lines) + "\n")
