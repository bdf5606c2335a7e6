"""Attack evaluation metrics and condition-grouped reporting.

All three metrics consume disparity maps (pixels).  The hiding error
counts object pixels whose disparity deviates from the per-row mean of the
background ring by more than a threshold; the coverage ratio counts object
pixels whose disparity the texture altered; the depth shift is the signed
mean disparity change over the object.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricConfig:
    """tau: deviation threshold (disparity px); cover_epsilon: minimum
    change counted as altered (continuous matchers never repeat exactly)."""

    tau: float = 20.0
    cover_epsilon: float = 1e-3

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError("tau must be positive")
        if self.cover_epsilon < 0:
            raise ValueError("cover_epsilon must be non-negative")


@dataclass(frozen=True)
class EvalRecord:
    scene_id: str
    distance_m: float
    heading_deg: float
    weather: str
    e_blend: float
    e_cover: float
    e_shift: float

    CSV_HEADER = ("scene_id", "distance_m", "heading_deg", "weather",
                  "e_blend", "e_cover", "e_shift")

    def csv_row(self):
        return (self.scene_id, f"{self.distance_m:.9g}",
                f"{self.heading_deg:.9g}", self.weather,
                f"{self.e_blend:.9g}", f"{self.e_cover:.9g}",
                f"{self.e_shift:.9g}")


def _masks(disp, mask):
    d = np.asarray(disp, dtype=np.float64)
    m = np.asarray(mask).astype(bool)
    if d.shape != m.shape:
        raise ValueError("disparity and mask must share a resolution")
    if not m.any():
        raise ValueError("object mask is empty")
    return d, m


def hiding_error(disp, mask, boundary_mask, cfg):
    """Fraction of object pixels deviating more than tau from the per-row
    ring mean (rows without ring pixels fall back to the global ring mean).
    """
    d, m = _masks(disp, mask)
    ring = np.asarray(boundary_mask).astype(bool)
    if ring.shape != d.shape:
        raise ValueError("boundary mask resolution mismatch")
    if not ring.any():
        raise ValueError("boundary mask is empty")
    global_mean = d[ring].mean()
    ring_counts = ring.sum(axis=1)
    ring_sums = (d * ring).sum(axis=1)
    row_means = np.where(ring_counts > 0,
                         ring_sums / np.maximum(ring_counts, 1), global_mean)
    dev = np.abs(d - row_means[:, None])
    return float((dev[m] > cfg.tau).mean())


def coverage_ratio(disp_adv, disp_benign, mask, cfg):
    """Fraction of object pixels with |adv - benign| above cover_epsilon."""
    da, m = _masks(disp_adv, mask)
    db = np.asarray(disp_benign, dtype=np.float64)
    if db.shape != da.shape:
        raise ValueError("disparity maps must share a resolution")
    return float((np.abs(da - db)[m] > cfg.cover_epsilon).mean())


def depth_shift(disp_adv, disp_benign, mask):
    """Signed mean disparity change over the object mask."""
    da, m = _masks(disp_adv, mask)
    db = np.asarray(disp_benign, dtype=np.float64)
    if db.shape != da.shape:
        raise ValueError("disparity maps must share a resolution")
    return float((da - db)[m].mean())


def aggregate_report(records):
    """Mean metrics per (distance, heading, weather) group, sorted by key.

    Returns rows of dicts ready for CSV emission.
    """
    if not records:
        raise ValueError("at least one record is required")
    groups = {}
    for rec in records:
        key = (rec.distance_m, rec.heading_deg, rec.weather)
        groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
        recs = groups[key]
        rows.append({
            "distance_m": key[0],
            "heading_deg": key[1],
            "weather": key[2],
            "n": len(recs),
            "e_blend": float(np.mean([r.e_blend for r in recs])),
            "e_cover": float(np.mean([r.e_cover for r in recs])),
            "e_shift": float(np.mean([r.e_shift for r in recs])),
        })
    return rows


def format_report(rows):
    """Aligned text table for terminal output."""
    header = ("distance_m", "heading_deg", "weather", "n",
              "e_blend", "e_cover", "e_shift")
    table = [header]
    for r in rows:
        table.append((f"{r['distance_m']:.9g}", f"{r['heading_deg']:.9g}",
                      str(r["weather"]), str(r["n"]), f"{r['e_blend']:.4f}",
                      f"{r['e_cover']:.4f}", f"{r['e_shift']:.4f}"))
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths))
             for row in table]
    return "\n".join(lines)
