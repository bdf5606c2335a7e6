"""Viewpoint/weather evaluation grids.

A sweep takes one template scene and re-places the stereo rig around the
object: for each (distance bin, heading, weather) cell a camera position
is synthesized on the viewing sphere, the textures are re-rendered and
evaluated there, and the records are aggregated per condition group.  The
template's background images are reused across cells, as with any
bbox-anchored compositing onto fixed photographs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import pipeline
from .geometry import (ViewpointSpherical, camera_from_viewpoint,
                       viewpoint_from_camera, wrap_angle)
from .metrics import aggregate_report
from .render import Lighting

# Named environment overrides standing in for simulator weather: ambient
# level plus additive image noise sigma.
WEATHER_PRESETS = {
    "nominal": (None, 0.0),
    "morning": (0.55, 0.0),
    "midday": (0.80, 0.0),
    "sunset": (0.45, 0.0),
    "night": (0.25, 0.005),
    "foggy": (0.50, 0.015),
    "rainy": (0.45, 0.02),
}

DEFAULT_DISTANCE_BINS = ((3.0, 9.0), (9.0, 15.0), (15.0, 20.0))
DEFAULT_HEADINGS_DEG = tuple(float(h) for h in range(0, 360, 30))


@dataclass(frozen=True)
class SweepSpec:
    distance_bins: tuple = DEFAULT_DISTANCE_BINS
    headings_deg: tuple = DEFAULT_HEADINGS_DEG
    weather: tuple = ("nominal",)
    samples_per_cell: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not self.distance_bins or not self.headings_deg or not self.weather:
            raise ValueError("sweep grids must be non-empty")
        for lo, hi in self.distance_bins:
            if not (0 < lo <= hi):
                raise ValueError("distance bins must be well-ordered")
        for name in self.weather:
            if name not in WEATHER_PRESETS:
                raise ValueError(f"unknown weather preset {name!r}")
        if int(self.samples_per_cell) < 1:
            raise ValueError("samples_per_cell must be at least 1")


def cell_lighting(man, weather):
    ambient, sigma = WEATHER_PRESETS[weather]
    if ambient is None:
        return man.lighting, sigma
    return Lighting(ambient, man.lighting.point_light_position,
                    man.lighting.point_light_intensity), sigma


def run_sweep(man, mesh, texture_adv, texture_benign, spec, matcher_cfg,
              metric_cfg, kernel_size=None):
    """Evaluate each sweep cell; returns (records, aggregated rows).

    Cells are traversed in sorted key order and each consumes its own
    seeded generator, so results are order-deterministic.
    """
    base_vp = viewpoint_from_camera(man.left_position, man.bbox)
    weather_index = {n: i for i, n in enumerate(sorted(WEATHER_PRESETS))}
    records = []
    for bi, (lo, hi) in enumerate(spec.distance_bins):
        for heading in spec.headings_deg:
            for weather in spec.weather:
                for s in range(spec.samples_per_cell):
                    rng = np.random.default_rng(
                        (spec.rng_seed, bi, int(round(heading * 1000)),
                         weather_index[weather], s))
                    dist = lo if lo == hi else float(rng.uniform(lo, hi))
                    vp = ViewpointSpherical(dist, base_vp.elev,
                                            wrap_angle(math.radians(heading)))
                    cam = camera_from_viewpoint(vp, man.bbox.center)
                    lighting, sigma = cell_lighting(man, weather)
                    rec = pipeline.evaluate_textures(
                        man, mesh, texture_adv, texture_benign, matcher_cfg,
                        metric_cfg, kernel_size=kernel_size,
                        left_position=cam, lighting=lighting, sigma=sigma,
                        rng=rng, weather=weather,
                        distance_m=dist, heading_deg=heading)
                    records.append(rec)
    return records, aggregate_report(records)
