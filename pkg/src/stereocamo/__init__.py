"""Camouflage texture attacks on stereo-matching depth estimation.

The package renders a textured 3D mesh into a calibrated stereo pair with
an exactly differentiable rasterizer, feeds the composited views to a
cost-volume matcher with analytic input gradients, and optimizes the
texture so the matcher perceives the object as merged into its background
(merging attack) or as maximally close (appearing attack).  Evaluation
covers the hiding error, the perturbation coverage ratio and the mean
depth shift over viewpoint and weather grids.
"""

from ._kernels import available_backends, backend_name, use_backend
from .attack import (BackgroundDepthContext, EoTConfig, LossWeights,
                     OptimConfig, RegionSegmentation, appearing_loss,
                     boundary_depth, default_palette, merging_loss, nps_loss,
                     optimize_texture, sample_eot, segment_regions,
                     total_loss, tv_loss)
from .geometry import (BBox3D, CameraIntrinsics, CameraPose, StereoRig,
                       ViewpointSpherical, camera_from_viewpoint,
                       disparity_to_depth, look_at_pose, project,
                       stereo_viewpoints, viewpoint_from_camera)
from .mesh import Mesh, boxcar, load_obj, place_mesh, save_obj, unit_cube
from .metrics import (EvalRecord, MetricConfig, aggregate_report,
                      coverage_ratio, depth_shift, hiding_error)
from .render import (Lighting, RenderOutput, backward_texture, composite,
                     rasterize)
from .scene_io import SceneManifest, load_scene, pfm_read, pfm_write, \
    save_scene
from .stereo import (MatcherConfig, backward_disparity, cost_volume,
                     predict_disparity, soft_argmin, wta_baseline)
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"
