"""fisheye-maploc: localize a static downward-looking fisheye camera in a
metric prior map (satellite raster + LiDAR ground reflectivity/height).

Two-step pipeline: PnP initialization from rectified-image/satellite
correspondences, then mutual-information grid-search refinement against the
LiDAR reflectivity layer.
"""

__version__ = "0.1.0"

from .camera import (CameraIntrinsics, CameraPose, RectificationSpec,
                     build_rectification_map, default_rectification,
                     project_points, rectify_image, unproject_pixels)
from .exceptions import (InputError, MapLocError, MIFailure, PnPFailure)
from .mi import (GridSearchConfig, MIEvaluation, build_histogram,
                 evaluate_pose, grid_search, mi_slices, mutual_information,
                 sample_intensities)
from .pnp import (CorrespondenceSet, PnPResult, lift_correspondences,
                  p3p_solve, ransac_pnp)
from .priormap import (GpsInit, LidarGroundMap, PriorMap, SatelliteMap,
                       crop_satellite, ground_height_at, load_prior_map,
                       query_ground_points)
from .synth import (SyntheticScene, fabricate_correspondences, generate_scene,
                    render_fisheye, robustness_trial_suite, standard_scene)

__all__ = [
    "__version__",
    "CameraIntrinsics", "CameraPose", "RectificationSpec",
    "build_rectification_map", "default_rectification", "project_points",
    "rectify_image", "unproject_pixels",
    "InputError", "MapLocError", "MIFailure", "PnPFailure",
    "GridSearchConfig", "MIEvaluation", "build_histogram", "evaluate_pose",
    "grid_search", "mi_slices", "mutual_information", "sample_intensities",
    "CorrespondenceSet", "PnPResult", "lift_correspondences", "p3p_solve",
    "ransac_pnp",
    "GpsInit", "LidarGroundMap", "PriorMap", "SatelliteMap", "crop_satellite",
    "ground_height_at", "load_prior_map", "query_ground_points",
    "SyntheticScene", "fabricate_correspondences", "generate_scene",
    "render_fisheye", "robustness_trial_suite", "standard_scene",
]
