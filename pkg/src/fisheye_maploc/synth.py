"""Procedural ground-truth scenes: reflectivity/height rasters, LiDAR point
sampling, a ray-marched fisheye renderer, correspondence fabrication and the
multi-trial robustness study.

Three texture patterns are provided:
  lanes  - road intersection with dashed/solid markings over noisy asphalt
           plus scattered paint patches; the workhorse scene for grid-search
           and end-to-end studies.
  blocks - piecewise-constant tiles with one LiDAR point per tile center;
           every in-view sample satisfies X == Y exactly on a noiseless
           render, which makes MI == H(X) at the true pose.
  rings  - concentric square rings (180-degree rotational symmetry) used by
           the slice-equivariance checks.
"""

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .camera import (CameraIntrinsics, CameraPose, RectificationSpec,
                     default_rectification, project_points, save_intrinsics,
                     unproject_pixels, virtual_intrinsics,
                     virtual_pose_from_fisheye)
from .exceptions import InputError
from .imageops import save_gray
from .mi import GridSearchConfig, grid_search, pose_from_theta, theta_from_pose
from .priormap import (LidarGroundMap, PriorMap, SatelliteMap, save_lidar_csv,
                       save_satellite)
from .pnp import CorrespondenceSet

__all__ = [
    "SceneStyle", "HeightField", "SyntheticScene", "generate_scene",
    "standard_scene", "blocks_scene", "rings_scene", "render_fisheye",
    "fabricate_correspondences", "make_check_points", "TrialResult",
    "TrialSuiteResult", "robustness_trial_suite", "save_scene_bundle",
]


@dataclass(frozen=True)
class SceneStyle:
    pattern: str = "lanes"
    resolution: float = 0.1          # reflectivity/satellite raster, m/px
    height_resolution: float = 0.5   # height raster, m/px
    n_points: int = 50_000           # LiDAR points (lanes pattern)
    block_size: float = 1.0          # blocks/rings tile edge, m
    cam_center: tuple[float, float, float] = (0.6, -1.1, 6.0)
    cam_yaw: float = 0.12
    cam_roll_offset: float = 0.02    # tilt away from exact nadir
    cam_pitch: float = 0.015
    noise_sigma: float = 9.0         # additive render noise, gray levels
    gain: float = 1.0
    bias: float = 0.0
    sat_gamma: float = 0.8           # photometric gap of the satellite layer
    sat_gain: float = 0.9
    sat_bias: float = 18.0
    height_amplitude: float = 0.08
    height_slope: tuple[float, float] = (0.004, -0.003)


@dataclass(frozen=True)
class HeightField:
    raster: np.ndarray   # (H, W) float64
    resolution: float
    origin: np.ndarray   # world (x, y) of pixel (0, 0) center

    def __post_init__(self):
        r = np.asarray(self.raster, dtype=np.float64)
        o = np.asarray(self.origin, dtype=np.float64).reshape(2)
        r.flags.writeable = False
        o.flags.writeable = False
        object.__setattr__(self, "raster", r)
        object.__setattr__(self, "origin", o)

    def sample(self, x, y):
        """Bilinear height lookup at world (x, y); clamped at the border."""
        col = (np.asarray(x, dtype=float) - self.origin[0]) / self.resolution
        row = (self.origin[1] - np.asarray(y, dtype=float)) / self.resolution
        h, w = self.raster.shape
        col = np.clip(col, 0.0, w - 1.0)
        row = np.clip(row, 0.0, h - 1.0)
        from .imageops import bilinear_sample
        return bilinear_sample(self.raster, col, row)

    @property
    def max_height(self) -> float:
        return float(self.raster.max())


@dataclass(frozen=True)
class SyntheticScene:
    seed: int
    extent: float
    style: SceneStyle
    prior: PriorMap
    gt_pose: CameraPose
    intrinsics: CameraIntrinsics
    reflectivity: SatelliteMap      # rendering truth (pre-photometric-gap)
    height: HeightField
    feature_points: np.ndarray      # (K, 3) world corners
    noise_seed: int

    def __post_init__(self):
        cz = self.gt_pose.camera_center[2]
        if cz <= self.height.max_height:
            raise InputError(
                f"ground-truth camera z={cz:.3f} is not above the ground "
                f"(max height {self.height.max_height:.3f})")


def _raster_grid(extent: float, res: float):
    side = int(round(2.0 * extent / res)) + 1
    origin = np.array([-extent, extent])
    return side, origin


def _fill_rect(raster, extent, res, x0, x1, y0, y1, value):
    """Fill an axis-aligned world rectangle into a north-up raster."""
    side = raster.shape[0]
    c0 = int(np.clip(np.rint((x0 + extent) / res), 0, side))
    c1 = int(np.clip(np.rint((x1 + extent) / res), 0, side))
    r0 = int(np.clip(np.rint((extent - y1) / res), 0, side))
    r1 = int(np.clip(np.rint((extent - y0) / res), 0, side))
    raster[r0:r1, c0:c1] = value


def _lanes_reflectivity(rng, extent, res):
    """Intersection of two roads with markings; returns (raster, corners)."""
    side, _ = _raster_grid(extent, res)
    base = gaussian_filter(rng.standard_normal((side, side)), 20.0)
    detail = gaussian_filter(rng.standard_normal((side, side)), 3.0)
    tex = base + 0.6 * detail
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-12)
    raster = 40.0 + 70.0 * tex

    corners: list[tuple[float, float]] = []

    def marked_rect(x0, x1, y0, y1, value):
        _fill_rect(raster, extent, res, x0, x1, y0, y1, value)
        corners.extend([(x0, y0), (x0, y1), (x1, y0), (x1, y1)])

    road_half = 3.5
    # solid edge lines of both roads, skipping the intersection box
    for sgn in (-1.0, 1.0):
        e = sgn * (road_half - 0.2)
        _fill_rect(raster, extent, res, -extent, -road_half, e, e + 0.15, 205)
        _fill_rect(raster, extent, res, road_half, extent, e, e + 0.15, 205)
        _fill_rect(raster, extent, res, e, e + 0.15, -extent, -road_half, 205)
        _fill_rect(raster, extent, res, e, e + 0.15, road_half, extent, 205)
    # dashed center lines
    dash, gap = 1.5, 1.5
    x = -extent + 0.7
    while x + dash < extent - 0.7:
        if abs(x) > road_half + 0.5 and abs(x + dash) > road_half + 0.5:
            marked_rect(x, x + dash, -0.08, 0.08, 225)
            marked_rect(-0.08, 0.08, x, x + dash, 225)
        x += dash + gap
    # crosswalk stripes on all four approaches
    for d in (-road_half - 1.2, road_half + 0.4):
        y = -2.6
        while y < 2.6:
            marked_rect(d, d + 0.8, y, y + 0.5, 240)
            marked_rect(y, y + 0.5, d, d + 0.8, 240)
            y += 1.0
    # scattered paint patches off the roads for unambiguous texture
    for _ in range(90):
        cx = rng.uniform(-extent + 1.5, extent - 1.5)
        cy = rng.uniform(-extent + 1.5, extent - 1.5)
        if abs(cx) < road_half + 1.0 or abs(cy) < road_half + 1.0:
            continue
        half = rng.uniform(0.2, 0.55)
        val = float(rng.integers(150, 246)) if rng.random() < 0.7 \
            else float(rng.integers(5, 30))
        marked_rect(cx - half, cx + half, cy - half, cy + half, val)

    raster = np.clip(np.rint(raster), 0, 255).astype(np.uint8)
    return raster, np.array(sorted(set(corners)), dtype=float)


def _tiles_reflectivity(rng, extent, res, block, ring_values=False):
    """Piecewise-constant tiles (blocks) or square rings of constant value."""
    side, _ = _raster_grid(extent, res)
    px_per_block = int(round(block / res))
    n_blocks = int(np.ceil(side / px_per_block))
    if ring_values:
        half = (n_blocks - 1) / 2.0
        bi, bj = np.meshgrid(np.arange(n_blocks), np.arange(n_blocks),
                             indexing="ij")
        ring = np.maximum(np.abs(bi - half), np.abs(bj - half)).astype(int)
        ring_vals = rng.integers(16, 231, size=int(ring.max()) + 1)
        blocks = ring_vals[ring]
    else:
        blocks = rng.integers(16, 231, size=(n_blocks, n_blocks))
    raster = np.repeat(np.repeat(blocks, px_per_block, 0), px_per_block, 1)
    raster = raster[:side, :side].astype(np.uint8)
    # corners of interior tiles double as geometric features
    k = np.arange(1, n_blocks)
    xs = -extent + k * block
    corners = np.array([(x, y) for x in xs for y in xs
                        if abs(x) < extent - 1 and abs(y) < extent - 1])
    return raster, corners


def _tile_center_points(extent, block):
    """One LiDAR point per tile center (maximal margin from tile edges)."""
    n = int(np.floor(2.0 * extent / block))
    centers = -extent + block * (np.arange(n) + 0.5)
    xx, yy = np.meshgrid(centers, centers, indexing="ij")
    return xx.ravel(), yy.ravel()


def _height_field(rng, extent, style: SceneStyle, flat: bool) -> HeightField:
    side, origin = _raster_grid(extent, style.height_resolution)
    if flat or style.height_amplitude == 0.0:
        raster = np.zeros((side, side))
    else:
        noise = gaussian_filter(rng.standard_normal((side, side)), 4.0)
        noise = noise / max(np.abs(noise).max(), 1e-12)
        xs = np.linspace(-extent, extent, side)
        gx, gy = np.meshgrid(xs, -xs, indexing="xy")
        raster = (style.height_amplitude * noise
                  + style.height_slope[0] * gx + style.height_slope[1] * gy)
    return HeightField(raster=raster, resolution=style.height_resolution,
                       origin=origin)


def _photometric_gap(refl: np.ndarray, style: SceneStyle) -> np.ndarray:
    norm = refl.astype(np.float64) / 255.0
    out = 255.0 * np.power(norm, style.sat_gamma) * style.sat_gain + style.sat_bias
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _default_intrinsics(pattern: str) -> CameraIntrinsics:
    distort = dict(k1=-0.015, k2=0.003, p1=4e-4, p2=-3e-4) if pattern == "lanes" \
        else dict(k1=0.0, k2=0.0, p1=0.0, p2=0.0)
    return CameraIntrinsics(fx=378.0, fy=378.0, s=0.0, cx=399.5, cy=399.5,
                            xi=1.0, width=800, height=800, **distort)


def generate_scene(seed: int, extent: float,
                   style: SceneStyle = SceneStyle()) -> SyntheticScene:
    """Deterministically build a scene (rasters, points, ground truth)."""
    if extent <= 0:
        raise InputError(f"scene extent must be > 0, got {extent}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2024]))
    res = style.resolution

    if style.pattern == "lanes":
        refl_raster, corners_xy = _lanes_reflectivity(rng, extent, res)
        height = _height_field(rng, extent, style, flat=False)
    elif style.pattern in ("blocks", "rings"):
        refl_raster, corners_xy = _tiles_reflectivity(
            rng, extent, res, style.block_size,
            ring_values=(style.pattern == "rings"))
        height = _height_field(rng, extent, style, flat=True)
    else:
        raise InputError(f"unknown scene pattern {style.pattern!r}")

    _, origin = _raster_grid(extent, res)
    reflectivity = SatelliteMap(refl_raster, res, origin)
    satellite = SatelliteMap(_photometric_gap(refl_raster, style), res, origin)

    if style.pattern == "lanes":
        spacing = 2.0 * extent / np.sqrt(style.n_points)
        n_side = int(np.floor(2.0 * extent / spacing))
        axis = -extent + spacing * (np.arange(n_side) + 0.5)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        jitter = 0.3 * spacing
        px = gx.ravel() + rng.uniform(-jitter, jitter, gx.size)
        py = gy.ravel() + rng.uniform(-jitter, jitter, gy.size)
        keep = (np.abs(px) < extent - res) & (np.abs(py) < extent - res)
        px, py = px[keep], py[keep]
    else:
        px, py = _tile_center_points(extent, style.block_size)
    pz = height.sample(px, py)
    cols, rows = reflectivity.world_to_pixel(px, py)
    from .imageops import bilinear_sample
    refl_vals = np.clip(np.rint(bilinear_sample(refl_raster, cols, rows)),
                        0, 255).astype(np.uint8)
    lidar = LidarGroundMap(px, py, pz, refl_vals)

    roll = np.pi + style.cam_roll_offset
    gt_pose = CameraPose.from_euler(roll, style.cam_pitch, style.cam_yaw,
                                    center=np.asarray(style.cam_center))
    corners_z = height.sample(corners_xy[:, 0], corners_xy[:, 1]) \
        if corners_xy.size else np.empty(0)
    features = np.column_stack([corners_xy, corners_z]) if corners_xy.size \
        else np.empty((0, 3))

    return SyntheticScene(
        seed=int(seed), extent=float(extent), style=style,
        prior=PriorMap(satellite=satellite, lidar=lidar),
        gt_pose=gt_pose, intrinsics=_default_intrinsics(style.pattern),
        reflectivity=reflectivity, height=height, feature_points=features,
        noise_seed=int(rng.integers(0, 2**31 - 1)))


def standard_scene(seed: int = 7, n_points: int = 50_000) -> SyntheticScene:
    """The textured intersection scene used by the benchmark studies.

    The camera sits low relative to the mapped extent so that most points
    lie in the far field, which is the regime where yaw stays observable
    while translation sensitivity degrades.
    """
    return generate_scene(seed, extent=35.0,
                          style=SceneStyle(pattern="lanes", n_points=n_points))


def blocks_scene(seed: int = 3) -> SyntheticScene:
    """Render-identity scene: constant tiles, points at tile centers."""
    style = SceneStyle(pattern="blocks", block_size=1.0,
                       cam_center=(0.25, -0.4, 12.0), cam_yaw=0.1,
                       cam_roll_offset=0.0, cam_pitch=0.0,
                       noise_sigma=0.0, height_amplitude=0.0)
    return generate_scene(seed, extent=12.0, style=style)


def rings_scene(seed: int = 5) -> SyntheticScene:
    """180-degree rotationally symmetric scene for equivariance checks."""
    style = SceneStyle(pattern="rings", block_size=1.0,
                       cam_center=(0.5, 0.25, 12.0), cam_yaw=0.0,
                       cam_roll_offset=0.0, cam_pitch=0.0,
                       noise_sigma=0.0, height_amplitude=0.0)
    return generate_scene(seed, extent=12.0, style=style)


def render_fisheye(scene: SyntheticScene, pose: CameraPose | None = None,
                   noise_seed: int | None = None) -> np.ndarray:
    """Ray-march the height field and sample reflectivity for every pixel.

    Deterministic: the additive noise is seeded from the scene unless a
    seed is passed explicitly. Sky / off-map pixels are 0.
    """
    from . import _kernels

    pose = scene.gt_pose if pose is None else pose
    intr = scene.intrinsics
    center = pose.camera_center
    if center[2] <= scene.height.max_height:
        raise InputError(
            f"camera z={center[2]:.3f} is at or below ground "
            f"(max height {scene.height.max_height:.3f})")

    vv, uu = np.meshgrid(np.arange(intr.height, dtype=np.float64),
                         np.arange(intr.width, dtype=np.float64), indexing="ij")
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
    rays_cam, valid = unproject_pixels(intr, pixels)
    rays_world = np.where(valid[:, None], rays_cam, 0.0) @ pose.rotation

    vals = np.zeros(pixels.shape[0])
    hit = np.zeros(pixels.shape[0], dtype=np.bool_)
    refl = scene.reflectivity
    _kernels.march_rays(
        np.ascontiguousarray(center), np.ascontiguousarray(rays_world),
        valid, scene.height.raster, scene.height.resolution,
        float(scene.height.origin[0]), float(scene.height.origin[1]),
        refl.raster.astype(np.float64), refl.resolution,
        float(refl.origin[0]), float(refl.origin[1]),
        0.125 * scene.height.resolution, 1e-4, vals, hit)

    out = scene.style.gain * vals + scene.style.bias
    if scene.style.noise_sigma > 0:
        seed = scene.noise_seed if noise_seed is None else noise_seed
        rng = np.random.default_rng(seed)
        out = out + scene.style.noise_sigma * rng.standard_normal(out.shape)
    out = np.clip(np.rint(out), 0, 255)
    out[~hit] = 0
    return out.reshape(intr.height, intr.width).astype(np.uint8)


def fabricate_correspondences(scene: SyntheticScene, outlier_fraction: float,
                              noise_sigma: float, count: int, seed: int,
                              rect_spec: RectificationSpec | None = None
                              ) -> CorrespondenceSet:
    """Project scene corners into the rectified view and the satellite raster,
    then corrupt: Gaussian pixel noise on both sides, plus a fraction of
    satellite coordinates replaced by uniform in-raster outliers."""
    if count < 4:
        raise InputError(f"need at least 4 correspondences, got {count}")
    if not (0.0 <= outlier_fraction < 1.0):
        raise InputError("outlier fraction must be in [0, 1)")
    spec = rect_spec or default_rectification(scene.intrinsics)
    vint = virtual_intrinsics(spec)
    vpose = virtual_pose_from_fisheye(scene.gt_pose, spec)
    if scene.feature_points.shape[0] == 0:
        raise InputError("scene has no corner features")
    px, valid = project_points(vint, vpose, scene.feature_points)
    margin = 4.0
    inside = valid & (px[:, 0] > margin) & (px[:, 0] < vint.width - 1 - margin) \
                   & (px[:, 1] > margin) & (px[:, 1] < vint.height - 1 - margin)
    idx = np.flatnonzero(inside)
    if idx.size < count:
        raise InputError(
            f"scene has only {idx.size} visible corners, need {count}")
    rng = np.random.default_rng(np.random.SeedSequence([scene.seed, int(seed), 77]))
    chosen = np.sort(rng.choice(idx, size=count, replace=False))
    world = scene.feature_points[chosen]
    rect_px = px[chosen] + noise_sigma * rng.standard_normal((count, 2))

    sat = scene.prior.satellite
    cols, rows = sat.world_to_pixel(world[:, 0], world[:, 1])
    sat_px = np.stack([cols, rows], axis=1) \
        + noise_sigma * rng.standard_normal((count, 2))
    inlier = np.ones(count, dtype=bool)
    n_out = int(round(outlier_fraction * count))
    if n_out:
        out_idx = rng.choice(count, size=n_out, replace=False)
        sat_px[out_idx, 0] = rng.uniform(0, sat.width - 1, n_out)
        sat_px[out_idx, 1] = rng.uniform(0, sat.height - 1, n_out)
        inlier[out_idx] = False
    return CorrespondenceSet(u_rect=rect_px[:, 0], v_rect=rect_px[:, 1],
                             u_sat=sat_px[:, 0], v_sat=sat_px[:, 1],
                             inlier_mask=inlier)


def make_check_points(scene: SyntheticScene, count: int = 12, seed: int = 0):
    """Corner world points with their ground-truth fisheye annotations."""
    px, valid = project_points(scene.intrinsics, scene.gt_pose,
                               scene.feature_points)
    margin = 6.0
    inside = valid & (px[:, 0] > margin) \
        & (px[:, 0] < scene.intrinsics.width - 1 - margin) \
        & (px[:, 1] > margin) \
        & (px[:, 1] < scene.intrinsics.height - 1 - margin)
    idx = np.flatnonzero(inside)
    if idx.size < count:
        raise InputError(f"only {idx.size} corners visible, need {count}")
    rng = np.random.default_rng(np.random.SeedSequence([scene.seed, seed, 55]))
    chosen = np.sort(rng.choice(idx, size=count, replace=False))
    return scene.feature_points[chosen], px[chosen]


@dataclass(frozen=True)
class TrialResult:
    trial: int
    init_theta: np.ndarray
    final_theta: np.ndarray
    mi: float
    translation_error: float
    yaw_error: float
    converged: bool


@dataclass(frozen=True)
class TrialSuiteResult:
    trials: list
    gt_theta: np.ndarray
    fine_steps: tuple[float, float, float, float]
    conv_translation: float
    conv_yaw: float

    @property
    def n_converged(self) -> int:
        return sum(t.converged for t in self.trials)

    @property
    def convergence_rate(self) -> float:
        return self.n_converged / max(len(self.trials), 1)

    def error_std(self) -> np.ndarray:
        """Per-dimension std-dev of (final - gt), order (x, y, z, psi)."""
        err = np.array([t.final_theta - self.gt_theta for t in self.trials])
        err[:, 3] = _wrap_angle(err[:, 3])
        return err.std(axis=0)

    def normalized_dispersion(self) -> np.ndarray:
        """error_std expressed in units of the fine-stage grid step."""
        return self.error_std() / np.asarray(self.fine_steps)


def _wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def robustness_trial_suite(scene: SyntheticScene, n_trials: int,
                           bounds: tuple[float, float, float, float],
                           config: GridSearchConfig, seed: int,
                           image: np.ndarray | None = None,
                           max_points: int = 5000, backend: str = "auto",
                           conv_translation: float = 0.2,
                           conv_yaw: float = np.deg2rad(0.5)
                           ) -> TrialSuiteResult:
    """Repeat grid-search refinement from uniformly perturbed initial poses.

    Per-trial seeds derive from the suite seed, so results are independent
    of execution order.
    """
    if n_trials < 1:
        raise InputError("n_trials must be >= 1")
    if image is None:
        image = render_fisheye(scene)
    gt_theta, roll, pitch = theta_from_pose(scene.gt_pose)
    bounds = np.asarray(bounds, dtype=float)
    fine = tuple(s / (config.shrink ** (config.stages - 1)) for s in config.steps)

    trials = []
    for t in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), t, 909]))
        init_theta = gt_theta + rng.uniform(-bounds, bounds)
        init_pose = pose_from_theta(init_theta, roll, pitch)
        result = grid_search(init_pose, config, image, scene.intrinsics,
                             scene.prior.lidar, max_points=max_points,
                             backend=backend)
        final = result.best.theta
        terr = float(np.linalg.norm(final[:3] - gt_theta[:3]))
        yerr = float(abs(_wrap_angle(final[3] - gt_theta[3])))
        trials.append(TrialResult(
            trial=t, init_theta=init_theta, final_theta=final,
            mi=result.best.mi, translation_error=terr, yaw_error=yerr,
            converged=(terr <= conv_translation and yerr <= conv_yaw)))
    return TrialSuiteResult(trials=trials, gt_theta=gt_theta, fine_steps=fine,
                            conv_translation=conv_translation,
                            conv_yaw=conv_yaw)


def trial_suite_to_csv(result: TrialSuiteResult, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial",
                         "init_x", "init_y", "init_z", "init_psi",
                         "final_x", "final_y", "final_z", "final_psi",
                         "mi", "translation_error", "yaw_error", "converged"])
        for t in result.trials:
            writer.writerow([t.trial,
                             *[repr(float(v)) for v in t.init_theta],
                             *[repr(float(v)) for v in t.final_theta],
                             repr(float(t.mi)),
                             repr(t.translation_error), repr(t.yaw_error),
                             int(t.converged)])


def save_scene_bundle(scene: SyntheticScene, out_dir: str | Path,
                      n_matches: int = 40, match_noise: float = 0.3,
                      match_outliers: float = 0.2,
                      n_check_points: int = 12) -> dict[str, str]:
    """Write the scene as prior-map files + GT pose + derived test inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}

    save_satellite(out / "satellite.png", out / "satellite.wld",
                   scene.prior.satellite)
    files["satellite"] = "satellite.png"
    files["world_file"] = "satellite.wld"
    save_lidar_csv(out / "lidar.csv", scene.prior.lidar)
    files["lidar"] = "lidar.csv"
    save_intrinsics(out / "intrinsics.txt", scene.intrinsics)
    files["intrinsics"] = "intrinsics.txt"
    image = render_fisheye(scene)
    save_gray(out / "fisheye.png", image)
    files["fisheye"] = "fisheye.png"
    (out / "gt_pose.json").write_text(
        json.dumps(scene.gt_pose.to_json_dict(), indent=2, sort_keys=True) + "\n")
    files["gt_pose"] = "gt_pose.json"

    matches = fabricate_correspondences(scene, match_outliers, match_noise,
                                        n_matches, seed=scene.seed)
    matches.save_csv(out / "matches.csv")
    files["matches"] = "matches.csv"

    world, annot = make_check_points(scene, count=n_check_points)
    with (out / "check_points.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "u", "v"])
        for i in range(world.shape[0]):
            writer.writerow([repr(float(world[i, 0])), repr(float(world[i, 1])),
                             repr(float(world[i, 2])), repr(float(annot[i, 0])),
                             repr(float(annot[i, 1]))])
    files["check_points"] = "check_points.csv"
    return files


def scene_with_style(scene: SyntheticScene, **style_updates) -> SyntheticScene:
    """Regenerate the scene with modified style fields (same seed/extent)."""
    return generate_scene(scene.seed, scene.extent,
                          replace(scene.style, **style_updates))
