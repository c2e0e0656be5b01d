"""Mutual-information registration of LiDAR reflectivity against fisheye
grayscale, refined by exhaustive grid search over theta = (x, y, z, psi).

X is the reflectivity of a projected ground point, Y the grayscale intensity
of the pixel it lands on. MI(X, Y) = H(X) + H(Y) - H(X, Y) with Shannon
entropies in nats estimated from plain 256-bin normalized histograms; the
camera pose that maximizes MI aligns the two modalities. Roll and pitch stay
frozen at their initialization values; yaw (rotation about the camera
principal axis) is the only rotation refined.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, CameraPose, project_points
from .exceptions import InputError, MIFailure
from .imageops import bilinear_sample
from .priormap import (LidarGroundMap, PointBatch, query_ground_points,
                       subsample_stride)
from .rotations import euler_zyx_to_matrix

__all__ = [
    "IntensityHistogram", "MIValues", "MIEvaluation", "GridSearchConfig",
    "GridStage", "GridSearchResult", "MISlice", "MISurface", "SliceSet",
    "pose_from_theta", "theta_from_pose", "sample_intensities",
    "build_histogram", "mutual_information", "evaluate_pose", "grid_search",
    "mi_slices",
]

N_BINS = 256
THETA_NAMES = ("x", "y", "z", "psi")


@dataclass(frozen=True)
class IntensityHistogram:
    """Exact integer counts: two 256-bin marginals and the 256x256 joint."""

    marginal_x: np.ndarray
    marginal_y: np.ndarray
    joint: np.ndarray
    n: int

    def p_x(self) -> np.ndarray:
        return self.marginal_x / self.n

    def p_y(self) -> np.ndarray:
        return self.marginal_y / self.n

    def p_joint(self) -> np.ndarray:
        return self.joint / self.n


@dataclass(frozen=True)
class MIValues:
    h_x: float
    h_y: float
    h_xy: float
    mi: float


@dataclass(frozen=True)
class MIEvaluation:
    """MI objective value at one pose sample."""

    theta: np.ndarray        # (x, y, z, psi)
    n_points: int
    h_x: float
    h_y: float
    h_xy: float
    mi: float
    valid: bool = True

    @classmethod
    def invalid(cls, theta: np.ndarray, n_points: int) -> "MIEvaluation":
        return cls(theta=np.asarray(theta, dtype=float), n_points=n_points,
                   h_x=float("nan"), h_y=float("nan"), h_xy=float("nan"),
                   mi=float("-inf"), valid=False)


@dataclass(frozen=True)
class GridSearchConfig:
    """Coarse-to-fine exhaustive search around the initialization.

    half_ranges/steps are per dimension (x, y, z in meters, psi in radians).
    Roll and pitch are not searched; they are taken from the init pose.
    Each stage after the first re-centers on the previous argmax, sets the
    half-range to one previous step and divides the steps by `shrink`.
    """

    half_ranges: tuple[float, float, float, float] = (2.0, 2.0, 0.5, np.deg2rad(5.0))
    steps: tuple[float, float, float, float] = (0.2, 0.2, 0.1, np.deg2rad(0.5))
    min_points: int = 500
    stages: int = 2
    shrink: float = 5.0

    def __post_init__(self):
        if len(self.half_ranges) != 4 or len(self.steps) != 4:
            raise InputError("half_ranges and steps must have 4 entries (x, y, z, psi)")
        if any(h < 0 for h in self.half_ranges):
            raise InputError("half ranges must be >= 0")
        if any(s <= 0 for s in self.steps):
            raise InputError("steps must be > 0")
        if self.stages < 1:
            raise InputError("stages must be >= 1")
        if self.shrink <= 0:
            raise InputError("shrink must be > 0")
        if self.min_points < 1:
            raise InputError("min_points must be >= 1")


@dataclass(frozen=True)
class GridStage:
    stage: int
    axes: tuple
    thetas: np.ndarray
    n_points: np.ndarray
    h_x: np.ndarray
    h_y: np.ndarray
    h_xy: np.ndarray
    mi: np.ndarray


@dataclass(frozen=True)
class GridSearchResult:
    pose: CameraPose
    best: MIEvaluation
    stages: list
    init_theta: np.ndarray
    roll: float
    pitch: float
    n_evaluations: int


@dataclass(frozen=True)
class MISlice:
    name: str
    offsets: np.ndarray
    thetas: np.ndarray
    n_points: np.ndarray
    h_x: np.ndarray
    h_y: np.ndarray
    h_xy: np.ndarray
    mi: np.ndarray


@dataclass(frozen=True)
class MISurface:
    names: tuple[str, str]
    offsets_a: np.ndarray
    offsets_b: np.ndarray
    thetas: np.ndarray
    n_points: np.ndarray
    h_x: np.ndarray
    h_y: np.ndarray
    h_xy: np.ndarray
    mi: np.ndarray  # (len_a * len_b,), row-major over (a, b)


@dataclass(frozen=True)
class SliceSet:
    slices: list
    surfaces: list


def pose_from_theta(theta, roll: float, pitch: float) -> CameraPose:
    """theta holds the camera position in the map frame plus yaw."""
    x, y, z, psi = (float(v) for v in theta)
    R = euler_zyx_to_matrix(roll, pitch, psi)
    return CameraPose.from_center(R, np.array([x, y, z]))


def theta_from_pose(pose: CameraPose) -> tuple[np.ndarray, float, float]:
    roll, pitch, yaw = pose.euler_rpy
    c = pose.camera_center
    return np.array([c[0], c[1], c[2], yaw]), roll, pitch


def sample_intensities(image: np.ndarray, intr: CameraIntrinsics,
                       pose: CameraPose, points: PointBatch):
    """Project points into the image; return co-observed (X, Y) sample pairs.

    X is point reflectivity, Y the bilinear image sample rounded to the
    nearest integer bin. Pairs come back in point order (deterministic).
    """
    image = np.asarray(image)
    if image.shape != (intr.height, intr.width):
        raise InputError(
            f"image size {image.shape[1]}x{image.shape[0]} does not match "
            f"intrinsics {intr.width}x{intr.height}")
    if len(points) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    px, valid = project_points(intr, pose, points.xyz, check_bounds=True)
    if not np.any(valid):
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    vals = bilinear_sample(image, px[valid, 0], px[valid, 1])
    y = np.clip(np.rint(vals), 0, 255).astype(np.int64)
    x = points.reflectivity[valid].astype(np.int64)
    return x, y


def build_histogram(x: np.ndarray, y: np.ndarray) -> IntensityHistogram:
    """Exact counting of the marginal and joint intensity histograms."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("x and y sample vectors must be equal-length 1-D")
    if x.size and (x.min() < 0 or x.max() >= N_BINS or y.min() < 0 or y.max() >= N_BINS):
        raise InputError("intensity samples must lie in [0, 255]")
    marginal_x = np.bincount(x, minlength=N_BINS)
    marginal_y = np.bincount(y, minlength=N_BINS)
    joint = np.bincount(x * N_BINS + y, minlength=N_BINS * N_BINS)
    return IntensityHistogram(marginal_x=marginal_x, marginal_y=marginal_y,
                              joint=joint.reshape(N_BINS, N_BINS), n=int(x.size))


def _entropy(counts: np.ndarray, n: int) -> float:
    c = counts[counts > 0]
    p = c / n
    return float(-np.sum(p * np.log(p)))


def mutual_information(hist: IntensityHistogram) -> MIValues:
    """Entropies in nats (0 log 0 = 0 convention) and MI = H_X + H_Y - H_XY."""
    if hist.n < 1:
        raise MIFailure("mutual information undefined: no co-observed samples")
    h_x = _entropy(hist.marginal_x, hist.n)
    h_y = _entropy(hist.marginal_y, hist.n)
    h_xy = _entropy(hist.joint.ravel(), hist.n)
    return MIValues(h_x=h_x, h_y=h_y, h_xy=h_xy, mi=h_x + h_y - h_xy)


def evaluate_pose(theta, roll: float, pitch: float, image: np.ndarray,
                  intr: CameraIntrinsics, points: PointBatch,
                  min_points: int = 500) -> MIEvaluation:
    """MI objective at one theta; invalid sentinel when too few points project."""
    theta = np.asarray(theta, dtype=np.float64)
    pose = pose_from_theta(theta, roll, pitch)
    x, y = sample_intensities(image, intr, pose, points)
    if x.size < min_points:
        return MIEvaluation.invalid(theta, int(x.size))
    vals = mutual_information(build_histogram(x, y))
    return MIEvaluation(theta=theta, n_points=int(x.size), h_x=vals.h_x,
                        h_y=vals.h_y, h_xy=vals.h_xy, mi=vals.mi)


def _axis(center: float, half: float, step: float) -> np.ndarray:
    k = int(round(half / step))
    return center + step * np.arange(-k, k + 1, dtype=np.float64)


def _stage_axes(center: np.ndarray, half_ranges, steps) -> tuple:
    return tuple(_axis(float(center[d]), half_ranges[d], steps[d]) for d in range(4))


def _theta_grid(axes: tuple) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _eval_thetas_numpy(thetas, roll, pitch, image, intr, points, min_points):
    m = thetas.shape[0]
    n = np.zeros(m, dtype=np.int64)
    h_x = np.full(m, np.nan)
    h_y = np.full(m, np.nan)
    h_xy = np.full(m, np.nan)
    mi = np.full(m, -np.inf)
    for i in range(m):
        ev = evaluate_pose(thetas[i], roll, pitch, image, intr, points, min_points)
        n[i] = ev.n_points
        if ev.valid:
            h_x[i], h_y[i], h_xy[i], mi[i] = ev.h_x, ev.h_y, ev.h_xy, ev.mi
    return n, h_x, h_y, h_xy, mi


def _eval_thetas(thetas, roll, pitch, image, intr, points, min_points, backend):
    if backend == "numpy":
        return _eval_thetas_numpy(thetas, roll, pitch, image, intr, points, min_points)
    from . import _kernels
    return _kernels.eval_thetas(thetas, roll, pitch, image, intr, points, min_points)


def _resolve_backend(backend: str) -> str:
    if backend not in ("auto", "numpy", "numba"):
        raise InputError(f"unknown MI evaluation backend {backend!r}")
    if backend == "auto":
        try:
            from . import _kernels  # noqa: F401
            return "numba"
        except ImportError:
            return "numpy"
    return backend


def _argmax_with_tiebreak(thetas: np.ndarray, mi: np.ndarray,
                          init_theta: np.ndarray) -> int:
    """Highest MI; ties go to the theta closest to init, then lexicographic."""
    best = np.max(mi)
    cand = np.flatnonzero(mi == best)
    if cand.size == 1:
        return int(cand[0])
    d2 = np.sum((thetas[cand] - init_theta[None, :]) ** 2, axis=1)
    keys = [(float(d2[j]), tuple(float(v) for v in thetas[cand[j]]))
            for j in range(cand.size)]
    return int(cand[min(range(cand.size), key=lambda j: keys[j])])


def _select_points(lidar: LidarGroundMap, init_theta: np.ndarray,
                   max_points: int, query_radius: float | None) -> PointBatch:
    if query_radius is None:
        return subsample_stride(lidar.all_points(), max_points)
    return query_ground_points(lidar, init_theta[:2], query_radius, max_points)


def grid_search(init_pose: CameraPose, config: GridSearchConfig,
                image: np.ndarray, intr: CameraIntrinsics,
                lidar: LidarGroundMap, max_points: int = 5000,
                backend: str = "auto",
                query_radius: float | None = None) -> GridSearchResult:
    """Exhaustive coarse-to-fine MI maximization around the initial pose.

    Every stage evaluates the full grid; the argmax re-centers the next,
    shrunken stage. The initialization is a grid point of stage 1, so the
    returned MI can never fall below MI(init). `query_radius` optionally
    restricts the evaluated points to a disc around the initial position
    (all map points otherwise), subsampled to max_points by stable stride.
    """
    backend = _resolve_backend(backend)
    init_theta, roll, pitch = theta_from_pose(init_pose)
    points = _select_points(lidar, init_theta, max_points, query_radius)

    center = init_theta.copy()
    half = list(config.half_ranges)
    steps = list(config.steps)
    stages = []
    n_evals = 0
    best_idx = -1
    for stage_num in range(1, config.stages + 1):
        axes = _stage_axes(center, half, steps)
        thetas = _theta_grid(axes)
        n, h_x, h_y, h_xy, mi = _eval_thetas(
            thetas, roll, pitch, image, intr, points, config.min_points, backend)
        n_evals += thetas.shape[0]
        stages.append(GridStage(stage=stage_num, axes=axes, thetas=thetas,
                                n_points=n, h_x=h_x, h_y=h_y, h_xy=h_xy, mi=mi))
        if not np.any(np.isfinite(mi)):
            raise MIFailure(
                f"grid stage {stage_num}: no pose had >= {config.min_points} points "
                "in view; enlarge the search ranges or provide more map points")
        best_idx = _argmax_with_tiebreak(thetas, mi, init_theta)
        center = thetas[best_idx].copy()
        half = [s for s in steps]
        steps = [s / config.shrink for s in steps]

    last = stages[-1]
    best = MIEvaluation(theta=last.thetas[best_idx].copy(),
                        n_points=int(last.n_points[best_idx]),
                        h_x=float(last.h_x[best_idx]),
                        h_y=float(last.h_y[best_idx]),
                        h_xy=float(last.h_xy[best_idx]),
                        mi=float(last.mi[best_idx]))
    return GridSearchResult(pose=pose_from_theta(best.theta, roll, pitch),
                            best=best, stages=stages, init_theta=init_theta,
                            roll=roll, pitch=pitch, n_evaluations=n_evals)


def mi_slices(init_pose: CameraPose, config: GridSearchConfig,
              image: np.ndarray, intr: CameraIntrinsics,
              lidar: LidarGroundMap, max_points: int = 5000,
              backend: str = "auto", query_radius: float | None = None,
              surface_pairs: tuple = ((0, 1), (0, 3))) -> SliceSet:
    """1-D MI profiles per dimension and 2-D surfaces for selected pairs,
    all perturbations taken around the initial pose with stage-1 steps."""
    backend = _resolve_backend(backend)
    init_theta, roll, pitch = theta_from_pose(init_pose)
    points = _select_points(lidar, init_theta, max_points, query_radius)

    def evaluate(thetas):
        return _eval_thetas(thetas, roll, pitch, image, intr, points,
                            config.min_points, backend)

    slices = []
    all_invalid = True
    for d in range(4):
        offsets = _axis(0.0, config.half_ranges[d], config.steps[d])
        thetas = np.tile(init_theta, (offsets.size, 1))
        thetas[:, d] += offsets
        n, h_x, h_y, h_xy, mi = evaluate(thetas)
        all_invalid &= not np.any(np.isfinite(mi))
        slices.append(MISlice(name=THETA_NAMES[d], offsets=offsets, thetas=thetas,
                              n_points=n, h_x=h_x, h_y=h_y, h_xy=h_xy, mi=mi))
    if all_invalid:
        raise MIFailure("all slice evaluations invalid; enlarge ranges or add points")

    surfaces = []
    for a, b in surface_pairs:
        offs_a = _axis(0.0, config.half_ranges[a], config.steps[a])
        offs_b = _axis(0.0, config.half_ranges[b], config.steps[b])
        oa, ob = np.meshgrid(offs_a, offs_b, indexing="ij")
        thetas = np.tile(init_theta, (oa.size, 1))
        thetas[:, a] += oa.ravel()
        thetas[:, b] += ob.ravel()
        n, h_x, h_y, h_xy, mi = evaluate(thetas)
        surfaces.append(MISurface(names=(THETA_NAMES[a], THETA_NAMES[b]),
                                  offsets_a=offs_a, offsets_b=offs_b,
                                  thetas=thetas, n_points=n, h_x=h_x, h_y=h_y,
                                  h_xy=h_xy, mi=mi))
    return SliceSet(slices=slices, surfaces=surfaces)
