"""Unified-sphere (omnidirectional) camera model and perspective rectification.

Projection pipeline for a world point P_W:

    P_C = R @ P_W + t                   (world -> camera frame)
    P_s = P_C / |P_C|                   (unit sphere)
    m   = (x_s, y_s) / (z_s + xi)       (mirror shift + perspective division)
    m_d = radial/tangential distortion of m with (k1, k2, p1, p2)
    p   = K @ [m_d; 1]                  (pixel)

With xi = 0 and zero distortion this is exactly the pinhole model, which is
how the virtual rectified camera is represented as well.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CameraModelError, InputError
from .imageops import bilinear_sample
from .rotations import (euler_zyx_to_matrix, matrix_to_euler_zyx,
                        matrix_to_quat_wxyz)

__all__ = [
    "CameraIntrinsics", "CameraPose", "RectificationSpec", "RectificationMap",
    "project_points", "project_point", "unproject_pixels", "unproject_pixel",
    "default_rectification", "virtual_intrinsics", "build_rectification_map",
    "rectify_image", "fisheye_pose_from_virtual", "virtual_pose_from_fisheye",
    "load_intrinsics", "save_intrinsics",
]

# Cutoff on the projection denominator z_s + xi; at or below this the point
# is outside the imageable cone.
DENOM_EPS = 1e-9

# Fixed-point distortion inversion parameters.
UNDISTORT_ITERS = 20
UNDISTORT_TOL = 1e-10

_INTRINSIC_FIELDS = ("fx", "fy", "s", "cx", "cy",
                     "k1", "k2", "p1", "p2", "xi", "width", "height")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Unified omnidirectional intrinsics: K entries, distortion, mirror xi."""

    fx: float
    fy: float
    s: float
    cx: float
    cy: float
    k1: float
    k2: float
    p1: float
    p2: float
    xi: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"image size must be positive, got {self.width}x{self.height}")
        if self.xi < 0:
            raise InputError(f"mirror parameter xi must be >= 0, got {self.xi}")
        if not (0 <= self.cx <= self.width - 1 and 0 <= self.cy <= self.height - 1):
            raise InputError(
                f"principal point ({self.cx}, {self.cy}) outside image bounds "
                f"{self.width}x{self.height}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, self.s, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def distortion(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.p1, self.p2])

    @property
    def has_distortion(self) -> bool:
        return any(v != 0.0 for v in (self.k1, self.k2, self.p1, self.p2))


@dataclass(frozen=True)
class CameraPose:
    """Rigid transform mapping world points into the camera frame:
    P_C = rotation @ P_W + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise InputError(f"rotation must be 3x3, got {R.shape}")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise InputError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InputError("rotation determinant differs from +1 by more than 1e-9")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_center(cls, rotation: np.ndarray, center: np.ndarray) -> "CameraPose":
        rotation = np.asarray(rotation, dtype=np.float64)
        center = np.asarray(center, dtype=np.float64).reshape(3)
        return cls(rotation, -rotation @ center)

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float, *,
                   center=None, translation=None) -> "CameraPose":
        if (center is None) == (translation is None):
            raise InputError("specify exactly one of center= or translation=")
        R = euler_zyx_to_matrix(roll, pitch, yaw)
        if center is not None:
            return cls.from_center(R, center)
        return cls(R, translation)

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def euler_rpy(self) -> tuple[float, float, float]:
        return matrix_to_euler_zyx(self.rotation)

    @property
    def roll(self) -> float:
        return self.euler_rpy[0]

    @property
    def pitch(self) -> float:
        return self.euler_rpy[1]

    @property
    def yaw(self) -> float:
        return self.euler_rpy[2]

    @property
    def quat_wxyz(self) -> np.ndarray:
        return matrix_to_quat_wxyz(self.rotation)

    def transform_points(self, pts_world: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts_world, dtype=np.float64))
        return pts @ self.rotation.T + self.translation

    def to_json_dict(self) -> dict:
        r, p, y = self.euler_rpy
        return {
            "rotation_wxyz": [float(v) for v in self.quat_wxyz],
            "euler_rpy": [r, p, y],
            "translation": [float(v) for v in self.translation],
            "camera_center": [float(v) for v in self.camera_center],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CameraPose":
        from .rotations import quat_wxyz_to_matrix
        try:
            R = quat_wxyz_to_matrix(np.asarray(d["rotation_wxyz"], dtype=float))
            t = np.asarray(d["translation"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed pose document: {exc}") from exc
        return cls(R, t)


def _distort(intr: CameraIntrinsics, mx: np.ndarray, my: np.ndarray):
    r2 = mx * mx + my * my
    radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
    mdx = mx * radial + 2.0 * intr.p1 * mx * my + intr.p2 * (r2 + 2.0 * mx * mx)
    mdy = my * radial + intr.p1 * (r2 + 2.0 * my * my) + 2.0 * intr.p2 * mx * my
    return mdx, mdy


def project_points(intr: CameraIntrinsics, pose: CameraPose,
                   pts_world: np.ndarray, *, check_bounds: bool = True):
    """Project world points; returns (pixels (N,2), valid (N,) bool).

    Invalid rows (outside the imageable cone, or outside image bounds when
    check_bounds is set) carry NaN pixels.
    """
    pts = np.atleast_2d(np.asarray(pts_world, dtype=np.float64))
    pc = pose.transform_points(pts)
    norm = np.linalg.norm(pc, axis=1)
    safe = norm > 0.0
    norm_div = np.where(safe, norm, 1.0)
    ps = pc / norm_div[:, None]
    den = ps[:, 2] + intr.xi
    valid = safe & (den > DENOM_EPS)
    den_div = np.where(valid, den, 1.0)
    mx = ps[:, 0] / den_div
    my = ps[:, 1] / den_div
    mdx, mdy = _distort(intr, mx, my)
    u = intr.fx * mdx + intr.s * mdy + intr.cx
    v = intr.fy * mdy + intr.cy
    if check_bounds:
        valid = valid & (u >= 0.0) & (u <= intr.width - 1.0) \
                      & (v >= 0.0) & (v <= intr.height - 1.0)
    px = np.stack([u, v], axis=1)
    px[~valid] = np.nan
    return px, valid


def project_point(intr: CameraIntrinsics, pose: CameraPose, pt_world) -> np.ndarray | None:
    """Single-point convenience wrapper; None when not projectable/in view."""
    px, valid = project_points(intr, pose, np.asarray(pt_world, dtype=float).reshape(1, 3))
    return px[0] if valid[0] else None


def _undistort(intr: CameraIntrinsics, mdx: np.ndarray, mdy: np.ndarray):
    """Invert the distortion by fixed-point iteration; returns (mx, my, converged)."""
    if not intr.has_distortion:
        return mdx.copy(), mdy.copy(), np.ones_like(mdx, dtype=bool)
    mx = mdx.copy()
    my = mdy.copy()
    converged = np.zeros_like(mdx, dtype=bool)
    for _ in range(UNDISTORT_ITERS):
        r2 = mx * mx + my * my
        radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
        dx = 2.0 * intr.p1 * mx * my + intr.p2 * (r2 + 2.0 * mx * mx)
        dy = intr.p1 * (r2 + 2.0 * my * my) + 2.0 * intr.p2 * mx * my
        mx_new = (mdx - dx) / radial
        my_new = (mdy - dy) / radial
        step = np.maximum(np.abs(mx_new - mx), np.abs(my_new - my))
        mx, my = mx_new, my_new
        converged = step < UNDISTORT_TOL
        if np.all(converged):
            break
    return mx, my, converged


def unproject_pixels(intr: CameraIntrinsics, pixels: np.ndarray):
    """Back-project pixels to unit rays in the camera frame.

    Returns (rays (N,3), valid (N,) bool); invalid rows are NaN. A pixel is
    invalid when the distortion inversion fails to converge or when its
    undistorted coordinates have no real intersection with the unit sphere
    (possible only for xi > 1).
    """
    px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    mdy = (px[:, 1] - intr.cy) / intr.fy
    mdx = (px[:, 0] - intr.cx - intr.s * mdy) / intr.fx
    mx, my, converged = _undistort(intr, mdx, mdy)
    r2 = mx * mx + my * my
    disc = 1.0 + (1.0 - intr.xi * intr.xi) * r2
    valid = converged & (disc >= 0.0)
    eta = (intr.xi + np.sqrt(np.where(valid, disc, 0.0))) / (1.0 + r2)
    rays = np.stack([eta * mx, eta * my, eta - intr.xi], axis=1)
    norms = np.linalg.norm(rays, axis=1)
    valid = valid & (norms > 0.0)
    rays = rays / np.where(valid, norms, 1.0)[:, None]
    rays[~valid] = np.nan
    return rays, valid


def unproject_pixel(intr: CameraIntrinsics, pixel) -> np.ndarray:
    """Single-pixel wrapper; raises CameraModelError when unprojectable."""
    px = np.asarray(pixel, dtype=float).reshape(1, 2)
    mdy = (px[0, 1] - intr.cy) / intr.fy
    mdx = (px[0, 0] - intr.cx - intr.s * mdy) / intr.fx
    _, _, converged = _undistort(intr, np.array([mdx]), np.array([mdy]))
    if not converged[0]:
        raise CameraModelError(
            f"distortion inversion did not converge for pixel {pixel} "
            f"(check intrinsics / pixel validity)")
    rays, valid = unproject_pixels(intr, px)
    if not valid[0]:
        raise CameraModelError(
            f"pixel {pixel} lies outside the model's valid cone (xi={intr.xi})")
    return rays[0]


@dataclass(frozen=True)
class RectificationSpec:
    """Virtual pinhole camera used to resample a fisheye image."""

    focal: float
    width: int
    height: int
    rotation: np.ndarray  # virtual-frame vectors -> fisheye frame

    def __post_init__(self):
        if self.focal <= 0:
            raise InputError(f"virtual focal must be positive, got {self.focal}")
        if self.width <= 0 or self.height <= 0:
            raise InputError("virtual image size must be positive")
        R = np.array(self.rotation, dtype=np.float64)
        if R.shape != (3, 3) or np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise InputError("rectification rotation is not orthonormal")
        R.flags.writeable = False
        object.__setattr__(self, "rotation", R)


def default_rectification(intr: CameraIntrinsics) -> RectificationSpec:
    """Axis-aligned virtual camera at half the fisheye focal (~90 deg FoV)."""
    return RectificationSpec(focal=intr.fx / 2.0, width=intr.width,
                             height=intr.height, rotation=np.eye(3))


def virtual_intrinsics(spec: RectificationSpec) -> CameraIntrinsics:
    """The virtual camera as unified-model intrinsics (xi = 0, no distortion)."""
    return CameraIntrinsics(
        fx=spec.focal, fy=spec.focal, s=0.0,
        cx=(spec.width - 1) / 2.0, cy=(spec.height - 1) / 2.0,
        k1=0.0, k2=0.0, p1=0.0, p2=0.0, xi=0.0,
        width=spec.width, height=spec.height)


@dataclass(frozen=True)
class RectificationMap:
    """Per virtual-pixel fisheye source coordinates; invalid entries masked."""

    map_u: np.ndarray
    map_v: np.ndarray
    valid: np.ndarray
    src_width: int
    src_height: int

    def __post_init__(self):
        for name in ("map_u", "map_v", "valid"):
            arr = getattr(self, name)
            arr.flags.writeable = False


def build_rectification_map(intr: CameraIntrinsics,
                            spec: RectificationSpec) -> RectificationMap:
    """For every virtual pinhole pixel, find the fisheye pixel it samples."""
    vint = virtual_intrinsics(spec)
    vv, uu = np.meshgrid(np.arange(spec.height, dtype=np.float64),
                         np.arange(spec.width, dtype=np.float64), indexing="ij")
    x = (uu - vint.cx) / vint.fx
    y = (vv - vint.cy) / vint.fy
    rays_v = np.stack([x.ravel(), y.ravel(), np.ones(x.size)], axis=1)
    rays_f = rays_v @ spec.rotation.T
    px, valid = project_points(intr, CameraPose.identity(), rays_f)
    shape = (spec.height, spec.width)
    return RectificationMap(
        map_u=px[:, 0].reshape(shape),
        map_v=px[:, 1].reshape(shape),
        valid=valid.reshape(shape),
        src_width=intr.width,
        src_height=intr.height)


def rectify_image(image: np.ndarray, rmap: RectificationMap) -> np.ndarray:
    """Resample a fisheye image through the lookup table (bilinear);
    unmapped pixels come out black."""
    image = np.asarray(image)
    if image.shape != (rmap.src_height, rmap.src_width):
        raise InputError(
            f"image size {image.shape[1]}x{image.shape[0]} does not match "
            f"intrinsics {rmap.src_width}x{rmap.src_height}")
    out = np.zeros(rmap.valid.shape, dtype=np.uint8)
    mask = rmap.valid
    if np.any(mask):
        samples = bilinear_sample(image, rmap.map_u[mask], rmap.map_v[mask])
        out[mask] = np.clip(np.rint(samples), 0, 255).astype(np.uint8)
    return out


def fisheye_pose_from_virtual(virtual_pose: CameraPose,
                              spec: RectificationSpec) -> CameraPose:
    """Pose of the fisheye camera given the virtual rectified camera's pose."""
    return CameraPose(spec.rotation @ virtual_pose.rotation,
                      spec.rotation @ virtual_pose.translation)


def virtual_pose_from_fisheye(pose: CameraPose,
                              spec: RectificationSpec) -> CameraPose:
    return CameraPose(spec.rotation.T @ pose.rotation,
                      spec.rotation.T @ pose.translation)


def load_intrinsics(path: str | Path) -> CameraIntrinsics:
    """Parse the `key = value` intrinsics text file."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"intrinsics file not found: {path}")
    values: dict[str, float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _INTRINSIC_FIELDS:
            raise InputError(f"{path}:{lineno}: unknown intrinsics field {key!r}")
        if key in values:
            raise InputError(f"{path}:{lineno}: duplicate field {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key}: {val.strip()!r}") from exc
    missing = [f for f in _INTRINSIC_FIELDS if f not in values]
    if missing:
        raise InputError(f"{path}: missing intrinsics fields: {', '.join(missing)}")
    values["width"] = int(values["width"])
    values["height"] = int(values["height"])
    return CameraIntrinsics(**values)


def save_intrinsics(path: str | Path, intr: CameraIntrinsics) -> None:
    lines = [f"{name} = {getattr(intr, name)!r}" for name in _INTRINSIC_FIELDS]
    Path(path).write_text("\n".join(lines) + "\n")
