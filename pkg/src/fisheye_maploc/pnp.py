"""Initial pose estimation from rectified-image <-> satellite correspondences.

Satellite pixels lift to 3-D through the map's metric scale and the LiDAR
ground height; the pose is then solved on the virtual rectified (pinhole)
camera by P3P inside a RANSAC loop, polished by damped Gauss-Newton on all
inliers, and finally composed back onto the fisheye frame through the
rectification rotation.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import (CameraIntrinsics, CameraPose, RectificationSpec,
                     fisheye_pose_from_virtual, project_points,
                     unproject_pixels, virtual_intrinsics)
from .exceptions import (DegenerateGeometryError, InputError, PnPFailure)
from .priormap import LidarGroundMap, SatelliteMap, ground_height_at
from .rotations import so3_exp

__all__ = [
    "CorrespondenceSet", "LiftedMatches", "PnPResult",
    "lift_correspondences", "p3p_solve", "ransac_pnp",
    "reprojection_errors", "refine_pose",
]

P3P_REPROJECTION_TOL = 1e-6   # px; candidate acceptance on the minimal set
MIN_TRIANGLE_AREA = 1e-6      # m^2; collinearity guard


@dataclass(frozen=True)
class CorrespondenceSet:
    """Paired pixels: rectified fisheye view <-> satellite raster.

    The inlier mask is only populated in synthetic mode, where ground truth
    is known; estimators never read it.
    """

    u_rect: np.ndarray
    v_rect: np.ndarray
    u_sat: np.ndarray
    v_sat: np.ndarray
    inlier_mask: np.ndarray | None = None

    def __post_init__(self):
        arrs = {}
        for name in ("u_rect", "v_rect", "u_sat", "v_sat"):
            a = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(a)):
                raise InputError(f"correspondence field {name} has non-finite values")
            arrs[name] = a
        n = arrs["u_rect"].shape[0]
        if any(a.shape[0] != n for a in arrs.values()):
            raise InputError("correspondence columns have mismatched lengths")
        for name, a in arrs.items():
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.inlier_mask is not None:
            m = np.asarray(self.inlier_mask, dtype=bool).reshape(-1)
            if m.shape[0] != n:
                raise InputError("inlier mask length mismatch")
            m.flags.writeable = False
            object.__setattr__(self, "inlier_mask", m)

    def __len__(self) -> int:
        return self.u_rect.shape[0]

    @property
    def rect_px(self) -> np.ndarray:
        return np.stack([self.u_rect, self.v_rect], axis=1)

    @property
    def sat_px(self) -> np.ndarray:
        return np.stack([self.u_sat, self.v_sat], axis=1)

    @classmethod
    def load_csv(cls, path: str | Path) -> "CorrespondenceSet":
        """Read `u_rect,v_rect,u_sat,v_sat[,inlier]` (header optional)."""
        path = Path(path)
        if not path.is_file():
            raise InputError(f"correspondence file not found: {path}")
        rows, flags = [], []
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if lineno == 1 and any("rect" in c or "sat" in c for c in row):
                    continue
                if len(row) not in (4, 5):
                    raise InputError(f"{path}:{lineno}: expected 4 or 5 columns")
                try:
                    rows.append([float(c) for c in row[:4]])
                    if len(row) == 5:
                        flags.append(bool(int(row[4])))
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: bad value: {exc}") from exc
        if not rows:
            raise InputError(f"correspondence file {path} is empty")
        arr = np.asarray(rows)
        mask = np.asarray(flags) if len(flags) == len(rows) else None
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], mask)

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["u_rect", "v_rect", "u_sat", "v_sat"]
            if self.inlier_mask is not None:
                header.append("inlier")
            writer.writerow(header)
            for i in range(len(self)):
                row = [repr(float(self.u_rect[i])), repr(float(self.v_rect[i])),
                       repr(float(self.u_sat[i])), repr(float(self.v_sat[i]))]
                if self.inlier_mask is not None:
                    row.append(int(self.inlier_mask[i]))
                writer.writerow(row)


@dataclass(frozen=True)
class LiftedMatches:
    """2-D rectified pixels paired with metric 3-D ground points."""

    rect_px: np.ndarray       # (N, 2)
    world_pts: np.ndarray     # (N, 3)
    height_fallback: np.ndarray  # (N,) True where the lidar lookup failed

    def __len__(self) -> int:
        return self.rect_px.shape[0]


@dataclass(frozen=True)
class PnPResult:
    pose: CameraPose                 # fisheye camera in the map frame
    virtual_pose: CameraPose         # rectified (pinhole) camera pose
    inlier_indices: np.ndarray
    mean_reprojection_error: float   # px over inliers, rectified image
    iterations: int                  # RANSAC hypotheses evaluated

    def to_json_dict(self) -> dict:
        d = self.pose.to_json_dict()
        d["virtual_pose"] = self.virtual_pose.to_json_dict()
        d["inlier_indices"] = [int(i) for i in self.inlier_indices]
        d["mean_reprojection_error_px"] = float(self.mean_reprojection_error)
        d["iterations"] = int(self.iterations)
        return d


def lift_correspondences(matches: CorrespondenceSet, sat: SatelliteMap,
                         lidar: LidarGroundMap,
                         fallback_z: float = 0.0) -> LiftedMatches:
    """Satellite pixel -> world (x, y) by georeference, z by ground height.

    Pairs whose height lookup finds no nearby lidar points fall back to
    fallback_z and are flagged.
    """
    if len(matches) == 0:
        raise InputError("no correspondences to lift")
    x, y = sat.pixel_to_world(matches.u_sat, matches.v_sat)
    z = np.full(len(matches), fallback_z, dtype=np.float64)
    fallback = np.zeros(len(matches), dtype=bool)
    for i in range(len(matches)):
        try:
            z[i] = ground_height_at(lidar, (x[i], y[i]))
        except DegenerateGeometryError:
            fallback[i] = True
    return LiftedMatches(rect_px=matches.rect_px,
                         world_pts=np.stack([x, y, z], axis=1),
                         height_fallback=fallback)


def _bearings(intr: CameraIntrinsics, image_pts: np.ndarray) -> np.ndarray:
    rays, valid = unproject_pixels(intr, image_pts)
    if not np.all(valid):
        raise DegenerateGeometryError("image point not unprojectable under the intrinsics")
    return rays


def _kabsch(world: np.ndarray, cam: np.ndarray) -> CameraPose:
    """Rigid transform with cam ~= R @ world + t (least squares)."""
    cw = world.mean(axis=0)
    cc = cam.mean(axis=0)
    H = (world - cw).T @ (cam - cc)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return CameraPose(R, cc - R @ cw)


def p3p_solve(image_pts: np.ndarray, world_pts: np.ndarray,
              intr: CameraIntrinsics) -> list[CameraPose]:
    """Three-point resection (Grunert): all real solutions that reproject the
    minimal set to within 1e-6 px."""
    image_pts = np.asarray(image_pts, dtype=np.float64).reshape(3, 2)
    world_pts = np.asarray(world_pts, dtype=np.float64).reshape(3, 3)
    area = 0.5 * np.linalg.norm(np.cross(world_pts[1] - world_pts[0],
                                         world_pts[2] - world_pts[0]))
    if area <= MIN_TRIANGLE_AREA:
        raise DegenerateGeometryError(
            f"world points are (near-)collinear: triangle area {area:.2e} m^2")
    f = _bearings(intr, image_pts)

    a2 = float(np.sum((world_pts[1] - world_pts[2]) ** 2))
    b2 = float(np.sum((world_pts[0] - world_pts[2]) ** 2))
    c2 = float(np.sum((world_pts[0] - world_pts[1]) ** 2))
    ca = float(f[1] @ f[2])
    cb = float(f[0] @ f[2])
    cg = float(f[0] @ f[1])

    A4 = a2**2 - 2*a2*b2 - 2*a2*c2 + b2**2 - 4*b2*c2*ca**2 + 2*b2*c2 + c2**2
    A3 = (-4*a2**2*cb + 4*a2*b2*ca*cg + 4*a2*b2*cb + 8*a2*c2*cb
          - 4*b2**2*ca*cg + 8*b2*c2*ca**2*cb + 4*b2*c2*ca*cg
          - 4*b2*c2*cb - 4*c2**2*cb)
    A2 = (4*a2**2*cb**2 + 2*a2**2 - 8*a2*b2*ca*cb*cg - 4*a2*b2*cg**2
          - 8*a2*c2*cb**2 - 4*a2*c2 + 4*b2**2*ca**2 + 4*b2**2*cg**2
          - 2*b2**2 - 4*b2*c2*ca**2 - 8*b2*c2*ca*cb*cg + 4*c2**2*cb**2
          + 2*c2**2)
    A1 = (-4*a2**2*cb + 4*a2*b2*ca*cg + 8*a2*b2*cb*cg**2 - 4*a2*b2*cb
          + 8*a2*c2*cb - 4*b2**2*ca*cg + 4*b2*c2*ca*cg + 4*b2*c2*cb
          - 4*c2**2*cb)
    A0 = a2**2 - 4*a2*b2*cg**2 + 2*a2*b2 - 2*a2*c2 + b2**2 - 2*b2*c2 + c2**2

    coeffs = np.array([A4, A3, A2, A1, A0])
    scale = np.max(np.abs(coeffs))
    if scale == 0.0:
        raise DegenerateGeometryError("degenerate P3P system")
    roots = np.roots(coeffs / scale)

    candidates: list[CameraPose] = []
    for root in roots:
        if abs(root.imag) > 1e-8 * max(1.0, abs(root.real)):
            continue
        v = float(root.real)
        for _ in range(3):  # Newton polish
            fv = (((A4 * v + A3) * v + A2) * v + A1) * v + A0
            dfv = ((4*A4 * v + 3*A3) * v + 2*A2) * v + A1
            if dfv == 0.0:
                break
            v -= fv / dfv
        if v <= 0.0:
            continue
        s1sq = b2 / (1.0 + v * v - 2.0 * v * cb)
        if s1sq <= 0.0:
            continue
        den = 2.0 * b2 * (cg - v * ca)
        num = b2 * (1.0 - v * v) + (a2 - c2) * (1.0 + v * v - 2.0 * v * cb)
        if abs(den) > 1e-12 * max(abs(num), b2):
            us = [num / den]
        else:
            rhs = c2 * (1.0 + v * v - 2.0 * v * cb) / b2
            disc = cg * cg - (1.0 - rhs)
            if disc < 0.0:
                continue
            us = [cg + np.sqrt(disc), cg - np.sqrt(disc)]
        for u in us:
            if u <= 0.0:
                continue
            s1 = np.sqrt(s1sq)
            dists = np.array([s1, u * s1, v * s1])
            pose = _kabsch(world_pts, dists[:, None] * f)
            px, valid = project_points(intr, pose, world_pts, check_bounds=False)
            if not np.all(valid):
                continue
            err = np.linalg.norm(px - image_pts, axis=1).max()
            if err < P3P_REPROJECTION_TOL:
                if not any(np.allclose(pose.rotation, c.rotation, atol=1e-9)
                           and np.allclose(pose.translation, c.translation, atol=1e-9)
                           for c in candidates):
                    candidates.append(pose)
    return candidates


def reprojection_errors(pose: CameraPose, intr: CameraIntrinsics,
                        image_pts: np.ndarray, world_pts: np.ndarray) -> np.ndarray:
    """Pixel distance between projections and observations; inf when the
    point does not project."""
    px, valid = project_points(intr, pose, world_pts, check_bounds=False)
    err = np.full(world_pts.shape[0], np.inf)
    err[valid] = np.linalg.norm(px[valid] - image_pts[valid], axis=1)
    return err


def refine_pose(pose: CameraPose, intr: CameraIntrinsics,
                image_pts: np.ndarray, world_pts: np.ndarray,
                max_iters: int = 50, gtol: float = 1e-10):
    """Damped Gauss-Newton (Levenberg-style) on total squared reprojection
    error. The rotation update is a tangent-space 3-vector composed onto the
    current rotation, so no Euler singularities are involved; the Jacobian
    is taken by forward differences on the 6 tangent parameters.
    """
    R = pose.rotation.copy()
    t = pose.translation.copy()
    lam = 1e-3

    def residuals(Rc, tc):
        px, valid = project_points(intr, CameraPose(Rc, tc), world_pts,
                                   check_bounds=False)
        res = px - image_pts
        res[~valid] = 1e6
        return res.ravel()

    def jacobian(Rc, tc, base):
        J = np.zeros((base.size, 6))
        eps = 1e-7
        for k in range(6):
            dw = np.zeros(6)
            dw[k] = eps
            pert = residuals(so3_exp(dw[:3]) @ Rc, tc + dw[3:])
            J[:, k] = (pert - base) / eps
        return J

    res = residuals(R, t)
    cost = float(res @ res)
    iters = 0
    for iters in range(1, max_iters + 1):
        J = jacobian(R, t, res)
        g = J.T @ res
        if np.max(np.abs(g)) < gtol:
            break
        JtJ = J.T @ J
        step_ok = False
        for _ in range(12):
            A = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            R_new = so3_exp(delta[:3]) @ R
            t_new = t + delta[3:]
            res_new = residuals(R_new, t_new)
            cost_new = float(res_new @ res_new)
            if cost_new < cost:
                R, t, cost, res = R_new, t_new, cost_new, res_new
                lam = max(lam * 0.3, 1e-12)
                step_ok = True
                break
            lam *= 10.0
        if not step_ok:
            break
    # re-orthonormalize against accumulated drift
    U, _, Vt = np.linalg.svd(R)
    R = U @ np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))]) @ Vt
    refined = CameraPose(R, t)
    errs = reprojection_errors(refined, intr, image_pts, world_pts)
    return refined, float(np.mean(errs)), iters


def ransac_pnp(lifted: LiftedMatches, intr: CameraIntrinsics,
               threshold: float = 2.0, confidence: float = 0.999,
               max_iters: int = 2000, seed: int = 0,
               rect_spec: RectificationSpec | None = None) -> PnPResult:
    """P3P hypothesize-and-verify with nonlinear polishing on the inliers.

    `intr` describes the camera the 2-D points live in (the virtual pinhole
    camera when a rectification spec is given); the returned PnPResult holds
    both that pose and the fisheye pose obtained by composing the spec's
    rotation back on.
    """
    n = len(lifted)
    if n < 4:
        raise InputError(f"PnP needs at least 4 correspondences, got {n}")
    if threshold <= 0:
        raise InputError("inlier threshold must be > 0")
    image_pts = lifted.rect_px
    world_pts = lifted.world_pts
    rng = np.random.default_rng(seed)

    best_pose: CameraPose | None = None
    best_inliers: np.ndarray | None = None
    best_count = 0
    best_mean = np.inf
    needed = max_iters
    it = 0
    while it < needed:
        it += 1
        idx = rng.choice(n, size=3, replace=False)
        try:
            candidates = p3p_solve(image_pts[idx], world_pts[idx], intr)
        except DegenerateGeometryError:
            continue
        for pose in candidates:
            errs = reprojection_errors(pose, intr, image_pts, world_pts)
            inliers = errs <= threshold
            count = int(np.count_nonzero(inliers))
            if count < 4:
                continue
            mean_err = float(np.mean(errs[inliers]))
            if count > best_count or (count == best_count and mean_err < best_mean):
                best_count = count
                best_mean = mean_err
                best_inliers = inliers
                best_pose = pose
                w = count / n
                denom = np.log1p(-min(w**3, 1 - 1e-12))
                if denom < 0:
                    needed = min(max_iters,
                                 int(np.ceil(np.log(1 - confidence) / denom)))
    if best_pose is None or best_inliers is None:
        raise PnPFailure(
            f"RANSAC found no hypothesis with >= 4 inliers at {threshold} px "
            f"after {it} iterations over {n} correspondences")

    inlier_idx = np.flatnonzero(best_inliers)
    refined, _, _ = refine_pose(best_pose, intr,
                                image_pts[inlier_idx], world_pts[inlier_idx])
    # final consensus: re-collect inliers under the polished pose and polish
    # once more so the reported error set is consistent with the output pose
    errs = reprojection_errors(refined, intr, image_pts, world_pts)
    grown = np.flatnonzero(errs <= threshold)
    if grown.size >= 4:
        refined, _, _ = refine_pose(refined, intr,
                                    image_pts[grown], world_pts[grown])
        errs = reprojection_errors(refined, intr, image_pts, world_pts)
    inlier_idx = np.flatnonzero(errs <= threshold)
    if inlier_idx.size < 4:
        raise PnPFailure(
            "refinement left fewer than 4 correspondences within the "
            f"{threshold} px threshold")
    mean_err = float(np.mean(errs[inlier_idx]))

    spec = rect_spec
    if spec is None:
        fisheye_pose = refined
    else:
        fisheye_pose = fisheye_pose_from_virtual(refined, spec)
    return PnPResult(pose=fisheye_pose, virtual_pose=refined,
                     inlier_indices=inlier_idx,
                     mean_reprojection_error=mean_err, iterations=it)


def save_pnp_json(result: PnPResult, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n")


def load_pose_json(path: str | Path) -> CameraPose:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"pose file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"pose file {path} is not valid JSON: {exc}") from exc
    return CameraPose.from_json_dict(doc)
