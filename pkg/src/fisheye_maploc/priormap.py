"""Co-registered prior map: metric satellite raster + LiDAR ground points.

World frame W: x east, y north, z up. Satellite raster is north-up: column
index grows with +x, row index grows with -y. `origin` is the world (x, y)
of the center of pixel (0, 0) of the *root* raster; crops keep the root
origin and track an integer pixel offset so georeferencing of retained
pixels is bit-identical to the parent map.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DegenerateGeometryError, InputError
from .imageops import load_gray, save_gray

__all__ = [
    "SatelliteMap", "LidarGroundMap", "GpsInit", "PriorMap", "PointBatch",
    "load_world_file", "save_world_file", "load_lidar_csv", "save_lidar_csv",
    "load_prior_map", "crop_satellite", "ground_height_at",
]

WORLD_FILE_AXIS_TAG = "north-up"

# Height lookup: inverse-distance weighting over the k nearest points
# within a fixed radius.
HEIGHT_LOOKUP_K = 8
HEIGHT_LOOKUP_RADIUS = 1.0


@dataclass(frozen=True)
class SatelliteMap:
    raster: np.ndarray          # (H, W) uint8
    resolution: float           # meters per pixel
    origin: np.ndarray          # world (x, y) of root pixel (0, 0) center
    col0: int = 0               # offset of this raster in the root raster
    row0: int = 0

    def __post_init__(self):
        raster = np.asarray(self.raster)
        if raster.ndim != 2 or raster.size == 0:
            raise InputError("satellite raster must be a non-empty 2-D array")
        if raster.dtype != np.uint8:
            raise InputError(f"satellite raster must be uint8, got {raster.dtype}")
        if self.resolution <= 0:
            raise InputError(f"satellite resolution must be > 0, got {self.resolution}")
        origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        raster = raster.copy() if raster.flags.writeable else raster
        raster.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "raster", raster)
        object.__setattr__(self, "origin", origin)

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]

    def pixel_to_world(self, cols, rows):
        """(col, row) -> world (x, y); fractional pixels and extrapolation OK."""
        cols = np.asarray(cols, dtype=np.float64)
        rows = np.asarray(rows, dtype=np.float64)
        x = self.origin[0] + (cols + self.col0) * self.resolution
        y = self.origin[1] - (rows + self.row0) * self.resolution
        return x, y

    def world_to_pixel(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        cols = (x - self.origin[0]) / self.resolution - self.col0
        rows = (self.origin[1] - y) / self.resolution - self.row0
        return cols, rows


@dataclass(frozen=True)
class GpsInit:
    """Noisy position prior (no orientation) used to crop the search region."""

    x: float
    y: float
    search_radius: float

    def __post_init__(self):
        if self.search_radius <= 0:
            raise InputError(f"search radius must be > 0, got {self.search_radius}")


@dataclass(frozen=True)
class PointBatch:
    """A slice of LiDAR ground points in deterministic order."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    reflectivity: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.z], axis=1)


class LidarGroundMap:
    """Ground points (x, y, z, reflectivity) with a uniform-grid 2-D index.

    Immutable after construction; all queries return point indices in
    ascending original order, which makes every downstream computation
    order-deterministic.
    """

    def __init__(self, x, y, z, reflectivity, cell_size: float = 2.0):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        refl = np.asarray(reflectivity)
        if not (x.shape == y.shape == z.shape == refl.shape) or x.ndim != 1:
            raise InputError("lidar point arrays must be equal-length 1-D")
        if x.size == 0:
            raise InputError("lidar map has no points")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)) or not np.all(np.isfinite(z)):
            raise InputError("lidar coordinates contain non-finite values")
        fl = np.asarray(refl, dtype=np.float64)
        if np.any(fl != np.floor(fl)) or fl.min() < 0 or fl.max() > 255:
            bad = int(np.argmax((fl != np.floor(fl)) | (fl < 0) | (fl > 255)))
            raise InputError(
                f"reflectivity must be an integer in [0, 255]; row {bad} has {refl[bad]!r}")
        if cell_size <= 0:
            raise InputError("index cell size must be > 0")
        self.x = x
        self.y = y
        self.z = z
        self.reflectivity = fl.astype(np.uint8)
        self.cell_size = float(cell_size)
        for arr in (self.x, self.y, self.z, self.reflectivity):
            arr.flags.writeable = False
        self._build_index()

    def __len__(self) -> int:
        return self.x.shape[0]

    def _build_index(self):
        self._xmin = float(self.x.min())
        self._ymin = float(self.y.min())
        ix = np.floor((self.x - self._xmin) / self.cell_size).astype(np.int64)
        iy = np.floor((self.y - self._ymin) / self.cell_size).astype(np.int64)
        self._nx = int(ix.max()) + 1
        self._ny = int(iy.max()) + 1
        flat = ix * self._ny + iy
        order = np.argsort(flat, kind="stable")
        self._order = order
        self._cell_of_sorted = flat[order]
        # CSR-style starts for each occupied cell
        self._cell_ids, self._cell_starts = np.unique(self._cell_of_sorted,
                                                      return_index=True)

    def _cells_in_box(self, xmin, xmax, ymin, ymax):
        ix0 = max(int(np.floor((xmin - self._xmin) / self.cell_size)), 0)
        iy0 = max(int(np.floor((ymin - self._ymin) / self.cell_size)), 0)
        ix1 = min(int(np.floor((xmax - self._xmin) / self.cell_size)), self._nx - 1)
        iy1 = min(int(np.floor((ymax - self._ymin) / self.cell_size)), self._ny - 1)
        if ix1 < ix0 or iy1 < iy0:
            return np.empty(0, dtype=np.int64)
        xs = np.arange(ix0, ix1 + 1, dtype=np.int64)
        ys = np.arange(iy0, iy1 + 1, dtype=np.int64)
        return (xs[:, None] * self._ny + ys[None, :]).ravel()

    def query_box(self, xmin: float, xmax: float, ymin: float, ymax: float) -> np.ndarray:
        """Indices of points with xmin <= x <= xmax and ymin <= y <= ymax."""
        cells = self._cells_in_box(xmin, xmax, ymin, ymax)
        if cells.size == 0:
            return np.empty(0, dtype=np.int64)
        pos = np.searchsorted(self._cell_ids, cells)
        hit = (pos < self._cell_ids.size)
        hit[hit] = self._cell_ids[pos[hit]] == cells[hit]
        chunks = []
        starts = np.append(self._cell_starts, len(self))
        for p in pos[hit]:
            chunks.append(self._order[starts[p]:starts[p + 1]])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        idx = np.concatenate(chunks)
        m = ((self.x[idx] >= xmin) & (self.x[idx] <= xmax)
             & (self.y[idx] >= ymin) & (self.y[idx] <= ymax))
        return np.sort(idx[m])

    def query_disc(self, cx: float, cy: float, radius: float) -> np.ndarray:
        """Indices of points within `radius` of (cx, cy), ascending."""
        if radius <= 0:
            raise InputError("query radius must be > 0")
        idx = self.query_box(cx - radius, cx + radius, cy - radius, cy + radius)
        if idx.size == 0:
            return idx
        d2 = (self.x[idx] - cx) ** 2 + (self.y[idx] - cy) ** 2
        return idx[d2 <= radius * radius]

    def take(self, idx: np.ndarray) -> PointBatch:
        return PointBatch(self.x[idx], self.y[idx], self.z[idx],
                          self.reflectivity[idx])

    def all_points(self) -> PointBatch:
        idx = np.arange(len(self))
        return self.take(idx)


def query_ground_points(lidar: LidarGroundMap, center, radius: float,
                        max_points: int | None = None) -> PointBatch:
    """All points within the disc, subsampled to <= max_points by a stable
    stride so repeated calls return the identical set."""
    cx, cy = float(center[0]), float(center[1])
    idx = lidar.query_disc(cx, cy, radius)
    if max_points is not None and max_points > 0 and idx.size > max_points:
        stride = int(np.ceil(idx.size / max_points))
        idx = idx[::stride]
    return lidar.take(idx)


def subsample_stride(batch: PointBatch, max_points: int | None) -> PointBatch:
    if max_points is None or max_points <= 0 or len(batch) <= max_points:
        return batch
    stride = int(np.ceil(len(batch) / max_points))
    sel = slice(None, None, stride)
    return PointBatch(batch.x[sel], batch.y[sel], batch.z[sel],
                      batch.reflectivity[sel])


def ground_height_at(lidar: LidarGroundMap, xy) -> float:
    """Inverse-distance-weighted height over the nearest points.

    Uses the k = 8 nearest points within 1 m; an exact positional hit short
    circuits to that point's z.
    """
    cx, cy = float(xy[0]), float(xy[1])
    idx = lidar.query_disc(cx, cy, HEIGHT_LOOKUP_RADIUS)
    if idx.size == 0:
        raise DegenerateGeometryError(
            f"no lidar points within {HEIGHT_LOOKUP_RADIUS} m of ({cx}, {cy}); off-map query")
    d = np.hypot(lidar.x[idx] - cx, lidar.y[idx] - cy)
    nearest = np.argsort(d, kind="stable")[:HEIGHT_LOOKUP_K]
    d = d[nearest]
    zs = lidar.z[idx[nearest]]
    if d[0] < 1e-12:
        return float(zs[0])
    w = 1.0 / d
    return float(np.sum(w * zs) / np.sum(w))


@dataclass(frozen=True)
class PriorMap:
    satellite: SatelliteMap
    lidar: LidarGroundMap
    lidar_path: Path | None = field(default=None, compare=False)


def load_world_file(path: str | Path) -> tuple[float, float, float]:
    """Parse the 4-line world file: resolution, origin_x, origin_y, axis tag."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"world file not found: {path}")
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if len(lines) != 4:
        raise InputError(f"world file {path} must have 4 lines, found {len(lines)}")
    try:
        resolution = float(lines[0])
        ox = float(lines[1])
        oy = float(lines[2])
    except ValueError as exc:
        raise InputError(f"world file {path}: non-numeric entry: {exc}") from exc
    if lines[3] != WORLD_FILE_AXIS_TAG:
        raise InputError(
            f"world file {path}: axis tag must be {WORLD_FILE_AXIS_TAG!r}, got {lines[3]!r}")
    if resolution <= 0:
        raise InputError(f"world file {path}: resolution must be > 0, got {resolution}")
    return resolution, ox, oy


def save_world_file(path: str | Path, sat: SatelliteMap) -> None:
    ox, oy = sat.pixel_to_world(0.0, 0.0)
    Path(path).write_text(
        f"{sat.resolution!r}\n{float(ox)!r}\n{float(oy)!r}\n{WORLD_FILE_AXIS_TAG}\n")


def load_lidar_csv(path: str | Path, cell_size: float = 2.0) -> LidarGroundMap:
    """Load `x,y,z,reflectivity` CSV (header optional)."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"lidar file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and any(c.strip().lower() in ("x", "reflectivity") for c in row):
                continue  # header
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-numeric value: {exc}") from exc
    if not rows:
        raise InputError(f"lidar file {path} contains no points")
    arr = np.asarray(rows, dtype=np.float64)
    return LidarGroundMap(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                          cell_size=cell_size)


def save_lidar_csv(path: str | Path, lidar: LidarGroundMap) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "reflectivity"])
        for i in range(len(lidar)):
            writer.writerow([repr(lidar.x[i]), repr(lidar.y[i]),
                             repr(lidar.z[i]), int(lidar.reflectivity[i])])


def load_prior_map(sat_path: str | Path, world_path: str | Path,
                   lidar_path: str | Path, cell_size: float = 2.0) -> PriorMap:
    """Load and co-register the satellite raster and the LiDAR point store."""
    raster = load_gray(sat_path)
    resolution, ox, oy = load_world_file(world_path)
    sat = SatelliteMap(raster, resolution, np.array([ox, oy]))
    lidar = load_lidar_csv(lidar_path, cell_size=cell_size)
    return PriorMap(satellite=sat, lidar=lidar, lidar_path=Path(lidar_path))


def save_satellite(sat_path: str | Path, world_path: str | Path,
                   sat: SatelliteMap) -> None:
    save_gray(sat_path, sat.raster)
    save_world_file(world_path, sat)


def crop_satellite(sat: SatelliteMap, init: GpsInit) -> SatelliteMap:
    """Square crop of side 2 * search_radius centered on the GPS prior.

    Georeferencing of retained pixels is preserved exactly (the crop keeps
    the root origin and shifts integer pixel offsets only).
    """
    ccol, crow = sat.world_to_pixel(init.x, init.y)
    half = int(round(init.search_radius / sat.resolution))
    c0 = int(round(float(ccol))) - half
    r0 = int(round(float(crow))) - half
    c1 = c0 + 2 * half
    r1 = r0 + 2 * half
    c0c, c1c = max(c0, 0), min(c1, sat.width)
    r0c, r1c = max(r0, 0), min(r1, sat.height)
    if c0c >= c1c or r0c >= r1c:
        raise InputError(
            f"GPS init ({init.x}, {init.y}) r={init.search_radius} does not "
            f"intersect the satellite raster")
    return SatelliteMap(sat.raster[r0c:r1c, c0c:c1c].copy(), sat.resolution,
                        sat.origin, col0=sat.col0 + c0c, row0=sat.row0 + r0c)
