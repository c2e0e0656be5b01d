"""Exception hierarchy shared across the package.

The CLI and service map these onto exit codes / HTTP error payloads:
InputError -> 2, PnPFailure -> 3, MIFailure -> 4.
"""


class MapLocError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MapLocError):
    """Bad or inconsistent user input (files, flags, dimensions, ranges)."""


class CameraModelError(MapLocError):
    """Projection/unprojection failed (invalid cone, non-convergence)."""


class DegenerateGeometryError(MapLocError):
    """Geometric degeneracy (collinear points, empty neighborhoods)."""


class PnPFailure(MapLocError):
    """RANSAC could not produce a pose meeting the inlier requirements."""


class MIFailure(MapLocError):
    """Mutual-information refinement had no valid grid cell to evaluate."""
