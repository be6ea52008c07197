"""Binary segmentation metrics: Dice overlap and percentile Hausdorff.

Conventions (they matter when comparing numbers across tools): surfaces
are 6-connected boundary voxels, with voxels outside the array treated as
background; distances are between voxel centers in mm; percentiles use the
nearest-rank rule; the symmetric Hausdorff value is the average of the two
directed percentile distances; Dice of two empty masks is 1.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_erosion
from scipy.spatial import cKDTree

from .volume import Volume

__all__ = ["dice", "hausdorff", "surface_points"]

_CROSS_3D = np.array(
    [
        [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]],
        [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
    ],
    dtype=bool,
)


def _as_binary(mask, name):
    data = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    if not np.all((data == 0) | (data == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return data.astype(bool)


def dice(a, b):
    """Dice overlap 2|A & B| / (|A| + |B|); 1 when both masks are empty."""
    if isinstance(a, Volume) and isinstance(b, Volume):
        a.require_same_grid(b, "masks")
    da = _as_binary(a, "first mask")
    db = _as_binary(b, "second mask")
    if da.shape != db.shape:
        raise ValueError(f"mask shapes differ: {da.shape} vs {db.shape}")
    total = int(da.sum()) + int(db.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(da, db).sum()) / total


def surface_points(mask):
    """World coordinates (mm) of 6-connected boundary voxels, shape (n, 3)."""
    data = _as_binary(mask, "mask")
    interior = binary_erosion(data, structure=_CROSS_3D, border_value=0)
    boundary = data & ~interior
    zz, yy, xx = np.nonzero(boundary)
    spacing = mask.spacing if isinstance(mask, Volume) else (1.0, 1.0, 1.0)
    origin = mask.origin if isinstance(mask, Volume) else (0.0, 0.0, 0.0)
    pts = np.empty((zz.size, 3))
    pts[:, 0] = origin[0] + spacing[0] * xx
    pts[:, 1] = origin[1] + spacing[1] * yy
    pts[:, 2] = origin[2] + spacing[2] * zz
    return pts


def _nearest_rank(sorted_values, percentile):
    k = int(np.ceil(percentile / 100.0 * sorted_values.size))
    return float(sorted_values[max(k, 1) - 1])


def hausdorff(a, b, percentile=95):
    """Symmetric percentile Hausdorff distance between two masks, in mm.

    The directed distance from A to B is the nearest-rank percentile of the
    nearest-surface distances of A's boundary voxels; the symmetric value
    averages the two directions.
    """
    if percentile not in (95, 100):
        raise ValueError(f"percentile must be 95 or 100, got {percentile}")
    if isinstance(a, Volume) and isinstance(b, Volume):
        a.require_same_grid(b, "masks")
    pa = surface_points(a)
    pb = surface_points(b)
    if pa.size == 0 or pb.size == 0:
        raise ValueError("hausdorff requires two non-empty masks")
    d_ab = np.sort(cKDTree(pb).query(pa)[0])
    d_ba = np.sort(cKDTree(pa).query(pb)[0])
    return 0.5 * (_nearest_rank(d_ab, percentile) + _nearest_rank(d_ba, percentile))
