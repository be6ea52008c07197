"""Scalar voxel grids with physical spacing and origin.

A :class:`Volume` is the common container for images, shape-function fields,
probability fields and binary masks.  Data is stored as a 3-D array indexed
``[z, y, x]`` (x fastest), so 2-D images are volumes with a single z slice.
World coordinates of voxel centers are ``origin + index * spacing``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Volume"]


@dataclass
class Volume:
    """A scalar grid plus its physical geometry.

    Parameters
    ----------
    data : ndarray
        Array of shape ``(nz, ny, nx)``.  A 2-D array is promoted to a
        single-slice volume.
    spacing : sequence of 3 floats
        Voxel size in mm, ordered ``(sx, sy, sz)``.
    origin : sequence of 3 floats
        World position of voxel ``(0, 0, 0)`` in mm.
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    _points: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[np.newaxis, :, :]
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 2-D or 3-D, got ndim={self.data.ndim}")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        if len(self.spacing) != 3 or len(self.origin) != 3:
            raise ValueError("spacing and origin must have length 3")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def dims(self):
        """Grid size as ``(nx, ny, nz)``."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def n_voxels(self):
        return self.data.size

    @property
    def voxel_volume(self):
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @classmethod
    def zeros(cls, dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), dtype=np.float64):
        nx, ny, nz = dims
        return cls(np.zeros((nz, ny, nx), dtype=dtype), spacing, origin)

    def like(self, data):
        """A new volume on the same grid holding ``data``."""
        data = np.asarray(data)
        if data.shape != self.data.shape:
            data = data.reshape(self.data.shape)
        return Volume(data, self.spacing, self.origin)

    def points(self):
        """World coordinates of all voxel centers, shape ``(n_voxels, 3)``.

        Row order matches ``data.reshape(-1)`` (x fastest).  The array is
        cached; treat it as read-only.
        """
        if self._points is None:
            nz, ny, nx = self.data.shape
            sx, sy, sz = self.spacing
            ox, oy, oz = self.origin
            xs = ox + sx * np.arange(nx)
            ys = oy + sy * np.arange(ny)
            zs = oz + sz * np.arange(nz)
            zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
            pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
            self._points = np.ascontiguousarray(pts)
        return self._points

    def same_grid(self, other, atol=1e-9):
        return (
            self.data.shape == other.data.shape
            and np.allclose(self.spacing, other.spacing, atol=atol)
            and np.allclose(self.origin, other.origin, atol=atol)
        )

    def require_same_grid(self, other, what="volumes"):
        if not self.same_grid(other):
            raise ValueError(
                f"{what} are on different grids: "
                f"{self.dims}/{self.spacing}/{self.origin} vs "
                f"{other.dims}/{other.spacing}/{other.origin}"
            )
