"""Synthetic phantoms: a known geometry plus Gaussian class intensities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .shapes.circle import EllipsePhantomShape
from .volume import Volume

__all__ = ["PhantomSpec", "synth_phantom"]


@dataclass
class PhantomSpec:
    """Recipe for a synthetic image and its ground-truth mask.

    ``geometry`` is either an :class:`EllipsePhantomShape` or a
    ``(shape_function, params)`` pair whose non-negative values define the
    foreground.  Class intensities are Gaussian ``(mean, std)`` pairs; a
    zero std produces a noiseless two-valued image.
    """

    geometry: object
    background: tuple = (0.0, 1.0)
    foreground: tuple = (1.0, 1.0)
    dims: tuple = (64, 64, 1)
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.background[1] < 0 or self.foreground[1] < 0:
            raise ValueError("class standard deviations must be >= 0")

    def grid(self):
        return Volume.zeros(self.dims, self.spacing, self.origin)


def _truth_values(spec, grid):
    if isinstance(spec.geometry, EllipsePhantomShape):
        return spec.geometry.contains(grid.points()[:, :2])
    shape, params = spec.geometry
    return shape.evaluate(params, grid.points()[:, : shape.ndim]) >= 0.0


def synth_phantom(spec):
    """Build (image, truth mask) volumes; bit-reproducible for a fixed seed."""
    grid = spec.grid()
    inside = _truth_values(spec, grid).reshape(grid.data.shape)
    rng = np.random.default_rng(spec.seed)
    fg = rng.normal(spec.foreground[0], spec.foreground[1], size=grid.data.shape)
    bg = rng.normal(spec.background[0], spec.background[1], size=grid.data.shape)
    image = grid.like(np.where(inside, fg, bg))
    truth = grid.like(inside.astype(np.uint8))
    return image, truth
