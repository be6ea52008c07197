from .base import PosedShapeFunction, RigidSplit, ShapeFunction, clip_params, validate_params
from .circle import CircleShape, EllipsePhantomShape
from .cochlea import CochleaModel, CochleaShape

__all__ = [
    "ShapeFunction",
    "PosedShapeFunction",
    "RigidSplit",
    "validate_params",
    "clip_params",
    "CircleShape",
    "EllipsePhantomShape",
    "CochleaModel",
    "CochleaShape",
]
