"""Run configuration: TOML (or JSON) files describing a fit.

A config file has three tables.  ``[fit]`` maps directly onto
:class:`FitConfig` fields, ``[shape]`` selects and initializes the shape
model, and ``[intensity]`` lists the Student-t components per class.  Every
field is optional; ``defaults_toml()`` prints the full default document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .appearance import IntensityParams, StudentTComponent, default_ct_intensity
from .inference import FitConfig
from .shapes import CircleShape, CochleaModel, CochleaShape

__all__ = [
    "RunConfig",
    "load_run_config",
    "parse_run_config",
    "defaults_toml",
    "shape_to_dict",
    "shape_from_dict",
]

_FIT_KEYS = {
    "ref_length", "ref_length_hard", "outer_tol", "inner_tol", "max_cycles",
    "ms_max_outer", "ms_max_inner", "ms_halvings", "mi_max_rounds", "mi_tol",
    "nu_update", "min_scale", "seed",
}

_COCHLEA_DEFORMABLE = ("radial_scale", "radial_decay", "axial_amplitude", "axial_phase")


@dataclass
class RunConfig:
    """Parsed configuration: fit knobs, shape with initial parameters, intensity."""

    fit: FitConfig
    shape: object
    initial_params: np.ndarray
    intensity: IntensityParams
    raw: dict


def _load_document(path):
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        return json.loads(text.decode("utf-8"))
    try:
        return tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError:
        # accept JSON content regardless of extension
        return json.loads(text.decode("utf-8"))


def _build_fit(table):
    unknown = set(table) - _FIT_KEYS
    if unknown:
        raise ValueError(f"unknown [fit] keys: {sorted(unknown)}")
    return FitConfig(**table)


def _build_cochlea(table):
    model_kwargs = dict(table.get("model", {}))
    bounds = table.get("bounds", {})
    for name in _COCHLEA_DEFORMABLE:
        if name in bounds:
            model_kwargs[f"{name}_bounds"] = tuple(bounds[name])
    if "rotation" in bounds:
        model_kwargs["rotation_limit"] = float(bounds["rotation"])
    if "translation" in bounds:
        model_kwargs["translation_limit"] = float(bounds["translation"])
    shape = CochleaShape(CochleaModel(**model_kwargs))
    params = shape.default_params()
    for i, name in enumerate(_COCHLEA_DEFORMABLE):
        if name in table:
            params[i] = float(table[name])
    params[4:7] = np.asarray(table.get("rotation", params[4:7]), dtype=np.float64)
    params[7:10] = np.asarray(table.get("translation", params[7:10]), dtype=np.float64)
    return shape, params


def _build_circle(table):
    bounds = table.get("bounds", {})
    shape = CircleShape(
        center_bounds=(
            tuple(bounds.get("center_x", (-1e3, 1e3))),
            tuple(bounds.get("center_y", (-1e3, 1e3))),
        ),
        radius_bounds=tuple(bounds.get("radius", (1e-6, 1e3))),
    )
    center = table.get("center", (0.0, 0.0))
    params = np.array([center[0], center[1], table.get("radius", 1.0)], dtype=np.float64)
    return shape, params


def _build_intensity(table):
    if not table:
        return default_ct_intensity()
    return IntensityParams.from_dict(table)


def parse_run_config(document, shape_kind=None):
    """Build a RunConfig from a parsed config dict.

    ``shape_kind`` overrides the file's ``shape.kind`` (the CLI flag wins).
    """
    fit_cfg = _build_fit(dict(document.get("fit", {})))
    shape_table = dict(document.get("shape", {}))
    kind = shape_kind or shape_table.get("kind", "cochlea")
    if kind == "cochlea":
        shape, params = _build_cochlea(shape_table)
    elif kind == "circle":
        shape, params = _build_circle(shape_table)
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    intensity = _build_intensity(document.get("intensity", {}))
    return RunConfig(fit=fit_cfg, shape=shape, initial_params=params,
                     intensity=intensity, raw=document)


def load_run_config(path, shape_kind=None):
    return parse_run_config(_load_document(path), shape_kind=shape_kind)


def shape_to_dict(shape):
    """Serializable description of a shape (enough to rebuild it)."""
    if isinstance(shape, CochleaShape):
        m = shape.model
        return {
            "kind": "cochlea",
            "model": {
                "theta_max": m.theta_max,
                "seam_angle": m.seam_angle,
                "base_radius": m.base_radius,
                "axial_decay": m.axial_decay,
                "axial_slope": m.axial_slope,
                "tube_radius_base": m.tube_radius_base,
                "tube_radius_apex": m.tube_radius_apex,
                "radial_scale_bounds": list(m.radial_scale_bounds),
                "radial_decay_bounds": list(m.radial_decay_bounds),
                "axial_amplitude_bounds": list(m.axial_amplitude_bounds),
                "axial_phase_bounds": list(m.axial_phase_bounds),
                "rotation_limit": m.rotation_limit,
                "translation_limit": m.translation_limit,
            },
        }
    if isinstance(shape, CircleShape):
        b = np.asarray(shape.bounds)
        return {
            "kind": "circle",
            "bounds": {
                "center_x": list(b[0]), "center_y": list(b[1]), "radius": list(b[2]),
            },
        }
    raise ValueError(f"cannot serialize shape of type {type(shape).__name__}")


def shape_from_dict(data):
    """Rebuild a shape from :func:`shape_to_dict` output."""
    kind = data.get("kind")
    if kind == "cochlea":
        kwargs = dict(data.get("model", {}))
        for key in ("radial_scale_bounds", "radial_decay_bounds",
                    "axial_amplitude_bounds", "axial_phase_bounds"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return CochleaShape(CochleaModel(**kwargs))
    if kind == "circle":
        bounds = data.get("bounds", {})
        return CircleShape(
            center_bounds=(
                tuple(bounds.get("center_x", (-1e3, 1e3))),
                tuple(bounds.get("center_y", (-1e3, 1e3))),
            ),
            radius_bounds=tuple(bounds.get("radius", (1e-6, 1e3))),
        )
    raise ValueError(f"unknown shape kind {kind!r}")


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, float):
        return f"{value:.17g}" if value != int(value) or abs(value) > 1e15 else f"{value:.1f}"
    return str(value)


def defaults_toml():
    """The full default configuration as a TOML document."""
    cfg = FitConfig()
    lines = ["[fit]"]
    for name in ("ref_length", "ref_length_hard", "outer_tol", "inner_tol",
                 "max_cycles", "ms_max_outer", "ms_max_inner", "ms_halvings",
                 "mi_max_rounds", "mi_tol", "nu_update", "min_scale", "seed"):
        lines.append(f"{name} = {_toml_value(getattr(cfg, name))}")
    model = CochleaModel()
    shape = CochleaShape(model)
    params = shape.default_params()
    lines += ["", "[shape]", 'kind = "cochlea"']
    for i, name in enumerate(_COCHLEA_DEFORMABLE):
        lines.append(f"{name} = {_toml_value(float(params[i]))}")
    lines.append(f"rotation = {_toml_value([0.0, 0.0, 0.0])}")
    lines.append(f"translation = {_toml_value([0.0, 0.0, 0.0])}")
    lines += ["", "[shape.model]"]
    for name in ("theta_max", "tube_radius_base", "tube_radius_apex"):
        lines.append(f"{name} = {_toml_value(float(getattr(model, name)))}")
    lines += ["", "[shape.bounds]"]
    for name in _COCHLEA_DEFORMABLE:
        lines.append(f"{name} = {_toml_value(list(getattr(model, f'{name}_bounds')))}")
    lines.append(f"rotation = {_toml_value(float(model.rotation_limit))}")
    lines.append(f"translation = {_toml_value(float(model.translation_limit))}")
    for klass, comps in (("background", default_ct_intensity().background),
                         ("foreground", default_ct_intensity().foreground)):
        for comp in comps:
            lines += ["", f"[[intensity.{klass}]]"]
            for fname in ("weight", "mean", "scale", "dof"):
                lines.append(f"{fname} = {_toml_value(float(getattr(comp, fname)))}")
    return "\n".join(lines) + "\n"
