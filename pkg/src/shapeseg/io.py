"""Volume file I/O: a minimal MetaImage-compatible header + raw data pair.

The on-disk format is a plain-text ``.mhd`` header next to a little-endian
``.raw`` file.  Only ``float32`` (MET_FLOAT) and ``uint8`` (MET_UCHAR)
element types are supported.  Write followed by read is bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

from .volume import Volume

__all__ = [
    "VolumeIOError",
    "VolumeSizeMismatchError",
    "UnknownElementTypeError",
    "MissingDataFileError",
    "read_volume",
    "write_volume",
]

_DTYPE_TO_MET = {np.dtype(np.float32): "MET_FLOAT", np.dtype(np.uint8): "MET_UCHAR"}
_MET_TO_DTYPE = {v: k for k, v in _DTYPE_TO_MET.items()}


class VolumeIOError(ValueError):
    """Base error for malformed volume files."""


class VolumeSizeMismatchError(VolumeIOError):
    """Raw data length does not match DimSize times the element size."""


class UnknownElementTypeError(VolumeIOError):
    """ElementType not in the supported {MET_FLOAT, MET_UCHAR} subset."""


class MissingDataFileError(VolumeIOError):
    """Header references a data file that does not exist."""


def write_volume(volume, path):
    """Write ``volume`` to ``path`` (a ``.mhd`` header plus sibling ``.raw``).

    Data must already be float32 or uint8; conversion is left to the caller
    so the round-trip stays bit-exact.
    """
    path = os.fspath(path)
    if not path.endswith(".mhd"):
        path = path + ".mhd"
    dtype = np.dtype(volume.data.dtype)
    if dtype not in _DTYPE_TO_MET:
        raise UnknownElementTypeError(
            f"unsupported element dtype {dtype}; convert to float32 or uint8 first"
        )
    raw_name = os.path.basename(path)[:-4] + ".raw"
    nx, ny, nz = volume.dims
    header = "\n".join(
        [
            "ObjectType = Image",
            "NDims = 3",
            "BinaryData = True",
            "BinaryDataByteOrderMSB = False",
            f"DimSize = {nx} {ny} {nz}",
            f"ElementSpacing = {volume.spacing[0]:.17g} {volume.spacing[1]:.17g} {volume.spacing[2]:.17g}",
            f"Offset = {volume.origin[0]:.17g} {volume.origin[1]:.17g} {volume.origin[2]:.17g}",
            f"ElementType = {_DTYPE_TO_MET[dtype]}",
            f"ElementDataFile = {raw_name}",
            "",
        ]
    )
    data = np.ascontiguousarray(volume.data)
    if data.dtype.byteorder == ">":  # stored little-endian on disk
        data = data.astype(data.dtype.newbyteorder("<"))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header)
    with open(os.path.join(os.path.dirname(path), raw_name), "wb") as fh:
        fh.write(data.tobytes())
    return path


def _parse_header(path):
    fields = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise VolumeIOError(f"{path}: malformed header line {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    return fields


def read_volume(path):
    """Read a header + raw pair written by :func:`write_volume`."""
    path = os.fspath(path)
    fields = _parse_header(path)
    try:
        ndims = int(fields["NDims"])
        dim_size = [int(v) for v in fields["DimSize"].split()]
        elem_type = fields["ElementType"]
        data_file = fields["ElementDataFile"]
    except KeyError as exc:
        raise VolumeIOError(f"{path}: missing header field {exc}") from None
    if ndims == 2:
        dim_size = dim_size + [1]
    elif ndims != 3:
        raise VolumeIOError(f"{path}: NDims must be 2 or 3, got {ndims}")
    if len(dim_size) != 3:
        raise VolumeIOError(f"{path}: DimSize has {len(dim_size)} entries, expected {ndims}")
    spacing = [float(v) for v in fields.get("ElementSpacing", "1 1 1").split()]
    origin = [float(v) for v in fields.get("Offset", "0 0 0").split()]
    if ndims == 2:
        spacing = (spacing + [1.0])[:3]
        origin = (origin + [0.0])[:3]
    if fields.get("BinaryDataByteOrderMSB", "False") == "True":
        raise VolumeIOError(f"{path}: big-endian data is not supported")
    if elem_type not in _MET_TO_DTYPE:
        raise UnknownElementTypeError(f"{path}: unsupported ElementType {elem_type!r}")
    dtype = _MET_TO_DTYPE[elem_type]

    raw_path = os.path.join(os.path.dirname(path), data_file)
    if not os.path.exists(raw_path):
        raise MissingDataFileError(f"{path}: data file {data_file!r} not found")
    expected = int(np.prod(dim_size)) * dtype.itemsize
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise VolumeSizeMismatchError(
            f"{raw_path}: expected {expected} bytes for DimSize {dim_size}, found {actual}"
        )
    with open(raw_path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype=dtype)
    nx, ny, nz = dim_size
    return Volume(data.reshape(nz, ny, nx).copy(), tuple(spacing), tuple(origin))
