import numpy as np
import pytest

from shapeseg import (MissingDataFileError, UnknownElementTypeError, Volume,
                      VolumeSizeMismatchError, read_volume, write_volume)


def _volume(dtype=np.float32, dims=(7, 5, 3)):
    nx, ny, nz = dims
    rng = np.random.default_rng(0)
    if dtype == np.uint8:
        data = (rng.random((nz, ny, nx)) > 0.5).astype(np.uint8)
    else:
        data = rng.normal(size=(nz, ny, nx)).astype(dtype)
    return Volume(data, (0.5, 0.25, 1.5), (-1.0, 2.0, 0.25))


@pytest.mark.parametrize("dtype", [np.float32, np.uint8])
def test_round_trip_bit_identical(tmp_path, dtype):
    vol = _volume(dtype)
    path = write_volume(vol, tmp_path / "vol.mhd")
    back = read_volume(path)
    assert back.data.dtype == np.dtype(dtype)
    assert np.array_equal(back.data, vol.data)
    assert back.spacing == vol.spacing
    assert back.origin == vol.origin
    # a rewrite of the re-read volume is byte-identical, header included
    sub = tmp_path / "again"
    sub.mkdir()
    write_volume(back, sub / "vol.mhd")
    assert (sub / "vol.raw").read_bytes() == (tmp_path / "vol.raw").read_bytes()
    assert (sub / "vol.mhd").read_text() == (tmp_path / "vol.mhd").read_text()


def test_two_dimensional_volume(tmp_path):
    vol = Volume(np.arange(12, dtype=np.float32).reshape(3, 4), (0.1, 0.2, 1.0))
    assert vol.dims == (4, 3, 1)
    path = write_volume(vol, tmp_path / "flat.mhd")
    back = read_volume(path)
    assert back.dims == (4, 3, 1)
    assert np.array_equal(back.data, vol.data)


def test_truncated_data_file(tmp_path):
    vol = _volume()
    path = write_volume(vol, tmp_path / "vol.mhd")
    raw = tmp_path / "vol.raw"
    raw.write_bytes(raw.read_bytes()[:-4])
    with pytest.raises(VolumeSizeMismatchError):
        read_volume(path)


def test_missing_data_file(tmp_path):
    vol = _volume()
    path = write_volume(vol, tmp_path / "vol.mhd")
    (tmp_path / "vol.raw").unlink()
    with pytest.raises(MissingDataFileError):
        read_volume(path)


def test_unknown_element_type(tmp_path):
    vol = _volume()
    path = write_volume(vol, tmp_path / "vol.mhd")
    header = (tmp_path / "vol.mhd").read_text().replace("MET_FLOAT", "MET_SHORT")
    (tmp_path / "vol.mhd").write_text(header)
    with pytest.raises(UnknownElementTypeError):
        read_volume(path)


def test_write_rejects_float64(tmp_path):
    vol = Volume(np.zeros((2, 2, 2)), (1, 1, 1))
    with pytest.raises(UnknownElementTypeError):
        write_volume(vol, tmp_path / "bad.mhd")


def test_points_order_matches_flat_data():
    vol = Volume.zeros((3, 2, 2), spacing=(1.0, 2.0, 3.0), origin=(10.0, 20.0, 30.0))
    pts = vol.points()
    # first point is the origin, second steps in x (the fastest axis)
    assert np.allclose(pts[0], (10.0, 20.0, 30.0))
    assert np.allclose(pts[1], (11.0, 20.0, 30.0))
    assert np.allclose(pts[3], (10.0, 22.0, 30.0))
    assert np.allclose(pts[6], (10.0, 20.0, 33.0))
