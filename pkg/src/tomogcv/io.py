"""Image / sinogram file formats: text header + raw float64 payload, and CSV.

A dataset is a pair of files: ``name.hdr`` with ``key = value`` lines (kind,
dimensions, physical sizes, dtype, byte order, payload filename) and
``name.raw`` holding the row-major little-endian float64 payload.  CSV
import/export is provided for interop and debugging.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .projector import Image, ImageGrid, Sinogram, SinogramGeometry

_DTYPE = "float64"
_BYTEORDER = "little"


def _write_header(path: Path, fields: dict) -> None:
    lines = [f"{k} = {v}" for k, v in fields.items()]
    path.write_text("\n".join(lines) + "\n")


def _read_header(path: Path) -> dict:
    fields = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def _check_format(fields: dict, path: Path) -> None:
    if fields.get("dtype") != _DTYPE:
        raise ValueError(f"{path}: unsupported dtype {fields.get('dtype')!r}")
    if fields.get("byteorder") != _BYTEORDER:
        raise ValueError(f"{path}: unsupported byteorder {fields.get('byteorder')!r}")


def _read_payload(hdr_path: Path, fields: dict, shape: tuple[int, int]) -> np.ndarray:
    raw_path = hdr_path.parent / fields["data"]
    data = np.fromfile(raw_path, dtype="<f8")
    expected = shape[0] * shape[1]
    if data.size != expected:
        raise ValueError(f"{raw_path}: expected {expected} values, found {data.size}")
    return data.reshape(shape)


def write_image(img: Image, prefix) -> Path:
    """Write ``<prefix>.hdr`` / ``<prefix>.raw``; returns the header path."""
    prefix = Path(prefix)
    raw = prefix.with_suffix(".raw")
    hdr = prefix.with_suffix(".hdr")
    img.values.astype("<f8").tofile(raw)
    _write_header(
        hdr,
        {
            "kind": "image",
            "nx": img.grid.nx,
            "ny": img.grid.ny,
            "pixel_size": repr(img.grid.pixel_size),
            "dtype": _DTYPE,
            "byteorder": _BYTEORDER,
            "data": raw.name,
        },
    )
    return hdr


def read_image(path) -> Image:
    hdr = Path(path)
    if hdr.suffix != ".hdr":
        hdr = hdr.with_suffix(".hdr")
    fields = _read_header(hdr)
    if fields.get("kind") != "image":
        raise ValueError(f"{hdr}: not an image file (kind={fields.get('kind')!r})")
    _check_format(fields, hdr)
    grid = ImageGrid(int(fields["nx"]), int(fields["ny"]), float(fields["pixel_size"]))
    return Image(_read_payload(hdr, fields, (grid.nx, grid.ny)), grid)


def write_sinogram(sino: Sinogram, prefix) -> Path:
    prefix = Path(prefix)
    raw = prefix.with_suffix(".raw")
    hdr = prefix.with_suffix(".hdr")
    sino.values.astype("<f8").tofile(raw)
    _write_header(
        hdr,
        {
            "kind": "sinogram",
            "n_dist": sino.geometry.n_dist,
            "n_angle": sino.geometry.n_angle,
            "bin_size": repr(sino.geometry.bin_size),
            "dtype": _DTYPE,
            "byteorder": _BYTEORDER,
            "data": raw.name,
        },
    )
    return hdr


def read_sinogram(path) -> Sinogram:
    hdr = Path(path)
    if hdr.suffix != ".hdr":
        hdr = hdr.with_suffix(".hdr")
    fields = _read_header(hdr)
    if fields.get("kind") != "sinogram":
        raise ValueError(f"{hdr}: not a sinogram file (kind={fields.get('kind')!r})")
    _check_format(fields, hdr)
    geom = SinogramGeometry(
        int(fields["n_dist"]), int(fields["n_angle"]), float(fields["bin_size"])
    )
    return Sinogram(_read_payload(hdr, fields, (geom.n_dist, geom.n_angle)), geom)


def checksum(path) -> str:
    """SHA-256 of a payload file (or of the .raw next to a .hdr)."""
    path = Path(path)
    if path.suffix == ".hdr":
        path = path.with_suffix(".raw")
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_array_csv(values: np.ndarray, path) -> None:
    np.savetxt(path, values, delimiter=",", fmt="%.17g")


def import_array_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def export_image_csv(img: Image, path) -> None:
    export_array_csv(img.values, path)


def import_image_csv(path, grid: ImageGrid) -> Image:
    return Image(import_array_csv(path), grid)


def export_sinogram_csv(sino: Sinogram, path) -> None:
    export_array_csv(sino.values, path)


def import_sinogram_csv(path, geom: SinogramGeometry) -> Sinogram:
    return Sinogram(import_array_csv(path), geom)
