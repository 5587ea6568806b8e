"""
File formats: PGM/PPM rasters, CSV tables, grid files and mask specs.

A grid file is a JSON header (axes, run-length-encoded mask, value file name)
next to a flat little-endian float64 value file. Raster rows map to grid axis 0
and columns to grid axis 1.
"""
import csv
import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel

from gpatt.core.errors import InputError
from gpatt.schemas.grid import ObservationSet
from gpatt.services.grid import complete_grid, observations_from_array

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_RECT = re.compile(r"^rect:\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*$")


def read_raster(path: PathLike) -> np.ndarray:
    """Float array of shape (H, W) for grayscale or (H, W, 3) for colour images."""
    try:
        image = Image.open(path)
        image.load()
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read raster {path}: {exc}") from exc
    if image.mode not in ("L", "RGB"):
        image = image.convert("L" if image.mode in ("1", "I", "I;16", "F") else "RGB")
    return np.asarray(image, dtype=float)


def write_raster(path: PathLike, array: np.ndarray) -> Path:
    """Round and clamp to 8 bits; .pgm/.ppm suffixes give binary netpbm files."""
    array = np.asarray(array, dtype=float)
    if array.ndim not in (2, 3) or (array.ndim == 3 and array.shape[2] != 3):
        raise InputError(f"cannot write an array of shape {array.shape} as an image")
    pixels = np.clip(np.rint(array), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".ppm", ".pnm") else None
    Image.fromarray(pixels).save(path, format=fmt)
    return path


def parse_mask(specs: Sequence[str], shape: Tuple[int, int]) -> np.ndarray:
    """Combine mask specs into one boolean (H, W) array, True where pixels are observed.

    Each spec is either ``rect:x0,y0,x1,y1`` (columns x0..x1-1, rows y0..y1-1
    masked) or a raster path whose zero pixels are masked. Specs compose by
    intersection of the observed sets.
    """
    mask = np.ones(shape, dtype=bool)
    for spec in specs:
        match = _RECT.match(spec)
        if match:
            x0, y0, x1, y1 = (int(v) for v in match.groups())
            if not (0 <= x0 < x1 <= shape[1] and 0 <= y0 < y1 <= shape[0]):
                raise InputError(f"rectangle {spec!r} does not fit an image of shape {shape}")
            mask[y0:y1, x0:x1] = False
            continue
        raster = read_raster(spec)
        if raster.ndim == 3:
            raster = raster.max(axis=2)
        if raster.shape != tuple(shape):
            raise InputError(f"mask {spec} has shape {raster.shape}, image has {tuple(shape)}")
        mask &= raster != 0
    return mask


def normalize(values: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float, float]:
    """Zero mean and unit variance over the observed entries."""
    observed = values[mask] if mask is not None else values
    mean = float(np.mean(observed))
    std = float(np.std(observed))
    if std <= 0:
        std = 1.0
    return (values - mean) / std, mean, std


def denormalize(values: np.ndarray, mean: float, std: float) -> np.ndarray:
    return np.asarray(values) * std + mean


def read_points_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Rows of ``x_1, ..., x_P, y``; a non-numeric first line is taken as a header."""
    path = Path(path)
    try:
        with path.open() as fh:
            first = fh.readline()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path} is not a numeric CSV table: {exc}") from exc
    if data.shape[1] < 2:
        raise InputError(f"{path} needs at least one coordinate column and one target column")
    return data[:, :-1], data[:, -1]


def write_csv(path: PathLike, columns: Sequence[np.ndarray], names: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    np.savetxt(path, table, delimiter=",", header=",".join(names), comments="", fmt="%.10g")
    return path


def save_grid(path: PathLike, obs: ObservationSet, values: Optional[np.ndarray] = None) -> Path:
    """Write ``<path>`` (JSON header) and ``<path stem>.bin`` (values).

    ``values`` overrides the stored vector, e.g. to save predictions on the
    same grid and mask as the training data.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = obs.values if values is None else np.asarray(values, dtype=float)
    if data.shape != (obs.N,):
        raise InputError(f"expected {obs.N} values, got shape {data.shape}")
    bin_path = path.with_suffix(".bin")
    data.astype("<f8").tofile(bin_path)
    header = {**obs.to_header(), "values_file": bin_path.name}
    path.write_text(json.dumps(header))
    return path


def load_grid(path: PathLike) -> ObservationSet:
    path = Path(path)
    try:
        header = json.loads(path.read_text())
        values = np.fromfile(path.parent / header.get("values_file", path.with_suffix(".bin").name), dtype="<f8")
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read grid file {path}: {exc}") from exc
    return ObservationSet.from_header(header, values)


def write_json(path: PathLike, payload: Union[BaseModel, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        path.write_text(payload.model_dump_json(indent=2))
    else:
        path.write_text(json.dumps(payload, indent=2, default=str))
    return path


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_inputs(paths: Sequence[PathLike]) -> dict:
    """SHA-256 of every existing input file; missing files are reported as None."""
    out = {}
    for p in paths:
        p = Path(p)
        out[str(p)] = file_sha256(p) if p.is_file() else None
    return out


def is_raster(path: PathLike) -> bool:
    return Path(path).suffix.lower() in (".pgm", ".ppm", ".pnm", ".png", ".bmp", ".tif", ".tiff")


def channel_names(image: np.ndarray) -> List[str]:
    return ["gray"] if image.ndim == 2 else ["red", "green", "blue"]


def load_observations(path: PathLike) -> ObservationSet:
    """Grid file, CSV of scattered grid nodes, or a grayscale raster."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".json":
        return load_grid(path)
    if suffix == ".csv":
        points, targets = read_points_csv(path)
        return complete_grid(points, targets)
    if is_raster(path):
        image = read_raster(path)
        if image.ndim != 2:
            raise InputError(f"{path} has colour channels; use the inpaint command for colour images")
        return observations_from_array(image)
    raise InputError(f"unsupported input format {path.suffix!r}")


def write_rows(path: PathLike, rows: Sequence[BaseModel]) -> Path:
    """CSV with one line per model and its fields as columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dumped = [r.model_dump() for r in rows]
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(dumped[0]) if dumped else [])
        writer.writeheader()
        writer.writerows(dumped)
    return path
