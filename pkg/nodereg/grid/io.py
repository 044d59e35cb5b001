"""Artifact file formats.

Raw arrays are stored as two files: a JSON sidecar ``<stem>.json`` holding
``{"shape", "channels", "dtype", "order", "extra"?}`` and a little-endian
payload ``<stem>.raw`` laid out channel-first in row-major order. 2D grayscale
images may also be exchanged as PGM (P5 binary or P2 ASCII).
"""

import io
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import orjson
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from nodereg.errors import DtypeMismatchError, FormatError, HeaderError, TruncatedPayloadError
from nodereg.grid.types import Image, JacobianMap, LabelMap, VoxelCloud

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RAW_DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "u16": np.dtype("<u2"),
}


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def payload_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".raw")


def write_array(
    path: PathLike,
    array: np.ndarray,
    dtype: str = "f64",
    channels: int = 1,
    extra: Optional[Dict[str, Any]] = None
) -> Path:
    """Write a channel-first array plus its sidecar; returns the payload path"""
    if dtype not in RAW_DTYPES:
        raise DtypeMismatchError(f"Unsupported raw dtype: {dtype}")
    array = np.asarray(array)
    shape = list(array.shape[1:]) if channels > 1 else list(array.shape)
    if channels > 1 and array.shape[0] != channels:
        raise DtypeMismatchError(f"Array has {array.shape[0]} channels, expected {channels}")
    header: Dict[str, Any] = {
        "shape": shape,
        "channels": channels,
        "dtype": dtype,
        "order": "row-major",
    }
    if extra is not None:
        header["extra"] = extra

    payload = payload_path(path)
    payload.parent.mkdir(parents=True, exist_ok=True)
    sidecar_path(path).write_bytes(orjson.dumps(header, option=orjson.OPT_INDENT_2))
    payload.write_bytes(np.ascontiguousarray(array, dtype=RAW_DTYPES[dtype]).tobytes())
    logger.debug(f"Wrote {dtype} array {shape}x{channels} to {payload}")
    return payload


def read_header(path: PathLike) -> Dict[str, Any]:
    try:
        header = orjson.loads(sidecar_path(path).read_bytes())
    except orjson.JSONDecodeError as e:
        raise HeaderError(f"Malformed sidecar for {path}: {e}") from e
    if not isinstance(header, dict):
        raise HeaderError(f"Sidecar for {path} is not a JSON object")
    for key in ("shape", "channels", "dtype", "order"):
        if key not in header:
            raise HeaderError(f"Sidecar for {path} is missing '{key}'")
    if header["order"] != "row-major":
        raise HeaderError(f"Unsupported order: {header['order']}")
    if header["dtype"] not in RAW_DTYPES:
        raise HeaderError(f"Unsupported dtype: {header['dtype']}")
    shape = header["shape"]
    if not isinstance(shape, list) or not shape or not all(
        isinstance(n, int) and n > 0 for n in shape
    ):
        raise HeaderError(f"Invalid shape in sidecar: {shape}")
    if not isinstance(header["channels"], int) or header["channels"] < 1:
        raise HeaderError(f"Invalid channel count: {header['channels']}")
    return header


def read_array(
    path: PathLike,
    dtype: Optional[str] = None,
    channels: Optional[int] = None
) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Read a raw array, checking the declared dtype/channels when given"""
    header = read_header(path)
    if dtype is not None and header["dtype"] != dtype:
        raise DtypeMismatchError(f"{path}: stored dtype {header['dtype']}, expected {dtype}")
    if channels is not None and header["channels"] != channels:
        raise DtypeMismatchError(
            f"{path}: stored {header['channels']} channels, expected {channels}"
        )

    np_dtype = RAW_DTYPES[header["dtype"]]
    shape = tuple(header["shape"])
    if header["channels"] > 1:
        shape = (header["channels"],) + shape
    expected = int(np.prod(shape)) * np_dtype.itemsize
    data = payload_path(path).read_bytes()
    if len(data) < expected:
        raise TruncatedPayloadError(f"{path}: payload has {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise FormatError(f"{path}: payload has {len(data) - expected} trailing bytes")
    array = np.frombuffer(data, dtype=np_dtype).reshape(shape)
    return array, header


# PIL modes a PGM decodes to, with the full-scale value Pillow normalizes to
PGM_MODES = {"L": 255.0, "I": 65535.0, "I;16": 65535.0, "I;16B": 65535.0}


def read_pgm(path: PathLike) -> Image:
    """Read a P5 or P2 PGM through Pillow and map intensities to [0, 1]"""
    data = Path(path).read_bytes()
    try:
        pil = PILImage.open(io.BytesIO(data), formats=["PPM"])
    except (UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise HeaderError(f"{path}: not a readable PGM ({e})") from e
    if pil.mode not in PGM_MODES:
        raise HeaderError(f"{path}: expected a grayscale PGM, got mode {pil.mode}")
    try:
        pil.load()
    except (OSError, SyntaxError, ValueError) as e:
        # raw rasters report "image file is truncated", plain ones "not enough image data"
        if "truncated" in str(e) or "not enough" in str(e):
            raise TruncatedPayloadError(f"{path}: {e}") from e
        raise FormatError(f"{path}: {e}") from e
    return Image(np.asarray(pil, dtype=np.float64) / PGM_MODES[pil.mode])


def write_pgm(path: PathLike, image: Image, maxval: int = 255, plain: bool = False) -> Path:
    """Quantize [0, 1] intensities to maxval and write P5 (or P2 when plain)"""
    if maxval not in (255, 65535):
        raise FormatError(f"maxval must be 255 or 65535, got {maxval}")
    if image.dim != 2:
        raise FormatError("PGM holds 2D images only")
    height, width = image.shape
    raster = np.rint(np.clip(image.values, 0.0, 1.0) * maxval).astype(np.int64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if plain:
        # Pillow only writes the binary variant
        rows = "\n".join(" ".join(str(v) for v in row) for row in raster)
        path.write_bytes(f"P2\n{width} {height}\n{maxval}\n{rows}\n".encode("ascii"))
    else:
        # uint8 maps to mode L (maxval 255), int32 to mode I (16-bit, maxval 65535)
        dtype = np.uint8 if maxval == 255 else np.int32
        PILImage.fromarray(raster.astype(dtype)).save(path, format="PPM")
    return path


def read_image(path: PathLike) -> Image:
    """Read an Image from PGM, PNG (via Pillow) or the raw format"""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        with PILImage.open(path) as img:
            if img.mode.startswith("I;16"):
                return Image(np.asarray(img, dtype=np.float64) / 65535.0)
            return Image(np.asarray(img.convert("L"), dtype=np.float64) / 255.0)
    array, _ = read_array(path, channels=1)
    return Image(array.astype(np.float64))


def write_image(path: PathLike, image: Image, dtype: str = "f64") -> Path:
    if Path(path).suffix.lower() == ".pgm":
        return write_pgm(path, image)
    return write_array(path, image.values, dtype=dtype)


def read_cloud(path: PathLike) -> VoxelCloud:
    header = read_header(path)
    array, _ = read_array(path, channels=len(header["shape"]))
    return VoxelCloud(array.astype(np.float64))


def write_cloud(path: PathLike, cloud: VoxelCloud, dtype: str = "f64") -> Path:
    return write_array(path, cloud.coords, dtype=dtype, channels=cloud.dim)


def read_labels(path: PathLike) -> LabelMap:
    array, _ = read_array(path, dtype="u16", channels=1)
    return LabelMap(array.astype(np.int64))


def write_labels(path: PathLike, labelmap: LabelMap) -> Path:
    if labelmap.labels.max(initial=0) > 65535:
        raise FormatError("Labels above 65535 do not fit the u16 format")
    return write_array(path, labelmap.labels, dtype="u16")


def read_jacobian(path: PathLike) -> JacobianMap:
    array, _ = read_array(path, channels=1)
    return JacobianMap(array.astype(np.float64))


def write_jacobian(path: PathLike, jac: JacobianMap) -> Path:
    return write_array(path, jac.dets, dtype="f64")
