"""Image container and the 16-bit PGM + sidecar dump format.

A dump is two files: ``<name>.pgm`` (binary P5, big-endian, maxval 65535)
and ``<name>.pgm.sidecar`` holding ``key = value`` lines. Pixel values are
stored as codes ``q`` with ``value = offset + q * scale``; images of integer
counts in [0, 65535] are stored with offset 0 and scale 1, i.e. exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, SchemaError

MAXVAL = 65535
SIDECAR_SUFFIX = ".sidecar"


@dataclass
class Image:
    """Nonnegative 2D intensity grid with pixel calibration in nm."""

    data: np.ndarray
    pixel_size: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.size == 0:
            raise InvalidArgument(f"image data must be a non-empty 2D array, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InvalidArgument("image data must be finite")
        if self.data.min() < 0:
            raise InvalidArgument("image data must be nonnegative")

    @property
    def shape(self):
        return self.data.shape


def quantize(data):
    """Map ``data`` to uint16 codes. Returns ``(codes, offset, scale)``."""
    data = np.asarray(data, dtype=float)
    if data.min() >= 0 and data.max() <= MAXVAL and np.all(data == np.round(data)):
        return data.astype(np.uint16), 0.0, 1.0
    lo = float(data.min())
    hi = float(data.max())
    if hi == lo:
        return np.zeros(data.shape, dtype=np.uint16), lo, 1.0
    scale = (hi - lo) / MAXVAL
    codes = np.clip(np.round((data - lo) / scale), 0, MAXVAL).astype(np.uint16)
    return codes, lo, scale


def dequantize(codes, offset, scale):
    return offset + codes.astype(float) * scale


def readout(data):
    """The values an image takes after a dump/load cycle."""
    return dequantize(*quantize(data))


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_image(path, image):
    """Dump ``image`` as PGM + sidecar; return the array a reader will see."""
    path = Path(path)
    codes, offset, scale = quantize(image.data)
    height, width = codes.shape
    header = f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(codes.astype(">u2").tobytes())

    meta = {
        "width": width,
        "height": height,
        "pixel_size": float(image.pixel_size),
        "offset": float(offset),
        "scale": float(scale),
    }
    for key, value in image.metadata.items():
        if isinstance(value, dict):
            for sub, subvalue in value.items():
                meta[f"{key}.{sub}"] = subvalue
        else:
            meta[key] = value
    lines = [f"{key} = {_format_value(value)}" for key, value in meta.items()]
    Path(str(path) + SIDECAR_SUFFIX).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return dequantize(codes, offset, scale)


def _parse_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    return text


def read_sidecar(path):
    meta = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise SchemaError(f"malformed sidecar line in {path}: {line!r}")
        meta[key] = _parse_value(value)
    return meta


def _read_token(raw, pos):
    while raw[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(raw) and not raw[pos:pos + 1].isspace():
        pos += 1
    return raw[start:pos], pos


def read_pgm(path):
    """Read a 16-bit binary PGM; returns the uint16 code array."""
    raw = Path(path).read_bytes()
    magic, pos = _read_token(raw, 0)
    if magic != b"P5":
        raise SchemaError(f"{path}: not a binary PGM")
    width, pos = _read_token(raw, pos)
    height, pos = _read_token(raw, pos)
    maxval, pos = _read_token(raw, pos)
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != MAXVAL:
        raise SchemaError(f"{path}: expected maxval {MAXVAL}, got {maxval}")
    body = raw[pos + 1:]
    if len(body) != 2 * width * height:
        raise SchemaError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.uint16)


def read_image(path):
    """Load a dump written by :func:`write_image`."""
    path = Path(path)
    codes = read_pgm(path)
    meta = read_sidecar(str(path) + SIDECAR_SUFFIX)
    if (meta.get("height"), meta.get("width")) != codes.shape:
        raise SchemaError(f"{path}: sidecar dimensions disagree with PGM header")
    data = dequantize(codes, float(meta["offset"]), float(meta["scale"]))
    extra = {k: v for k, v in meta.items()
             if k not in ("width", "height", "pixel_size", "offset", "scale")}
    return Image(data, float(meta["pixel_size"]), extra)
