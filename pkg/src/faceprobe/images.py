"""8-bit image container plus binary PGM/PPM readers and writers.

The writers emit a fixed header layout (``P5\\n<width> <height>\\n255\\n``
followed by raw samples), so identical pixel data always serializes to
identical bytes. Golden-image tests and the external-recognizer handoff
both depend on that.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Malformed PGM/PPM data or an invalid pixel buffer."""


@dataclass(frozen=True)
class Image:
    """Row-major 8-bit image with 1 (gray) or 3 (RGB) channels."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.dtype != np.uint8:
            raise ImageFormatError(f"pixels must be uint8, got {px.dtype}")
        if not (px.ndim == 2 or (px.ndim == 3 and px.shape[2] == 3)):
            raise ImageFormatError(f"pixels must be (h, w) or (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageFormatError(f"empty image {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def samples(self) -> bytes:
        # length is always width * height * channels
        return self.pixels.tobytes()


def to_rgb(image: Image) -> Image:
    if image.channels == 3:
        return image
    return Image(np.repeat(image.pixels[:, :, None], 3, axis=2))


def to_gray_f64(image: Image | np.ndarray) -> np.ndarray:
    """Channel-mean grayscale as float64; accepts raw arrays for synthetic inputs."""
    px = image.pixels if isinstance(image, Image) else np.asarray(image)
    px = px.astype(np.float64)
    if px.ndim == 3:
        px = px.mean(axis=2)
    if px.ndim != 2:
        raise ImageFormatError(f"expected 2- or 3-dim pixel array, got shape {px.shape}")
    return px


def encode_pgm(image: Image) -> bytes:
    if image.channels != 1:
        raise ImageFormatError("PGM requires a single-channel image")
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.samples()


def encode_ppm(image: Image) -> bytes:
    rgb = to_rgb(image)
    header = f"P6\n{rgb.width} {rgb.height}\n255\n".encode("ascii")
    return header + rgb.samples()


def write_pgm(image: Image, path) -> None:
    Path(path).write_bytes(encode_pgm(image))


def write_ppm(image: Image, path) -> None:
    Path(path).write_bytes(encode_ppm(image))


def write_image(image: Image, path) -> None:
    """Dispatch on extension: .pgm -> P5, .ppm -> P6."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        write_pgm(image, path)
    elif suffix == ".ppm":
        write_ppm(image, path)
    else:
        raise ImageFormatError(f"unsupported image extension {suffix!r} (use .pgm or .ppm)")


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ImageFormatError("truncated image header")
        c = data[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1  # single whitespace byte terminates the header


def decode_image(data: bytes) -> Image:
    tokens, offset = _read_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    raw = data[offset : offset + n]
    if len(raw) != n:
        raise ImageFormatError(f"expected {n} sample bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(arr.reshape(shape).copy())


def read_image(path) -> Image:
    return decode_image(Path(path).read_bytes())
