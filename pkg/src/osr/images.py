"""Planar float images, 8-bit file I/O and BT.601 full-range YCbCr conversion."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "ImageFormatError",
    "ColorspaceError",
    "PlanarImage",
    "load_image",
    "save_image",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "luminance",
]

GRAY, RGB, YCBCR = "Gray", "RGB", "YCbCr"

_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168735892, -0.331264108, 0.5],
    [0.5, -0.418687589, -0.081312411],
])
_YCC2RGB = np.linalg.inv(_RGB2YCC)
_OFFSET = np.array([0.0, 128.0, 128.0])


class ImageFormatError(ValueError):
    """Unsupported or corrupt image file."""


class ColorspaceError(ValueError):
    """Operation applied to an image in the wrong color space."""


@dataclass
class PlanarImage:
    """Float image stored as ``(channels, height, width)`` planes.

    Values are intensities on the 0..255 scale. They are never clipped while
    processing; clipping and rounding happen in :func:`save_image` only.
    """

    planes: np.ndarray
    colorspace: str

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=np.float64)
        if planes.ndim == 2:
            planes = planes[None]
        if planes.ndim != 3 or planes.shape[0] not in (1, 3):
            raise ValueError(f"planes must have shape (1|3, H, W), got {planes.shape}")
        if self.colorspace not in (GRAY, RGB, YCBCR):
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        if (self.colorspace == GRAY) != (planes.shape[0] == 1):
            raise ValueError("Gray images have exactly one channel")
        if not np.all(np.isfinite(planes)):
            raise ValueError("image contains non-finite values")
        self.planes = planes

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def copy(self) -> "PlanarImage":
        return PlanarImage(self.planes.copy(), self.colorspace)

    @classmethod
    def gray(cls, plane) -> "PlanarImage":
        return cls(np.asarray(plane, dtype=np.float64)[None], GRAY)


def load_image(path) -> PlanarImage:
    """Read an 8-bit PNG or binary PGM/PPM as a Gray or RGB image."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F") or im.info.get("bits", 8) > 8:
                raise ImageFormatError(f"{path}: only 8-bit images are supported (mode {mode})")
            if mode in ("L", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
                return PlanarImage.gray(arr)
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            if mode == "LA":
                return PlanarImage.gray(np.asarray(im.getchannel("L"), dtype=np.float64))
            if mode in ("RGB", "RGBA"):
                arr = np.asarray(im.convert("RGB"), dtype=np.float64)
                return PlanarImage(np.moveaxis(arr, -1, 0), RGB)
            raise ImageFormatError(f"{path}: unsupported image mode {mode}")
    except FileNotFoundError:
        raise
    except ImageFormatError:
        raise
    except OSError as exc:
        raise OSError(f"{path}: cannot read image: {exc}") from exc


def to_uint8(planes: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(planes), 0, 255).astype(np.uint8)


def save_image(img: PlanarImage, path) -> None:
    """Write as PNG, or PGM/PPM when the suffix asks for it.

    YCbCr images are converted to RGB first. Values are rounded and clipped
    to 0..255 here and nowhere else.
    """
    path = Path(path)
    if img.colorspace == YCBCR:
        img = ycbcr_to_rgb(img)
    data = to_uint8(img.planes)
    if img.colorspace == GRAY:
        pil = Image.fromarray(data[0], mode="L")
    else:
        pil = Image.fromarray(np.ascontiguousarray(np.moveaxis(data, 0, -1)), mode="RGB")
    suffix = path.suffix.lower()
    fmt = {".png": "PNG", ".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM"}.get(suffix)
    if fmt is None:
        raise ImageFormatError(f"{path}: unsupported output format {suffix!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    # PNG metadata is left empty so identical pixels give identical bytes
    pil.save(path, format=fmt)


def rgb_to_ycbcr(img: PlanarImage) -> PlanarImage:
    if img.colorspace != RGB:
        raise ColorspaceError(f"expected RGB input, got {img.colorspace}")
    ycc = np.einsum("ij,jhw->ihw", _RGB2YCC, img.planes) + _OFFSET[:, None, None]
    return PlanarImage(ycc, YCBCR)


def ycbcr_to_rgb(img: PlanarImage) -> PlanarImage:
    if img.colorspace != YCBCR:
        raise ColorspaceError(f"expected YCbCr input, got {img.colorspace}")
    rgb = np.einsum("ij,jhw->ihw", _YCC2RGB, img.planes - _OFFSET[:, None, None])
    return PlanarImage(rgb, RGB)


def luminance(img: PlanarImage) -> np.ndarray:
    """Luminance plane of any image (the Y channel for color input)."""
    if img.colorspace == GRAY:
        return img.planes[0].copy()
    if img.colorspace == RGB:
        return rgb_to_ycbcr(img).planes[0]
    return img.planes[0].copy()
