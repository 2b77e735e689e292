"""Image decode, preprocessing, and deterministic augmentation.

Resampling policy, locked by fixture tests: bilinear interpolation with
half-pixel centers, computed in float64 directly from the 8-bit source
values, and rounded once (numpy round-half-even) only where an 8-bit
image is produced. Preprocessing never requantizes: decoded bytes go
straight to the normalized float tensor.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from PIL import Image, ImageOps, UnidentifiedImageError

from .engine import Tensor
from .model_io import ModelMetadata

_MIN_SIDE = 8


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class RawImage:
    """Decoded 8-bit RGB image, row-major HxWx3."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if not (isinstance(p, np.ndarray) and p.dtype == np.uint8
                and p.ndim == 3 and p.shape[2] == 3):
            raise ImageError(f"pixels must be uint8 HxWx3, got {getattr(p, 'shape', None)}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ImageError("image must be at least 1x1")
        if not p.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "pixels", np.ascontiguousarray(p))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class AugmentationSpec:
    horizontal_flip: bool = False
    vertical_flip: bool = False
    rotation_degrees: float = 0.0
    saturation_factor: float = 1.0
    brightness_factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not -180.0 <= self.rotation_degrees <= 180.0:
            raise ImageError(f"rotation {self.rotation_degrees} outside [-180, 180]")
        if self.saturation_factor <= 0 or self.brightness_factor <= 0:
            raise ImageError("saturation and brightness factors must be positive")

    @classmethod
    def sample(cls, seed: int) -> "AugmentationSpec":
        """Draw a spec from the default policy: flips at p=0.5, rotation
        uniform in [-180, 180], factors uniform in [0.5, 1.5]."""
        rng = np.random.default_rng(seed)
        return cls(
            horizontal_flip=bool(rng.random() < 0.5),
            vertical_flip=bool(rng.random() < 0.5),
            rotation_degrees=float(rng.uniform(-180.0, 180.0)),
            saturation_factor=float(rng.uniform(0.5, 1.5)),
            brightness_factor=float(rng.uniform(0.5, 1.5)),
            seed=seed,
        )


def decode(data: bytes) -> RawImage:
    """Decode PNG or baseline JPEG bytes to RGB, honoring EXIF orientation."""
    try:
        img = Image.open(io.BytesIO(data))
        detected = img.format
        if detected not in ("PNG", "JPEG"):
            raise ImageError(f"unsupported image container '{detected}'; "
                             "only PNG and baseline JPEG are accepted")
        img = ImageOps.exif_transpose(img)
        img = img.convert("RGB")
        pixels = np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise ImageError("could not identify an image container in the input") from e
    except (OSError, SyntaxError, ValueError) as e:
        if isinstance(e, ImageError):
            raise
        raise ImageError(f"corrupt image data: {e}") from e
    return RawImage(pixels=pixels)


def _bilinear_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize HxWxC float64 (or uint8) pixels to out_h x out_w in float64.

    Half-pixel centers: output pixel i samples source coordinate
    (i + 0.5) * scale - 0.5, clamped to the valid range (edge replicate).
    """
    src = pixels.astype(np.float64, copy=False)
    h, w = src.shape[0], src.shape[1]

    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)

    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy


def preprocess(img: RawImage, meta: ModelMetadata) -> Tensor:
    """Produce the model input tensor for one image per the metadata policy."""
    if img.height < _MIN_SIDE or img.width < _MIN_SIDE:
        raise ImageError(
            f"image {img.width}x{img.height} is degenerate; needs at least "
            f"{_MIN_SIDE} px a side")
    th, tw = meta.input_height, meta.input_width

    if meta.resize_policy == "stretch":
        resized = _bilinear_resize(img.pixels, th, tw)
    else:
        # Scale so the shorter side covers its target, then center-crop.
        scale = max(th / img.height, tw / img.width)
        rh = max(th, int(round(img.height * scale)))
        rw = max(tw, int(round(img.width * scale)))
        resized = _bilinear_resize(img.pixels, rh, rw)
        y0 = (rh - th) // 2
        x0 = (rw - tw) // 2
        resized = resized[y0:y0 + th, x0:x0 + tw]

    mean = np.asarray(meta.per_channel_mean, dtype=np.float64)
    std = np.asarray(meta.per_channel_std, dtype=np.float64)
    values = (resized * meta.scale - mean) / std
    chw = np.transpose(values, (2, 0, 1))[None, ...]
    return Tensor.from_array(chw.astype(np.float32))


def _rotate(pixels: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center by inverse mapping with bilinear
    sampling; out-of-frame samples clamp to the nearest edge pixel."""
    if degrees == 0.0:
        return pixels.copy()
    h, w = pixels.shape[0], pixels.shape[1]
    theta = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = yy - cy, xx - cx
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    src_x = cos_t * dx + sin_t * dy + cx
    src_y = -sin_t * dx + cos_t * dy + cy
    src_x = np.clip(src_x, 0.0, w - 1.0)
    src_y = np.clip(src_y, 0.0, h - 1.0)

    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (src_x - x0)[..., None]
    wy = (src_y - y0)[..., None]

    src = pixels.astype(np.float64)
    top = src[y0, x0] * (1.0 - wx) + src[y0, x1] * wx
    bot = src[y1, x0] * (1.0 - wx) + src[y1, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    return np.rint(out).astype(np.uint8)


def _color_adjust(pixels: np.ndarray, saturation: float, brightness: float) -> np.ndarray:
    if saturation == 1.0 and brightness == 1.0:
        return pixels.copy()
    rgb = pixels.astype(np.float64) / 255.0
    if saturation != 1.0:
        hsv = rgb_to_hsv(rgb)
        hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0.0, 1.0)
        rgb = hsv_to_rgb(hsv)
    rgb = np.clip(rgb * brightness, 0.0, 1.0)
    return np.rint(rgb * 255.0).astype(np.uint8)


def augment(img: RawImage, spec: AugmentationSpec) -> RawImage:
    """Apply flips, rotation, then saturation and brightness, in that order.

    Deterministic in (img, spec); an identity spec returns a bitwise-equal
    image.
    """
    px = img.pixels
    if spec.horizontal_flip:
        px = px[:, ::-1]
    if spec.vertical_flip:
        px = px[::-1, :]
    px = np.ascontiguousarray(px)
    px = _rotate(px, float(spec.rotation_degrees))
    px = _color_adjust(px, float(spec.saturation_factor), float(spec.brightness_factor))
    return RawImage(pixels=px)


def encode_png(img: RawImage) -> bytes:
    """PNG-encode a raw image (used when materializing augmented datasets)."""
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
