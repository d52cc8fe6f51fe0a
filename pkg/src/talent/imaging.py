"""Image decode, resolution presets, and data-URL encoding for the chat wire format.

All functions are pure over value types and safe to call from worker threads.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

PRESET_TARGETS = {"r512": 512, "r1024": 1024, "native": None}


class ImageError(ValueError):
    """Unreadable, unsupported, or degenerate image input."""


@dataclass(frozen=True)
class ImageBuffer:
    """Decoded RGB image: 8-bit row-major bytes, length = width * height * 3."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ImageError(f"zero-dimension image: {self.width}x{self.height}")
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise ImageError(
                f"pixel buffer length {len(self.pixels)} != {expected} for "
                f"{self.width}x{self.height} RGB"
            )


@dataclass(frozen=True)
class ResolutionPreset:
    target: str = "native"
    allow_upscale: bool = False
    pad_to_square: bool = False

    def __post_init__(self):
        if self.target not in PRESET_TARGETS:
            raise ImageError(f"unknown resolution preset {self.target!r}")


def _from_pil(img: Image.Image) -> ImageBuffer:
    return ImageBuffer(width=img.width, height=img.height, pixels=img.tobytes())


def _to_pil(buf: ImageBuffer) -> Image.Image:
    return Image.frombytes("RGB", (buf.width, buf.height), buf.pixels)


def load_image(path: str | Path) -> ImageBuffer:
    """Decode a PNG or JPEG file to RGB, compositing any alpha over white."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "JPEG"):
                raise ImageError(f"{path}: unsupported format {img.format!r} (PNG/JPEG only)")
            if img.width < 1 or img.height < 1:
                raise ImageError(f"{path}: zero-dimension image")
            if "A" in img.getbands() or img.mode == "P":
                rgba = img.convert("RGBA")
                background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                img = Image.alpha_composite(background, rgba)
            return _from_pil(img.convert("RGB"))
    except ImageError:
        raise
    except FileNotFoundError:
        raise ImageError(f"image file not found: {path}") from None
    except Exception as exc:
        raise ImageError(f"cannot decode image {path}: {exc}") from exc


def decode_image_bytes(data: bytes) -> ImageBuffer:
    """Decode in-memory PNG/JPEG bytes (service upload path)."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.format not in ("PNG", "JPEG"):
                raise ImageError(f"unsupported format {img.format!r} (PNG/JPEG only)")
            if "A" in img.getbands() or img.mode == "P":
                rgba = img.convert("RGBA")
                background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
                img = Image.alpha_composite(background, rgba)
            return _from_pil(img.convert("RGB"))
    except ImageError:
        raise
    except Exception as exc:
        raise ImageError(f"cannot decode image bytes: {exc}") from exc


def resize_to_preset(buf: ImageBuffer, preset: ResolutionPreset) -> ImageBuffer:
    """Scale so the longest side equals the preset target, preserving aspect ratio.

    The shorter side is rounded to the nearest pixel (minimum 1). Images already
    at or below the target are returned unchanged unless allow_upscale is set.
    With pad_to_square, the scaled image is centered on a white target-sized
    square instead (the strict square interpretation of the presets).
    """
    target = PRESET_TARGETS[preset.target]
    if target is None:
        return buf
    longest = max(buf.width, buf.height)
    if longest == target and not preset.pad_to_square:
        return buf
    if longest < target and not preset.allow_upscale:
        return buf

    scale = target / longest
    if buf.width >= buf.height:
        new_w, new_h = target, max(1, round(buf.height * scale))
    else:
        new_w, new_h = max(1, round(buf.width * scale)), target
    resample = Image.Resampling.BOX if scale < 1 else Image.Resampling.BILINEAR
    img = _to_pil(buf)
    if (new_w, new_h) != (buf.width, buf.height):
        img = img.resize((new_w, new_h), resample=resample)

    if preset.pad_to_square:
        canvas = Image.new("RGB", (target, target), (255, 255, 255))
        canvas.paste(img, ((target - new_w) // 2, (target - new_h) // 2))
        img = canvas
    return _from_pil(img)


def to_data_url(buf: ImageBuffer) -> str:
    """PNG-encode the buffer as a base64 data URL.

    Encoder settings are fixed, so the same buffer always yields the same
    string and request digests stay stable across runs.
    """
    out = io.BytesIO()
    _to_pil(buf).save(out, format="PNG", optimize=False, compress_level=6)
    payload = base64.b64encode(out.getvalue()).decode("ascii")
    return f"data:image/png;base64,{payload}"


def from_data_url(url: str) -> ImageBuffer:
    """Inverse of to_data_url; accepts any PNG/JPEG data URL."""
    prefix, _, payload = url.partition(",")
    if not prefix.startswith("data:image/") or not payload:
        raise ImageError("not an image data URL")
    return decode_image_bytes(base64.b64decode(payload))
