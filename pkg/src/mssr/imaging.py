"""Image primitives: bicubic resampling, YCbCr conversion, PSNR/SSIM, file I/O.

An image plane is a 2-D float64 numpy array, row-major, nominal range [0, 1].
An RGB image is an (H, W, 3) float64 array in the same range.

The resampler reproduces the convention used throughout the super-resolution
benchmark lineage: Keys cubic kernel with a = -0.5, per-row weight
normalization, edge replication at the borders, and a kernel widened by the
scale ratio when downscaling (antialiasing).  Color conversion is ITU-R
BT.601 studio swing (Y in [16/255, 235/255]), and both metrics operate on
8-bit-quantized values, which is the convention behind published PSNR/SSIM
tables.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

from .tensor_ops import ShapeError

# ---- bicubic resampling ----


def _cubic_kernel(x: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with a = -0.5, support [-2, 2]."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax <= 2.0, far, 0.0))


def _resample_taps(in_len: int, out_len: int):
    """Source indices and normalized weights for one axis of a resize.

    Uses the standard inverse mapping where output pixel centers land at
    u = (k + 0.5)/scale + 0.5 in 1-based input coordinates.  When downscaling
    the kernel is stretched by 1/scale so it low-pass filters while it
    interpolates.  Out-of-range taps are clamped, replicating edge pixels.
    """
    scale = out_len / in_len
    if scale < 1.0:
        support = 4.0 / scale
        kernel = lambda t: scale * _cubic_kernel(scale * t)
    else:
        support = 4.0
        kernel = _cubic_kernel

    u = (np.arange(1, out_len + 1, dtype=np.float64)) / scale + 0.5 * (1.0 - 1.0 / scale)
    left = np.floor(u - support / 2.0)
    n_taps = int(math.ceil(support)) + 2
    idx = left[:, None] + np.arange(n_taps, dtype=np.float64)[None, :]
    weights = kernel(u[:, None] - idx)
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 1, in_len).astype(np.intp) - 1
    return idx, weights


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a plane to (out_h, out_w); output is clipped to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-D plane, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be >= 1x1, got {out_h}x{out_w}")
    ridx, rw = _resample_taps(img.shape[0], out_h)
    cidx, cw = _resample_taps(img.shape[1], out_w)
    tmp = (img[ridx, :] * rw[:, :, None]).sum(axis=1)
    out = (tmp[:, cidx] * cw[None, :, :]).sum(axis=2)
    return np.clip(out, 0.0, 1.0)


# ---- color space ----

# BT.601 studio swing on [0,1]-ranged values (the 8-bit offsets 16/128 scaled by 255)
_YCBCR_MATRIX = (
    np.array(
        [
            [65.481, 128.553, 24.966],
            [-37.797, -74.203, 112.0],
            [112.0, -93.786, -18.214],
        ]
    )
    / 255.0
)
_YCBCR_OFFSET = np.array([16.0, 128.0, 128.0]) / 255.0
_YCBCR_INVERSE = np.linalg.inv(_YCBCR_MATRIX)


def rgb_to_ycbcr(rgb: np.ndarray):
    """Split an (H, W, 3) RGB image into (Y, Cb, Cr) planes, studio swing."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) RGB image, got shape {rgb.shape}")
    ycc = rgb @ _YCBCR_MATRIX.T + _YCBCR_OFFSET
    return ycc[:, :, 0], ycc[:, :, 1], ycc[:, :, 2]


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`rgb_to_ycbcr` (values are not clipped)."""
    y, cb, cr = (np.asarray(p, dtype=np.float64) for p in (y, cb, cr))
    if not (y.shape == cb.shape == cr.shape) or y.ndim != 2:
        raise ShapeError(f"plane shapes must match and be 2-D, got {y.shape}, {cb.shape}, {cr.shape}")
    ycc = np.stack([y, cb, cr], axis=2) - _YCBCR_OFFSET
    return ycc @ _YCBCR_INVERSE.T


def luminance(img: np.ndarray) -> np.ndarray:
    """The Y plane of a color image; grayscale planes pass through unchanged."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    y, _, _ = rgb_to_ycbcr(img)
    return y


# ---- quality metrics ----


def quantize_8bit(plane: np.ndarray) -> np.ndarray:
    """Map [0,1] values to the integers 0..255, rounding half away from zero."""
    plane = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    return np.floor(plane * 255.0 + 0.5)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on 8-bit-quantized planes; inf when equal."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"plane shapes differ: {a.shape} vs {b.shape}")
    diff = quantize_8bit(a) - quantize_8bit(b)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), dynamic range 255.

    Windows are placed only where they fit entirely inside the image (no
    padding), on 8-bit-quantized values.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"plane shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = quantize_8bit(a)
    y = quantize_8bit(b)
    win = _gaussian_window()

    def smooth(img):
        patches = sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
        return np.tensordot(patches, win, axes=([2, 3], [0, 1]))

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y

    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def crop_border(img: np.ndarray, border: int) -> np.ndarray:
    """Remove ``border`` pixels from all four sides of a plane."""
    img = np.asarray(img)
    if border < 0:
        raise ValueError(f"border must be >= 0, got {border}")
    if 2 * border >= min(img.shape[:2]):
        raise ValueError(f"cannot crop {border} pixels from every side of a {img.shape} image")
    if border == 0:
        return img
    return img[border:-border, border:-border]


# ---- file I/O (PNG via Pillow, PGM/PPM natively) ----

_PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}


def read_image(path) -> np.ndarray:
    """Load an image as float64 in [0, 1]: (H, W) if grayscale, (H, W, 3) if color."""
    path = Path(path)
    if path.suffix.lower() in _PNM_SUFFIXES:
        return _read_pnm(path)
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)
            return arr / 255.0
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
        return arr / 255.0


def write_image(path, img: np.ndarray, ascii_format: bool = False) -> None:
    """Write a plane or RGB image as 8-bit PNG or PGM/PPM.

    ``ascii_format`` selects the plain-text PNM variants (P2/P3); it is
    ignored for PNG.
    """
    path = Path(path)
    img = np.asarray(img)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ShapeError(f"expected (H, W) or (H, W, 3), got shape {img.shape}")
    q = quantize_8bit(img).astype(np.uint8)
    if path.suffix.lower() in _PNM_SUFFIXES:
        _write_pnm(path, q, ascii_format)
        return
    Image.fromarray(q, mode="L" if q.ndim == 2 else "RGB").save(path)


def _read_pnm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM magic {magic!r}")
    ascii_format = magic in (b"P2", b"P3")
    color = magic in (b"P3", b"P6")

    pos = 2
    fields = []
    while len(fields) < 3:
        # header tokens are separated by whitespace; '#' starts a comment
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise ValueError(f"{path}: malformed PNM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: only 8-bit PNM supported, maxval={maxval}")

    count = width * height * (3 if color else 1)
    if ascii_format:
        body = re.sub(rb"#[^\n]*", b"", data[pos:])
        values = np.array(body.split()[:count], dtype=np.float64)
    else:
        pos += 1  # single whitespace byte after maxval
        values = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos).astype(np.float64)
    if values.size != count:
        raise ValueError(f"{path}: expected {count} samples, found {values.size}")
    values /= maxval
    if color:
        return values.reshape(height, width, 3)
    return values.reshape(height, width)


def _write_pnm(path: Path, q: np.ndarray, ascii_format: bool) -> None:
    color = q.ndim == 3
    h, w = q.shape[:2]
    if ascii_format:
        magic = "P3" if color else "P2"
        body = "\n".join(" ".join(str(v) for v in row) for row in q.reshape(h, -1))
        path.write_text(f"{magic}\n{w} {h}\n255\n{body}\n")
    else:
        magic = b"P6" if color else b"P5"
        path.write_bytes(magic + f"\n{w} {h}\n255\n".encode() + q.tobytes())
