"""Image container, lossless PNG/PPM I/O, and PSNR/SSIM quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

PSNR_CAP = 100.0

_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11x11 window
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class ImageTensor:
    """H x W x C array of intensities in [0, 1]; immutable once built."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    mse: float


def image_from_array(arr: np.ndarray) -> ImageTensor:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected HxWx{{1,3}} array, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("zero-dimension image")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("intensities must lie in [0, 1]")
    arr = arr.copy()
    arr.setflags(write=False)
    return ImageTensor(data=arr)


def quantize8(arr: np.ndarray) -> np.ndarray:
    """8-bit quantization of a [0,1] array, half rounded away from zero."""
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5) / 255.0


def load_image(path: str) -> ImageTensor:
    """Read an 8/16-bit PNG or binary PPM into unit-interval intensities."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"cannot read image file: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ValueError(f"unsupported sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        if raw.shape[2] != 3:
            raise ValueError(f"unsupported channel count {raw.shape[2]}")
        raw = raw[:, :, ::-1]  # BGR -> RGB
    return image_from_array(raw.astype(np.float64) / scale)


def save_image(img: ImageTensor, path: str, bitdepth: int = 8) -> None:
    """Write losslessly as PNG (or binary PPM for .ppm paths, 8-bit only)."""
    if bitdepth not in (8, 16):
        raise ValueError("bitdepth must be 8 or 16")
    maxval = (1 << bitdepth) - 1
    # round half away from zero; data is non-negative so floor(x + 0.5) works
    q = np.floor(img.data * maxval + 0.5)
    path = str(path)
    if path.lower().endswith(".ppm"):
        if bitdepth != 8 or img.channels != 3:
            raise ValueError("PPM output supports 8-bit RGB only")
        with open(path, "wb") as f:
            f.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
            f.write(q.astype(np.uint8).tobytes())
        return
    out = q.astype(np.uint8 if bitdepth == 8 else np.uint16)
    if out.shape[2] == 3:
        out = out[:, :, ::-1]  # RGB -> BGR
    else:
        out = out[:, :, 0]
    if not cv2.imwrite(path, out):
        raise IOError(f"cannot write image file: {path}")


def mse(a: ImageTensor, b: ImageTensor) -> float:
    if a.data.shape != b.data.shape:
        raise ValueError("dimension mismatch")
    d = a.data - b.data
    return float(np.mean(d * d))


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    m = mse(a, b)
    if m == 0.0:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / m))


def _ssim_filter(x: np.ndarray) -> np.ndarray:
    k = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1, dtype=np.float64)
    k = np.exp(-0.5 * (k / _SSIM_SIGMA) ** 2)
    k /= k.sum()
    out = ndimage.correlate1d(x, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    ux = _ssim_filter(x)
    uy = _ssim_filter(y)
    uxx = _ssim_filter(x * x)
    uyy = _ssim_filter(y * y)
    uxy = _ssim_filter(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    num = (2.0 * ux * uy + _SSIM_C1) * (2.0 * vxy + _SSIM_C2)
    den = (ux * ux + uy * uy + _SSIM_C1) * (vx + vy + _SSIM_C2)
    s = num / den
    r = _SSIM_RADIUS
    return float(np.mean(s[r:-r, r:-r]))


def ssim(a: ImageTensor, b: ImageTensor) -> float:
    """Mean local SSIM, 11x11 gaussian window (sigma 1.5), unit dynamic range."""
    if a.data.shape != b.data.shape:
        raise ValueError("dimension mismatch")
    if min(a.height, a.width) < 2 * _SSIM_RADIUS + 1:
        raise ValueError("image smaller than the 11x11 SSIM window")
    vals = [_ssim_channel(a.data[:, :, c], b.data[:, :, c])
            for c in range(a.channels)]
    return float(np.mean(vals))


def quality_report(a: ImageTensor, b: ImageTensor) -> QualityReport:
    return QualityReport(psnr=psnr(a, b), ssim=ssim(a, b), mse=mse(a, b))
