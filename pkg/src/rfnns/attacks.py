"""Channel attack models, each in two modes sharing one forward path:

- exact: what the adversarial channel actually does to the stego image;
- surrogate: identical forward output plus a backward closure in which
  rounding/quantization are straight-through and clamping passes gradient
  inside [-0.1, 1.1], so the optimizer can differentiate through the channel.

Geometric attacks (scaling, rotation) are implemented as bilinear gathers and
backpropagate through the true bilinear weights; their adjoint is a scatter
with the same weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .keyed_rand import derive_stream

ATTACK_KINDS = ("jpeg", "gaussian_noise", "contrast", "scaling",
                "rotation", "gaussian_blur", "identity")

_ST_LO, _ST_HI = -0.1, 1.1


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    param: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "jpeg" and not 1 <= self.param <= 100:
            raise ValueError("jpeg quality factor must be in [1, 100]")
        if self.kind == "gaussian_noise" and self.param < 0:
            raise ValueError("noise variance must be >= 0")
        if self.kind in ("contrast", "scaling") and self.param <= 0:
            raise ValueError(f"{self.kind} parameter must be > 0")


@dataclass(frozen=True)
class AttackSuite:
    specs: tuple[AttackSpec, ...]

    def __post_init__(self):
        if not self.specs:
            raise ValueError("attack suite must be non-empty")

    def pick(self, iteration: int) -> AttackSpec:
        """Deterministic round-robin selection."""
        return self.specs[iteration % len(self.specs)]


# ---------------------------------------------------------------- JPEG ----

_Q_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99]], dtype=np.float64)

_Q_CHROMA = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99]], dtype=np.float64)

# full-range JPEG YCbCr (BT.601 primaries)
_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312]], dtype=np.float64)
_YCC2RGB = np.linalg.inv(_RGB2YCC)
_YCC_OFFSET = np.array([0.0, 128.0, 128.0])


def _dct_matrix() -> np.ndarray:
    n = np.arange(8)
    # orthonormal DCT-II: D @ D.T = I
    d = np.cos((2 * n[None, :] + 1) * n[:, None] * np.pi / 16) * np.sqrt(2.0 / 8.0)
    d[0, :] *= 1 / np.sqrt(2)
    return d


_DCT = _dct_matrix()


def quant_tables(qf: float) -> tuple[np.ndarray, np.ndarray]:
    """Annex-K tables scaled by the JPEG quality factor."""
    scale = 5000.0 / qf if qf < 50 else 200.0 - 2.0 * qf
    luma = np.maximum(np.floor((_Q_LUMA * scale + 50.0) / 100.0), 1.0)
    chroma = np.maximum(np.floor((_Q_CHROMA * scale + 50.0) / 100.0), 1.0)
    return luma, chroma


def _jpeg(img: np.ndarray, qf: float):
    h, w, _ = img.shape
    if h % 8 or w % 8:
        raise ValueError("jpeg attack requires dimensions divisible by 8")
    luma, chroma = quant_tables(qf)
    q = np.stack([luma, chroma, chroma], axis=-1)  # (8, 8, 3)

    ycc = (img * 255.0) @ _RGB2YCC.T + _YCC_OFFSET - 128.0
    blocks = ycc.reshape(h // 8, 8, w // 8, 8, 3)
    coef = np.einsum("ab,rbsdc,ed->rasec", _DCT, blocks, _DCT)
    coef_q = np.round(coef / q[None, :, None, :, :]) * q[None, :, None, :, :]
    # coefficients in the quantizer dead zone are annihilated by the channel;
    # their straight-through gradient is masked so the optimizer spends its
    # perturbation budget only on frequencies that survive compression
    alive = coef_q != 0.0
    rec = np.einsum("ba,rbsdc,de->rasec", _DCT, coef_q, _DCT)
    ycc2 = rec.reshape(h, w, 3) + 128.0
    rgb = (ycc2 - _YCC_OFFSET) @ _YCC2RGB.T / 255.0
    out = np.clip(rgb, 0.0, 1.0)
    st_mask = (rgb > _ST_LO) & (rgb < _ST_HI)

    def backward(g: np.ndarray) -> np.ndarray:
        g = (g * st_mask) @ _YCC2RGB / 255.0
        gb = g.reshape(h // 8, 8, w // 8, 8, 3)
        # adjoint of inverse block DCT, dead-zone-masked straight-through
        gc = np.einsum("ab,rbsdc,ed->rasec", _DCT, gb, _DCT) * alive
        gx = np.einsum("ba,rbsdc,de->rasec", _DCT, gc, _DCT)
        return gx.reshape(h, w, 3) @ _RGB2YCC * 255.0

    return out, backward


# ------------------------------------------------------ pointwise kinds ----

def _gaussian_noise(img: np.ndarray, variance: float, seed: int):
    stream = derive_stream(seed, "attack/gaussian_noise")
    noise = stream.gaussian(img.size).reshape(img.shape) * math.sqrt(variance)
    pre = img + noise
    out = np.clip(pre, 0.0, 1.0)
    st_mask = (pre > _ST_LO) & (pre < _ST_HI)

    def backward(g: np.ndarray) -> np.ndarray:
        return g * st_mask

    return out, backward


def _contrast(img: np.ndarray, eta: float):
    # written as x + (eta-1)(x-0.5) so eta=1 is a bit-exact identity
    pre = img + (eta - 1.0) * (img - 0.5)
    out = np.clip(pre, 0.0, 1.0)
    st_mask = (pre > _ST_LO) & (pre < _ST_HI)

    def backward(g: np.ndarray) -> np.ndarray:
        return g * st_mask * eta

    return out, backward


# ------------------------------------------------------- bilinear kinds ----

class _BilinearMap:
    """Gather at fractional source coordinates; adjoint is a scatter."""

    def __init__(self, ys: np.ndarray, xs: np.ndarray, src_shape: tuple):
        sh, sw = src_shape
        ys = np.clip(ys, 0.0, sh - 1.0)
        xs = np.clip(xs, 0.0, sw - 1.0)
        y0 = np.minimum(np.floor(ys).astype(np.int64), sh - 1)
        x0 = np.minimum(np.floor(xs).astype(np.int64), sw - 1)
        y1 = np.minimum(y0 + 1, sh - 1)
        x1 = np.minimum(x0 + 1, sw - 1)
        fy = (ys - y0)[..., None]
        fx = (xs - x0)[..., None]
        self.src_shape = (sh, sw)
        self.corners = ((y0, x0, (1 - fy) * (1 - fx)),
                        (y0, x1, (1 - fy) * fx),
                        (y1, x0, fy * (1 - fx)),
                        (y1, x1, fy * fx))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return sum(w * x[yi, xi] for yi, xi, w in self.corners)

    def backward(self, g: np.ndarray) -> np.ndarray:
        gx = np.zeros(self.src_shape + g.shape[2:])
        for yi, xi, w in self.corners:
            np.add.at(gx, (yi, xi), w * g)
        return gx


def _resize_map(src: tuple, dst: tuple) -> _BilinearMap:
    sh, sw = src
    dh, dw = dst
    ys = (np.arange(dh) + 0.5) * (sh / dh) - 0.5
    xs = (np.arange(dw) + 0.5) * (sw / dw) - 0.5
    return _BilinearMap(*np.meshgrid(ys, xs, indexing="ij"), src_shape=src)


def _rotation_map(shape: tuple, angle: float) -> _BilinearMap:
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    i, j = np.meshgrid(np.arange(h, dtype=np.float64),
                       np.arange(w, dtype=np.float64), indexing="ij")
    c, s = math.cos(angle), math.sin(angle)
    ys = cy + (i - cy) * c + (j - cx) * s
    xs = cx - (i - cy) * s + (j - cx) * c
    return _BilinearMap(ys, xs, src_shape=shape)


def _scaling(img: np.ndarray, s: float):
    h, w, _ = img.shape
    dh, dw = max(int(round(h * s)), 1), max(int(round(w * s)), 1)
    down = _resize_map((h, w), (dh, dw))
    up = _resize_map((dh, dw), (h, w))
    out = up.forward(down.forward(img))

    def backward(g: np.ndarray) -> np.ndarray:
        return down.backward(up.backward(g))

    return out, backward


def _rotation(img: np.ndarray, angle: float):
    h, w, _ = img.shape
    fwd = _rotation_map((h, w), angle)
    bck = _rotation_map((h, w), -angle)
    out = bck.forward(fwd.forward(img))

    def backward(g: np.ndarray) -> np.ndarray:
        return fwd.backward(bck.backward(g))

    return out, backward


def _blur_taps(sigma: float) -> np.ndarray:
    r = math.ceil(3 * sigma)
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _blur_axis(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    n = x.shape[axis]
    r = len(k) // 2
    out = np.zeros_like(x)
    for t, kt in enumerate(k):
        idx = np.clip(np.arange(n) + t - r, 0, n - 1)
        out += kt * np.take(x, idx, axis=axis)
    return out


def _blur_axis_adjoint(g: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    n = g.shape[axis]
    r = len(k) // 2
    gx = np.zeros_like(g)
    moved = np.moveaxis(gx, axis, 0)
    gm = np.moveaxis(g, axis, 0)
    for t, kt in enumerate(k):
        idx = np.clip(np.arange(n) + t - r, 0, n - 1)
        np.add.at(moved, idx, kt * gm)
    return gx


def _gaussian_blur(img: np.ndarray, sigma: float):
    if sigma <= 0:
        return img.copy(), lambda g: g
    k = _blur_taps(sigma)
    out = _blur_axis(_blur_axis(img, k, 0), k, 1)

    def backward(g: np.ndarray) -> np.ndarray:
        return _blur_axis_adjoint(_blur_axis_adjoint(g, k, 1), k, 0)

    return out, backward


# ------------------------------------------------------------ dispatch ----

def _apply(spec: AttackSpec, img: np.ndarray):
    if spec.kind == "identity":
        return img, lambda g: g
    if spec.kind == "jpeg":
        return _jpeg(img, spec.param)
    if spec.kind == "gaussian_noise":
        return _gaussian_noise(img, spec.param, spec.noise_seed)
    if spec.kind == "contrast":
        return _contrast(img, spec.param)
    if spec.kind == "scaling":
        return _scaling(img, spec.param)
    if spec.kind == "rotation":
        return _rotation(img, spec.param)
    if spec.kind == "gaussian_blur":
        return _gaussian_blur(img, spec.param)
    raise ValueError(f"unknown attack kind {spec.kind!r}")


def apply_exact(spec: AttackSpec, img: np.ndarray) -> np.ndarray:
    """Apply the channel attack; deterministic given spec.noise_seed."""
    out, _ = _apply(spec, np.asarray(img, dtype=np.float64))
    return out


def apply_surrogate(spec: AttackSpec,
                    img: np.ndarray) -> tuple[np.ndarray, Callable]:
    """Same forward as apply_exact, plus a backward closure for gradients."""
    return _apply(spec, np.asarray(img, dtype=np.float64))
