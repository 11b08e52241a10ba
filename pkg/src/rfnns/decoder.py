"""Fixed random-weight decoding network.

The decoder is never trained: its weights are a pure function of the shared
weight key and a capacity profile, so sender and receiver construct identical
networks independently.  Architecture: four Conv(3x3, no bias) + instance
norm + LeakyReLU(0.2) blocks whose strides multiply to cover_side /
secret_side, then a stride-1 Conv to 3 channels and a sigmoid.

All math is float64 numpy with a fixed evaluation order; forward caches the
activations needed for an exact reverse-mode gradient with respect to the
input (weights have no gradient path by design).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .keyed_rand import derive_stream

LEAKY_SLOPE = 0.2
NORM_EPS = 1e-5


@dataclass(frozen=True)
class CapacityProfile:
    name: str
    cover_side: int
    secret_side: int
    channel_width: int

    @property
    def total_stride(self) -> float:
        return self.cover_side / self.secret_side

    @property
    def bpp(self) -> float:
        """Payload bits per cover pixel: 8 bits x 3 channels per secret pixel."""
        return 24.0 * self.secret_side**2 / self.cover_side**2


PROFILES = {
    "low": CapacityProfile("low", 512, 128, 84),       # 1.5 bpp
    "high": CapacityProfile("high", 512, 256, 104),    # 6 bpp
    "xlow": CapacityProfile("xlow", 512, 64, 84),      # 0.375 bpp
    "xhigh": CapacityProfile("xhigh", 512, 384, 104),  # 13.5 bpp
    "max": CapacityProfile("max", 512, 512, 104),      # 24 bpp
    "desk": CapacityProfile("desk", 128, 32, 64),      # 1.5 bpp, small covers
}


def stride_plan(profile: CapacityProfile, num_blocks: int = 4) -> list[int]:
    """Factor the total stride into per-block strides of 1 or 2."""
    total = profile.total_stride
    s = int(total)
    if s != total or s < 1 or (s & (s - 1)) != 0 or s > 2**num_blocks:
        raise ValueError(
            f"profile {profile.name!r}: total stride {total} cannot be "
            f"factored into {num_blocks} conv strides of 1 or 2")
    n2 = s.bit_length() - 1
    return [2] * n2 + [1] * (num_blocks - n2)


@dataclass(frozen=True)
class ConvSpec:
    weights: np.ndarray  # (out_ch, in_ch, 3, 3)
    stride: int


@dataclass(frozen=True)
class FixedDecoder:
    layers: tuple[ConvSpec, ...]  # 4 hidden blocks + output conv
    weight_key: int
    profile: CapacityProfile


@dataclass
class GradientTape:
    """Per-layer caches from one forward pass; consumed by one backward."""

    conv_inputs: list = field(default_factory=list)      # padded inputs per conv
    norm_caches: list = field(default_factory=list)      # (xhat, inv_std) per IN
    relu_inputs: list = field(default_factory=list)      # pre-activation per block
    sigmoid_out: np.ndarray | None = None
    consumed: bool = False


def build_decoder(k_w: int, profile: CapacityProfile) -> FixedDecoder:
    """He-initialized fixed weights drawn deterministically from k_w."""
    strides = stride_plan(profile)
    width = profile.channel_width
    shapes = []
    in_ch = 3
    for s in strides:
        shapes.append((width, in_ch, s))
        in_ch = width
    shapes.append((3, in_ch, 1))  # output conv

    layers = []
    for i, (out_ch, in_ch, s) in enumerate(shapes):
        stream = derive_stream(k_w, f"weights/layer{i}")
        w = stream.gaussian(out_ch * in_ch * 9).reshape(out_ch, in_ch, 3, 3)
        w = w * np.sqrt(2.0 / (in_ch * 9))
        w.setflags(write=False)
        layers.append(ConvSpec(weights=w, stride=s))
    return FixedDecoder(layers=tuple(layers), weight_key=k_w, profile=profile)


def _conv_forward(x: np.ndarray, spec: ConvSpec) -> tuple[np.ndarray, np.ndarray]:
    """3x3 convolution, padding 1, no bias; x is (C, H, W). Returns (y, xp)."""
    c, h, w = x.shape
    s = spec.stride
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    win = win[:, ::s, ::s]  # (C, Ho, Wo, 3, 3)
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * 9)
    wmat = spec.weights.reshape(spec.weights.shape[0], c * 9)
    y = (cols @ wmat.T).T.reshape(-1, ho, wo)
    return y, xp


def _conv_backward(g: np.ndarray, spec: ConvSpec, xp_shape: tuple) -> np.ndarray:
    """Gradient w.r.t. the conv input given gradient g w.r.t. its output."""
    out_ch, ho, wo = g.shape
    c = xp_shape[0]
    s = spec.stride
    wmat = spec.weights.reshape(out_ch, c * 9)
    gcols = (g.reshape(out_ch, ho * wo).T @ wmat)  # (Ho*Wo, C*9)
    gcols = gcols.reshape(ho, wo, c, 3, 3)
    gxp = np.zeros(xp_shape)
    for dy in range(3):
        for dx in range(3):
            gxp[:, dy:dy + ho * s:s, dx:dx + wo * s:s] += \
                gcols[:, :, :, dy, dx].transpose(2, 0, 1)
    return gxp[:, 1:-1, 1:-1]


def _instance_norm_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)  # population (1/N)
    inv_std = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = (x - mean) * inv_std
    return xhat, xhat, inv_std


def _instance_norm_backward(g: np.ndarray, xhat: np.ndarray,
                            inv_std: np.ndarray) -> np.ndarray:
    gm = g.mean(axis=(1, 2), keepdims=True)
    gxm = (g * xhat).mean(axis=(1, 2), keepdims=True)
    return inv_std * (g - gm - xhat * gxm)


def forward(dec: FixedDecoder, x: np.ndarray) -> tuple[np.ndarray, GradientTape]:
    """Evaluate the decoder on a (H, W, 3) array; returns ((Hs, Ws, 3), tape)."""
    p = dec.profile
    if x.shape != (p.cover_side, p.cover_side, 3):
        raise ValueError(
            f"input shape {x.shape} does not match profile "
            f"({p.cover_side}, {p.cover_side}, 3)")
    tape = GradientTape()
    a = np.ascontiguousarray(x.transpose(2, 0, 1))
    for spec in dec.layers[:-1]:
        y, xp = _conv_forward(a, spec)
        tape.conv_inputs.append(xp.shape)
        xhat, cache_xhat, inv_std = _instance_norm_forward(y)
        tape.norm_caches.append((cache_xhat, inv_std))
        tape.relu_inputs.append(xhat)
        a = np.where(xhat >= 0, xhat, LEAKY_SLOPE * xhat)
    y, xp = _conv_forward(a, dec.layers[-1])
    tape.conv_inputs.append(xp.shape)
    out = 1.0 / (1.0 + np.exp(-y))
    tape.sigmoid_out = out
    return out.transpose(1, 2, 0), tape


def input_gradient(dec: FixedDecoder, tape: GradientTape,
                   upstream: np.ndarray) -> np.ndarray:
    """Exact reverse-mode gradient of the output w.r.t. the decoder input.

    `upstream` is the gradient w.r.t. the (Hs, Ws, 3) output; the result has
    the (cover, cover, 3) input shape.  The tape is single-use.
    """
    if tape.consumed:
        raise RuntimeError("gradient tape already consumed")
    tape.consumed = True
    out = tape.sigmoid_out
    g = upstream.transpose(2, 0, 1) * out * (1.0 - out)
    g = _conv_backward(g, dec.layers[-1], tape.conv_inputs[-1])
    for i in range(len(dec.layers) - 2, -1, -1):
        xhat, inv_std = tape.norm_caches[i]
        pre = tape.relu_inputs[i]
        g = g * np.where(pre >= 0, 1.0, LEAKY_SLOPE)
        g = _instance_norm_backward(g, xhat, inv_std)
        g = _conv_backward(g, dec.layers[i], tape.conv_inputs[i])
    return g.transpose(1, 2, 0)


def weights_digest(dec: FixedDecoder) -> str:
    import hashlib
    h = hashlib.sha256()
    for spec in dec.layers:
        h.update(spec.weights.tobytes())
    return h.hexdigest()
