"""Deterministic key-derived randomness and procedural cover generation.

Both communicating parties rebuild identical covers and decoder weights from
shared key material, so every random draw here must be bit-reproducible
across runs and platforms.  The generator is SplitMix64 used in counter mode:

    state0   = splitmix64_mix(seed XOR fnv1a64(tag))
    draw[i]  = splitmix64_mix(state0 + (i + 1) * GOLDEN)

Uniforms are ``(u64 >> 11) * 2**-53`` (53-bit mantissa, little-endian word
order); gaussians come from Box-Muller on consecutive uniform pairs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .image_core import ImageTensor, image_from_array, load_image

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)

GENERATOR_VERSION = "rfnns-cover-v1"


def fnv1a64(data: bytes | str) -> int:
    """64-bit FNV-1a hash, used for domain separation tags."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer (Steele, Lea, Flood 2014).
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass
class DeterministicStream:
    """Sequential counter-based PRNG; one owner, advance-only."""

    state0: np.uint64
    counter: int = 0

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(self.state0 + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """Uniforms in [0, 1) with 53-bit resolution."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def gaussian(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller; consumes 2*ceil(n/2) uniforms."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]


def derive_stream(seed: int, tag: str) -> DeterministicStream:
    """Stream fully determined by (seed, tag); distinct tags are independent."""
    with np.errstate(over="ignore"):
        s0 = _mix64(np.uint64((seed ^ fnv1a64(tag)) & 0xFFFFFFFFFFFFFFFF))
    return DeterministicStream(state0=np.uint64(s0))


@dataclass(frozen=True)
class KeyMaterial:
    """Shared secrets from which cover and decoder are rebuilt on both sides."""

    k_c: int
    prompt: str
    k_w: int


def _value_noise(stream: DeterministicStream, h: int, w: int, cell: int,
                 channels: int = 3) -> np.ndarray:
    """Bilinearly interpolated random lattice ("value noise"), values in [0,1)."""
    gh = h // cell + 2
    gw = w // cell + 2
    lattice = stream.uniform(gh * gw * channels).reshape(gh, gw, channels)
    y = np.arange(h) / cell
    x = np.arange(w) / cell
    y0 = np.floor(y).astype(int)
    x0 = np.floor(x).astype(int)
    fy = (y - y0)[:, None, None]
    fx = (x - x0)[None, :, None]
    a = lattice[y0][:, x0]
    b = lattice[y0][:, x0 + 1]
    c = lattice[y0 + 1][:, x0]
    d = lattice[y0 + 1][:, x0 + 1]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def generate_cover(keys: KeyMaterial, height: int, width: int,
                   block_size: int = 8) -> ImageTensor:
    """Deterministic procedural cover: multi-octave value noise plus a
    low-frequency mask that keeps part of the frame smooth and part textured.

    Stands in for a text-to-image model: both sides regenerate an identical
    cover from (k_c, prompt) alone.
    """
    if height < 32 or width < 32:
        raise ValueError("cover dimensions must be at least 32x32")
    if height % block_size or width % block_size:
        raise ValueError(f"cover dimensions must be multiples of {block_size}")

    base_tag = f"cover/{keys.prompt}"
    cells = (16, 8, 4, 2)
    amps = (1.0, 0.5, 0.25, 0.125)
    octaves = [
        amps[i] * (_value_noise(derive_stream(keys.k_c, f"{base_tag}/oct{i}"),
                                height, width, cells[i]) - 0.5)
        for i in range(4)
    ]

    # Low-frequency field, renormalized per image so every cover is guaranteed
    # to contain both a fully smooth and a fully textured region.
    f = _value_noise(derive_stream(keys.k_c, f"{base_tag}/flat"),
                     height, width, 32, channels=1)[:, :, 0]
    f = (f - f.min()) / max(f.max() - f.min(), 1e-12)
    m = np.clip((f - 0.12) / 0.10, 0.0, 1.0)
    # pin one block-aligned 16x16 window at the field minimum to fully smooth,
    # so every cover keeps at least one low-complexity region
    my, mx = np.unravel_index(np.argmin(f), f.shape)
    wy = min(max((my // block_size) * block_size - block_size, 0), height - 16)
    wx = min(max((mx // block_size) * block_size - block_size, 0), width - 16)
    m[wy:wy + 16, wx:wx + 16] = 0.0
    m = m[:, :, None]

    fine = derive_stream(keys.k_c, f"{base_tag}/fine").uniform(
        height * width * 3).reshape(height, width, 3) - 0.5

    # the 0.5 gain compresses the dynamic range around mid-gray; texture
    # complexity only depends on pixel orderings, which a positive gain
    # preserves, while amplitude-coupled channel distortions (e.g. contrast
    # changes) shrink proportionally
    img = (0.5
           + 0.5 * (0.8 * (octaves[0] + octaves[1])
                    + m * (octaves[2] + octaves[3] + 0.45 * fine)))
    return image_from_array(np.clip(img, 0.0, 1.0))


def cover_digest(img: ImageTensor) -> str:
    """SHA-256 over the 8-bit quantized pixel payload (codec independent)."""
    q = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    return hashlib.sha256(q.tobytes()).hexdigest()


def load_external_cover(path: str) -> tuple[ImageTensor, str]:
    """Load a cover both sides already share; returns (image, content hash)."""
    img = load_image(path)
    return img, cover_digest(img)
