"""Texture-aware localization: per-block LBP histogram entropy and selection.

Each block of the luminance image gets an 8-neighbor local-binary-pattern
code per pixel; the entropy of the block's 256-bin code histogram measures
texture complexity, and blocks at or above a threshold are marked for
embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import ImageTensor

ENTROPY_EPS = 1e-12

# neighbor offsets in k order: left-to-right, then top-to-bottom
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class BlockGrid:
    block_size: int
    rows: int
    cols: int


@dataclass(frozen=True)
class ComplexityMap:
    grid: BlockGrid
    values: np.ndarray  # (rows, cols) entropy in bits


@dataclass(frozen=True)
class BlockMask:
    grid: BlockGrid
    selected: np.ndarray  # (rows, cols) bool

    def pixel_mask(self) -> np.ndarray:
        """Boolean (H, W) mask with selected blocks expanded to pixels."""
        bs = self.grid.block_size
        return np.kron(self.selected, np.ones((bs, bs), dtype=bool))

    def num_selected(self) -> int:
        return int(self.selected.sum())


def luminance(img: ImageTensor) -> np.ndarray:
    return img.data.mean(axis=2)


def lbp_code(gray: np.ndarray, i: int, j: int) -> int:
    """LBP code of pixel (i, j); replicate padding supplies missing neighbors."""
    h, w = gray.shape
    c = gray[i, j]
    code = 0
    for k, (dy, dx) in enumerate(_OFFSETS):
        y = min(max(i + dy, 0), h - 1)
        x = min(max(j + dx, 0), w - 1)
        if gray[y, x] >= c:
            code |= 1 << k
    return code


def lbp_code_map(gray: np.ndarray) -> np.ndarray:
    """Vectorized LBP codes for every pixel (replicate-padded borders)."""
    padded = np.pad(gray, 1, mode="edge")
    h, w = gray.shape
    codes = np.zeros((h, w), dtype=np.int64)
    for k, (dy, dx) in enumerate(_OFFSETS):
        nb = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        codes |= (nb >= gray).astype(np.int64) << k
    return codes


def block_entropy(codes: np.ndarray) -> float:
    """Entropy (bits) of the 256-bin histogram of a block's LBP codes.

    Zero-probability bins contribute nothing, so a constant block yields
    exactly -log2(1 + eps), i.e. zero to within 1e-11.
    """
    codes = np.asarray(codes).ravel()
    if codes.size == 0:
        raise ValueError("empty code sequence")
    hist = np.bincount(codes, minlength=256)
    p = hist[hist > 0] / codes.size
    # a single-bin histogram gives -log2(1 + eps) ~ -1.4e-12; keep O >= 0
    return max(0.0, float(-np.sum(p * np.log2(p + ENTROPY_EPS))))


def select_blocks(img: ImageTensor, block_size: int = 8,
                  threshold: float = 4.5) -> tuple[ComplexityMap, BlockMask]:
    """Per-block texture complexity and the mask of blocks with O >= T."""
    h, w = img.height, img.width
    if h % block_size or w % block_size:
        raise ValueError("image dimensions must be divisible by the block size")
    rows, cols = h // block_size, w // block_size
    grid = BlockGrid(block_size=block_size, rows=rows, cols=cols)

    codes = lbp_code_map(luminance(img))
    values = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(cols):
            blk = codes[r * block_size:(r + 1) * block_size,
                        c * block_size:(c + 1) * block_size]
            values[r, c] = block_entropy(blk)
    values.setflags(write=False)
    selected = values >= threshold
    selected.setflags(write=False)
    return ComplexityMap(grid=grid, values=values), BlockMask(grid=grid, selected=selected)
