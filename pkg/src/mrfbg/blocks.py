"""Block grids, orthonormal 2D DCT and the zigzag block descriptor."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft

from .imagio import Frame


class BlockError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class NodeCoord:
    i: int  # block column
    j: int  # block row


@dataclass(eq=False)
class Label:
    """Vectorised content of one N x N x channels block.

    ``values`` is stored channel-major then row-major (all of channel 0
    first), as uint8. Mean and standard deviation are cached on first use.
    """

    node: NodeCoord
    values: np.ndarray
    source_frame: int = 0
    channels: int = 1
    _mean: float | None = field(default=None, repr=False)
    _std: float | None = field(default=None, repr=False)

    @classmethod
    def from_block(cls, node, block, source_frame=0, mean=None, std=None):
        block = np.asarray(block)
        if block.ndim == 2:
            block = block[:, :, None]
        values = np.ascontiguousarray(block.transpose(2, 0, 1)).reshape(-1)
        return cls(node, values, source_frame, block.shape[2], mean, std)

    def __len__(self):
        return self.values.size

    @property
    def mean(self) -> float:
        if self._mean is None:
            self._mean = float(self.values.mean())
        return self._mean

    @property
    def std(self) -> float:
        if self._std is None:
            self._std = float(self.values.std())
        return self._std

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.values.size // self.channels)))

    def block(self) -> np.ndarray:
        """The (N, N, channels) pixel block."""
        n = self.side
        if n * n * self.channels != self.values.size:
            raise BlockError("label length does not match channel count")
        return self.values.reshape(self.channels, n, n).transpose(1, 2, 0)


def grid_shape(width: int, height: int, n: int):
    """(columns, rows) of the non-overlapping grid, remainder cropped."""
    return width // n, height // n


def partition(frame: Frame, n: int):
    """Split a frame into non-overlapping ``n`` x ``n`` labels.

    Returns a list of rows; ``grid[j][i]`` is the label at column i, row j.
    A right/bottom remainder that does not fill a whole block is dropped.
    """
    if n < 2:
        raise BlockError("block side must be at least 2")
    if n > min(frame.width, frame.height):
        raise BlockError("block larger than frame")
    cols, rows = grid_shape(frame.width, frame.height, n)
    data = frame.data
    return [
        [
            Label.from_block(NodeCoord(i, j), data[j * n:(j + 1) * n, i * n:(i + 1) * n], frame.index)
            for i in range(cols)
        ]
        for j in range(rows)
    ]


def block_view(stack: np.ndarray, n: int) -> np.ndarray:
    """Reshape (F, H, W, c) frames into (rows, cols, F, n, n, c) blocks (cropped)."""
    f, h, w, c = stack.shape
    rows, cols = h // n, w // n
    cropped = stack[:, :rows * n, :cols * n, :]
    return cropped.reshape(f, rows, n, cols, n, c).transpose(1, 3, 0, 2, 4, 5)


def reassemble(blocks: np.ndarray) -> np.ndarray:
    """Inverse of the grid split: (rows, cols, n, n, c) -> (rows*n, cols*n, c)."""
    rows, cols, n, _, c = blocks.shape
    return blocks.transpose(0, 2, 1, 3, 4).reshape(rows * n, cols * n, c)


def dct2(block) -> np.ndarray:
    """Orthonormal type-II 2D DCT of a square matrix."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise BlockError(f"shape error: expected a square matrix, got {block.shape}")
    if block.shape[0] < 2:
        raise BlockError("shape error: side must be at least 2")
    return fft.dctn(block, type=2, norm="ortho")


def idct2(coeffs) -> np.ndarray:
    return fft.idctn(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho")


@lru_cache(maxsize=None)
def zigzag_indices(n: int):
    """(rows, cols) index arrays of an n x n matrix in JPEG zigzag order."""
    cells = [(v, u) for v in range(n) for u in range(n)]
    cells.sort(key=lambda vu: (vu[0] + vu[1], -vu[0] if (vu[0] + vu[1]) % 2 == 0 else vu[0]))
    rows = np.array([v for v, _ in cells])
    cols = np.array([u for _, u in cells])
    return rows, cols


def descriptors(blocks: np.ndarray, d: int) -> np.ndarray:
    """Zigzag DCT descriptors for a batch of blocks.

    ``blocks`` has shape (..., n, n, c). The result has shape (..., d * c):
    the first ``d`` zigzag coefficients of channel 0, then channel 1, ...
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    n, c = blocks.shape[-2], blocks.shape[-1]
    if blocks.shape[-3] != n:
        raise BlockError("blocks must be square")
    if not 1 <= d <= n * n:
        raise BlockError(f"descriptor size must be in [1, {n * n}]")
    coeffs = fft.dctn(blocks, type=2, norm="ortho", axes=(-3, -2))
    rows, cols = zigzag_indices(n)
    picked = coeffs[..., rows[:d], cols[:d], :]  # (..., d, c)
    return np.swapaxes(picked, -1, -2).reshape(*blocks.shape[:-3], d * c)


def descriptor(label: Label, d: int) -> np.ndarray:
    return descriptors(label.block(), d)


def lattice_origins(length: int, n: int, step: int):
    """Block origins along one axis; the last one is clamped to reach the edge."""
    if not 1 <= step <= n:
        raise BlockError("step must be in [1, N]")
    if n > length:
        raise BlockError("block larger than frame")
    origins = list(range(0, length - n + 1, step))
    if origins[-1] + n < length:
        origins.append(length - n)
    return origins


def overlapping_blocks(frame: Frame, n: int, step: int):
    """All (origin, block) pairs on the overlapping lattice, origin = (x, y)."""
    xs = lattice_origins(frame.width, n, step)
    ys = lattice_origins(frame.height, n, step)
    return [((x, y), frame.data[y:y + n, x:x + n, :]) for y in ys for x in xs]


def lattice_blocks(data: np.ndarray, n: int, step: int):
    """Overlapping blocks of an (H, W, c) array as (len(ys), len(xs), n, n, c)."""
    h, w = data.shape[:2]
    xs = np.asarray(lattice_origins(w, n, step))
    ys = np.asarray(lattice_origins(h, n, step))
    offs = np.arange(n)
    rr = (ys[:, None] + offs[None, :])[:, None, :, None]
    cc = (xs[:, None] + offs[None, :])[None, :, None, :]
    return data[rr, cc, :], xs, ys
