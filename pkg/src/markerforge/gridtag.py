"""A minimal 8x8 matrix code carrying 16 bits with an XOR checksum.

Layout (row-major, ink = True): the outer ring is solid ink. Of the inner
6x6, corners (0,0), (0,5), (5,0) are ink and (5,5) is paper; the other 32
cells hold data(16) | checksum(8) | 0xAA(8), most significant bit first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import PixelGrid

SIZE = 8
STRUCTURE_BYTE = 0xAA
INK_LUMA = 20
PAPER_LUMA = 235

_CORNERS = {(0, 0): True, (0, 5): True, (5, 0): True, (5, 5): False}
_DATA_CELLS = [(r, c) for r in range(6) for c in range(6) if (r, c) not in _CORNERS]


class GridTagError(ValueError):
    pass


class BorderNotFound(GridTagError):
    pass


class OrientationInvalid(GridTagError):
    pass


class ChecksumMismatch(GridTagError):
    pass


class StructureMismatch(GridTagError):
    pass


def checksum(data: int) -> int:
    return ((data >> 8) ^ data) & 0xFF


def format_payload(data: int) -> str:
    return f"{data:04X}"


def parse_payload(s: str) -> int:
    value = int(s, 16)
    if not 0 <= value <= 0xFFFF:
        raise ValueError(f"payload {s!r} out of 16-bit range")
    return value


@dataclass(frozen=True, eq=False)
class ModuleMatrix:
    cells: np.ndarray  # (8, 8) bool

    def __post_init__(self):
        a = np.array(self.cells, dtype=bool)
        if a.shape != (SIZE, SIZE):
            raise ValueError(f"module matrix must be 8x8, got {a.shape}")
        a.flags.writeable = False
        object.__setattr__(self, "cells", a)

    def __eq__(self, other):
        return isinstance(other, ModuleMatrix) and np.array_equal(self.cells, other.cells)


def _bitstream(data):
    word = (data << 16) | (checksum(data) << 8) | STRUCTURE_BYTE
    return [bool((word >> (31 - i)) & 1) for i in range(32)]


def encode_gridtag(data: int) -> ModuleMatrix:
    if not 0 <= data <= 0xFFFF:
        raise ValueError("payload must fit in 16 bits")
    m = np.zeros((SIZE, SIZE), dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
    for (r, c), ink in _CORNERS.items():
        m[r + 1, c + 1] = ink
    for (r, c), bit in zip(_DATA_CELLS, _bitstream(data)):
        m[r + 1, c + 1] = bit
    return ModuleMatrix(m)


def render_gridtag(m: ModuleMatrix, module_px: int) -> PixelGrid:
    """Tag at ``module_px`` per module, with a one-module quiet zone."""
    if module_px < 2:
        raise ValueError("module_px must be >= 2")
    padded = np.zeros((SIZE + 2, SIZE + 2), dtype=bool)
    padded[1:-1, 1:-1] = m.cells
    img = np.where(padded, INK_LUMA, PAPER_LUMA).astype(np.uint8)
    return PixelGrid(np.kron(img, np.ones((module_px, module_px), dtype=np.uint8)))


def render_gridtag_at(m: ModuleMatrix, side_px: int) -> np.ndarray:
    """Nearest-module rendering of the tag body (no quiet zone) at any side length."""
    idx = (np.arange(side_px) * SIZE) // side_px
    return np.where(m.cells[idx][:, idx], INK_LUMA, PAPER_LUMA).astype(np.uint8)


def sample_modules(grid: PixelGrid, box) -> np.ndarray:
    """Ink/paper per cell from the mean of the centre 3x3 (clipped to the cell)."""
    x, y, w, h = box
    luma = grid.luma
    out = np.zeros((SIZE, SIZE), dtype=bool)
    xs = [x + (j * w) // SIZE for j in range(SIZE + 1)]
    ys = [y + (i * h) // SIZE for i in range(SIZE + 1)]
    for i in range(SIZE):
        y0, y1 = ys[i], max(ys[i + 1], ys[i] + 1)
        cy = (y0 + y1 - 1) // 2
        for j in range(SIZE):
            x0, x1 = xs[j], max(xs[j + 1], xs[j] + 1)
            cx = (x0 + x1 - 1) // 2
            patch = luma[max(cy - 1, y0):min(cy + 2, y1), max(cx - 1, x0):min(cx + 2, x1)]
            out[i, j] = patch.mean() < 128
    return out


def _read(cells):
    """Payload from an upright matrix, or the exception class that rejects it."""
    inner = cells[1:-1, 1:-1]
    for (r, c), ink in _CORNERS.items():
        if inner[r, c] != ink:
            return OrientationInvalid
    word = 0
    for r, c in _DATA_CELLS:
        word = (word << 1) | int(inner[r, c])
    data, check, structure = word >> 16, (word >> 8) & 0xFF, word & 0xFF
    if check != checksum(data):
        return ChecksumMismatch
    if structure != STRUCTURE_BYTE:
        return StructureMismatch
    return data


_SEVERITY = [OrientationInvalid, ChecksumMismatch, StructureMismatch]


def decode_matrix(cells: np.ndarray) -> int:
    cells = np.asarray(cells, dtype=bool)
    if not (cells[0].all() and cells[-1].all() and cells[:, 0].all() and cells[:, -1].all()):
        raise BorderNotFound("outer ring is not solid ink")
    found = []
    furthest = OrientationInvalid
    for k in range(4):
        got = _read(np.rot90(cells, k))
        if isinstance(got, int):
            found.append(got)
        elif _SEVERITY.index(got) > _SEVERITY.index(furthest):
            furthest = got
    if found:
        return min(found)
    raise furthest(f"no rotation validates ({furthest.__name__})")


def decode_gridtag(grid: PixelGrid, box) -> int:
    x, y, w, h = box
    if x < 0 or y < 0 or w < SIZE or h < SIZE or x + w > grid.width or y + h > grid.height:
        raise ValueError(f"box {box} not inside a {grid.width}x{grid.height} image")
    return decode_matrix(sample_modules(grid, box))
