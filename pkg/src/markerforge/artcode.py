"""Topological markers: leaf counts per branch of an ink region.

A marker is an ink root whose holes ("branches") each contain one or
more childless ink blobs ("leaves"). The code is the ascending list of
leaf counts, written ``"1:1:2:4:4"``.
"""
from __future__ import annotations

import enum
import functools
import math
import re
from dataclasses import dataclass

import numpy as np

from .imaging import PixelGrid, RegionAdjacencyTree

INK_LUMA = 20
PAPER_LUMA = 235

MIN_DOT_RADIUS = 2
MIN_GAP = 2


class CodeError(ValueError):
    pass


class EmptyCode(CodeError):
    pass


class NonNumericSegment(CodeError):
    pass


class ZeroOrNegativeCount(CodeError):
    pass


class Unrenderable(ValueError):
    pass


@dataclass(frozen=True)
class ArtcodeDescriptor:
    leaf_counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.leaf_counts)
        if not counts:
            raise EmptyCode("descriptor needs at least one branch")
        if min(counts) < 1:
            raise ZeroOrNegativeCount(f"leaf counts must be positive: {counts}")
        object.__setattr__(self, "leaf_counts", tuple(sorted(counts)))

    def __len__(self):
        return len(self.leaf_counts)

    def __str__(self):
        return format_code(self)


@dataclass(frozen=True)
class ValidationPolicy:
    min_branches: int = 3
    max_branches: int = 12
    min_leaves_per_branch: int = 1
    max_leaves_per_branch: int = 9
    checksum_modulus: int | None = None

    def __post_init__(self):
        if not 1 <= self.min_branches <= self.max_branches:
            raise ValueError("need 1 <= min_branches <= max_branches")
        if not 1 <= self.min_leaves_per_branch <= self.max_leaves_per_branch:
            raise ValueError("need 1 <= min_leaves_per_branch <= max_leaves_per_branch")
        if self.checksum_modulus is not None and self.checksum_modulus < 2:
            raise ValueError("checksum_modulus must be >= 2")

    def to_dict(self):
        return {
            "minBranches": self.min_branches,
            "maxBranches": self.max_branches,
            "minLeavesPerBranch": self.min_leaves_per_branch,
            "maxLeavesPerBranch": self.max_leaves_per_branch,
            "checksumModulus": self.checksum_modulus,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            min_branches=d.get("minBranches", 3),
            max_branches=d.get("maxBranches", 12),
            min_leaves_per_branch=d.get("minLeavesPerBranch", 1),
            max_leaves_per_branch=d.get("maxLeavesPerBranch", 9),
            checksum_modulus=d.get("checksumModulus"),
        )


DEFAULT_POLICY = ValidationPolicy()


class ValidationOutcome(enum.Enum):
    VALID = "Valid"
    TOO_FEW_BRANCHES = "TooFewBranches"
    TOO_MANY_BRANCHES = "TooManyBranches"
    LEAF_COUNT_OUT_OF_RANGE = "LeafCountOutOfRange"
    CHECKSUM_MISMATCH = "ChecksumMismatch"

    def __bool__(self):
        return self is ValidationOutcome.VALID


@dataclass(frozen=True)
class ArtcodeCandidate:
    descriptor: ArtcodeDescriptor
    root_region_id: int
    bbox: tuple[int, int, int, int]


def validate_descriptor(d: ArtcodeDescriptor, policy: ValidationPolicy) -> ValidationOutcome:
    n = len(d.leaf_counts)
    if n < policy.min_branches:
        return ValidationOutcome.TOO_FEW_BRANCHES
    if n > policy.max_branches:
        return ValidationOutcome.TOO_MANY_BRANCHES
    if (d.leaf_counts[0] < policy.min_leaves_per_branch
            or d.leaf_counts[-1] > policy.max_leaves_per_branch):
        return ValidationOutcome.LEAF_COUNT_OUT_OF_RANGE
    if policy.checksum_modulus and sum(d.leaf_counts) % policy.checksum_modulus:
        return ValidationOutcome.CHECKSUM_MISMATCH
    return ValidationOutcome.VALID


def structural_candidates(tree: RegionAdjacencyTree):
    """Yield (node, descriptor) for every ink node with the branch/leaf shape.

    Policy is not applied here; ``extract_artcodes`` filters these.
    """
    nodes = tree.nodes
    for node in nodes:
        if not node.polarity or node.virtual or not node.child_ids:
            continue
        counts = []
        for b in node.child_ids:
            branch = nodes[b]
            if not branch.child_ids:
                break
            if any(nodes[leaf].child_ids for leaf in branch.child_ids):
                break
            counts.append(len(branch.child_ids))
        else:
            yield node, ArtcodeDescriptor(tuple(counts))


def extract_artcodes(tree: RegionAdjacencyTree, policy: ValidationPolicy = DEFAULT_POLICY):
    found = [
        ArtcodeCandidate(d, node.id, node.bbox)
        for node, d in structural_candidates(tree)
        if validate_descriptor(d, policy)
    ]
    found.sort(key=lambda c: (c.bbox[1], c.bbox[0], c.root_region_id))
    return found


def format_code(d: ArtcodeDescriptor) -> str:
    return ":".join(str(c) for c in d.leaf_counts)


_COUNT = re.compile(r"-?[0-9]+")


def parse_code(s: str) -> ArtcodeDescriptor:
    s = s.strip()
    if not s:
        raise EmptyCode("empty code string")
    counts = []
    for seg in s.split(":"):
        seg = seg.strip()
        # int() alone would also take "1_0" and "+3"
        if not _COUNT.fullmatch(seg):
            raise NonNumericSegment(f"segment {seg!r} is not a base-10 integer")
        value = int(seg)
        if value < 1:
            raise ZeroOrNegativeCount(f"count {value} must be positive")
        counts.append(value)
    return ArtcodeDescriptor(tuple(counts))


# ---------------------------------------------------------------- rendering

def _split(total, parts, gap):
    """Split ``total`` pixels into ``parts`` spans separated by ``gap``."""
    avail = total - (parts - 1) * gap
    base, extra = divmod(avail, parts)
    sizes = [base + (1 if i < extra else 0) for i in range(parts)]
    starts = []
    pos = 0
    for s in sizes:
        starts.append(pos)
        pos += s + gap
    return list(zip(starts, sizes))


def _row_counts(n):
    rows = max(1, round(math.sqrt(n)))
    base, extra = divmod(n, rows)
    return [base + (1 if r < extra else 0) for r in range(rows)]


def _dot_grid(k, cw, ch, r_cap):
    """Best (cols, rows, radius) for k dots in a cw x ch cell, or None."""
    best = None
    for cols in range(1, k + 1):
        rows = math.ceil(k / cols)
        sx = (cw - MIN_GAP) / cols
        sy = (ch - MIN_GAP) / rows
        # each dot slot holds a (2r+1) disc plus one MIN_GAP
        r = int((min(sx, sy) - MIN_GAP - 1) // 2)
        r = min(r, int(0.3 * min(sx, sy)), r_cap)
        if r >= MIN_DOT_RADIUS and (best is None or r > best[2]):
            best = (cols, rows, r)
    return best


def quiet_margin(size) -> int:
    return max(2, round(0.04 * size))


@dataclass(frozen=True)
class _Layout:
    size: int
    margin: int
    ring: int
    cells: list  # (x, y, w, h) paper rectangles
    dots: list  # per cell: list of (cx, cy, r)


def _layout(d: ArtcodeDescriptor, size, rng) -> _Layout:
    n = len(d.leaf_counts)
    margin = quiet_margin(size)
    body = size - 2 * margin
    ring = max(3, round(0.07 * body))
    wall = max(3, round(0.04 * body))
    inner = body - 2 * ring
    if inner < 2 * MIN_DOT_RADIUS + 1 + 2 * MIN_GAP:
        raise Unrenderable(f"canvas {size}px too small")

    # solid ink must stay thinner than the thresholding window
    r_cap = max(MIN_DOT_RADIUS, int(0.035 * size))
    counts = list(rng.permutation(d.leaf_counts))
    cells = []
    for (ry, rh), m in zip(_split(inner, len(_row_counts(n)), wall), _row_counts(n)):
        for rx, rw in _split(inner, m, wall):
            cells.append((margin + ring + rx, margin + ring + ry, rw, rh))
    if min(min(c[2], c[3]) for c in cells) < 1:
        raise Unrenderable(f"{n} branches do not fit at {size}px")

    dots = []
    for (x, y, w, h), k in zip(cells, counts):
        grid = _dot_grid(int(k), w, h, r_cap)
        if grid is None:
            raise Unrenderable(f"{k} leaves do not fit in a {w}x{h}px branch at {size}px")
        cols, rows, r = grid
        sx = (w - MIN_GAP) / cols
        sy = (h - MIN_GAP) / rows
        # one pixel held back for the floor() below
        slack_x = int((sx - 2 * r - 1 - MIN_GAP) // 2) - 1
        slack_y = int((sy - 2 * r - 1 - MIN_GAP) // 2) - 1
        cell_dots = []
        for i in range(int(k)):
            row, col = divmod(i, cols)
            in_row = min(cols, int(k) - row * cols)
            # centre a partial last row
            shift = (cols - in_row) * sx / 2
            cx = x + MIN_GAP / 2 + shift + (col + 0.5) * sx
            cy = y + MIN_GAP / 2 + (row + 0.5) * sy
            jx = int(rng.integers(-slack_x, slack_x + 1)) if slack_x > 0 else 0
            jy = int(rng.integers(-slack_y, slack_y + 1)) if slack_y > 0 else 0
            cell_dots.append((int(math.floor(cx)) + jx, int(math.floor(cy)) + jy, r))
        dots.append(cell_dots)
    return _Layout(size, margin, ring, cells, dots)


def render_artcode(d: ArtcodeDescriptor, canvas_px: int, seed: int = 0) -> PixelGrid:
    """Draw a square marker on a ``canvas_px`` canvas.

    The ink body is inset by ``quiet_margin(canvas_px)`` on every side.

    Root: filled rounded square with one paper cell per branch cut out;
    leaves: discs laid out on a sub-grid inside each cell.
    """
    if canvas_px < 64:
        raise Unrenderable(f"canvas must be >= 64px, got {canvas_px}")
    rng = np.random.default_rng(seed)
    lay = _layout(d, canvas_px, rng)
    size = canvas_px

    img = np.full((size, size), PAPER_LUMA, dtype=np.uint8)
    m = lay.margin
    body = img[m:size - m, m:size - m]
    body[:] = INK_LUMA
    # round the outer corners with radius == ring so the corner stays >= ring thick
    rc = lay.ring
    yy, xx = np.mgrid[0:rc, 0:rc] + 0.5
    outside = (xx - rc) ** 2 + (yy - rc) ** 2 > rc ** 2
    body[:rc, :rc][outside] = PAPER_LUMA
    body[:rc, -rc:][outside[:, ::-1]] = PAPER_LUMA
    body[-rc:, :rc][outside[::-1, :]] = PAPER_LUMA
    body[-rc:, -rc:][outside[::-1, ::-1]] = PAPER_LUMA

    for (x, y, w, h), cell_dots in zip(lay.cells, lay.dots):
        img[y:y + h, x:x + w] = PAPER_LUMA
        for cx, cy, r in cell_dots:
            sub_y, sub_x = np.ogrid[-r:r + 1, -r:r + 1]
            disc = sub_x ** 2 + sub_y ** 2 <= r * r + r
            patch = img[cy - r:cy + r + 1, cx - r:cx + r + 1]
            patch[disc] = INK_LUMA
    return PixelGrid(img)


@functools.lru_cache(maxsize=4096)
def min_render_size(d: ArtcodeDescriptor, seed: int = 0, start: int = 64, limit: int = 4096) -> int:
    """Smallest canvas >= ``start`` at which ``d`` renders."""
    for size in range(max(start, 64), limit + 1):
        try:
            _layout(d, size, np.random.default_rng(seed))
            return size
        except Unrenderable:
            pass
    raise Unrenderable(f"{format_code(d)} does not render below {limit}px")
