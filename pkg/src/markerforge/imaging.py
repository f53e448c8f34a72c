"""Raster I/O and low-level vision primitives.

Images are carried as read-only numpy arrays wrapped in small frozen
dataclasses. Everything here is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

INK = True
PAPER = False

_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)


class PnmError(ValueError):
    pass


class MalformedHeader(PnmError):
    pass


class TruncatedBody(PnmError):
    pass


class UnsupportedMaxval(PnmError):
    pass


class UnsupportedMagic(PnmError):
    pass


def _frozen(arr, dtype):
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    samples: np.ndarray  # (height, width, channels) uint8

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got shape {s.shape}")
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "samples", _frozen(s, np.uint8))

    @property
    def height(self):
        return self.samples.shape[0]

    @property
    def width(self):
        return self.samples.shape[1]

    @property
    def channels(self):
        return self.samples.shape[2]

    def __eq__(self, other):
        return isinstance(other, RasterImage) and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True, eq=False)
class PixelGrid:
    luma: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        a = np.asarray(self.luma)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"luma must be a non-empty 2-D array, got shape {a.shape}")
        object.__setattr__(self, "luma", _frozen(a, np.uint8))

    @property
    def height(self):
        return self.luma.shape[0]

    @property
    def width(self):
        return self.luma.shape[1]

    def crop(self, box) -> "PixelGrid":
        x, y, w, h = box
        return PixelGrid(self.luma[y:y + h, x:x + w])

    def __eq__(self, other):
        return isinstance(other, PixelGrid) and np.array_equal(self.luma, other.luma)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    ink: np.ndarray  # (height, width) bool, True = dark foreground

    def __post_init__(self):
        object.__setattr__(self, "ink", _frozen(self.ink, bool))

    @property
    def height(self):
        return self.ink.shape[0]

    @property
    def width(self):
        return self.ink.shape[1]


@dataclass(frozen=True, eq=False)
class LabelMap:
    label: np.ndarray  # (height, width) int32, dense in [0, component_count)
    polarity: np.ndarray  # (component_count,) bool, True = ink
    component_count: int
    # flat raster index of each component's first pixel; increasing by construction
    first_pixel: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "label", _frozen(self.label, np.int32))
        object.__setattr__(self, "polarity", _frozen(self.polarity, bool))
        object.__setattr__(self, "first_pixel", _frozen(self.first_pixel, np.int64))

    @property
    def height(self):
        return self.label.shape[0]

    @property
    def width(self):
        return self.label.shape[1]


@dataclass(frozen=True)
class RegionNode:
    id: int
    parent_id: int | None
    child_ids: tuple[int, ...]
    polarity: bool
    area: int
    bbox: tuple[int, int, int, int]
    virtual: bool = False


@dataclass(frozen=True)
class RegionAdjacencyTree:
    nodes: tuple[RegionNode, ...]
    root_id: int

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, i) -> RegionNode:
        return self.nodes[i]

    @property
    def root(self) -> RegionNode:
        return self.nodes[self.root_id]

    def depth(self, node_id) -> int:
        d = 0
        n = self.nodes[node_id]
        while n.parent_id is not None:
            d += 1
            n = self.nodes[n.parent_id]
        return d


# ---------------------------------------------------------------- PNM

_WS = b" \t\n\r\v\f"


def _header_fields(data, pos, count):
    values = []
    while len(values) < count:
        if pos >= len(data):
            raise MalformedHeader("header ended early")
        c = data[pos:pos + 1]
        if c in _WS:
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isdigit():
            end = pos
            while end < len(data) and data[end:end + 1].isdigit():
                end += 1
            values.append(int(data[pos:end]))
            pos = end
        else:
            raise MalformedHeader(f"unexpected byte {c!r} in header")
    return values, pos


def read_pnm(data: bytes) -> RasterImage:
    data = bytes(data)
    if len(data) < 2:
        raise MalformedHeader("file too short for a PNM header")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedMagic(f"unsupported magic {magic!r}")
    channels = 1 if magic == b"P5" else 3

    (width, height, maxval), pos = _header_fields(data, 2, 3)
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} (only 255 supported)")
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1

    need = width * height * channels
    body = data[pos:pos + need]
    if len(body) < need:
        raise TruncatedBody(f"expected {need} body bytes, got {len(body)}")
    samples = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return RasterImage(samples)


def write_pnm(image: RasterImage) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + image.samples.tobytes()


def grid_to_image(grid: PixelGrid) -> RasterImage:
    return RasterImage(grid.luma[:, :, None])


def to_luminance(image: RasterImage) -> PixelGrid:
    s = image.samples
    if image.channels == 1:
        return PixelGrid(s[:, :, 0])
    rgb = s.astype(np.float64)
    y = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    # floor(x + 0.5): round-half-up rather than numpy's banker's rounding
    return PixelGrid(np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------- thresholding

def default_window_radius(width, height) -> int:
    return max(15, min(width, height) // 16)


def adaptive_threshold(grid: PixelGrid, window_radius=None, offset=5) -> BinaryImage:
    """Mean-C thresholding over a (2r+1)^2 box clipped at the borders.

    A pixel is ink iff it is darker than the local mean minus ``offset``.
    The comparison is done in integers (``v * n < sum - offset * n``) so
    it is exact and invariant to adding a constant to every pixel.
    """
    h, w = grid.height, grid.width
    r = default_window_radius(w, h) if window_radius is None else int(window_radius)
    if r < 1:
        raise ValueError("window_radius must be >= 1")
    if offset < 0:
        raise ValueError("offset must be >= 0")

    v = grid.luma.astype(np.int64)
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(v, axis=0), axis=1, out=sat[1:, 1:])

    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    total = (sat[y1][:, x1] - sat[y0][:, x1] - sat[y1][:, x0] + sat[y0][:, x0])
    count = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    ink = v * count < total - offset * count
    return BinaryImage(ink)


# ---------------------------------------------------------------- labeling

def _first_pixels(lab):
    """Flat index of the first pixel of each label 1..n in a scipy labeling.

    Relies on scipy numbering components in raster order of first encounter,
    so a label's first pixel is where the running maximum increases.
    """
    flat = lab.ravel()
    run = np.maximum.accumulate(flat)
    jumps = np.flatnonzero(np.diff(run, prepend=0) > 0)
    return jumps


def label_components(binary: BinaryImage) -> LabelMap:
    """Label ink (8-connected) and paper (4-connected) components together.

    Labels are dense from 0 and assigned in raster order of each
    component's first pixel, irrespective of polarity.
    """
    ink = binary.ink
    ink_lab, n_ink = ndimage.label(ink, structure=_EIGHT)
    paper_lab, n_paper = ndimage.label(~ink, structure=_FOUR)

    first = np.concatenate([_first_pixels(ink_lab), _first_pixels(paper_lab)])
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)

    lut_ink = np.concatenate([[0], rank[:n_ink]]).astype(np.int32)
    lut_paper = np.concatenate([[0], rank[n_ink:]]).astype(np.int32)
    label = np.where(ink, lut_ink[ink_lab], lut_paper[paper_lab])

    polarity = np.zeros(n_ink + n_paper, dtype=bool)
    polarity[rank[:n_ink]] = True
    return LabelMap(label, polarity, int(n_ink + n_paper), first[order])


# ---------------------------------------------------------------- region tree

@dataclass(frozen=True)
class _Parents:
    parent: np.ndarray  # parent per label, -1 for tree roots; virtual root id = n
    has_virtual: bool
    root: int


def _region_parents(labels: LabelMap) -> _Parents:
    """Immediate-encloser of every component.

    A component's first raster pixel has its upper neighbour in a
    different component of the opposite polarity that lies (at least
    partly) above it, so that neighbour cannot be one of its holes: it is
    the encloser. Components touching the border have no encloser.
    """
    lab = labels.label
    h, w = lab.shape
    n = labels.component_count
    flat = lab.ravel()

    on_border = np.zeros(n, dtype=bool)
    on_border[lab[0]] = True
    on_border[lab[-1]] = True
    on_border[lab[:, 0]] = True
    on_border[lab[:, -1]] = True

    first = labels.first_pixel
    above = first - w
    parent = np.where(above >= 0, flat[np.maximum(above, 0)], -1).astype(np.int64)

    border_ids = np.flatnonzero(on_border)
    if border_ids.size > 1:
        parent[border_ids] = n
        return _Parents(parent, True, n)
    parent[border_ids] = -1
    return _Parents(parent, False, int(border_ids[0]))


def build_rat(labels: LabelMap) -> RegionAdjacencyTree:
    h, w = labels.height, labels.width
    n = labels.component_count
    p = _region_parents(labels)

    areas = np.bincount(labels.label.ravel(), minlength=n)
    slices = ndimage.find_objects(labels.label + 1, max_label=n)

    total = n + (1 if p.has_virtual else 0)
    children = [[] for _ in range(total)]
    for i in range(n):
        if p.parent[i] >= 0:
            children[p.parent[i]].append(i)

    nodes = []
    for i in range(n):
        sy, sx = slices[i]
        nodes.append(RegionNode(
            id=i,
            parent_id=int(p.parent[i]) if p.parent[i] >= 0 else None,
            child_ids=tuple(children[i]),
            polarity=bool(labels.polarity[i]),
            area=int(areas[i]),
            bbox=(sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start),
        ))
    if p.has_virtual:
        nodes.append(RegionNode(
            id=n, parent_id=None, child_ids=tuple(children[n]), polarity=PAPER,
            area=0, bbox=(0, 0, w, h), virtual=True,
        ))
    return RegionAdjacencyTree(tuple(nodes), p.root)


def binarize_and_label(grid: PixelGrid, window_radius=None, offset=5) -> LabelMap:
    return label_components(adaptive_threshold(grid, window_radius, offset))


def tree_of(grid: PixelGrid) -> RegionAdjacencyTree:
    """threshold -> label -> RAT with the module defaults."""
    return build_rat(binarize_and_label(grid))


def box_iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / float(aw * ah + bw * bh - inter)


def resample_area(a: np.ndarray, out_h, out_w) -> np.ndarray:
    """Box-filter resampling of a 2-D array to (out_h, out_w)."""
    def weights(n_in, n_out):
        edges_out = np.arange(n_out + 1) * (n_in / n_out)
        lo = np.arange(n_in)
        left = np.maximum(edges_out[:-1, None], lo[None, :])
        right = np.minimum(edges_out[1:, None], lo[None, :] + 1)
        m = np.clip(right - left, 0, None)
        return m / m.sum(axis=1, keepdims=True)

    my = weights(a.shape[0], out_h)
    mx = weights(a.shape[1], out_w)
    return my @ a.astype(np.float64) @ mx.T
