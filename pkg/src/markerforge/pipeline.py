"""Detection -> identification -> decoding broker."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from . import artcode, gridtag
from .detector import (
    CandidateBox, ClassifierModel, MarkerKind, PresenceHeatMap, WindowSpec,
    accumulate_heatmap, scan_windows, suppress,
)
from .imaging import BinaryImage, PixelGrid, box_iou, build_rat, label_components, tree_of

DECODED = "Decoded"
NO_MARKER = "NoMarker"
INVALID = "Invalid"

# decode regions grow by this fraction per side, at most this many times,
# while a marker-like structure (ink with holes, or ink spanning half the
# region) is cut by the region edge
GROW_STEP = 0.25
MAX_GROWTH = 3
# a candidate this much inside an already decoded marker of its kind is
# reported as that marker's duplicate without decoding again
SWALLOWED = 0.8


class PipelineError(ValueError):
    pass


class BackgroundNotDecodable(PipelineError):
    pass


class MissingDecoder(PipelineError):
    pass


@dataclass(frozen=True)
class DecodeOutcome:
    status: str
    payload: str | None = None
    reason: str | None = None
    # where the decoded marker sits in image coordinates
    region: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if self.status not in (DECODED, NO_MARKER, INVALID):
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == DECODED) != (self.payload is not None):
            raise ValueError("payload must be present exactly when decoded")

    @property
    def decoded(self):
        return self.status == DECODED


Decoder = Callable[[PixelGrid, tuple], DecodeOutcome]


@dataclass(frozen=True)
class DecoderPool:
    decoders: Mapping[MarkerKind, Decoder] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "decoders", MappingProxyType(dict(self.decoders)))

    def __contains__(self, kind):
        return kind in self.decoders

    def get(self, kind):
        try:
            return self.decoders[kind]
        except KeyError:
            raise MissingDecoder(f"no decoder registered for {MarkerKind(kind).label}") from None


def register_decoder(pool: DecoderPool, kind: MarkerKind, decoder: Decoder) -> DecoderPool:
    kind = MarkerKind(kind)
    if kind is MarkerKind.BACKGROUND:
        raise BackgroundNotDecodable("background has no decoder")
    entries = dict(pool.decoders)
    entries[kind] = decoder
    return DecoderPool(entries)


def unregister_decoder(pool: DecoderPool, kind: MarkerKind) -> DecoderPool:
    entries = dict(pool.decoders)
    entries.pop(MarkerKind(kind), None)
    return DecoderPool(entries)


# ---------------------------------------------------------------- geometry helpers

def pad_box(box, fraction, width, height):
    x, y, w, h = box
    px, py = int(round(w * fraction)), int(round(h * fraction))
    x0, y0 = max(0, x - px), max(0, y - py)
    x1, y1 = min(width, x + w + px), min(height, y + h + py)
    return x0, y0, x1 - x0, y1 - y0


def _cut_sides(bbox, region, width, height):
    """Sides of ``region`` (l, t, r, b) that ``bbox`` (region coords) touches
    and that are not also image edges."""
    x, y, w, h = bbox
    rx, ry, rw, rh = region
    sides = set()
    if x == 0 and rx > 0:
        sides.add("l")
    if y == 0 and ry > 0:
        sides.add("t")
    if x + w == rw and rx + rw < width:
        sides.add("r")
    if y + h == rh and ry + rh < height:
        sides.add("b")
    return sides


def _grow(region, sides, width, height):
    x, y, w, h = region
    dx, dy = max(1, int(round(w * GROW_STEP))), max(1, int(round(h * GROW_STEP)))
    x0 = max(0, x - dx) if "l" in sides else x
    y0 = max(0, y - dy) if "t" in sides else y
    x1 = min(width, x + w + dx) if "r" in sides else x + w
    y1 = min(height, y + h + dy) if "b" in sides else y + h
    return x0, y0, x1 - x0, y1 - y0


def _spans(bbox, region):
    """Ink reaching across half the region: likely part of something bigger."""
    return 2 * bbox[2] >= region[2] or 2 * bbox[3] >= region[3]


def _covered(box, region):
    """Fraction of ``box`` lying inside ``region``."""
    ix = min(box[0] + box[2], region[0] + region[2]) - max(box[0], region[0])
    iy = min(box[1] + box[3], region[1] + region[3]) - max(box[1], region[1])
    return max(0, ix) * max(0, iy) / float(box[2] * box[3])


def _center(b):
    return b[0] + b[2] / 2.0, b[1] + b[3] / 2.0


# ---------------------------------------------------------------- decoders

@dataclass(frozen=True)
class ArtcodeDecoder:
    policy: artcode.ValidationPolicy = artcode.DEFAULT_POLICY
    # region -> tree for the last frame, keyed on its luma buffer
    _last: list = field(default_factory=list, init=False, repr=False, compare=False)

    def _tree(self, grid, region):
        if not self._last or self._last[0] is not grid.luma:
            self._last[:] = [grid.luma, {}]
        memo = self._last[1]
        if region not in memo:
            memo[region] = tree_of(grid.crop(region))
        return memo[region]

    def __call__(self, grid: PixelGrid, box) -> DecodeOutcome:
        region = tuple(box)
        for attempt in range(MAX_GROWTH + 1):
            tree = self._tree(grid, region)
            cut = set()
            for n in tree.nodes:
                if n.polarity and not n.virtual and (n.child_ids or _spans(n.bbox, region)):
                    cut |= _cut_sides(n.bbox, region, grid.width, grid.height)
            if not cut or attempt == MAX_GROWTH:
                break
            region = _grow(region, cut, grid.width, grid.height)

        rx, ry = region[0], region[1]
        whole = []
        failures = []
        for node, desc in artcode.structural_candidates(tree):
            if _cut_sides(node.bbox, region, grid.width, grid.height):
                continue
            verdict = artcode.validate_descriptor(desc, self.policy)
            if verdict:
                whole.append((node, desc))
            else:
                failures.append(verdict)
        if not whole:
            if failures:
                return DecodeOutcome(INVALID, reason=failures[0].value)
            return DecodeOutcome(NO_MARKER)

        cx, cy = _center(box)

        def dist(item):
            bx, by, bw, bh = item[0].bbox
            mx, my = rx + bx + bw / 2.0, ry + by + bh / 2.0
            return ((mx - cx) ** 2 + (my - cy) ** 2, by, bx)

        node, desc = min(whole, key=dist)
        bx, by, bw, bh = node.bbox
        return DecodeOutcome(DECODED, artcode.format_code(desc), region=(rx + bx, ry + by, bw, bh))


def _square(w, h):
    return abs(w - h) <= max(2, 0.1 * max(w, h))


class _FrameTags:
    """Ink components of a whole frame at the fixed 128 cut, plus decode memo.

    Matrix codes binarize globally, so one labeling per frame serves every
    candidate; the last frame is kept, keyed on the identity of its
    (read-only) luma buffer.
    """

    def __init__(self, grid, min_side):
        self.luma = grid.luma
        tree = build_rat(label_components(BinaryImage(grid.luma < 128)))
        self.boxes = sorted(
            (n.bbox for n in tree.nodes
             if n.polarity and not n.virtual and n.bbox[2] >= min_side and n.bbox[3] >= min_side
             and _square(n.bbox[2], n.bbox[3])),
            key=lambda b: (-b[2] * b[3], b[1], b[0]))
        self.memo = {}

    def decode(self, grid, box):
        if box not in self.memo:
            try:
                self.memo[box] = gridtag.decode_gridtag(grid, box)
            except gridtag.GridTagError as e:
                self.memo[box] = type(e).__name__
        return self.memo[box]


@dataclass(frozen=True)
class GridTagDecoder:
    """Tries every square ink component centred in the box, largest first.

    Components are taken whole, so a tag the box only partly covers is
    still read.
    """
    min_side: int = 16
    _last: list = field(default_factory=list, init=False, repr=False, compare=False)

    def _frame(self, grid):
        if not self._last or self._last[0].luma is not grid.luma:
            self._last[:] = [_FrameTags(grid, self.min_side)]
        return self._last[0]

    def __call__(self, grid: PixelGrid, box) -> DecodeOutcome:
        frame = self._frame(grid)
        x, y, w, h = box
        first_error = None
        for b in frame.boxes:
            cx, cy = _center(b)
            if not (x <= cx < x + w and y <= cy < y + h):
                continue
            got = frame.decode(grid, b)
            if isinstance(got, str):
                first_error = first_error or got
                continue
            return DecodeOutcome(DECODED, gridtag.format_payload(got), region=b)
        if first_error:
            return DecodeOutcome(INVALID, reason=first_error)
        return DecodeOutcome(NO_MARKER)


def default_pool(policy: artcode.ValidationPolicy = artcode.DEFAULT_POLICY) -> DecoderPool:
    pool = register_decoder(DecoderPool(), MarkerKind.ARTCODE, ArtcodeDecoder(policy))
    return register_decoder(pool, MarkerKind.GRIDTAG, GridTagDecoder())


# ---------------------------------------------------------------- the broker

@dataclass(frozen=True)
class UrfConfig:
    window_spec: WindowSpec = field(default_factory=WindowSpec)
    nms_iou: float = 0.4
    validation_policy: artcode.ValidationPolicy = artcode.DEFAULT_POLICY
    alpha: float = 0.6
    padding: float = 0.1

    def __post_init__(self):
        if not 0 <= self.nms_iou <= 1:
            raise ValueError("nms_iou must be in [0, 1]")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")


@dataclass(frozen=True)
class ReportEntry:
    bbox: tuple[int, int, int, int]
    scores: tuple[float, float, float]
    kind: MarkerKind
    outcome: DecodeOutcome | None

    @property
    def decoded(self):
        return self.outcome is not None and self.outcome.decoded


@dataclass(frozen=True, eq=False)
class ScanReport:
    image_id: str
    candidates: tuple[ReportEntry, ...]
    heatmap: PresenceHeatMap
    proposals: tuple[CandidateBox, ...] = ()
    heatmap_ref: str = ""
    elapsed_ms: float = 0.0

    @property
    def decoded(self):
        return [c for c in self.candidates if c.decoded]

    def to_dict(self, include_elapsed=True):
        cands = []
        for c in self.candidates:
            o = c.outcome or DecodeOutcome(NO_MARKER)
            cands.append({
                "box": list(c.bbox),
                "scores": {k.label: float(s) for k, s in zip(MarkerKind, c.scores)},
                "kind": c.kind.label,
                "status": o.status,
                "payload": o.payload,
                "reason": o.reason,
            })
        d = {"image": self.image_id, "candidates": cands, "heatmap": self.heatmap_ref}
        if include_elapsed:
            d["elapsedMs"] = round(self.elapsed_ms, 3)
        return d

    def to_json(self, include_elapsed=True):
        return json.dumps(self.to_dict(include_elapsed), indent=2) + "\n"


def run_urf(grid: PixelGrid, model: ClassifierModel, pool: DecoderPool,
            cfg: UrfConfig = UrfConfig(), image_id: str = "", heatmap_ref: str = "") -> ScanReport:
    t0 = time.perf_counter()
    proposals = scan_windows(grid, model, cfg.window_spec)
    kept = suppress(proposals, cfg.nms_iou)
    heat = accumulate_heatmap(proposals, grid.width, grid.height)

    entries = []
    claimed = []  # (kind, region, index) of decoded markers
    for c in kept:
        kind = c.predicted_kind
        outcome = None
        if kind is not MarkerKind.BACKGROUND:
            decoder = pool.get(kind)
            inside = next((j for k, region, j in claimed
                           if k is kind and _covered(c.bbox, region) >= SWALLOWED), None)
            if inside is not None:
                outcome = DecodeOutcome(INVALID, reason=f"duplicate of candidate {inside}")
            else:
                outcome = decoder(grid, pad_box(c.bbox, cfg.padding, grid.width, grid.height))
            if outcome.decoded:
                for k, region, j in claimed:
                    if k is kind and box_iou(region, outcome.region) > 0.5:
                        outcome = DecodeOutcome(INVALID, reason=f"duplicate of candidate {j}")
                        break
                else:
                    claimed.append((kind, outcome.region, len(entries)))
        entries.append(ReportEntry(c.bbox, c.scores, kind, outcome))

    elapsed = (time.perf_counter() - t0) * 1000.0
    return ScanReport(image_id, tuple(entries), heat, tuple(proposals), heatmap_ref, elapsed)


def decode_whole(grid: PixelGrid, pool: DecoderPool):
    """Run every registered decoder over the full frame, no detection."""
    box = (0, 0, grid.width, grid.height)
    return {kind: dec(grid, box) for kind, dec in sorted(pool.decoders.items())}
