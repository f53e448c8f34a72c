"""Synthetic scenes, far-to-near approach sequences and training corpora."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import artcode, gridtag
from .detector import FeatureVector, MarkerKind, extract_features_many
from .imaging import PixelGrid, resample_area

PAPER_LUMA = 235


class SceneError(ValueError):
    pass


class OverlappingPlacements(SceneError):
    pass


class PlacementOutOfBounds(SceneError):
    pass


@dataclass(frozen=True)
class Occluder:
    angle_deg: float = 30.0
    width_fraction: float = 0.15


@dataclass(frozen=True)
class Placement:
    kind: MarkerKind
    payload: str
    center: tuple[float, float] = (0.5, 0.5)
    height_fraction: float = 0.4
    occluder: Occluder | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MarkerKind(self.kind))
        if self.kind is MarkerKind.BACKGROUND:
            raise ValueError("a placement must be a marker kind")
        if not 0 < self.height_fraction <= 1:
            raise ValueError("height_fraction must be in (0, 1]")


@dataclass(frozen=True)
class Lighting:
    start_factor: float = 1.0
    end_factor: float = 1.0
    axis: str = "x"

    def __post_init__(self):
        for f in (self.start_factor, self.end_factor):
            if not 0.3 <= f <= 1.2:
                raise ValueError("lighting factors must lie in [0.3, 1.2]")
        if self.axis not in ("x", "y"):
            raise ValueError("lighting axis must be 'x' or 'y'")


@dataclass(frozen=True)
class Background:
    kind: str = "plain"
    # distractor items per 100 kilopixels
    density: float = 0.0

    def __post_init__(self):
        if self.kind not in ("plain", "clutter"):
            raise ValueError("background must be 'plain' or 'clutter'")
        if self.density < 0:
            raise ValueError("clutter density must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    canvas: tuple[int, int] = (768, 768)
    background: Background = field(default_factory=Background)
    lighting: Lighting = field(default_factory=Lighting)
    placements: tuple[Placement, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))


@dataclass(frozen=True)
class GroundTruthItem:
    kind: MarkerKind
    payload: str
    bbox: tuple[int, int, int, int]
    occluded: bool


@dataclass(frozen=True)
class GroundTruth:
    items: tuple[GroundTruthItem, ...]

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def to_dict(self):
        return {"markers": [
            {"kind": it.kind.label, "payload": it.payload, "box": list(it.bbox),
             "occluded": it.occluded}
            for it in self.items
        ]}


@dataclass(frozen=True)
class SequenceSpec:
    frames: int = 5
    start_height_fraction: float = 0.05
    end_height_fraction: float = 0.4

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if not 0 < self.start_height_fraction < self.end_height_fraction <= 1:
            raise ValueError("need 0 < start < end <= 1")

    def height_fractions(self):
        ratio = self.end_height_fraction / self.start_height_fraction
        n = self.frames - 1
        return [self.start_height_fraction * ratio ** (i / n) for i in range(self.frames)]


# ---------------------------------------------------------------- JSON

def scene_from_dict(d) -> SceneSpec:
    bg = d.get("background", {"kind": "plain"})
    if isinstance(bg, str):
        bg = {"kind": bg}
    light = d.get("lighting", {})
    placements = []
    for p in d.get("placements", []):
        occ = p.get("occluder")
        placements.append(Placement(
            kind=MarkerKind.from_label(p["kind"]),
            payload=str(p["payload"]),
            center=tuple(p.get("center", (0.5, 0.5))),
            height_fraction=float(p.get("heightFraction", 0.4)),
            occluder=None if occ is None else Occluder(
                float(occ.get("angle", 30.0)), float(occ.get("widthFraction", 0.15))),
        ))
    return SceneSpec(
        canvas=tuple(int(v) for v in d.get("canvas", (768, 768))),
        background=Background(bg.get("kind", "plain"), float(bg.get("density", 0.0))),
        lighting=Lighting(float(light.get("startFactor", 1.0)),
                          float(light.get("endFactor", 1.0)), light.get("axis", "x")),
        placements=tuple(placements),
    )


def scene_to_dict(spec: SceneSpec):
    return {
        "canvas": list(spec.canvas),
        "background": {"kind": spec.background.kind, "density": spec.background.density},
        "lighting": {"startFactor": spec.lighting.start_factor,
                     "endFactor": spec.lighting.end_factor, "axis": spec.lighting.axis},
        "placements": [
            {"kind": p.kind.label, "payload": p.payload, "center": list(p.center),
             "heightFraction": p.height_fraction,
             "occluder": None if p.occluder is None else {
                 "angle": p.occluder.angle_deg, "widthFraction": p.occluder.width_fraction}}
            for p in spec.placements
        ],
    }


def sequence_from_dict(d) -> SequenceSpec:
    return SequenceSpec(int(d.get("frames", 5)), float(d["startHeightFraction"]),
                        float(d["endHeightFraction"]))


def load_scene_json(text):
    """Scene document, optionally with a "sequence" member."""
    d = json.loads(text)
    seq = sequence_from_dict(d["sequence"]) if "sequence" in d else None
    return scene_from_dict(d), seq


# ---------------------------------------------------------------- drawing

def _segment_mask(h, w, p0, p1, half):
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    t = np.zeros_like(xx) if L2 == 0 else np.clip(((xx - x0) * dx + (yy - y0) * dy) / L2, 0, 1)
    return (xx - (x0 + t * dx)) ** 2 + (yy - (y0 + t * dy)) ** 2 <= half * half


def _paint(canvas, x, y, mask, value):
    H, W = canvas.shape
    h, w = mask.shape
    cx0, cy0 = max(x, 0), max(y, 0)
    cx1, cy1 = min(x + w, W), min(y + h, H)
    if cx0 >= cx1 or cy0 >= cy1:
        return
    sub = mask[cy0 - y:cy1 - y, cx0 - x:cx1 - x]
    canvas[cy0:cy1, cx0:cx1][sub] = value


def _clutter_item(canvas, rng):
    H, W = canvas.shape
    value = int(rng.integers(15, 111))
    kind = int(rng.integers(0, 3))
    if kind == 0:
        # polyline stroke
        half = rng.uniform(1.0, 3.0)
        pts = [(rng.uniform(0, W), rng.uniform(0, H))]
        for _ in range(int(rng.integers(1, 4))):
            ang = rng.uniform(0, 2 * math.pi)
            ln = rng.uniform(10, 60)
            px, py = pts[-1]
            pts.append((px + ln * math.cos(ang), py + ln * math.sin(ang)))
        for p0, p1 in zip(pts, pts[1:]):
            x0 = int(math.floor(min(p0[0], p1[0]) - half - 1))
            y0 = int(math.floor(min(p0[1], p1[1]) - half - 1))
            x1 = int(math.ceil(max(p0[0], p1[0]) + half + 1))
            y1 = int(math.ceil(max(p0[1], p1[1]) + half + 1))
            m = _segment_mask(y1 - y0, x1 - x0, (p0[0] - x0, p0[1] - y0),
                              (p1[0] - x0, p1[1] - y0), half)
            _paint(canvas, x0, y0, m, value)
    elif kind == 1:
        # filled rotated ellipse
        a, b = rng.uniform(3, 25), rng.uniform(3, 25)
        th = rng.uniform(0, math.pi)
        r = int(math.ceil(max(a, b))) + 1
        cx, cy = int(rng.integers(0, W)), int(rng.integers(0, H))
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
        u = xx * math.cos(th) + yy * math.sin(th)
        v = -xx * math.sin(th) + yy * math.cos(th)
        _paint(canvas, cx - r, cy - r, (u / a) ** 2 + (v / b) ** 2 <= 1, value)
    else:
        # hollow rectangle, sometimes with a blob inside
        w, h = int(rng.integers(12, 81)), int(rng.integers(12, 81))
        t = int(rng.integers(2, 6))
        x, y = int(rng.integers(-w // 2, W)), int(rng.integers(-h // 2, H))
        m = np.ones((h, w), dtype=bool)
        m[t:h - t, t:w - t] = False
        _paint(canvas, x, y, m, value)
        if rng.random() < 0.4 and min(w, h) > 4 * t + 6:
            iw, ih = (w - 2 * t) // 3, (h - 2 * t) // 3
            inner = np.ones((ih, iw), dtype=bool)
            _paint(canvas, x + (w - iw) // 2, y + (h - ih) // 2, inner, value)


def clutter_count(density, width, height):
    return int(round(density * width * height / 100_000.0))


def _artcode_body(desc, side, seed):
    """Marker body (quiet margin stripped) at exactly side x side pixels.

    Sizes the renderer cannot resolve are drawn larger and box-filtered down.
    """
    size = side
    # body = size - 2*margin moves in steps of +-1, so this lands on side exactly
    while size - 2 * artcode.quiet_margin(size) < side:
        size += 1
    size = max(size, 64)
    while True:
        try:
            g = artcode.render_artcode(desc, size, seed).luma
            break
        except artcode.Unrenderable:
            if size > 4096:
                raise
            size = max(size + 1, artcode.min_render_size(desc, seed, start=size + 1))
    m = artcode.quiet_margin(size)
    body = g[m:size - m, m:size - m]
    if body.shape != (side, side):
        body = np.clip(np.floor(resample_area(body, side, side) + 0.5), 0, 255)
    return body.astype(np.float64)


def _marker_patch(p: Placement, side, seed):
    if p.kind is MarkerKind.ARTCODE:
        return _artcode_body(artcode.parse_code(p.payload), side, seed), max(2, round(0.04 * side))
    m = gridtag.encode_gridtag(gridtag.parse_payload(p.payload))
    return gridtag.render_gridtag_at(m, side).astype(np.float64), max(1, round(side / 8))


def placement_box(p: Placement, width, height):
    side = max(1, int(round(p.height_fraction * height)))
    x = int(round(p.center[0] * width - side / 2))
    y = int(round(p.center[1] * height - side / 2))
    return x, y, side, side


def _overlaps(a, b):
    return not (a[0] + a[2] <= b[0] or b[0] + b[2] <= a[0]
                or a[1] + a[3] <= b[1] or b[1] + b[3] <= a[1])


def _stripe_mask(side, occ: Occluder):
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    c = side / 2.0
    th = math.radians(occ.angle_deg)
    # distance from the line through the centre at angle th
    dist = np.abs(-(xx - c) * math.sin(th) + (yy - c) * math.cos(th))
    return dist <= occ.width_fraction * side / 2.0


def compose_scene(spec: SceneSpec, seed=0):
    W, H = spec.canvas
    rng = np.random.default_rng(seed)
    canvas = np.full((H, W), float(PAPER_LUMA))

    if spec.background.kind == "clutter":
        for _ in range(clutter_count(spec.background.density, W, H)):
            _clutter_item(canvas, rng)

    extents = []
    for p in spec.placements:
        box = placement_box(p, W, H)
        x, y, s, _ = box
        if x < 0 or y < 0 or x + s > W or y + s > H:
            raise PlacementOutOfBounds(f"{p.kind.label} at {box} leaves the {W}x{H} canvas")
        extents.append(box)

    items = []
    quiet = []
    for i, p in enumerate(spec.placements):
        x, y, s, _ = extents[i]
        patch, q = _marker_patch(p, s, seed + i)
        ext = (x - q, y - q, s + 2 * q, s + 2 * q)
        for other in quiet:
            if _overlaps(ext, other):
                raise OverlappingPlacements(f"placement {i} overlaps an earlier one")
        quiet.append(ext)
        y0, x0 = max(y - q, 0), max(x - q, 0)
        canvas[y0:y + s + q, x0:x + s + q] = PAPER_LUMA
        canvas[y:y + s, x:x + s] = patch
        if p.occluder is not None:
            region = canvas[y:y + s, x:x + s]
            region[_stripe_mask(s, p.occluder)] = PAPER_LUMA
        items.append(GroundTruthItem(p.kind, p.payload, (x, y, s, s), p.occluder is not None))

    lt = spec.lighting
    if (lt.start_factor, lt.end_factor) != (1.0, 1.0):
        n = W if lt.axis == "x" else H
        ramp = np.linspace(lt.start_factor, lt.end_factor, n) if n > 1 else np.array([lt.start_factor])
        canvas = canvas * (ramp[None, :] if lt.axis == "x" else ramp[:, None])

    luma = np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)
    return PixelGrid(luma), GroundTruth(tuple(items))


def approach_sequence(scene: SceneSpec, seq: SequenceSpec, seed=0):
    if len(scene.placements) != 1:
        raise ValueError("an approach sequence needs exactly one placement")
    base = scene.placements[0]
    frames = []
    for hf in seq.height_fractions():
        spec = replace(scene, placements=(replace(base, height_fraction=hf),))
        frames.append(compose_scene(spec, seed))
    return frames


# ---------------------------------------------------------------- corpora

def random_descriptor(rng, policy=artcode.DEFAULT_POLICY):
    n = int(rng.integers(policy.min_branches, policy.max_branches + 1))
    counts = rng.integers(policy.min_leaves_per_branch, policy.max_leaves_per_branch + 1, size=n)
    return artcode.ArtcodeDescriptor(tuple(int(c) for c in counts))


def _corpus_window(kind, size, rng, seed):
    light = Lighting(float(rng.uniform(0.55, 1.1)), float(rng.uniform(0.55, 1.1)),
                     "x" if rng.random() < 0.5 else "y")
    if kind is MarkerKind.BACKGROUND:
        if rng.random() < 0.2:
            bg = Background("plain")
        else:
            bg = Background("clutter", float(rng.uniform(3, 15)))
        # crop out of a larger canvas so clutter density matches full scenes
        big = 2 * size
        grid, _ = compose_scene(SceneSpec((big, big), bg, light), seed)
        x, y = (int(v) for v in rng.integers(0, big - size + 1, size=2))
        return grid.crop((x, y, size, size))

    bg = Background("clutter", float(rng.uniform(0, 6))) if rng.random() < 0.5 else Background()
    hf = float(rng.uniform(0.5, 0.95))
    side = round(hf * size)
    # the quiet zone may run off the window edge, the body may not
    lo, hi = (side / 2 + 1) / size, 1 - (side / 2 + 1) / size
    center = (float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)))
    if kind is MarkerKind.ARTCODE:
        while True:
            desc = random_descriptor(rng)
            try:
                artcode.min_render_size(desc, seed, limit=512)
                break
            except artcode.Unrenderable:
                continue
        payload = artcode.format_code(desc)
    else:
        payload = gridtag.format_payload(int(rng.integers(0, 0x10000)))
    spec = SceneSpec((size, size), bg, light, (Placement(kind, payload, center, hf),))
    grid, _ = compose_scene(spec, seed)
    return grid


def emit_corpus(num_per_kind, window_px=64, seed=0):
    """Balanced labelled feature vectors, kinds interleaved.

    ``window_px`` may be a sequence of sizes, used round-robin.
    """
    if num_per_kind < 1:
        raise ValueError("num_per_kind must be >= 1")
    sizes = [int(window_px)] if np.isscalar(window_px) else [int(s) for s in window_px]
    out = []
    for i in range(num_per_kind):
        size = sizes[i % len(sizes)]
        for kind in MarkerKind:
            sub_seed = (seed * 1_000_003 + i * 3 + int(kind)) % (2 ** 31)
            rng = np.random.default_rng([seed, i, int(kind)])
            grid = _corpus_window(kind, size, rng, sub_seed)
            f = extract_features_many(grid, [(0, 0, size, size)])[0]
            out.append((FeatureVector(*f), kind))
    return out
