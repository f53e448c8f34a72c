"""Marker presence detection: window features, a softmax classifier,
sliding-window proposals, suppression and presence heat maps."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._fastfeatures import features_for_boxes
from .imaging import (
    PixelGrid, RasterImage, adaptive_threshold, build_rat, label_components,
)


class MarkerKind(enum.IntEnum):
    BACKGROUND = 0
    ARTCODE = 1
    GRIDTAG = 2

    @property
    def label(self):
        return self.name.lower()

    @classmethod
    def from_label(cls, s):
        return cls[s.upper()]


KIND_NAMES = [k.label for k in MarkerKind]


class FeatureVector(NamedTuple):
    ink_fraction: float
    components_per_kpx: float
    holes_per_ink_component: float
    leaf_fraction: float
    depth: float
    chains_per_kpx: float
    edge_density: float
    luma_variance: float


FEATURE_NAMES = list(FeatureVector._fields)
N_FEATURES = len(FEATURE_NAMES)
EDGE_THRESHOLD = 24.0


class DetectorError(ValueError):
    pass


class MissingKind(DetectorError):
    pass


class ImageTooSmall(DetectorError):
    pass


class DimensionMismatch(DetectorError):
    pass


class NotRgb(DetectorError):
    pass


class ModelFormatError(DetectorError):
    pass


# ---------------------------------------------------------------- features

def reference_features(grid: PixelGrid, box) -> FeatureVector:
    """Window features computed through the public imaging primitives.

    Slow; the scanner uses the compiled equivalent in ``_fastfeatures``.
    """
    x, y, w, h = box
    luma = grid.luma[y:y + h, x:x + w]
    kpx = w * h / 1000.0
    binary = adaptive_threshold(PixelGrid(luma))
    tree = build_rat(label_components(binary))
    real = [n for n in tree.nodes if not n.virtual]

    ink = [n for n in real if n.polarity]
    holes = sum(len(n.child_ids) for n in ink) / len(ink) if ink else 0.0
    leaves = sum(1 for n in real if not n.child_ids) / len(real)
    max_depth = max(tree.depth(n.id) for n in tree.nodes)
    chains = 0
    for n in real:
        if n.parent_id is None:
            continue
        g = tree[n.parent_id].parent_id
        if g is not None and not tree[g].virtual and g != tree.root_id:
            chains += 1

    v = luma.astype(np.float64)
    gy, gx = np.gradient(v)
    edges = np.count_nonzero(np.hypot(gx, gy) > EDGE_THRESHOLD) / (w * h)
    return FeatureVector(
        ink_fraction=float(np.count_nonzero(binary.ink)) / (w * h),
        components_per_kpx=len(real) / kpx,
        holes_per_ink_component=float(holes),
        leaf_fraction=float(leaves),
        depth=min(max_depth / 5.0, 1.0),
        chains_per_kpx=chains / kpx,
        edge_density=float(edges),
        luma_variance=float(v.var()) / 128.0 ** 2,
    )


def _check_box(grid, box):
    x, y, w, h = box
    if x < 0 or y < 0 or x + w > grid.width or y + h > grid.height:
        raise ValueError(f"box {box} outside {grid.width}x{grid.height} image")
    if w < 2 or h < 2 or w * h < 32 * 32:
        raise ValueError(f"box {box} smaller than 32x32")


def extract_features(grid: PixelGrid, box) -> FeatureVector:
    _check_box(grid, box)
    return FeatureVector(*features_for_boxes(grid.luma, [box], edge_threshold=EDGE_THRESHOLD)[0])


def extract_features_many(grid: PixelGrid, boxes) -> np.ndarray:
    for box in boxes:
        _check_box(grid, box)
    if not boxes:
        return np.zeros((0, N_FEATURES))
    return features_for_boxes(grid.luma, boxes, edge_threshold=EDGE_THRESHOLD)


# ---------------------------------------------------------------- classifier

@dataclass(frozen=True, eq=False)
class ClassifierModel:
    weights: np.ndarray  # (3, 9): per-kind weights then bias
    means: np.ndarray
    stds: np.ndarray
    training_seed: int = 0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        mu = np.array(self.means, dtype=np.float64)
        sd = np.array(self.stds, dtype=np.float64)
        if w.shape != (len(MarkerKind), N_FEATURES + 1):
            raise ModelFormatError(f"weights must be 3x9, got {w.shape}")
        if mu.shape != (N_FEATURES,) or sd.shape != (N_FEATURES,):
            raise ModelFormatError("means/stds must have 8 entries")
        if not (sd > 0).all():
            raise ModelFormatError("feature stds must be positive")
        for a in (w, mu, sd):
            a.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stds", sd)

    def design(self, features) -> np.ndarray:
        """Standardised features with a trailing bias column."""
        x = (np.atleast_2d(np.asarray(features, dtype=np.float64)) - self.means) / self.stds
        return np.hstack([x, np.ones((x.shape[0], 1))])

    def __eq__(self, other):
        return (isinstance(other, ClassifierModel)
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.means, other.means)
                and np.array_equal(self.stds, other.stds)
                and self.training_seed == other.training_seed)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(weights, x, y_onehot):
    """Mean multinomial cross-entropy of ``softmax(x @ weights.T)``."""
    z = x @ weights.T
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -(y_onehot * logp).sum() / x.shape[0]


def cross_entropy_grad(weights, x, y_onehot):
    p = softmax(x @ weights.T)
    return (p - y_onehot).T @ x / x.shape[0]


def train_classifier(samples, learning_rate=0.1, epochs=500, seed=0) -> ClassifierModel:
    """Full-batch gradient descent on standardised features, zero init.

    ``seed`` only labels the model; full-batch descent does no shuffling.
    """
    feats = np.array([np.asarray(f, dtype=np.float64) for f, _ in samples])
    kinds = np.array([int(k) for _, k in samples])
    missing = [k.label for k in MarkerKind if not (kinds == k).any()]
    if missing:
        raise MissingKind(f"no samples for {', '.join(missing)}")

    means = feats.mean(axis=0)
    stds = np.maximum(feats.std(axis=0), 1e-6)
    x = np.hstack([(feats - means) / stds, np.ones((len(feats), 1))])
    y = np.eye(len(MarkerKind))[kinds]

    w = np.zeros((len(MarkerKind), N_FEATURES + 1))
    for _ in range(epochs):
        w -= learning_rate * cross_entropy_grad(w, x, y)
    return ClassifierModel(w, means, stds, seed)


def classify(model: ClassifierModel, f) -> np.ndarray:
    return softmax(model.design(f) @ model.weights.T)[0]


def classify_many(model: ClassifierModel, feats) -> np.ndarray:
    if len(feats) == 0:
        return np.zeros((0, len(MarkerKind)))
    return softmax(model.design(feats) @ model.weights.T)


def accuracy(model: ClassifierModel, samples) -> float:
    probs = classify_many(model, [f for f, _ in samples])
    truth = np.array([int(k) for _, k in samples])
    return float((probs.argmax(axis=1) == truth).mean())


def _fmt(x):
    return format(float(x), ".17g")


def model_to_json(model: ClassifierModel) -> str:
    def arr(a):
        return "[" + ", ".join(_fmt(v) for v in a) + "]"

    rows = ",\n    ".join(arr(r) for r in model.weights)
    return (
        "{\n"
        f'  "featureNames": {json.dumps(FEATURE_NAMES)},\n'
        f'  "kindNames": {json.dumps(KIND_NAMES)},\n'
        f'  "means": {arr(model.means)},\n'
        f'  "stds": {arr(model.stds)},\n'
        f'  "weights": [\n    {rows}\n  ],\n'
        f'  "trainingSeed": {int(model.training_seed)}\n'
        "}\n"
    )


def model_from_json(text: str) -> ClassifierModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model is not valid JSON: {e}") from None
    try:
        if len(doc["featureNames"]) != N_FEATURES or len(doc["kindNames"]) != len(MarkerKind):
            raise ModelFormatError("wrong featureNames/kindNames arity")
        weights = doc["weights"]
        if len(weights) != len(MarkerKind) or any(len(r) != N_FEATURES + 1 for r in weights):
            raise ModelFormatError("weights must be 3x9")
        return ClassifierModel(weights, doc["means"], doc["stds"], int(doc.get("trainingSeed", 0)))
    except (KeyError, TypeError) as e:
        raise ModelFormatError(f"malformed model document: {e}") from None


# ---------------------------------------------------------------- proposals

@dataclass(frozen=True)
class WindowSpec:
    scales: tuple[int, ...] = (64, 128, 256)
    stride_fraction: float = 0.25
    score_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(sorted(int(s) for s in self.scales)))
        if not self.scales or min(self.scales) < 32:
            raise ValueError("window sides must be >= 32")
        if not 0 < self.stride_fraction <= 1:
            raise ValueError("stride_fraction must be in (0, 1]")

    def stride(self, side):
        return max(1, round(side * self.stride_fraction))


@dataclass(frozen=True)
class CandidateBox:
    bbox: tuple[int, int, int, int]
    scores: tuple[float, float, float]

    @property
    def predicted_kind(self) -> MarkerKind:
        return MarkerKind(int(np.argmax(self.scores)))

    @property
    def marker_score(self) -> float:
        return max(self.scores[1:])

    @property
    def background_score(self) -> float:
        return self.scores[0]


def _positions(length, side, stride):
    pos = list(range(0, length - side + 1, stride))
    if pos[-1] != length - side:
        pos.append(length - side)
    return pos


def window_boxes(width, height, spec: WindowSpec):
    boxes = []
    for side in spec.scales:
        if side > width or side > height:
            continue
        step = spec.stride(side)
        for y in _positions(height, side, step):
            for x in _positions(width, side, step):
                boxes.append((x, y, side, side))
    return boxes


def scan_windows(grid: PixelGrid, model: ClassifierModel, spec: WindowSpec = WindowSpec()):
    if grid.width < spec.scales[0] or grid.height < spec.scales[0]:
        raise ImageTooSmall(
            f"{grid.width}x{grid.height} image is smaller than the {spec.scales[0]}px window")
    boxes = window_boxes(grid.width, grid.height, spec)
    probs = classify_many(model, extract_features_many(grid, boxes))
    out = []
    for box, p in zip(boxes, probs):
        if p[1:].max() >= spec.score_threshold:
            out.append(CandidateBox(box, (float(p[0]), float(p[1]), float(p[2]))))
    return out


def _iou_against(box, kept):
    """IoU of one box against an (n, 4) array of boxes."""
    x, y, w, h = box
    iw = np.minimum(x + w, kept[:, 0] + kept[:, 2]) - np.maximum(x, kept[:, 0])
    ih = np.minimum(y + h, kept[:, 1] + kept[:, 3]) - np.maximum(y, kept[:, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    return inter / (w * h + kept[:, 2] * kept[:, 3] - inter).astype(np.float64)


def suppress(cands, iou_threshold=0.4):
    """Greedy per-kind non-maximum suppression, best marker score first."""
    if not 0 <= iou_threshold <= 1:
        raise ValueError("iou_threshold must be in [0, 1]")
    order = sorted(range(len(cands)), key=lambda i: -cands[i].marker_score)
    kept = []
    boxes = {k: np.zeros((0, 4), dtype=np.int64) for k in MarkerKind}
    for i in order:
        c = cands[i]
        prior = boxes[c.predicted_kind]
        if len(prior) == 0 or (_iou_against(c.bbox, prior) <= iou_threshold).all():
            kept.append(c)
            boxes[c.predicted_kind] = np.vstack([prior, np.asarray(c.bbox, dtype=np.int64)])
    return kept


# ---------------------------------------------------------------- heat maps

@dataclass(frozen=True, eq=False)
class PresenceHeatMap:
    intensity: np.ndarray  # (height, width) float64 in [0, 1]

    def __post_init__(self):
        a = np.array(self.intensity, dtype=np.float64)
        a.flags.writeable = False
        object.__setattr__(self, "intensity", a)

    @property
    def height(self):
        return self.intensity.shape[0]

    @property
    def width(self):
        return self.intensity.shape[1]

    def to_grid(self) -> PixelGrid:
        return PixelGrid(np.floor(self.intensity * 255 + 0.5).astype(np.uint8))

    def peak(self):
        """(x, y) of the first maximal pixel in raster order."""
        i = int(np.argmax(self.intensity))
        return i % self.width, i // self.width


def accumulate_heatmap(cands, width, height) -> PresenceHeatMap:
    raw = np.zeros((height, width), dtype=np.float64)
    for c in cands:
        x, y, w, h = c.bbox
        raw[y:y + h, x:x + w] += 1.0 - c.background_score
    top = raw.max() if raw.size else 0.0
    if top > 0:
        raw /= top
    return PresenceHeatMap(raw)


HIGHLIGHT = np.array([255.0, 64.0, 0.0])
YELLOW = np.array([255, 255, 0], dtype=np.uint8)


def fuse_overlay(grid: PixelGrid, heat: PresenceHeatMap, alpha=0.6) -> RasterImage:
    if (grid.width, grid.height) != (heat.width, heat.height):
        raise DimensionMismatch(
            f"image {grid.width}x{grid.height} vs heat map {heat.width}x{heat.height}")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")
    t = (alpha * heat.intensity)[:, :, None]
    g = grid.luma.astype(np.float64)[:, :, None]
    out = (1.0 - t) * g + t * HIGHLIGHT
    return RasterImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def annotate_boxes(img: RasterImage, boxes, thickness=1) -> RasterImage:
    if img.channels != 3:
        raise NotRgb("annotate_boxes needs an RGB image")
    out = img.samples.copy()
    H, W = out.shape[:2]
    t = max(1, int(thickness))
    for x, y, w, h in boxes:
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + w, W), min(y + h, H)
        if x0 >= x1 or y0 >= y1:
            continue
        out[y0:min(y0 + t, y1), x0:x1] = YELLOW
        out[max(y1 - t, y0):y1, x0:x1] = YELLOW
        out[y0:y1, x0:min(x0 + t, x1)] = YELLOW
        out[y0:y1, max(x1 - t, x0):x1] = YELLOW
    return RasterImage(out)
