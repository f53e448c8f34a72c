import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markerforge.artcode import extract_artcodes, format_code
from markerforge.detector import MarkerKind
from markerforge.imaging import tree_of
from markerforge.pipeline import pad_box
from markerforge.scenegen import (
    Background, Lighting, Occluder, OverlappingPlacements, Placement, PlacementOutOfBounds,
    SceneSpec, SequenceSpec, approach_sequence, clutter_count, compose_scene, emit_corpus,
    load_scene_json, scene_from_dict, scene_to_dict,
)

ART, TAG = MarkerKind.ARTCODE, MarkerKind.GRIDTAG


def art(code="1:1:2:4:4", center=(0.5, 0.5), hf=0.4, occ=None):
    return Placement(ART, code, center, hf, occ)


def test_plain_empty_scene_is_uniform():
    g, gt = compose_scene(SceneSpec((100, 80)))
    assert (g.luma == 235).all() and len(gt) == 0


def test_geometric_fractions():
    fr = SequenceSpec(5, 0.02, 0.25).height_fractions()
    assert [float(f"{v:.3g}") for v in fr] == [0.02, 0.0376, 0.0707, 0.133, 0.25]


def test_sequence_bboxes_grow():
    frames = approach_sequence(SceneSpec((400, 400), placements=(art(),)), SequenceSpec(5, 0.1, 0.5), 3)
    areas = [gt[0].bbox[2] * gt[0].bbox[3] for _, gt in frames]
    assert all(a < b for a, b in zip(areas, areas[1:]))


def test_sequence_needs_one_placement():
    with pytest.raises(ValueError):
        approach_sequence(SceneSpec((400, 400)), SequenceSpec(), 0)


@pytest.mark.parametrize("kw", [dict(frames=1), dict(start_height_fraction=0.5, end_height_fraction=0.4),
                                dict(start_height_fraction=0.0), dict(end_height_fraction=1.5)])
def test_sequence_invariants(kw):
    with pytest.raises(ValueError):
        SequenceSpec(**kw)


def test_type_invariants():
    with pytest.raises(ValueError):
        Lighting(0.2, 1.0)
    with pytest.raises(ValueError):
        Placement(ART, "1:1:1", height_fraction=0.0)
    with pytest.raises(ValueError):
        Placement(MarkerKind.BACKGROUND, "x")
    with pytest.raises(ValueError):
        Background("stripes")


def hard_spec(seed_code="1:2:2:3:3:4"):
    return SceneSpec((500, 400), Background("clutter", 6), Lighting(0.55, 1.0, "x"),
                     (art(seed_code, (0.4, 0.5), 0.5, Occluder()), Placement(TAG, "BEEF", (0.85, 0.3), 0.2)))


def test_compose_deterministic():
    a, ga = compose_scene(hard_spec(), 11)
    b, gb = compose_scene(hard_spec(), 11)
    c, _ = compose_scene(hard_spec(), 12)
    assert a == b and ga == gb
    assert a != c


def test_lighting_identity():
    spec = SceneSpec((300, 300), Background("clutter", 8), Lighting(1.0, 1.0, "y"), (art(hf=0.5),))
    plain = SceneSpec((300, 300), Background("clutter", 8), placements=(art(hf=0.5),))
    assert compose_scene(spec, 2)[0] == compose_scene(plain, 2)[0]


def test_lighting_ramp():
    g, _ = compose_scene(SceneSpec((200, 50), lighting=Lighting(0.5, 1.0, "x")))
    assert g.luma[0, 0] == round(235 * 0.5) and g.luma[0, -1] == 235
    assert (np.diff(g.luma[0].astype(int)) >= 0).all() and (g.luma == g.luma[0]).all()


@settings(max_examples=25)
@given(st.floats(0.05, 0.6), st.floats(0.35, 0.65), st.floats(0.35, 0.65), st.sampled_from([ART, TAG]))
def test_ground_truth_bounds_ink(hf, cx, cy, kind):
    payload = "1:2:3" if kind is ART else "0F0F"
    g, gt = compose_scene(SceneSpec((300, 300), placements=(Placement(kind, payload, (cx, cy), hf),)))
    x, y, w, h = gt[0].bbox
    ys, xs = np.nonzero(g.luma < 128)
    assert (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1) == (x, y, x + w, y + h)


def test_overlap_and_bounds():
    with pytest.raises(OverlappingPlacements):
        compose_scene(SceneSpec((400, 400), placements=(art(center=(0.4, 0.5), hf=0.3),
                                                       art(center=(0.6, 0.5), hf=0.3))))
    with pytest.raises(PlacementOutOfBounds):
        compose_scene(SceneSpec((400, 400), placements=(art(center=(0.1, 0.5), hf=0.4),)))


def test_occluder_breaks_extraction():
    clean, gt = compose_scene(SceneSpec((600, 600), placements=(art(hf=0.5),)))
    hidden, _ = compose_scene(SceneSpec((600, 600), placements=(art(hf=0.5, occ=Occluder()),)))
    box = pad_box(gt[0].bbox, 0.1, 600, 600)
    codes = lambda g: [format_code(c.descriptor) for c in extract_artcodes(tree_of(g.crop(box)))]
    assert codes(clean) == ["1:1:2:4:4"]
    assert "1:1:2:4:4" not in codes(hidden)
    assert compose_scene(SceneSpec((600, 600), placements=(art(hf=0.5, occ=Occluder()),)))[1][0].occluded


def test_clutter_density_scale():
    assert clutter_count(6, 768, 768) == 35
    g, _ = compose_scene(SceneSpec((300, 300), Background("clutter", 10)), 1)
    assert (g.luma < 128).any()


def test_scene_json_round_trip():
    spec = hard_spec()
    d = scene_to_dict(spec)
    assert scene_from_dict(json.loads(json.dumps(d))) == spec
    doc = dict(d, sequence={"frames": 4, "startHeightFraction": 0.1, "endHeightFraction": 0.3})
    scene, seq = load_scene_json(json.dumps(doc))
    assert scene == spec and seq == SequenceSpec(4, 0.1, 0.3)


def test_corpus_balanced_and_deterministic():
    a = emit_corpus(6, (64, 128), seed=4)
    b = emit_corpus(6, (64, 128), seed=4)
    assert len(a) == 18
    assert [k for _, k in a].count(ART) == 6
    assert np.array_equal(np.array([f for f, _ in a]), np.array([f for f, _ in b]))
    assert [k for _, k in a][:3] == list(MarkerKind)
    with pytest.raises(ValueError):
        emit_corpus(0)
