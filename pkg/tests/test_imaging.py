import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from markerforge.imaging import (
    BinaryImage, MalformedHeader, PixelGrid, RasterImage, TruncatedBody,
    UnsupportedMagic, UnsupportedMaxval, adaptive_threshold, box_iou, build_rat,
    label_components, read_pnm, resample_area, to_luminance, write_pnm,
)
from oracles import enclosing_parents, flood_labels


def images(max_side=16, channels=(1, 3)):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side), st.sampled_from(channels)).flatmap(
        lambda s: arrays(np.uint8, s))


# ---------------------------------------------------------------- PNM

def test_read_p5_single_pixel():
    img = read_pnm(b"P5 1 1 255\n\x7f")
    assert (img.width, img.height, img.channels) == (1, 1, 1)
    assert img.samples[0, 0, 0] == 127


def test_read_p6():
    img = read_pnm(b"P6 2 1 255\n" + bytes(range(6)))
    assert img.channels == 3
    assert img.samples.ravel().tolist() == [0, 1, 2, 3, 4, 5]


def test_write_exact_bytes():
    assert write_pnm(RasterImage(np.array([[[127]]], np.uint8))) == b"P5\n1 1\n255\n\x7f"


def test_header_comments_skipped():
    img = read_pnm(b"P5\n# made by hand\n2 # width\n1\n255\n\x01\x02")
    assert img.samples.ravel().tolist() == [1, 2]


@pytest.mark.parametrize("data, err", [
    (b"P4 1 1\n\x00", UnsupportedMagic),
    (b"P2 1 1 255\n0", UnsupportedMagic),
    (b"P5 1 1 65535\n\x00\x00", UnsupportedMaxval),
    (b"P5 1 1", MalformedHeader),
    (b"P5 x 1 255\n\x00", MalformedHeader),
    (b"P5 0 1 255\n", MalformedHeader),
    (b"P5 2 2 255\n\x00\x00\x00", TruncatedBody),
    (b"P", MalformedHeader),
])
def test_malformed(data, err):
    with pytest.raises(err):
        read_pnm(data)


@given(images())
def test_pnm_round_trip(a):
    img = RasterImage(a)
    raw = write_pnm(img)
    back = read_pnm(raw)
    assert back == img
    assert raw.endswith(a.tobytes())


def test_two_channel_rejected():
    with pytest.raises(ValueError):
        RasterImage(np.zeros((2, 2, 2), np.uint8))


# ---------------------------------------------------------------- luminance

@pytest.mark.parametrize("rgb, y", [((255, 255, 255), 255), ((255, 0, 0), 76), ((0, 0, 0), 0),
                                    ((0, 255, 0), 150), ((0, 0, 255), 29)])
def test_luminance_values(rgb, y):
    img = RasterImage(np.array([[rgb]], np.uint8))
    assert to_luminance(img).luma[0, 0] == y


@given(images(channels=(1,)))
def test_gray_luminance_is_identity(a):
    assert np.array_equal(to_luminance(RasterImage(a)).luma, a[:, :, 0])


# ---------------------------------------------------------------- thresholding

def brute_threshold(v, r, offset):
    h, w = v.shape
    out = np.zeros((h, w), bool)
    for y in range(h):
        for x in range(w):
            win = v[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].astype(float)
            out[y, x] = v[y, x] < win.mean() - offset
    return out


def test_threshold_three_pixels():
    ink = adaptive_threshold(PixelGrid(np.array([[0, 255, 0]], np.uint8)), 1, 5).ink
    assert ink.tolist() == [[True, False, True]]


@given(st.integers(0, 255), st.integers(1, 20), st.integers(1, 20))
def test_uniform_is_paper(v, h, w):
    assert not adaptive_threshold(PixelGrid(np.full((h, w), v, np.uint8))).ink.any()


@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))),
       st.integers(1, 4), st.integers(0, 30))
def test_threshold_matches_brute_force(a, r, offset):
    got = adaptive_threshold(PixelGrid(a), r, offset).ink
    assert np.array_equal(got, brute_threshold(a, r, offset))


@given(arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24)), elements=st.integers(0, 200)),
       st.integers(0, 55), st.integers(1, 6))
def test_threshold_shift_invariant(a, c, r):
    base = adaptive_threshold(PixelGrid(a), r).ink
    shifted = adaptive_threshold(PixelGrid(a + np.uint8(c)), r).ink
    assert np.array_equal(base, shifted)


def test_threshold_argument_checks():
    g = PixelGrid(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        adaptive_threshold(g, 0)
    with pytest.raises(ValueError):
        adaptive_threshold(g, 2, -1)


# ---------------------------------------------------------------- labeling

def labels_of(rows):
    return label_components(BinaryImage(np.array(rows, bool)))


def test_label_row_pattern():
    lm = labels_of([[1, 0, 1]])
    assert lm.component_count == 3
    assert lm.polarity.tolist() == [True, False, True]


def test_label_diagonal():
    lm = labels_of([[1, 0], [0, 1]])
    assert lm.component_count == 3
    assert lm.label.tolist() == [[0, 1], [2, 0]]


def test_labels_match_flood_fill_on_all_3x3():
    # the 4x4 exhaustive sweep lives in the acceptance suite
    for bits in itertools.product([False, True], repeat=9):
        ink = np.array(bits).reshape(3, 3)
        ref, n = flood_labels(ink)
        lm = label_components(BinaryImage(ink))
        assert lm.component_count == n
        assert np.array_equal(lm.label, ref)


@given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_labels_match_flood_fill(ink):
    ref, n = flood_labels(ink)
    lm = label_components(BinaryImage(ink))
    assert lm.component_count == n
    assert np.array_equal(lm.label, ref)
    for k in range(n):
        assert lm.polarity[k] == ink.ravel()[lm.first_pixel[k]]
        assert lm.label.ravel()[lm.first_pixel[k]] == k
    assert (np.diff(lm.first_pixel) > 0).all()


# ---------------------------------------------------------------- region tree

def test_rat_nested_squares():
    ink = np.zeros((5, 5), bool)
    ink[1:4, 1:4] = True
    ink[2, 2] = False
    t = build_rat(label_components(BinaryImage(ink)))
    assert len(t) == 3
    assert not t.root.polarity and t.root.parent_id is None
    (ring,) = t.root.child_ids
    assert t[ring].polarity
    (centre,) = t[ring].child_ids
    assert t[centre].area == 1 and t.depth(centre) == 2


def test_rat_all_paper():
    t = build_rat(label_components(BinaryImage(np.zeros((6, 7), bool))))
    assert len(t) == 1 and t.root.child_ids == () and t.root.area == 42


def test_rat_virtual_root():
    ink = np.zeros((4, 6), bool)
    ink[:, 3:] = True
    t = build_rat(label_components(BinaryImage(ink)))
    assert t.root.virtual and t.root.area == 0
    assert set(t.root.child_ids) == {0, 1}


def check_tree(t, lm):
    h, w = lm.height, lm.width
    assert len(t) == lm.component_count + (1 if t.root.virtual else 0)
    assert sum(n.area for n in t.nodes) == h * w
    roots = [n.id for n in t.nodes if n.parent_id is None]
    assert roots == [t.root_id]
    for n in t.nodes:
        for c in n.child_ids:
            assert t[c].parent_id == n.id
        if n.parent_id is not None:
            assert n.id in t[n.parent_id].child_ids
            if not t[n.parent_id].virtual:
                p = t[n.parent_id]
                assert p.polarity != n.polarity
                x, y, bw, bh = n.bbox
                px, py, pw, ph = p.bbox
                assert px <= x and py <= y and x + bw <= px + pw and y + bh <= py + ph
        if not n.virtual:
            assert n.area >= 1
        t.depth(n.id)  # terminates, so acyclic


@given(arrays(bool, st.tuples(st.integers(1, 14), st.integers(1, 14))))
def test_rat_matches_containment_oracle(ink):
    lm = label_components(BinaryImage(ink))
    t = build_rat(lm)
    check_tree(t, lm)
    ref_lab, parents = enclosing_parents(ink)
    assert np.array_equal(ref_lab, lm.label)
    for r, p in parents.items():
        if p is None:
            assert t[r].parent_id is None or t[t[r].parent_id].virtual
        else:
            assert t[r].parent_id == p


# ---------------------------------------------------------------- geometry

boxes = st.tuples(st.integers(-20, 20), st.integers(-20, 20), st.integers(1, 20), st.integers(1, 20))


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = box_iou(a, b)
    assert v == box_iou(b, a)
    assert 0.0 <= v <= 1.0
    assert box_iou(a, a) == 1.0


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20)),
              elements=st.floats(0, 255)), st.integers(1, 20), st.integers(1, 20))
def test_resample_preserves_mean(a, oh, ow):
    out = resample_area(a, oh, ow)
    assert out.shape == (oh, ow)
    assert out.mean() == pytest.approx(a.mean(), rel=1e-9, abs=1e-9)
    assert out.min() >= a.min() - 1e-9 and out.max() <= a.max() + 1e-9
