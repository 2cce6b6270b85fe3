import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gliomaseg.errors import EmptyMask
from gliomaseg.geometry import (
    BBox,
    bbox_center,
    bbox_from_mask,
    bbox_iou,
    components,
    largest_component,
)
from oracles import bbox_scan, components_union_find, iou_pixels, largest_component_oracle

masks = hnp.arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20)))
boxes = st.builds(
    lambda r, c, h, w: BBox(r, c, r + h, c + w),
    st.integers(0, 30), st.integers(0, 30), st.integers(0, 15), st.integers(0, 15),
)


def test_bbox_point_and_pair():
    m = np.zeros((32, 32), bool)
    m[10, 20] = True
    assert bbox_from_mask(m) == BBox(10, 20, 10, 20)
    m = np.zeros((16, 16), bool)
    m[5, 5] = m[10, 12] = True
    assert bbox_from_mask(m) == BBox(5, 5, 10, 12)


def test_bbox_random_scan(rng):
    for _ in range(20):
        m = rng.random((32, 32)) < 0.05
        if m.any():
            assert bbox_from_mask(m).to_list() == list(bbox_scan(m))


def test_bbox_empty():
    with pytest.raises(EmptyMask):
        bbox_from_mask(np.zeros((4, 4), bool))


@pytest.mark.parametrize("box,center", [
    (BBox(10, 20, 30, 40), (20, 30)),
    (BBox(0, 0, 1, 1), (0, 0)),
    (BBox(3, 7, 3, 7), (3, 7)),
])
def test_bbox_center(box, center):
    p = bbox_center(box)
    assert (p.row, p.col) == center and p.positive


def test_bbox_validation():
    with pytest.raises(ValueError):
        BBox(5, 0, 4, 0)
    with pytest.raises(ValueError):
        BBox(-1, 0, 4, 0)


def test_largest_single_blob():
    m = np.zeros((10, 10), bool)
    m[2:5, 3:7] = True
    assert np.array_equal(largest_component(m), m)


def test_largest_picks_bigger_blob():
    m = np.zeros((12, 12), bool)
    m[0, 0:5] = True          # 5 pixels
    m[6:9, 6:9] = True        # 9 pixels
    out = largest_component(m)
    assert out.sum() == 9 and np.array_equal(out, largest_component_oracle(m))


def test_largest_tie_break():
    m = np.zeros((8, 8), bool)
    m[4, 4:7] = True
    m[0, 0:3] = True
    out = largest_component(m)
    assert out[0, 0] and not out[4, 4]


def test_largest_diagonal_not_connected():
    m = np.eye(4, dtype=bool)
    m[3, 2] = True
    out = largest_component(m)
    # (2,2)-(3,2)-(3,3) is one chain; the other diagonal pixels stay isolated
    assert out.sum() == 3 and out[2, 2] and out[3, 2] and out[3, 3]


def test_largest_empty():
    with pytest.raises(EmptyMask):
        largest_component(np.zeros((3, 3), bool))


def test_components_match_union_find(rng):
    m = rng.random((20, 20)) < 0.45
    got = {frozenset(zip(*np.nonzero(c))) for c, _ in components(m)}
    want = {frozenset(s) for s in components_union_find(m)}
    assert got == want


def test_iou_cases():
    a = BBox(0, 0, 3, 3)
    assert bbox_iou(a, a) == 1.0
    assert bbox_iou(a, BBox(10, 10, 12, 12)) == 0.0
    assert bbox_iou(a, BBox(2, 2, 5, 5)) == pytest.approx(4 / 28, abs=1e-15)
    assert bbox_iou(a, BBox(2, 2, 5, 5)) == iou_pixels((0, 0, 3, 3), (2, 2, 5, 5))


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_iou_properties(a, b):
    v = bbox_iou(a, b)
    assert v == bbox_iou(b, a)
    assert 0.0 <= v <= 1.0
    assert bbox_iou(a, a) == 1.0


@settings(max_examples=150, deadline=None)
@given(masks)
def test_mask_box_invariants(m):
    if not m.any():
        return
    b = bbox_from_mask(m)
    for r, c in zip(*np.nonzero(m)):
        assert b.contains(r, c)
    lb = bbox_from_mask(largest_component(m))
    assert lb.row_min >= b.row_min and lb.col_min >= b.col_min
    assert lb.row_max <= b.row_max and lb.col_max <= b.col_max
    p = bbox_center(b)
    assert b.contains(p.row, p.col)
