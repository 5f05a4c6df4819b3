import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorvos.errors import CountsMismatch, DimensionMismatch, EmptyMask, ParseError
from anchorvos.maskmedia import (
    BBox,
    D4Transform,
    RleMask,
    bbox_of,
    boundary,
    d4_apply,
    dilate,
    disk,
    erode,
    iou,
    masked_crop,
    parse_transforms,
    read_frame,
    read_mask,
    resize_patch,
    rle_decode,
    rle_encode,
    write_frame,
    write_mask,
)

masks = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(lambda hw: arrays(bool, hw))


def naive_rle(mask):
    # independent oracle: walk column-major pixels one by one
    counts, cur, run = [], False, 0
    for c in range(mask.shape[1]):
        for r in range(mask.shape[0]):
            v = bool(mask[r, c])
            if v != cur:
                counts.append(run)
                cur, run = v, 0
            run += 1
    counts.append(run)
    return counts


class TestRle:
    def test_diagonal(self):
        m = np.array([[1, 0], [0, 1]], bool)
        assert rle_encode(m).counts == (0, 1, 2, 1)
        assert np.array_equal(rle_decode(RleMask((2, 2), (0, 1, 2, 1))), m)

    def test_all_zero_and_all_one(self):
        assert rle_encode(np.zeros((3, 3), bool)).counts == (9,)
        assert rle_encode(np.ones((2, 2), bool)).counts == (0, 4)
        assert rle_decode(RleMask((2, 2), (0, 4))).all()
        assert not rle_decode(RleMask((3, 3), (9,))).any()

    def test_non_square_is_column_major(self):
        m = np.zeros((2, 3), bool)
        m[0, 1] = True  # column-major index 2
        assert rle_encode(m).counts == (2, 1, 3)

    @pytest.mark.parametrize("counts", [(3, 2), (5,), (2, -1, 3), ()])
    def test_bad_counts(self, counts):
        with pytest.raises(CountsMismatch):
            rle_decode(RleMask((2, 2), counts))

    def test_json_roundtrip_and_errors(self):
        r = RleMask((2, 3), (1, 2, 3))
        assert RleMask.from_json(r.to_json()) == r
        with pytest.raises(ParseError):
            RleMask.from_json({"size": [2, 2]})
        with pytest.raises(ParseError):
            RleMask.from_json({"size": [2, 2], "counts": [1.5, 2.5]})

    @given(masks)
    def test_roundtrip(self, m):
        r = rle_encode(m)
        assert list(r.counts) == naive_rle(m)
        assert np.array_equal(rle_decode(r), m)
        assert r.area() == m.sum()
        assert sum(r.counts) == m.size


class TestMaskAlgebra:
    def test_iou_examples(self):
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0:2, 0:2] = True
        b[0:2, 1:3] = True
        assert iou(a, b) == pytest.approx(2 / 6, abs=1e-12)
        assert iou(a, a) == 1.0
        c = np.zeros((4, 4), bool)
        c[3, 3] = True
        assert iou(a, c) == 0.0
        assert iou(np.zeros((4, 4), bool), np.zeros((4, 4), bool)) == 1.0
        with pytest.raises(DimensionMismatch):
            iou(a, np.zeros((3, 4), bool))

    @given(masks, st.data())
    def test_iou_symmetric_bounded(self, a, data):
        b = data.draw(arrays(bool, a.shape))
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)

    def test_bbox(self):
        m = np.zeros((6, 7), bool)
        m[2, 3] = True
        assert bbox_of(m) == BBox(3, 2, 1, 1)
        m = np.zeros((6, 7), bool)
        m[0, 0] = m[4, 5] = True
        assert bbox_of(m) == BBox(0, 0, 6, 5)
        assert bbox_of(np.ones((4, 9), bool)) == BBox(0, 0, 9, 4)
        assert bbox_of(np.zeros((4, 4), bool)) is None

    def test_boundary(self):
        m = np.zeros((8, 8), bool)
        m[2:6, 2:6] = True
        b = boundary(m)
        assert b.sum() == 12
        assert not b[3:5, 3:5].any()
        one = np.zeros((5, 5), bool)
        one[2, 2] = True
        assert np.array_equal(boundary(one), one)
        assert not boundary(np.zeros((5, 5), bool)).any()

    def test_dilate(self):
        m = np.zeros((7, 7), bool)
        m[3, 3] = True
        d = dilate(m, 1)
        assert d.sum() == 5
        assert not d[2, 2]
        assert np.array_equal(dilate(m, 0), m)
        assert not dilate(np.zeros((5, 5), bool), 3).any()

    @given(masks, st.integers(0, 3))
    def test_dilate_matches_distance_oracle(self, m, r):
        ys, xs = np.nonzero(m)
        yy, xx = np.mgrid[: m.shape[0], : m.shape[1]]
        expected = np.zeros_like(m)
        for y, x in zip(ys, xs):
            expected |= (yy - y) ** 2 + (xx - x) ** 2 <= r * r
        assert np.array_equal(dilate(m, r), expected)
        assert np.array_equal(erode(m, r), ~dilate(~m, r)) or r == 0

    def test_disk(self):
        assert disk(1).sum() == 5
        assert disk(2).sum() == 13


class TestCropResize:
    def test_full_frame_crop_is_copy(self):
        img = np.random.default_rng(0).integers(0, 256, (5, 6, 3), dtype=np.uint8)
        assert np.array_equal(masked_crop(img, np.ones((5, 6), bool), 0.0), img)

    def test_tight_crop(self):
        img = np.random.default_rng(1).integers(0, 256, (8, 8, 3), dtype=np.uint8)
        m = np.zeros((8, 8), bool)
        m[3:5, 3:5] = True
        assert np.array_equal(masked_crop(img, m, 0.0), img[3:5, 3:5])

    def test_mean_fill(self):
        img = np.zeros((20, 20, 3), np.uint8)
        img[...] = (0, 0, 255)
        m = np.zeros((20, 20), bool)
        yy, xx = np.mgrid[:20, :20]
        m[(yy - 10) ** 2 + (xx - 10) ** 2 <= 9] = True
        img[m] = (255, 0, 0)
        crop = masked_crop(img, m, 0.5)
        # box is 7 wide; pad round(3.5) = 4 on each side
        assert crop.shape == (15, 15, 3)
        assert (crop.reshape(-1, 3) == (255, 0, 0)).all()

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            masked_crop(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 4), bool))

    def test_resize_kernel(self):
        row = np.array([[[0] * 3, [255] * 3]], np.uint8)  # 1x2
        out = resize_patch(row, 4)
        assert out[0, :, 0].tolist() == [0, 64, 191, 255]
        assert (out == out[0:1]).all()
        col = np.array([[[0] * 3], [[255] * 3]], np.uint8)  # 2x1
        out = resize_patch(col, 2)
        assert out[:, :, 0].tolist() == [[0, 0], [255, 255]]

    @given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 20), st.integers(0, 255))
    def test_resize_constant(self, h, w, side, v):
        out = resize_patch(np.full((h, w, 3), v, np.uint8), side)
        assert out.shape == (side, side, 3) and (out == v).all()

    def test_resize_identity(self):
        img = np.random.default_rng(2).integers(0, 256, (6, 6, 3), dtype=np.uint8)
        assert np.array_equal(resize_patch(img, 6), img)


class TestD4:
    def patch(self):
        p = np.zeros((4, 4), np.uint8)
        p[0, 0] = 1
        return p

    def test_examples(self):
        p = self.patch()
        assert d4_apply(p, D4Transform.FLIP_H)[0, 3] == 1
        assert d4_apply(p, D4Transform.ROT90)[0, 3] == 1  # (r,c) -> (c, side-1-r)
        q = np.arange(16).reshape(4, 4)
        assert np.array_equal(d4_apply(d4_apply(q, D4Transform.ROT180), D4Transform.ROT180), q)
        with pytest.raises(DimensionMismatch):
            d4_apply(np.zeros((3, 4)), D4Transform.ROT90)

    def test_rotation_convention(self):
        q = np.arange(25).reshape(5, 5)
        out = d4_apply(q, D4Transform.ROT90)
        for r in range(5):
            for c in range(5):
                assert out[c, 4 - r] == q[r, c]

    def test_group_laws(self):
        q = np.arange(36).reshape(6, 6)
        images = {t: d4_apply(q, t).tobytes() for t in D4Transform}
        assert len(set(images.values())) == 8
        for a in D4Transform:
            assert a.then(a.inverse) is D4Transform.IDENTITY
            for b in D4Transform:
                both = d4_apply(d4_apply(q, a), b)
                assert np.array_equal(both, d4_apply(q, a.then(b)))

    def test_parse(self):
        assert parse_transforms(["rot90", "identity"]) == (D4Transform.IDENTITY, D4Transform.ROT90)
        with pytest.raises(ValueError):
            parse_transforms(["rot45"])


def test_png_roundtrip(tmp_path):
    img = np.random.default_rng(3).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    write_frame(tmp_path / "f.png", img)
    assert np.array_equal(read_frame(tmp_path / "f.png"), img)
    m = img[..., 0] > 100
    write_mask(tmp_path / "m.png", m)
    assert np.array_equal(read_mask(tmp_path / "m.png"), m)
