"""
Tests for box algebra, IoU and exact geometric transforms.
"""

import math

import numpy as np
import pytest

from omniview.errors import ArgumentError, PreconditionError
from omniview.geometry import (
    BoundingBox,
    Crop,
    HFlip,
    ImageDims,
    Rot90,
    Sequence,
    VFlip,
    apply_to_image,
    area,
    boxes_to_array,
    compose,
    invert,
    iou,
    iou_matrix,
    is_identity,
    transform_box,
    transform_dims,
)


def marker_bounds(mask: np.ndarray):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    return (float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def paint_marker(dims: ImageDims, box: BoundingBox) -> np.ndarray:
    image = np.zeros((dims.height, dims.width), dtype=np.uint8)
    image[int(box.y_min):int(box.y_max), int(box.x_min):int(box.x_max)] = 255
    return image


def random_int_box(rng: np.random.Generator, dims: ImageDims, min_size: int = 1) -> BoundingBox:
    x0 = int(rng.integers(0, dims.width - min_size + 1))
    y0 = int(rng.integers(0, dims.height - min_size + 1))
    x1 = int(rng.integers(x0 + min_size, dims.width + 1))
    y1 = int(rng.integers(y0 + min_size, dims.height + 1))
    return BoundingBox(float(x0), float(y0), float(x1), float(y1))


def random_transform(rng: np.random.Generator, dims: ImageDims, depth: int = 0):
    kind = int(rng.integers(0, 5 if depth == 0 else 4))
    if kind == 0:
        return HFlip()
    if kind == 1:
        return VFlip()
    if kind == 2:
        return Rot90(int(rng.integers(0, 4)))
    if kind == 3:
        return Crop(random_int_box(rng, dims))
    steps = []
    current = dims
    for _ in range(int(rng.integers(0, 4))):
        step = random_transform(rng, current, depth + 1)
        steps.append(step)
        current = transform_dims(step, current)
    return compose(steps)


class TestBoundingBox:
    def test_rejects_inverted_box(self):
        with pytest.raises(ArgumentError):
            BoundingBox(10, 0, 5, 10)

    def test_rejects_non_finite(self):
        with pytest.raises(ArgumentError):
            BoundingBox(0, 0, math.inf, 10)

    def test_degenerate_box_allowed(self):
        assert area(BoundingBox(3, 3, 3, 9)) == 0

    def test_image_dims_must_be_positive_int(self):
        with pytest.raises(ArgumentError):
            ImageDims(0, 10)
        with pytest.raises(ArgumentError):
            ImageDims(10.5, 10)


class TestArea:
    @pytest.mark.parametrize(
        "coords, expected",
        [((0, 0, 10, 10), 100), ((3, 3, 3, 9), 0), ((2.5, 0, 7.5, 4), 20)],
    )
    def test_examples(self, coords, expected):
        assert area(BoundingBox(*coords)) == expected


class TestIoU:
    def test_identical(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)) == pytest.approx(50 / 150)

    def test_zero_union_is_zero(self):
        point = BoundingBox(4, 4, 4, 4)
        assert iou(point, point) == 0.0

    def test_raster_oracle(self, rng):
        """Analytic IoU equals grid rasterization for integer boxes."""
        frame = ImageDims(64, 64)
        for _ in range(10_000):
            coords = []
            for _ in range(2):
                xs = np.sort(rng.integers(0, 65, size=2))
                ys = np.sort(rng.integers(0, 65, size=2))
                coords.append(BoundingBox(float(xs[0]), float(ys[0]), float(xs[1]), float(ys[1])))
            a, b = coords
            mask_a = paint_marker(frame, a) > 0
            mask_b = paint_marker(frame, b) > 0
            union = int(np.logical_or(mask_a, mask_b).sum())
            inter = int(np.logical_and(mask_a, mask_b).sum())
            expected = inter / union if union else 0.0
            assert iou(a, b) == expected
            assert iou(b, a) == expected

    def test_bounds_and_self(self, rng):
        frame = ImageDims(50, 40)
        for _ in range(500):
            a = random_int_box(rng, frame)
            b = random_int_box(rng, frame)
            assert 0.0 <= iou(a, b) <= 1.0
            assert iou(a, a) == 1.0

    def test_invariant_under_joint_transform(self, rng):
        frame = ImageDims(40, 30)
        for _ in range(300):
            a = random_int_box(rng, frame)
            b = random_int_box(rng, frame)
            t = [HFlip(), VFlip(), Rot90(1), Rot90(2), Rot90(3)][int(rng.integers(0, 5))]
            ta, _ = transform_box(t, frame, a)
            tb, _ = transform_box(t, frame, b)
            assert iou(ta, tb) == pytest.approx(iou(a, b), abs=1e-12)

    def test_matrix_matches_scalar(self, rng):
        frame = ImageDims(64, 64)
        boxes_a = [random_int_box(rng, frame) for _ in range(12)]
        boxes_b = [random_int_box(rng, frame) for _ in range(9)] + [BoundingBox(5, 5, 5, 5)]
        matrix = iou_matrix(boxes_to_array(boxes_a), boxes_to_array(boxes_b))
        assert matrix.shape == (12, 10)
        for i, a in enumerate(boxes_a):
            for j, b in enumerate(boxes_b):
                assert matrix[i, j] == iou(a, b)

    def test_matrix_empty(self):
        assert iou_matrix(boxes_to_array([]), boxes_to_array([BoundingBox(0, 0, 1, 1)])).shape == (0, 1)


class TestTransformBox:
    def test_hflip(self):
        box, dims = transform_box(HFlip(), ImageDims(100, 100), BoundingBox(10, 20, 30, 40))
        assert box == BoundingBox(70, 20, 90, 40)
        assert dims == ImageDims(100, 100)

    def test_rot90(self):
        box, dims = transform_box(Rot90(1), ImageDims(100, 100), BoundingBox(10, 20, 30, 40))
        assert box == BoundingBox(20, 70, 40, 90)
        assert dims == ImageDims(100, 100)

    def test_rot90_swaps_dims(self):
        _, dims = transform_box(Rot90(1), ImageDims(120, 80), BoundingBox(0, 0, 10, 10))
        assert dims == ImageDims(80, 120)

    def test_rot90_full_turn(self):
        b = BoundingBox(3.5, 1.25, 17, 9)
        assert Rot90(4).k == 0
        assert transform_box(Rot90(4), ImageDims(20, 10), b) == (b, ImageDims(20, 10))

    def test_crop_clips_and_shifts(self):
        box, dims = transform_box(
            Crop(BoundingBox(10, 10, 50, 40)), ImageDims(100, 100), BoundingBox(0, 20, 30, 60)
        )
        assert box == BoundingBox(0, 10, 20, 30)
        assert dims == ImageDims(40, 30)

    def test_crop_drops_outside_box(self):
        result = transform_box(
            Crop(BoundingBox(50, 50, 60, 60)), ImageDims(100, 100), BoundingBox(0, 0, 10, 10)
        )
        assert result is None

    def test_crop_outside_image_is_precondition_error(self):
        with pytest.raises(PreconditionError):
            transform_box(Crop(BoundingBox(90, 90, 110, 110)), ImageDims(100, 100), BoundingBox(0, 0, 1, 1))

    def test_box_outside_image_is_precondition_error(self):
        with pytest.raises(PreconditionError):
            transform_box(HFlip(), ImageDims(10, 10), BoundingBox(5, 5, 12, 8))

    def test_crop_rect_must_be_integer(self):
        with pytest.raises(ArgumentError):
            Crop(BoundingBox(0.5, 0, 10, 10))

    def test_area_preserved(self, rng):
        frame = ImageDims(37, 23)
        for _ in range(200):
            b = random_int_box(rng, frame)
            for t in (HFlip(), VFlip(), Rot90(1), Rot90(2), Rot90(3)):
                assert area(transform_box(t, frame, b)[0]) == area(b)

    def test_four_fold_rotation_and_involutions(self, rng):
        frame = ImageDims(33, 21)
        for _ in range(200):
            b = random_int_box(rng, frame)
            for t in (compose([Rot90(1)] * 4), compose([HFlip(), HFlip()]), compose([VFlip(), VFlip()])):
                assert transform_box(t, frame, b) == (b, frame)

    def test_rot90_composition(self, rng):
        frame = ImageDims(30, 18)
        for _ in range(200):
            b = random_int_box(rng, frame)
            assert transform_box(compose([Rot90(1), Rot90(1)]), frame, b) == transform_box(Rot90(2), frame, b)

    def test_empty_sequence_is_identity(self):
        b = BoundingBox(1, 2, 3, 4)
        assert transform_box(compose([]), ImageDims(10, 10), b) == (b, ImageDims(10, 10))
        assert is_identity(compose([]))


class TestMarkerOracle:
    def test_transform_box_matches_pixels(self, rng):
        """Transforming a marker image and locating the mark gives the transformed box."""
        for _ in range(1000):
            dims = ImageDims(int(rng.integers(4, 40)), int(rng.integers(4, 40)))
            b = random_int_box(rng, dims)
            t = random_transform(rng, dims)
            marker = apply_to_image(t, paint_marker(dims, b))
            result = transform_box(t, dims, b)
            if result is None:
                assert marker_bounds(marker) is None
                continue
            box, out_dims = result
            assert (marker.shape[1], marker.shape[0]) == (out_dims.width, out_dims.height)
            assert marker_bounds(marker) == tuple(box.as_list())

    def test_round_trips_bit_exact(self, rng):
        image = rng.integers(0, 256, size=(25, 40, 3), dtype=np.uint8)
        for t in (compose([Rot90(1)] * 4), compose([HFlip(), HFlip()]), compose([VFlip(), VFlip()])):
            assert np.array_equal(apply_to_image(t, image), image)

    def test_inverse_restores_image(self, rng):
        image = rng.integers(0, 256, size=(25, 40, 3), dtype=np.uint8)
        t = Sequence((HFlip(), Rot90(3), VFlip(), Rot90(1)))
        assert np.array_equal(apply_to_image(invert(t), apply_to_image(t, image)), image)

    def test_crop_has_no_inverse(self):
        with pytest.raises(ArgumentError):
            invert(Crop(BoundingBox(0, 0, 1, 1)))
