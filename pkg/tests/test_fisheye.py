"""
Tests for the equidistant fisheye model, point mappers, box remapping and warps.
"""

import math

import numpy as np
import pytest

from omniview.errors import ArgumentError
from omniview.fisheye import (
    CameraPose,
    FisheyeMapper,
    FisheyeModel,
    HomographyMapper,
    PinholeIntrinsics,
    QuadTransform,
    four_point_warp,
    project,
    project_many,
    remap_box,
    unproject,
    unproject_many,
    warp_to_fisheye,
)
from omniview.geometry import BoundingBox, ImageDims


def identity_mapper(points):
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def shift_mapper(points):
    return identity_mapper(points) + np.array([10.0, 5.0])


@pytest.fixture
def model() -> FisheyeModel:
    return FisheyeModel(focal=200.0, cx=320.0, cy=320.0, dims=ImageDims(640, 640), fov=math.pi)


class TestFisheyeModel:
    def test_image_circle_must_fit(self):
        with pytest.raises(ArgumentError):
            FisheyeModel(focal=250.0, cx=320.0, cy=320.0, dims=ImageDims(640, 640), fov=math.pi)

    def test_fov_limit(self):
        with pytest.raises(ArgumentError):
            FisheyeModel(focal=50.0, cx=320.0, cy=320.0, dims=ImageDims(640, 640), fov=4.0)

    def test_principal_point_inside(self):
        with pytest.raises(ArgumentError):
            FisheyeModel(focal=50.0, cx=700.0, cy=320.0, dims=ImageDims(640, 640))

    def test_centered(self):
        m = FisheyeModel.centered(ImageDims(640, 480))
        assert m.circle_radius == pytest.approx(240.0)
        assert (m.cx, m.cy) == (320.0, 240.0)


class TestProject:
    def test_optical_axis(self, model):
        assert project(model, [0.0, 0.0, 1.0]) == (320.0, 320.0)

    def test_quarter_pi(self, model):
        theta = math.pi / 4
        u, v = project(model, [math.sin(theta), 0.0, math.cos(theta)])
        assert u - 320.0 == pytest.approx(200.0 * math.pi / 4, abs=1e-9)
        assert u - 320.0 == pytest.approx(157.0796, abs=1e-4)
        assert v == pytest.approx(320.0, abs=1e-12)

    def test_outside_fov(self):
        narrow = FisheyeModel(focal=200.0, cx=320.0, cy=320.0, dims=ImageDims(640, 640), fov=math.pi / 2)
        theta = math.pi / 4 + 1e-6
        assert project(narrow, [math.sin(theta), 0.0, math.cos(theta)]) is None
        assert project(narrow, [math.sin(theta - 2e-6), 0.0, math.cos(theta - 2e-6)]) is not None

    def test_zero_ray(self, model):
        with pytest.raises(ArgumentError):
            project(model, [0.0, 0.0, 0.0])

    def test_radius_increases_with_angle(self, model):
        thetas = np.linspace(0.0, math.pi / 2, 50)
        rays = np.stack([np.sin(thetas), np.zeros_like(thetas), np.cos(thetas)], axis=1)
        radii = project_many(model, rays)[:, 0] - model.cx
        assert np.all(np.diff(radii) > 0)


class TestUnproject:
    def test_principal_point(self, model):
        assert np.allclose(unproject(model, (320.0, 320.0)), [0.0, 0.0, 1.0])

    def test_outside_circle(self, model):
        assert unproject(model, (0.0, 0.0)) is None

    def test_round_trip(self, model, rng):
        """unproject(project(ray)) recovers the ray within 1e-9 rad."""
        n = 10_000
        theta = rng.uniform(0.0, model.fov / 2, n)
        phi = rng.uniform(-math.pi, math.pi, n)
        rays = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)
        back = unproject_many(model, project_many(model, rays))
        cos_angle = np.clip(np.sum(rays * back, axis=1), -1.0, 1.0)
        angle = np.arccos(cos_angle)
        assert np.all(np.isfinite(back))
        # arccos loses precision near 0, so compare the chord as well
        assert np.max(np.linalg.norm(rays - back, axis=1)) < 1e-9
        assert np.max(angle) < 1e-7


class TestCameraPose:
    def test_identity(self):
        assert np.array_equal(CameraPose().rotation, np.eye(3))

    def test_from_euler_is_rotation(self):
        pose = CameraPose.from_euler(roll=10, pitch=-20, yaw=35, height=2.5)
        r = pose.rotation
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)
        assert pose.translation[2] == 2.5

    def test_rejects_reflection(self):
        with pytest.raises(ArgumentError):
            CameraPose(np.diag([1.0, 1.0, -1.0]))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ArgumentError):
            CameraPose(np.diag([2.0, 1.0, 0.5]))


class TestRemapBox:
    def test_identity(self):
        box = BoundingBox(3.25, 7.5, 41.0, 60.125)
        for n in (2, 3, 8):
            assert remap_box(identity_mapper, box, n) == box

    def test_translation(self):
        assert remap_box(shift_mapper, BoundingBox(0, 0, 10, 20)) == BoundingBox(10, 5, 20, 25)

    def test_too_few_samples(self):
        with pytest.raises(ArgumentError):
            remap_box(identity_mapper, BoundingBox(0, 0, 1, 1), 1)

    def test_nothing_lands(self):
        def nowhere(points):
            return np.full((len(points), 2), np.nan)

        assert remap_box(nowhere, BoundingBox(0, 0, 1, 1)) is None

    def test_clip(self):
        result = remap_box(shift_mapper, BoundingBox(0, 0, 10, 20), clip_to=ImageDims(15, 15))
        assert result == BoundingBox(10, 5, 15, 15)
        assert remap_box(shift_mapper, BoundingBox(0, 0, 10, 20), clip_to=ImageDims(8, 8)) is None

    def test_fisheye_dense_sampling_contained(self, model):
        mapper = FisheyeMapper(PinholeIntrinsics(320.0, 320.0, 240.0), CameraPose(), model)
        box = BoundingBox(420.0, 300.0, 600.0, 460.0)
        coarse = remap_box(mapper, box, 8)
        dense = remap_box(mapper, box, 100)
        assert dense.x_min >= coarse.x_min - 1 and dense.y_min >= coarse.y_min - 1
        assert dense.x_max <= coarse.x_max + 1 and dense.y_max <= coarse.y_max + 1
        corners = mapper(np.array([[420.0, 300.0], [600.0, 300.0], [600.0, 460.0], [420.0, 460.0]]))
        for u, v in corners:
            assert coarse.x_min <= u <= coarse.x_max and coarse.y_min <= v <= coarse.y_max


class TestWarpToFisheye:
    def test_source_center_maps_to_principal_point(self, model):
        mapper = FisheyeMapper(PinholeIntrinsics(300.0, 100.0, 80.0), CameraPose(), model)
        assert np.allclose(mapper(np.array([[100.0, 80.0]])), [[320.0, 320.0]])

    def test_line_through_center_stays_radial(self, model):
        src = PinholeIntrinsics(300.0, 100.0, 80.0)
        mapper = FisheyeMapper(src, CameraPose(), model)
        t = np.linspace(-60.0, 60.0, 25)
        points = np.stack([100.0 + 2.0 * t, 80.0 + t], axis=1)
        mapped = mapper(points) - np.array([model.cx, model.cy])
        cross = mapped[:, 0] * 1.0 - mapped[:, 1] * 2.0
        assert np.max(np.abs(cross)) < 1e-9

    def test_output_and_boxes(self, model, rng):
        src_image = rng.integers(1, 256, size=(480, 640, 3), dtype=np.uint8)
        src = PinholeIntrinsics(320.0, 320.0, 240.0)
        boxes = [BoundingBox(300, 200, 340, 280), BoundingBox(0, 0, 640, 480)]
        image, out_boxes = warp_to_fisheye(src_image, boxes, src, CameraPose(), model)
        assert image.shape == (640, 640, 3)
        assert image.dtype == np.uint8
        # outside the image circle is black
        assert np.all(image[0, 0] == 0)
        assert np.all(image[320, 320] > 0)
        assert len(out_boxes) == 2
        center = out_boxes[0]
        assert center.x_min < 320 < center.x_max and center.y_min < 320 < center.y_max

    def test_deterministic(self, model, rng):
        src_image = rng.integers(0, 256, size=(64, 96, 3), dtype=np.uint8)
        src = PinholeIntrinsics(48.0, 48.0, 32.0)
        pose = CameraPose.from_euler(pitch=15.0)
        first = warp_to_fisheye(src_image, [BoundingBox(10, 10, 30, 40)], src, pose, model)
        second = warp_to_fisheye(src_image, [BoundingBox(10, 10, 30, 40)], src, pose, model)
        assert np.array_equal(first[0], second[0])
        assert first[1] == second[1]

    def test_box_outside_field_of_view_dropped(self, model):
        src_image = np.zeros((100, 100, 3), dtype=np.uint8)
        src = PinholeIntrinsics(50.0, 50.0, 50.0)
        narrow = FisheyeModel.centered(ImageDims(640, 640), math.pi / 3)
        _, out_boxes = warp_to_fisheye(src_image, [BoundingBox(0, 0, 5, 5)], src, CameraPose(), narrow)
        assert out_boxes == []


class TestQuadTransform:
    def test_collinear_rejected(self):
        with pytest.raises(ArgumentError):
            QuadTransform([[0, 0], [1, 1], [2, 2], [0, 5]], [[0, 0], [1, 0], [1, 1], [0, 1]])

    def test_wrong_point_count(self):
        with pytest.raises(ArgumentError):
            QuadTransform([[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 0], [1, 1]])

    def test_inverse_swaps(self):
        quad = QuadTransform([[0, 0], [10, 0], [10, 10], [0, 10]], [[1, 2], [12, 1], [11, 13], [0, 9]])
        inverse = quad.inverse()
        assert np.array_equal(inverse.src, quad.dst)
        product = quad.homography() @ inverse.homography()
        assert np.allclose(product / product[2, 2], np.eye(3), atol=1e-6)


class TestFourPointWarp:
    def test_identity_is_noop(self, rng):
        image = rng.integers(0, 256, size=(40, 56, 3), dtype=np.uint8)
        boxes = [BoundingBox(3, 4, 20, 30), BoundingBox(0, 0, 56, 40)]
        out, out_boxes = four_point_warp(image, boxes, QuadTransform.identity(ImageDims(56, 40)))
        assert np.array_equal(out, image)
        for got, want in zip(out_boxes, boxes):
            assert np.allclose(got.as_list(), want.as_list(), atol=1e-6)

    def test_scale_by_two(self, rng):
        image = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
        quad = QuadTransform([[0, 0], [30, 0], [30, 20], [0, 20]], [[0, 0], [60, 0], [60, 40], [0, 40]])
        out, (box,) = four_point_warp(image, [BoundingBox(2, 3, 10, 15)], quad, out_dims=ImageDims(60, 40))
        assert out.shape == (40, 60, 3)
        assert np.allclose(box.as_list(), [4, 6, 20, 30], atol=1e-6)

    def test_round_trip_boxes(self, rng):
        """Warp then inverse warp restores boxes within half a pixel."""
        dims = ImageDims(200, 160)
        image = np.zeros((160, 200, 3), dtype=np.uint8)
        for _ in range(50):
            x0, y0 = rng.uniform(0, 30, 2)
            x1, y1 = 200 - rng.uniform(0, 30), 160 - rng.uniform(0, 30)
            quad = QuadTransform(
                [[0, 0], [200, 0], [200, 160], [0, 160]], [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
            )
            box = BoundingBox(*rng.uniform(40, 60, 2), *rng.uniform(100, 120, 2))
            warped, boxes = four_point_warp(image, [box], quad, out_dims=dims)
            _, restored = four_point_warp(warped, boxes, quad.inverse(), out_dims=dims)
            assert np.allclose(restored[0].as_list(), box.as_list(), atol=0.5)

    def test_round_trip_points(self, rng):
        for _ in range(50):
            src = np.array([[0, 0], [100, 0], [100, 100], [0, 100]], dtype=np.float64)
            dst = src + rng.uniform(-15, 15, size=(4, 2))
            quad = QuadTransform(src, dst)
            forward = HomographyMapper(quad.homography())
            backward = HomographyMapper(quad.inverse().homography())
            points = rng.uniform(10, 90, size=(20, 2))
            assert np.allclose(backward(forward(points)), points, atol=1e-3)
