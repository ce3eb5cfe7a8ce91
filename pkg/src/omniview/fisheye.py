"""
Virtual fisheye synthesis and four-point (homography) warps with annotation
remapping.

The fisheye camera uses the equidistant model r = focal * theta. Image
coordinates are continuous (pixel centers at +0.5); images are resampled by
inverse mapping with bilinear interpolation and black fill.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Protocol, Sequence as Seq, Tuple

import cv2
import numpy as np

from .errors import ArgumentError
from .geometry import BoundingBox, ImageDims

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_EDGE = 8

# out-of-source sample position, far enough for bilinear taps to stay outside
_OUTSIDE = -16.0


@dataclass(frozen=True)
class PinholeIntrinsics:
    """Source perspective camera: focal length and principal point in pixels."""

    focal: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.focal) or self.focal <= 0:
            raise ArgumentError(f"Pinhole focal length must be positive, got {self.focal}")

    @classmethod
    def from_fov(cls, dims: ImageDims, hfov: float) -> "PinholeIntrinsics":
        """Centered camera whose horizontal field of view is `hfov` radians."""
        if not 0 < hfov < math.pi:
            raise ArgumentError(f"Pinhole field of view must be in (0, pi), got {hfov}")
        focal = (dims.width / 2.0) / math.tan(hfov / 2.0)
        return cls(focal, dims.width / 2.0, dims.height / 2.0)


@dataclass(frozen=True)
class FisheyeModel:
    """Equidistant fisheye camera."""

    focal: float
    cx: float
    cy: float
    dims: ImageDims
    fov: float = math.pi

    def __post_init__(self) -> None:
        if not math.isfinite(self.focal) or self.focal <= 0:
            raise ArgumentError(f"Fisheye focal must be positive, got {self.focal}")
        if not 0 < self.fov <= math.pi:
            raise ArgumentError(f"Fisheye field of view must be in (0, pi], got {self.fov}")
        if not (0 <= self.cx <= self.dims.width and 0 <= self.cy <= self.dims.height):
            raise ArgumentError(f"Principal point ({self.cx}, {self.cy}) lies outside the image")
        if self.circle_radius > min(self.dims.width, self.dims.height) / 2.0 + 1e-9:
            raise ArgumentError(
                f"Image circle radius {self.circle_radius:.3f} exceeds half the smaller image side"
            )

    @classmethod
    def centered(cls, dims: ImageDims, fov: float = math.pi) -> "FisheyeModel":
        """Model whose image circle touches the shorter image side."""
        focal = (min(dims.width, dims.height) / 2.0) / (fov / 2.0)
        return cls(focal, dims.width / 2.0, dims.height / 2.0, dims, fov)

    @property
    def circle_radius(self) -> float:
        return self.focal * self.fov / 2.0


@dataclass(frozen=True, eq=False)
class CameraPose:
    """
    Orientation of the virtual fisheye camera relative to the source camera.

    `rotation` maps source-camera (world) directions into the fisheye camera
    frame. The source image is treated as a scene at infinity, so the
    translation is carried as metadata and does not affect the warp.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rotation.shape != (3, 3) or not np.all(np.isfinite(rotation)):
            raise ArgumentError(f"Rotation must be a finite 3x3 matrix, got shape {rotation.shape}")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-9:
            raise ArgumentError("Rotation matrix is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise ArgumentError("Rotation matrix must have determinant +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def from_euler(
        cls, roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0, height: float = 0.0
    ) -> "CameraPose":
        """Pose from Z-Y-X Euler angles in degrees and mounting height in meters."""
        r, p, y = (math.radians(a) for a in (roll, pitch, yaw))
        rx = np.array([[1, 0, 0], [0, math.cos(r), -math.sin(r)], [0, math.sin(r), math.cos(r)]])
        ry = np.array([[math.cos(p), 0, math.sin(p)], [0, 1, 0], [-math.sin(p), 0, math.cos(p)]])
        rz = np.array([[math.cos(y), -math.sin(y), 0], [math.sin(y), math.cos(y), 0], [0, 0, 1]])
        return cls(rz @ ry @ rx, np.array([0.0, 0.0, height]))


def _unit_rays(rays: np.ndarray) -> np.ndarray:
    rays = np.asarray(rays, dtype=np.float64).reshape(-1, 3)
    norms = np.linalg.norm(rays, axis=1)
    if np.any(norms == 0):
        raise ArgumentError("Ray must have non-zero length")
    return rays / norms[:, None]


def project_many(model: FisheyeModel, rays: np.ndarray) -> np.ndarray:
    """
    Project (N, 3) camera-frame rays to (N, 2) pixel positions.

    Rows outside the field of view come back as NaN.
    """
    rays = _unit_rays(rays)
    rho = np.hypot(rays[:, 0], rays[:, 1])
    theta = np.arctan2(rho, rays[:, 2])
    r = model.focal * theta
    scale = np.divide(r, rho, out=np.zeros_like(r), where=rho > 0)
    uv = np.stack([model.cx + scale * rays[:, 0], model.cy + scale * rays[:, 1]], axis=1)
    uv[theta > model.fov / 2.0] = np.nan
    return uv


def unproject_many(model: FisheyeModel, uv: np.ndarray) -> np.ndarray:
    """
    Unit rays (N, 3) for pixel positions (N, 2); NaN outside the image circle.
    """
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    dx = uv[:, 0] - model.cx
    dy = uv[:, 1] - model.cy
    r = np.hypot(dx, dy)
    theta = r / model.focal
    sin_t = np.sin(theta)
    scale = np.divide(sin_t, r, out=np.zeros_like(r), where=r > 0)
    rays = np.stack([scale * dx, scale * dy, np.cos(theta)], axis=1)
    rays[~(theta <= model.fov / 2.0)] = np.nan
    return rays


def project(model: FisheyeModel, ray: Seq[float]) -> Optional[Tuple[float, float]]:
    """
    Pixel position of a camera-frame ray, or None beyond half the field of view.

    Raises:
        ArgumentError: If the ray has zero length
    """
    uv = project_many(model, np.asarray(ray, dtype=np.float64))[0]
    if not np.all(np.isfinite(uv)):
        return None
    return float(uv[0]), float(uv[1])


def unproject(model: FisheyeModel, uv: Tuple[float, float]) -> Optional[np.ndarray]:
    """Unit ray through pixel position `uv`, or None outside the image circle."""
    ray = unproject_many(model, np.asarray(uv, dtype=np.float64))[0]
    if not np.all(np.isfinite(ray)):
        return None
    return ray


class PointMapper(Protocol):
    """Maps (N, 2) source pixel positions to destination positions (NaN = no landing)."""

    def __call__(self, points: np.ndarray) -> np.ndarray: ...


class FisheyeMapper:
    """Source pinhole pixel -> virtual fisheye pixel."""

    def __init__(self, src: PinholeIntrinsics, pose: CameraPose, model: FisheyeModel):
        self.src = src
        self.pose = pose
        self.model = model

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        rays = np.stack(
            [
                (points[:, 0] - self.src.cx) / self.src.focal,
                (points[:, 1] - self.src.cy) / self.src.focal,
                np.ones(len(points)),
            ],
            axis=1,
        )
        return project_many(self.model, rays @ self.pose.rotation.T)


class HomographyMapper:
    """Planar projective map given by a 3x3 matrix."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        homog = np.concatenate([points, np.ones((len(points), 1))], axis=1) @ self.matrix.T
        w = homog[:, 2]
        out = np.full((len(points), 2), np.nan)
        ok = w > 1e-12
        out[ok] = homog[ok, :2] / w[ok, None]
        return out


def _edge_samples(box: BoundingBox, samples_per_edge: int) -> np.ndarray:
    xs = np.linspace(box.x_min, box.x_max, samples_per_edge)
    ys = np.linspace(box.y_min, box.y_max, samples_per_edge)
    top = np.stack([xs, np.full_like(xs, box.y_min)], axis=1)
    bottom = np.stack([xs, np.full_like(xs, box.y_max)], axis=1)
    left = np.stack([np.full_like(ys, box.x_min), ys], axis=1)
    right = np.stack([np.full_like(ys, box.x_max), ys], axis=1)
    return np.concatenate([top, bottom, left, right])


def remap_box(
    mapper: PointMapper,
    box: BoundingBox,
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
    clip_to: Optional[ImageDims] = None,
) -> Optional[BoundingBox]:
    """
    Enclosing axis-aligned box of the mapped edge samples of `box`.

    Args:
        mapper: Pixel-to-pixel map
        box: Box in the source frame
        samples_per_edge: Points per edge, corners included
        clip_to: Destination frame to clip the result to

    Returns:
        The enclosing box, or None when no sample lands (or the clipped box is empty)

    Raises:
        ArgumentError: If samples_per_edge < 2
    """
    if samples_per_edge < 2:
        raise ArgumentError(f"samples_per_edge must be at least 2, got {samples_per_edge}")
    mapped = mapper(_edge_samples(box, samples_per_edge))
    landed = mapped[np.all(np.isfinite(mapped), axis=1)]
    if len(landed) == 0:
        return None
    lo = landed.min(axis=0)
    hi = landed.max(axis=0)
    result = BoundingBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    if clip_to is not None:
        result = result.clip(clip_to)
        if result.width <= 0 or result.height <= 0:
            return None
    return result


def remap_boxes(
    mapper: PointMapper,
    boxes: Seq[BoundingBox],
    samples_per_edge: int,
    clip_to: Optional[ImageDims],
) -> List[Tuple[int, BoundingBox]]:
    """Remap boxes, keeping the input index of every surviving box."""
    kept = []
    for index, box in enumerate(boxes):
        result = remap_box(mapper, box, samples_per_edge, clip_to)
        if result is not None:
            kept.append((index, result))
    return kept


def _pixel_centers(dims: ImageDims) -> np.ndarray:
    u, v = np.meshgrid(np.arange(dims.width) + 0.5, np.arange(dims.height) + 0.5)
    return np.stack([u.ravel(), v.ravel()], axis=1)


def _sample(image: np.ndarray, positions: np.ndarray, dims: ImageDims) -> np.ndarray:
    """Bilinear lookup of continuous source positions (N, 2) laid out as `dims`."""
    positions = np.where(np.isfinite(positions), positions - 0.5, _OUTSIDE)
    map_x = positions[:, 0].reshape(dims.height, dims.width).astype(np.float32)
    map_y = positions[:, 1].reshape(dims.height, dims.width).astype(np.float32)
    return cv2.remap(
        image,
        map_x,
        map_y,
        interpolation=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )


def fisheye_source_positions(
    src: PinholeIntrinsics, pose: CameraPose, model: FisheyeModel
) -> np.ndarray:
    """Continuous source position (N, 2) seen by every destination pixel; NaN if none."""
    rays = unproject_many(model, _pixel_centers(model.dims)) @ pose.rotation
    z = rays[:, 2]
    front = z > 1e-12
    out = np.full((len(rays), 2), np.nan)
    out[front, 0] = src.focal * rays[front, 0] / z[front] + src.cx
    out[front, 1] = src.focal * rays[front, 1] / z[front] + src.cy
    return out


def warp_with_indices(
    src_image: np.ndarray,
    src_boxes: Seq[BoundingBox],
    src_intrinsics: PinholeIntrinsics,
    pose: CameraPose,
    model: FisheyeModel,
    samples_per_edge: int,
) -> Tuple[np.ndarray, List[Tuple[int, BoundingBox]]]:
    positions = fisheye_source_positions(src_intrinsics, pose, model)
    src_dims = ImageDims.of(src_image)
    inside = (
        (positions[:, 0] >= 0) & (positions[:, 0] <= src_dims.width)
        & (positions[:, 1] >= 0) & (positions[:, 1] <= src_dims.height)
    )
    positions[~inside] = np.nan
    image = _sample(src_image, positions, model.dims)
    kept = remap_boxes(FisheyeMapper(src_intrinsics, pose, model), src_boxes, samples_per_edge, model.dims)
    return image, kept


def warp_to_fisheye(
    src_image: np.ndarray,
    src_boxes: Seq[BoundingBox],
    src_intrinsics: PinholeIntrinsics,
    pose: CameraPose,
    model: FisheyeModel,
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
) -> Tuple[np.ndarray, List[BoundingBox]]:
    """
    Render a perspective image as seen by a virtual fisheye camera.

    Each destination pixel is unprojected, rotated into the source camera,
    projected with the pinhole model and sampled bilinearly; pixels without a
    source get black. Boxes are remapped with `remap_box` and dropped when
    nothing of them lands in the fisheye image.
    """
    image, kept = warp_with_indices(src_image, src_boxes, src_intrinsics, pose, model, samples_per_edge)
    return image, [box for _, box in kept]


def _collinear(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> bool:
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    scale = max(np.linalg.norm(b - a) * np.linalg.norm(c - a), 1e-300)
    return abs(cross) <= 1e-9 * scale


@dataclass(frozen=True, eq=False)
class QuadTransform:
    """Four point correspondences defining a homography."""

    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self) -> None:
        src = np.asarray(self.src, dtype=np.float64).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=np.float64).reshape(-1, 2)
        if src.shape != (4, 2) or dst.shape != (4, 2):
            raise ArgumentError("A quad needs exactly four source and four destination points")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
            raise ArgumentError("Quad points must be finite")
        for name, pts in (("source", src), ("destination", dst)):
            for i, j, k in combinations(range(4), 3):
                if _collinear(pts[i], pts[j], pts[k]):
                    raise ArgumentError(f"Degenerate quad: {name} points {i}, {j}, {k} are collinear")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        matrix = self.homography()
        if not np.all(np.isfinite(matrix)) or abs(np.linalg.det(matrix)) < 1e-12:
            raise ArgumentError("Degenerate quad: homography is not invertible")

    @classmethod
    def identity(cls, dims: ImageDims) -> "QuadTransform":
        corners = np.array([[0, 0], [dims.width, 0], [dims.width, dims.height], [0, dims.height]], dtype=np.float64)
        return cls(corners, corners.copy())

    def homography(self) -> np.ndarray:
        """3x3 matrix mapping source points onto destination points."""
        return cv2.getPerspectiveTransform(
            self.src.astype(np.float32), self.dst.astype(np.float32)
        ).astype(np.float64)

    def inverse(self) -> "QuadTransform":
        return QuadTransform(self.dst, self.src)


def warp_quad_with_indices(
    image: np.ndarray,
    boxes: Seq[BoundingBox],
    quad: QuadTransform,
    out_dims: Optional[ImageDims],
    samples_per_edge: int,
) -> Tuple[np.ndarray, List[Tuple[int, BoundingBox]]]:
    dims = out_dims or ImageDims.of(image)
    positions = HomographyMapper(quad.inverse().homography())(_pixel_centers(dims))
    warped = _sample(image, positions, dims)
    kept = remap_boxes(HomographyMapper(quad.homography()), boxes, samples_per_edge, dims)
    return warped, kept


def four_point_warp(
    image: np.ndarray,
    boxes: Seq[BoundingBox],
    quad: QuadTransform,
    out_dims: Optional[ImageDims] = None,
    samples_per_edge: int = DEFAULT_SAMPLES_PER_EDGE,
) -> Tuple[np.ndarray, List[BoundingBox]]:
    """
    Warp an image and its boxes with the homography of four correspondences.

    The output has the input size unless `out_dims` is given. Boxes are
    remapped with `remap_box` and clipped to the output frame.
    """
    warped, kept = warp_quad_with_indices(image, boxes, quad, out_dims, samples_per_edge)
    return warped, [box for _, box in kept]
