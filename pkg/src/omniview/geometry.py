"""
Axis-aligned box algebra and exact box transforms.

Coordinates are continuous: the origin is the top-left image corner, x grows
to the right, y grows downward and a pixel (col, row) covers
[col, col + 1) x [row, row + 1). A box of width w spans x_max - x_min = w.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence as Seq, Tuple, Union

import numpy as np

from .errors import ArgumentError, PreconditionError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ArgumentError(f"Box coordinates must be finite: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ArgumentError(f"Box minimum exceeds maximum: {coords}")

    @classmethod
    def from_sequence(cls, values: Seq[float]) -> "BoundingBox":
        """Build a box from [x_min, y_min, x_max, y_max]."""
        if len(values) != 4:
            raise ArgumentError(f"Expected 4 box coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_list(self) -> List[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def within(self, dims: "ImageDims") -> bool:
        """True when the box lies inside [0, W] x [0, H]."""
        return (
            self.x_min >= 0 and self.y_min >= 0
            and self.x_max <= dims.width and self.y_max <= dims.height
        )

    def clip(self, dims: "ImageDims") -> "BoundingBox":
        """Clamp the box into [0, W] x [0, H]."""
        x_min = min(max(self.x_min, 0.0), dims.width)
        y_min = min(max(self.y_min, 0.0), dims.height)
        x_max = min(max(self.x_max, 0.0), dims.width)
        y_max = min(max(self.y_max, 0.0), dims.height)
        return BoundingBox(x_min, y_min, x_max, y_max)


@dataclass(frozen=True)
class ImageDims:
    """Image size in pixels."""

    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value <= 0:
                raise ArgumentError(f"Image {name} must be a positive integer, got {value!r}")

    @classmethod
    def of(cls, image: np.ndarray) -> "ImageDims":
        """Dims of an (H, W[, C]) pixel array."""
        return cls(int(image.shape[1]), int(image.shape[0]))


@dataclass(frozen=True)
class HFlip:
    """Mirror about the vertical center line: x -> W - x."""


@dataclass(frozen=True)
class VFlip:
    """Mirror about the horizontal center line: y -> H - y."""


@dataclass(frozen=True)
class Rot90:
    """Counter-clockwise rotation by k quarter turns; (x, y) -> (y, W - x) per turn."""

    k: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", int(self.k) % 4)


@dataclass(frozen=True)
class Crop:
    """Keep the region `rect`; coordinates are re-expressed relative to its corner."""

    rect: BoundingBox

    def __post_init__(self) -> None:
        coords = self.rect.as_list()
        if any(c != int(c) for c in coords):
            raise ArgumentError(f"Crop rect must have integer coordinates: {coords}")
        if self.rect.width <= 0 or self.rect.height <= 0:
            raise ArgumentError(f"Crop rect must have positive area: {coords}")


@dataclass(frozen=True)
class Sequence:
    """Transforms applied left to right; empty is the identity."""

    transforms: Tuple["GeometricTransform", ...] = field(default_factory=tuple)


GeometricTransform = Union[HFlip, VFlip, Rot90, Crop, Sequence]


def area(b: BoundingBox) -> float:
    """Area of a box in pixel^2."""
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """
    Intersection over union of two boxes.

    Returns 0 when the union has zero area.
    """
    iw = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    ih = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = iw * ih
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (N, 4) float64 array."""
    rows = [b.as_list() for b in boxes]
    if not rows:
        return np.zeros((0, 4), dtype=np.float64)
    return np.asarray(rows, dtype=np.float64)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """
    Pairwise IoU between two (N, 4) and (M, 4) box arrays.

    Uses the same operation order as `iou`, so entries equal the scalar result.
    """
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.maximum(
        0.0,
        np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]),
    )
    ih = np.maximum(
        0.0,
        np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]),
    )
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def compose(ts: Iterable[GeometricTransform]) -> Sequence:
    """Sequence transform equivalent to applying `ts` in order."""
    return Sequence(tuple(ts))


def flatten(t: GeometricTransform) -> List[GeometricTransform]:
    """Primitive transforms of `t` in application order."""
    if isinstance(t, Sequence):
        out: List[GeometricTransform] = []
        for inner in t.transforms:
            out.extend(flatten(inner))
        return out
    return [t]


def is_identity(t: GeometricTransform) -> bool:
    """True for transforms with no primitive step other than Rot90(0)."""
    return all(isinstance(p, Rot90) and p.k == 0 for p in flatten(t))


def invert(t: GeometricTransform) -> GeometricTransform:
    """
    Inverse of a flip/rotation transform.

    Raises:
        ArgumentError: If the transform contains a crop
    """
    if isinstance(t, (HFlip, VFlip)):
        return t
    if isinstance(t, Rot90):
        return Rot90(-t.k)
    if isinstance(t, Sequence):
        return Sequence(tuple(invert(inner) for inner in reversed(t.transforms)))
    raise ArgumentError("Crop has no inverse")


def transform_dims(t: GeometricTransform, dims: ImageDims) -> ImageDims:
    """Frame dims after applying `t` to an image of size `dims`."""
    if isinstance(t, (HFlip, VFlip)):
        return dims
    if isinstance(t, Rot90):
        return dims if t.k % 2 == 0 else ImageDims(dims.height, dims.width)
    if isinstance(t, Crop):
        _check_crop(t, dims)
        return ImageDims(int(t.rect.width), int(t.rect.height))
    for inner in t.transforms:
        dims = transform_dims(inner, dims)
    return dims


def _check_crop(t: Crop, dims: ImageDims) -> None:
    if not t.rect.within(dims):
        raise PreconditionError(
            f"Crop rect {t.rect.as_list()} lies outside image {dims.width}x{dims.height}"
        )


def _rotate_box(k: int, dims: ImageDims, b: BoundingBox) -> Tuple[BoundingBox, ImageDims]:
    W, H = dims.width, dims.height
    if k == 0:
        return b, dims
    if k == 1:
        return BoundingBox(b.y_min, W - b.x_max, b.y_max, W - b.x_min), ImageDims(H, W)
    if k == 2:
        return BoundingBox(W - b.x_max, H - b.y_max, W - b.x_min, H - b.y_min), dims
    return BoundingBox(H - b.y_max, b.x_min, H - b.y_min, b.x_max), ImageDims(H, W)


def transform_box(
    t: GeometricTransform, dims: ImageDims, b: BoundingBox
) -> Optional[Tuple[BoundingBox, ImageDims]]:
    """
    Express `b` in the frame produced by applying `t` to an image of size `dims`.

    Args:
        t: Geometric transform
        dims: Size of the frame the box currently lives in
        b: Box inside [0, W] x [0, H]

    Returns:
        (box, dims) in the transformed frame, or None when a crop clips the box
        to zero area

    Raises:
        PreconditionError: If the box or a crop rect lies outside its frame
    """
    if not b.within(dims):
        raise PreconditionError(
            f"Box {b.as_list()} lies outside image {dims.width}x{dims.height}"
        )
    if isinstance(t, HFlip):
        return BoundingBox(dims.width - b.x_max, b.y_min, dims.width - b.x_min, b.y_max), dims
    if isinstance(t, VFlip):
        return BoundingBox(b.x_min, dims.height - b.y_max, b.x_max, dims.height - b.y_min), dims
    if isinstance(t, Rot90):
        return _rotate_box(t.k, dims, b)
    if isinstance(t, Crop):
        _check_crop(t, dims)
        r = t.rect
        x_min, y_min = max(b.x_min, r.x_min), max(b.y_min, r.y_min)
        x_max, y_max = min(b.x_max, r.x_max), min(b.y_max, r.y_max)
        if x_max <= x_min or y_max <= y_min:
            return None
        clipped = BoundingBox(x_min - r.x_min, y_min - r.y_min, x_max - r.x_min, y_max - r.y_min)
        return clipped, ImageDims(int(r.width), int(r.height))

    current: Tuple[BoundingBox, ImageDims] = (b, dims)
    for inner in t.transforms:
        step = transform_box(inner, current[1], current[0])
        if step is None:
            return None
        current = step
    return current


def apply_to_image(t: GeometricTransform, image: np.ndarray) -> np.ndarray:
    """
    Apply the pixel side of a transform to an (H, W[, C]) array.

    Raises:
        PreconditionError: If a crop rect lies outside the image
    """
    if isinstance(t, HFlip):
        out = np.flip(image, axis=1)
    elif isinstance(t, VFlip):
        out = np.flip(image, axis=0)
    elif isinstance(t, Rot90):
        out = np.rot90(image, k=t.k, axes=(0, 1))
    elif isinstance(t, Crop):
        _check_crop(t, ImageDims.of(image))
        r = t.rect
        out = image[int(r.y_min):int(r.y_max), int(r.x_min):int(r.x_max)]
    else:
        out = image
        for inner in t.transforms:
            out = apply_to_image(inner, out)
    return np.ascontiguousarray(out)


def transform_to_dict(t: GeometricTransform) -> dict:
    """JSON-friendly description of a transform."""
    if isinstance(t, HFlip):
        return {"op": "hflip"}
    if isinstance(t, VFlip):
        return {"op": "vflip"}
    if isinstance(t, Rot90):
        return {"op": "rot90", "k": t.k}
    if isinstance(t, Crop):
        return {"op": "crop", "rect": t.rect.as_list()}
    return {"op": "sequence", "transforms": [transform_to_dict(i) for i in t.transforms]}
