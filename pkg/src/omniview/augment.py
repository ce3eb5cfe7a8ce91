"""
Seeded, box-aware augmentation: SSD-style random crop and photometric
distortion plus random horizontal/vertical flips, random 90-degree rotation
and random RGB-to-gray conversion.

Draw order is fixed: crop, hflip, vflip, rot90, color jitter, gray. Every
image draws from its own RNG stream, derived from (seed, stream_id), so a
dataset can be processed in any order or in parallel with identical results.
"""

import logging
from dataclasses import dataclass, field
from typing import Annotated, Any, Dict, List, Optional, Sequence as Seq, Tuple

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ArgumentError, PreconditionError
from .geometry import (
    BoundingBox,
    Crop,
    GeometricTransform,
    HFlip,
    ImageDims,
    Rot90,
    Sequence,
    VFlip,
    apply_to_image,
    compose,
    iou,
    transform_box,
    transform_dims,
    transform_to_dict,
)
from .utils import PathLike, derive_stream_id, load_json

logger = logging.getLogger(__name__)

Probability = Annotated[float, Field(ge=0.0, le=1.0)]


class ColorJitterParams(BaseModel):
    """Ranges of the photometric distortion (SSD reference defaults)."""

    brightness_delta: float = Field(default=32.0, ge=0.0, le=255.0)
    contrast_range: Tuple[float, float] = (0.5, 1.5)
    saturation_range: Tuple[float, float] = (0.5, 1.5)
    hue_delta: float = Field(default=18.0, ge=0.0, le=180.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ColorJitterParams":
        for name in ("contrast_range", "saturation_range"):
            low, high = getattr(self, name)
            if low < 0 or low > high:
                raise ValueError(f"{name} must satisfy 0 <= low <= high, got ({low}, {high})")
        return self


class CropParams(BaseModel):
    """SSD random crop. A `None` choice means no crop for that draw."""

    min_iou_choices: List[Optional[float]] = Field(
        default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9, None]
    )
    min_scale: float = Field(default=0.3, gt=0.0, le=1.0)
    max_scale: float = Field(default=1.0, gt=0.0, le=1.0)
    max_aspect_ratio: float = Field(default=2.0, ge=1.0)
    attempts: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _check_scales(self) -> "CropParams":
        if self.min_scale > self.max_scale:
            raise ValueError("min_scale must not exceed max_scale")
        if not self.min_iou_choices:
            raise ValueError("min_iou_choices must not be empty")
        for choice in self.min_iou_choices:
            if choice is not None and not 0.0 <= choice <= 1.0:
                raise ValueError(f"min IoU choice {choice} outside [0, 1]")
        return self


class AugmentPolicy(BaseModel):
    """Probabilities and ranges of the augmentation policy."""

    p_hflip: Probability = 0.5
    p_vflip: Probability = 0.5
    rot90_probs: Tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    p_gray: Probability = 0.1
    p_color: Probability = 0.5
    color_jitter: ColorJitterParams = Field(default_factory=ColorJitterParams)
    crop: Optional[CropParams] = Field(default_factory=CropParams)

    @model_validator(mode="after")
    def _check_rot90(self) -> "AugmentPolicy":
        if any(not 0.0 <= p <= 1.0 for p in self.rot90_probs):
            raise ValueError("rot90_probs entries must lie in [0, 1]")
        if abs(sum(self.rot90_probs) - 1.0) > 1e-9:
            raise ValueError(f"rot90_probs must sum to 1, got {sum(self.rot90_probs)}")
        return self

    @classmethod
    def default(cls) -> "AugmentPolicy":
        """SSD set plus random vertical flip and random 90-degree rotation."""
        return cls()

    @classmethod
    def from_file(cls, path: PathLike) -> "AugmentPolicy":
        return cls.model_validate(load_json(path))


class RngState(BaseModel):
    """Seed plus per-image stream id; fully determines the draw sequence."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream_id: int = Field(default=0, ge=0, lt=2**64)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id])))


class JitterDraw(BaseModel):
    """Concrete photometric adjustment."""

    model_config = ConfigDict(frozen=True)

    brightness: float = 0.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue: float = 0.0


class ColorOps(BaseModel):
    """Photometric part of a sampled chain."""

    model_config = ConfigDict(frozen=True)

    jitter: Optional[JitterDraw] = None
    gray: bool = False


@dataclass(frozen=True)
class AugmentChain:
    """A concrete, replayable augmentation."""

    geometry: Sequence = field(default_factory=Sequence)
    color: ColorOps = field(default_factory=ColorOps)

    def is_identity(self) -> bool:
        return not self.geometry.transforms and self.color.jitter is None and not self.color.gray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "geometry": transform_to_dict(self.geometry)["transforms"],
            "color": self.color.model_dump(mode="json"),
        }


def _draw_crop(
    params: CropParams,
    gen: np.random.Generator,
    dims: Optional[ImageDims],
    boxes: Seq[BoundingBox],
) -> Optional[Crop]:
    choice = params.min_iou_choices[int(gen.integers(len(params.min_iou_choices)))]
    if choice is None or dims is None:
        return None
    W, H = dims.width, dims.height
    for _ in range(params.attempts):
        w = max(1, int(gen.uniform(params.min_scale, params.max_scale) * W))
        h = max(1, int(gen.uniform(params.min_scale, params.max_scale) * H))
        left = int(gen.integers(0, W - w + 1))
        top = int(gen.integers(0, H - h + 1))
        if max(w / h, h / w) > params.max_aspect_ratio:
            continue
        rect = BoundingBox(float(left), float(top), float(left + w), float(top + h))
        if not boxes:
            return Crop(rect)
        if max(iou(rect, b) for b in boxes) < choice:
            continue
        if all(transform_box(Crop(rect), dims, b) is None for b in boxes):
            continue
        return Crop(rect)
    return None


def draw_jitter(params: ColorJitterParams, gen: np.random.Generator) -> JitterDraw:
    """Draw brightness, contrast, saturation and hue adjustments in that order."""
    return JitterDraw(
        brightness=float(gen.uniform(-params.brightness_delta, params.brightness_delta)),
        contrast=float(gen.uniform(*params.contrast_range)),
        saturation=float(gen.uniform(*params.saturation_range)),
        hue=float(gen.uniform(-params.hue_delta, params.hue_delta)),
    )


def sample_chain(
    policy: AugmentPolicy,
    rng: RngState,
    dims: Optional[ImageDims] = None,
    boxes: Seq[BoundingBox] = (),
) -> AugmentChain:
    """
    Draw a concrete chain from the policy.

    The crop needs the image dims and boxes; without dims no crop is drawn.
    Identity steps (rot90 with k=0) are left out of the chain.
    """
    gen = rng.generator()
    steps: List[GeometricTransform] = []

    crop = _draw_crop(policy.crop, gen, dims, boxes) if policy.crop is not None else None
    if crop is not None:
        steps.append(crop)
    if gen.random() < policy.p_hflip:
        steps.append(HFlip())
    if gen.random() < policy.p_vflip:
        steps.append(VFlip())
    k = int(gen.choice(4, p=np.asarray(policy.rot90_probs, dtype=np.float64)))
    if k:
        steps.append(Rot90(k))

    jitter = None
    if gen.random() < policy.p_color:
        jitter = draw_jitter(policy.color_jitter, gen)
    gray = bool(gen.random() < policy.p_gray)

    return AugmentChain(geometry=compose(steps), color=ColorOps(jitter=jitter, gray=gray))


def _check_rgb(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ArgumentError(f"Expected a 3-channel image, got shape {image.shape}")


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """
    Luma Y = 0.299 R + 0.587 G + 0.114 B, rounded half to even, on all three channels.

    Raises:
        ArgumentError: If the image does not have three channels
    """
    _check_rgb(image)
    rgb = image.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    gray = np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=2)


def apply_jitter(image: np.ndarray, draw: JitterDraw) -> np.ndarray:
    """
    Apply a concrete photometric adjustment.

    Brightness is additive, contrast scales about the image mean, saturation
    and hue act in HSV space. Values are clamped to [0, 255] and rounded half
    to even.
    """
    _check_rgb(image)
    x = image.astype(np.float64)
    if draw.brightness != 0.0:
        x = x + draw.brightness
    if draw.contrast != 1.0:
        mean = x.mean()
        x = (x - mean) * draw.contrast + mean
    if draw.saturation != 1.0 or draw.hue != 0.0:
        rgb = (np.clip(x, 0.0, 255.0) / 255.0).astype(np.float32)
        hsv = cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)
        hsv[..., 1] = np.clip(hsv[..., 1] * draw.saturation, 0.0, 1.0)
        hsv[..., 0] = np.mod(hsv[..., 0] + draw.hue, 360.0)
        x = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB).astype(np.float64) * 255.0
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def color_jitter(image: np.ndarray, params: ColorJitterParams, rng: RngState) -> np.ndarray:
    """Draw an adjustment from `rng` within `params` and apply it."""
    return apply_jitter(image, draw_jitter(params, rng.generator()))


def transform_boxes(
    t: GeometricTransform, dims: ImageDims, boxes: Seq[BoundingBox]
) -> Tuple[List[Tuple[int, BoundingBox]], ImageDims]:
    """
    Transform boxes, keeping the input index of every surviving box.

    Returns:
        ([(index, box), ...], dims of the transformed frame)
    """
    kept = []
    for index, box in enumerate(boxes):
        result = transform_box(t, dims, box)
        if result is not None:
            kept.append((index, result[0]))
    return kept, transform_dims(t, dims)


def _augment(
    image: np.ndarray, boxes: Seq[BoundingBox], chain: AugmentChain
) -> Tuple[np.ndarray, List[Tuple[int, BoundingBox]]]:
    dims = ImageDims.of(image)
    for i, box in enumerate(boxes):
        if not box.within(dims):
            raise ArgumentError(
                f"Box {i} {box.as_list()} does not fit image {dims.width}x{dims.height}"
            )
    try:
        kept, _ = transform_boxes(chain.geometry, dims, boxes)
        out = apply_to_image(chain.geometry, image)
    except PreconditionError as e:
        raise ArgumentError(str(e))
    if chain.color.jitter is not None:
        out = apply_jitter(out, chain.color.jitter)
    if chain.color.gray:
        out = rgb_to_gray(out)
    return out, kept


def augment_sample(
    image: np.ndarray, boxes: Seq[BoundingBox], chain: AugmentChain
) -> Tuple[np.ndarray, List[BoundingBox]]:
    """
    Apply a chain to an image and its boxes.

    Boxes clipped away by a crop are dropped; the others keep their order.

    Raises:
        ArgumentError: If a box does not fit the image
    """
    out, kept = _augment(image, boxes, chain)
    return out, [box for _, box in kept]


def augment_record_pixels(
    image: np.ndarray,
    boxes: Seq[BoundingBox],
    difficult: Seq[bool],
    policy: AugmentPolicy,
    seed: int,
    image_id: str,
) -> Tuple[np.ndarray, List[BoundingBox], List[bool], AugmentChain]:
    """
    Sample and apply the chain of one dataset image.

    The RNG stream is derived from the image id, so results do not depend on
    processing order.
    """
    rng = RngState(seed=seed, stream_id=derive_stream_id(image_id))
    chain = sample_chain(policy, rng, ImageDims.of(image), boxes)
    out, kept = _augment(image, boxes, chain)
    logger.debug(f"{image_id}: chain {chain.to_dict()}, {len(kept)}/{len(boxes)} boxes kept")
    return out, [box for _, box in kept], [difficult[i] for i, _ in kept], chain

